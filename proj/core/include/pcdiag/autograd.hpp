#pragma once

// Define-by-run reverse-mode differentiation over dense float64 tensors.
//
// Every op allocates a fresh node that remembers its inputs and a backward
// closure. Calling backward() on a scalar walks the graph in reverse
// topological order and accumulates (+=) gradients into every reachable node
// that requires them. Graphs are cheap to build and are dropped after use.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pcdiag::ag {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // lazily allocated, same length as value
  std::vector<std::shared_ptr<Node>> inputs;
  std::vector<bool> live;  // live[k]: gradient flows into inputs[k]
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  bool is_parameter = false;

  bool wants(std::size_t k) const { return live[k]; }
  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  /// Differentiable leaf that is not a model parameter (unaffected by FreezeParameters).
  static Tensor variable(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  /// Mutable access; only meaningful for leaves (parameters, constants).
  std::span<double> mutable_values() { return node_->value; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; empty span when backward never reached this node.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_parameter() const { return node_->is_parameter; }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>,
                        std::function<void(Node&)>);
  std::shared_ptr<Node> node_;
};

/// Internal constructor used by every op. Inputs whose gradient is not needed
/// are marked dead so the backward closure can skip them.
Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
               std::function<void(Node&)> backward);

/// RAII guard: while alive on this thread, parameters are treated as
/// constants by newly created ops (no gradient is accumulated into them).
class FreezeParameters {
 public:
  FreezeParameters();
  ~FreezeParameters();
  FreezeParameters(const FreezeParameters&) = delete;
  FreezeParameters& operator=(const FreezeParameters&) = delete;

 private:
  bool previous_;
};

bool parameters_frozen();

void backward(const Tensor& loss);

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise (equal shapes, or one operand with a single element) -----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws numeric_guard when any |b| < 1e-12.
Tensor div(const Tensor& a, const Tensor& b);
/// Elementwise max; ties route the gradient to `a`.
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double s);
Tensor mul(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, s); }

/// max(0, x); the subgradient at exactly 0 is 0.
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a);
/// Max over the last axis. Gradient goes to the first maximizer of each row.
Tensor reduce_max(const Tensor& a);
/// -log softmax(logits)[target] with max-subtraction.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target);

// ---- shape & indexing --------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
/// Flat element gather: out[i] = a.flat[idx[i]], shape {idx.size()}.
Tensor select(const Tensor& a, std::span<const std::size_t> idx);
/// out[:, j] = a[:, idx[j]] for a 2-D tensor a.
Tensor gather_columns(const Tensor& a, std::span<const std::size_t> idx);
/// Vertical stacking of 2-D tensors with equal column counts.
Tensor concat_rows(std::span<const Tensor> parts);

// ---- broadcasting helpers used by the network layers ------------------------

/// a [D x N] + b[D] broadcast along columns.
Tensor add_bias(const Tensor& a, const Tensor& b);
/// a [D x N] * w[N] (column j scaled by w_j); w may be {N} or {1, N}.
Tensor scale_columns(const Tensor& a, const Tensor& w);
/// a [D x N] * w[D] (row i scaled by w_i).
Tensor scale_rows(const Tensor& a, const Tensor& w);
/// Per-column squared norm of a [R x N] -> {1, N}.
Tensor column_sq_norm(const Tensor& a);

/// Grouped product: for each group g of `group` consecutive columns,
/// out_g = F_g * W_g^T where F_g is [D x K] and W_g is [M x K]; result [D x G*M].
Tensor grouped_matmul_nt(const Tensor& f, const Tensor& w, std::size_t group);

/// Gaussian KDE inside each group of `group` consecutive 3-D columns:
/// out_j = (1/K) sum_k exp(-|x_j - x_k|^2 / (2 h^2)); result {1, G*K}.
Tensor neighborhood_density(const Tensor& coords, std::size_t group, double bandwidth);

}  // namespace pcdiag::ag
