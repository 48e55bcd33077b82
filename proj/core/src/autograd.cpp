#include "pcdiag/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "pcdiag/error.hpp"

namespace pcdiag::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

thread_local bool g_frozen = false;

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    fail(ErrorKind::dimension, std::string(op) + " expects rank " + std::to_string(rank) +
                                   ", got shape " + to_string(a.shape()));
  }
}

ConstMapMat view(const Node& n, std::size_t rows, std::size_t cols) {
  return ConstMapMat(n.value.data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

MapMat grad_view(Node& n, std::size_t rows, std::size_t cols) {
  return MapMat(n.grad_buffer().data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

enum class Broadcast { none, left_scalar, right_scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (b.size() == 1) return Broadcast::right_scalar;
  if (a.size() == 1) return Broadcast::left_scalar;
  fail(ErrorKind::dimension, std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                                 to_string(b.shape()) + " are not broadcastable");
}

// Shared driver for binary elementwise ops. `f` computes the value, `da`/`db`
// the local partial derivatives at (x, y).
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  const Broadcast bc = broadcast_kind(a, b, name);
  const Shape shape = bc == Broadcast::left_scalar ? b.shape() : a.shape();
  const std::size_t n = numel(shape);
  std::vector<double> out(n);
  const auto av = a.values();
  const auto bv = b.values();
  auto ai = [&](std::size_t i) { return bc == Broadcast::left_scalar ? av[0] : av[i]; };
  auto bi = [&](std::size_t i) { return bc == Broadcast::right_scalar ? bv[0] : bv[i]; };
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ai(i), bi(i));
  return make_op(shape, std::move(out), {a, b}, [bc, n, da, db](Node& self) {
    const Node& an = *self.inputs[0];
    const Node& bn = *self.inputs[1];
    auto x = [&](std::size_t i) { return bc == Broadcast::left_scalar ? an.value[0] : an.value[i]; };
    auto y = [&](std::size_t i) { return bc == Broadcast::right_scalar ? bn.value[0] : bn.value[i]; };
    if (self.wants(0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        g[bc == Broadcast::left_scalar ? 0 : i] += self.grad[i] * da(x(i), y(i));
      }
    }
    if (self.wants(1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        g[bc == Broadcast::right_scalar ? 0 : i] += self.grad[i] * db(x(i), y(i));
      }
    }
  });
}

template <class F, class DF>
Tensor unary(const Tensor& a, F f, DF df) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make_op(a.shape(), std::move(out), {a}, [df](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const auto& x = self.inputs[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    fail(ErrorKind::dimension, "constant: shape " + to_string(shape) + " does not hold " +
                                   std::to_string(values.size()) + " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  t.node_->is_parameter = true;
  return t;
}

Tensor Tensor::variable(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return constant({}, {v}); }

double Tensor::item() const {
  if (size() != 1) fail(ErrorKind::contract, "item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
               std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  std::vector<bool> live(inputs.size());
  bool any = false;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Node& in = inputs[k].node();
    live[k] = in.requires_grad && !(in.is_parameter && g_frozen);
    any = any || live[k];
  }
  if (any) {
    n->requires_grad = true;
    n->live = std::move(live);
    n->inputs.reserve(inputs.size());
    for (auto& t : inputs) n->inputs.push_back(t.node_ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

FreezeParameters::FreezeParameters() : previous_(g_frozen) { g_frozen = true; }
FreezeParameters::~FreezeParameters() { g_frozen = previous_; }
bool parameters_frozen() { return g_frozen; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    fail(ErrorKind::contract, "backward requires a scalar loss, got shape " +
                                  (loss.defined() ? to_string(loss.shape()) : std::string("<null>")));
  }
  Node* root = &loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next].get();
      const bool live = node->live[next];
      ++next;
      if (live && child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    fail(ErrorKind::dimension, "matmul: inner dimensions disagree for " + to_string(a.shape()) +
                                   " and " + to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() = view(a.node(), m, k) * view(b.node(), k, n);
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    ConstMapMat g(self.grad.data(), m, n);
    if (self.wants(0)) grad_view(*self.inputs[0], m, k).noalias() += g * view(*self.inputs[1], k, n).transpose();
    if (self.wants(1)) grad_view(*self.inputs[1], k, n).noalias() += view(*self.inputs[0], m, k).transpose() * g;
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  MapMat(out.data(), c, r) = view(a.node(), r, c).transpose();
  return make_op({c, r}, std::move(out), {a}, [r, c](Node& self) {
    grad_view(*self.inputs[0], r, c) += ConstMapMat(self.grad.data(), c, r).transpose();
  });
}

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.values()) {
    if (!(std::abs(v) >= 1e-12)) {
      fail(ErrorKind::numeric_guard, "div: denominator magnitude below 1e-12");
    }
  }
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "max2", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor add(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
Tensor mul(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---- reductions ----------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_op({}, {s}, {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor reduce_max(const Tensor& a) {
  if (a.rank() == 0 || a.shape().back() == 0) {
    fail(ErrorKind::dimension, "reduce_max over an empty axis, shape " + to_string(a.shape()));
  }
  const std::size_t k = a.shape().back();
  const std::size_t rows = a.size() / k;
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  std::vector<double> out(rows);
  std::vector<std::size_t> arg(rows);
  const auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = av.data() + r * k;
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[r] = row[best];
    arg[r] = r * k + best;
  }
  return make_op(std::move(shape), std::move(out), {a}, [arg = std::move(arg)](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < arg.size(); ++r) g[arg[r]] += self.grad[r];
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target) {
  const std::size_t c = logits.size();
  if (target >= c) {
    fail(ErrorKind::index, "softmax_cross_entropy: target " + std::to_string(target) +
                               " outside [0, " + std::to_string(c) + ")");
  }
  const auto z = logits.values();
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> p(c);
  double denom = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    p[i] = std::exp(z[i] - zmax);
    denom += p[i];
  }
  for (auto& v : p) v /= denom;
  const double loss = -(z[target] - zmax - std::log(denom));
  return make_op({}, {loss}, {logits}, [p = std::move(p), target](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < p.size(); ++i) {
      g[i] += self.grad[0] * (p[i] - (i == target ? 1.0 : 0.0));
    }
  });
}

// ---- shape & indexing --------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    fail(ErrorKind::dimension,
         "reshape from " + to_string(a.shape()) + " to " + to_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_op(std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor select(const Tensor& a, std::span<const std::size_t> idx) {
  std::vector<double> out(idx.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= av.size()) {
      fail(ErrorKind::index, "select: index " + std::to_string(idx[i]) + " outside tensor of " +
                                 std::to_string(av.size()) + " elements");
    }
    out[i] = av[idx[i]];
  }
  std::vector<std::size_t> keep(idx.begin(), idx.end());
  return make_op({idx.size()}, std::move(out), {a}, [keep = std::move(keep)](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < keep.size(); ++i) g[keep[i]] += self.grad[i];
  });
}

Tensor gather_columns(const Tensor& a, std::span<const std::size_t> idx) {
  require_rank(a, 2, "gather_columns");
  const std::size_t rows = a.dim(0), cols = a.dim(1), m = idx.size();
  for (auto j : idx) {
    if (j >= cols) {
      fail(ErrorKind::index, "gather_columns: column " + std::to_string(j) + " outside " +
                                 to_string(a.shape()));
    }
  }
  std::vector<double> out(rows * m);
  const auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = av.data() + r * cols;
    double* dst = out.data() + r * m;
    for (std::size_t j = 0; j < m; ++j) dst[j] = src[idx[j]];
  }
  std::vector<std::size_t> keep(idx.begin(), idx.end());
  return make_op({rows, m}, std::move(out), {a},
                 [keep = std::move(keep), rows, cols](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   const std::size_t m = keep.size();
                   for (std::size_t r = 0; r < rows; ++r) {
                     double* dst = g.data() + r * cols;
                     const double* src = self.grad.data() + r * m;
                     for (std::size_t j = 0; j < m; ++j) dst[keep[j]] += src[j];
                   }
                 });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorKind::dimension, "concat_rows of zero tensors");
  const std::size_t cols = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != cols) {
      fail(ErrorKind::dimension, "concat_rows: column counts differ (" +
                                     to_string(parts[0].shape()) + " vs " + to_string(p.shape()) + ")");
    }
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op({rows, cols}, std::move(out), std::move(inputs), [](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t len = self.inputs[k]->value.size();
      if (self.wants(k)) {
        auto& g = self.inputs[k]->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

// ---- broadcasting helpers ----------------------------------------------------------

Tensor add_bias(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "add_bias");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (b.size() != rows) {
    fail(ErrorKind::dimension,
         "add_bias: bias " + to_string(b.shape()) + " does not match rows of " + to_string(a.shape()));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[r];
  }
  return make_op(a.shape(), std::move(out), {a, b}, [rows, cols](Node& self) {
    if (self.wants(0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.wants(1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += self.grad[r * cols + c];
        g[r] += s;
      }
    }
  });
}

Tensor scale_columns(const Tensor& a, const Tensor& w) {
  require_rank(a, 2, "scale_columns");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (w.size() != cols) {
    fail(ErrorKind::dimension, "scale_columns: weights " + to_string(w.shape()) +
                                   " do not match columns of " + to_string(a.shape()));
  }
  std::vector<double> out(rows * cols);
  const auto av = a.values();
  const auto wv = w.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = av[r * cols + c] * wv[c];
  }
  return make_op(a.shape(), std::move(out), {a, w}, [rows, cols](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    if (self.wants(0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r * cols + c] * wv[c];
      }
    }
    if (self.wants(1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c] * av[r * cols + c];
      }
    }
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& w) {
  require_rank(a, 2, "scale_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (w.size() != rows) {
    fail(ErrorKind::dimension, "scale_rows: weights " + to_string(w.shape()) +
                                   " do not match rows of " + to_string(a.shape()));
  }
  std::vector<double> out(rows * cols);
  const auto av = a.values();
  const auto wv = w.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = av[r * cols + c] * wv[r];
  }
  return make_op(a.shape(), std::move(out), {a, w}, [rows, cols](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    if (self.wants(0)) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r * cols + c] * wv[r];
      }
    }
    if (self.wants(1)) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += self.grad[r * cols + c] * av[r * cols + c];
        g[r] += s;
      }
    }
  });
}

Tensor column_sq_norm(const Tensor& a) {
  require_rank(a, 2, "column_sq_norm");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(cols, 0.0);
  const auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c] += av[r * cols + c] * av[r * cols + c];
  }
  return make_op({1, cols}, std::move(out), {a}, [rows, cols](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const auto& av = self.inputs[0]->value;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += 2.0 * av[r * cols + c] * self.grad[c];
    }
  });
}

Tensor grouped_matmul_nt(const Tensor& f, const Tensor& w, std::size_t group) {
  require_rank(f, 2, "grouped_matmul_nt");
  require_rank(w, 2, "grouped_matmul_nt");
  if (group == 0 || f.dim(1) % group != 0 || w.dim(1) != f.dim(1)) {
    fail(ErrorKind::dimension, "grouped_matmul_nt: incompatible shapes " + to_string(f.shape()) +
                                   " and " + to_string(w.shape()) + " for group size " +
                                   std::to_string(group));
  }
  const std::size_t d = f.dim(0), m = w.dim(0), total = f.dim(1), groups = total / group;
  const std::size_t k = group;
  using Stride = Eigen::OuterStride<>;
  using CBlock = Eigen::Map<const RowMat, 0, Stride>;
  using Block = Eigen::Map<RowMat, 0, Stride>;
  std::vector<double> out(d * groups * m);
  for (std::size_t g = 0; g < groups; ++g) {
    CBlock fg(f.values().data() + g * k, d, k, Stride(total));
    CBlock wg(w.values().data() + g * k, m, k, Stride(total));
    Block og(out.data() + g * m, d, m, Stride(groups * m));
    og.noalias() = fg * wg.transpose();
  }
  return make_op({d, groups * m}, std::move(out), {f, w}, [=](Node& self) {
    const Node& fn = *self.inputs[0];
    const Node& wn = *self.inputs[1];
    for (std::size_t g = 0; g < groups; ++g) {
      CBlock og(self.grad.data() + g * m, d, m, Stride(groups * m));
      if (self.wants(0)) {
        Block gf(self.inputs[0]->grad_buffer().data() + g * k, d, k, Stride(total));
        CBlock wg(wn.value.data() + g * k, m, k, Stride(total));
        gf.noalias() += og * wg;
      }
      if (self.wants(1)) {
        Block gw(self.inputs[1]->grad_buffer().data() + g * k, m, k, Stride(total));
        CBlock fg(fn.value.data() + g * k, d, k, Stride(total));
        gw.noalias() += og.transpose() * fg;
      }
    }
  });
}

Tensor neighborhood_density(const Tensor& coords, std::size_t group, double bandwidth) {
  require_rank(coords, 2, "neighborhood_density");
  if (coords.dim(0) != 3 || group == 0 || coords.dim(1) % group != 0) {
    fail(ErrorKind::dimension, "neighborhood_density: expected [3 x G*K] coordinates, got " +
                                   to_string(coords.shape()) + " with K=" + std::to_string(group));
  }
  if (!(bandwidth > 0.0)) fail(ErrorKind::value, "neighborhood_density: bandwidth must be > 0");
  const std::size_t total = coords.dim(1), k = group;
  const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  const auto x = coords.values();
  std::vector<double> out(total, 0.0);
  for (std::size_t base = 0; base < total; base += k) {
    for (std::size_t a = 0; a < k; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < k; ++b) {
        double d2 = 0.0;
        for (std::size_t r = 0; r < 3; ++r) {
          const double diff = x[r * total + base + a] - x[r * total + base + b];
          d2 += diff * diff;
        }
        s += std::exp(-d2 * inv2h2);
      }
      out[base + a] = s / static_cast<double>(k);
    }
  }
  return make_op({1, total}, std::move(out), {coords}, [=](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const auto& xv = self.inputs[0]->value;
    const double kk = static_cast<double>(k);
    for (std::size_t base = 0; base < total; base += k) {
      for (std::size_t a = 0; a < k; ++a) {
        const double ga = self.grad[base + a] / kk;
        if (ga == 0.0) continue;
        for (std::size_t b = 0; b < k; ++b) {
          if (a == b) continue;
          double d2 = 0.0;
          double diff[3];
          for (std::size_t r = 0; r < 3; ++r) {
            diff[r] = xv[r * total + base + a] - xv[r * total + base + b];
            d2 += diff[r] * diff[r];
          }
          // d/dx_a exp(-|x_a - x_b|^2 * c) = -2c (x_a - x_b) exp(...)
          const double coef = -2.0 * inv2h2 * std::exp(-d2 * inv2h2) * ga;
          for (std::size_t r = 0; r < 3; ++r) {
            g[r * total + base + a] += coef * diff[r];
            g[r * total + base + b] -= coef * diff[r];
          }
        }
      }
    }
  });
}

}  // namespace pcdiag::ag
