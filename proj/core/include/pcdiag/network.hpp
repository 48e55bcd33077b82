#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pcdiag/autograd.hpp"
#include "pcdiag/context.hpp"
#include "pcdiag/geom.hpp"
#include "pcdiag/optim.hpp"
#include "pcdiag/spec.hpp"

namespace pcdiag::nets {

struct ForwardResult {
  ag::Tensor logits;  // {classes}
  ag::Tensor tap;     // diagnosed feature f, flattened
};

/// Anything the diagnostics can probe: a fixed-context forward from a
/// [3 x n] coordinate tensor to logits and a tap feature.
class Network {
 public:
  virtual ~Network() = default;
  virtual std::size_t num_classes() const = 0;
  virtual geom::ContextPlan plan(const geom::PointCloud& cloud) const = 0;
  virtual ForwardResult forward(const ag::Tensor& coords, const geom::ContextPlan& plan) const = 0;
};

/// argmax with the lowest index winning ties.
std::size_t argmax(std::span<const double> logits);

/// C(X): predicted label using a plan built from X itself.
std::size_t classify(const Network& net, const geom::PointCloud& cloud);

// ---- architecture building blocks ------------------------------------------

struct Dense {
  ag::Tensor weight;  // [out x in]
  ag::Tensor bias;    // [out]
};

/// Same MLP applied to every column; ReLU between layers, none after the last.
ag::Tensor shared_mlp(const ag::Tensor& features, std::span<const Dense> layers);

/// Element-wise max over the K columns of each group: [D x G*K] -> [D x G].
ag::Tensor local_max_aggregate(const ag::Tensor& features, std::size_t group);

struct Arch1Params {
  Dense hidden;  // 1 -> h
  Dense output;  // h -> 1
};

/// F' = F diag(mlp(density)) per group; `densities` is {1, G*K} or {G*K}.
ag::Tensor arch1_density_reweight(const ag::Tensor& features, const ag::Tensor& densities,
                                  const Arch1Params& params);

/// W = relu(A * rel + c) per neighbor ([M x G*K]); F'_g = F_g W_g^T -> [D x G*M].
ag::Tensor arch2_coord_reweight(const ag::Tensor& features, const ag::Tensor& rel_coords,
                                const Dense& params, std::size_t group);

struct Arch4Params {
  ag::Tensor wx, wy, wz;  // each [D x 2]: weight for the - and + half along the axis
};

/// Three-stage orientation convolution over cubes laid out as [D x G*8]
/// in octant order; collapses x, then y, then z, each followed by ReLU.
ag::Tensor arch4_orientation_encode(const ag::Tensor& cube, const Arch4Params& params);

/// g(.) at every scale in `neighbor_lists` around the same centers, concatenated
/// along features in list order.
ag::Tensor arch3_multiscale(const ag::Tensor& level_coords, const ag::Tensor* level_features,
                            std::span<const std::size_t> centers,
                            std::span<const std::vector<std::size_t>> neighbor_lists,
                            std::span<const std::vector<Dense>> scale_mlps);

/// Builds the per-neighbor input of a group: relative coordinates (or squared
/// distance + density for the distance encoding) stacked over gathered features.
struct Grouped {
  ag::Tensor input;  // [(3 or 2) + d x G*K]
  ag::Tensor rel;    // [3 x G*K]
};
Grouped group_features(const ag::Tensor& level_coords, const ag::Tensor* level_features,
                       std::span<const std::size_t> centers, std::span<const std::size_t> neighbors,
                       std::size_t k, Encoding encoding, double bandwidth);

// ---- classifier ---------------------------------------------------------------

class Classifier : public Network {
 public:
  /// He-uniform weights, zero biases (arch1's output bias starts at 1).
  Classifier(NetworkSpec spec, std::uint64_t seed);
  /// Wraps existing parameters; throws contract if names or shapes disagree with the spec.
  Classifier(NetworkSpec spec, ag::ParameterSet params);

  std::size_t num_classes() const override { return spec_.num_classes; }
  geom::ContextPlan plan(const geom::PointCloud& cloud) const override;
  ForwardResult forward(const ag::Tensor& coords, const geom::ContextPlan& plan) const override;
  ForwardResult forward(const geom::PointCloud& cloud) const;

  const NetworkSpec& spec() const { return spec_; }
  const ag::ParameterSet& parameters() const { return params_; }
  ag::ParameterSet& parameters() { return params_; }

 private:
  NetworkSpec spec_;
  ag::ParameterSet params_;
};

/// Parameter layout (path -> shape) implied by a spec.
std::vector<std::pair<std::string, ag::Shape>> parameter_shapes(const NetworkSpec& spec);

}  // namespace pcdiag::nets
