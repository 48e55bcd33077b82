#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pcdiag/autograd.hpp"

namespace pcdiag::ag {

/// Trainable tensors keyed by dot-separated path. std::map keeps iteration
/// lexicographic, which every serializer and optimizer relies on.
class ParameterSet {
 public:
  /// Registers a new trainable leaf; throws contract on duplicate path.
  Tensor& add(const std::string& path, Shape shape, std::vector<double> values);
  const Tensor& at(const std::string& path) const;
  Tensor& at(const std::string& path);
  bool contains(const std::string& path) const { return params_.count(path) != 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

enum class OptimizerKind { sgd, adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step_count = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

/// One bias-corrected Adam update of `p` in place; `step` counts from 1.
void adam_update(std::span<double> p, std::span<const double> g, std::vector<double>& m,
                 std::vector<double>& v, std::size_t step, const OptimizerState& hyper);

/// Applies one update from the accumulated gradients, then zeroes them.
/// Throws contract naming the path when a parameter has no gradient.
void optimizer_step(ParameterSet& params, OptimizerState& state);

/// Central-difference gradient check of a scalar-valued graph builder.
/// Returns max_i |analytic_i - numeric_i| / max(1e-8, |numeric_i|).
double finite_difference_check(const std::function<Tensor(const Tensor&)>& function,
                               const Shape& shape, std::span<const double> input,
                               double h = 1e-5);

}  // namespace pcdiag::ag
