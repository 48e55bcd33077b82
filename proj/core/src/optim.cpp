#include "pcdiag/optim.hpp"

#include <algorithm>
#include <cmath>

#include "pcdiag/error.hpp"

namespace pcdiag::ag {

Tensor& ParameterSet::add(const std::string& path, Shape shape, std::vector<double> values) {
  if (params_.count(path)) fail(ErrorKind::contract, "duplicate parameter path '" + path + "'");
  auto [it, inserted] = params_.emplace(path, Tensor::parameter(std::move(shape), std::move(values)));
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) fail(ErrorKind::contract, "unknown parameter path '" + path + "'");
  return it->second;
}

Tensor& ParameterSet::at(const std::string& path) {
  auto it = params_.find(path);
  if (it == params_.end()) fail(ErrorKind::contract, "unknown parameter path '" + path + "'");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void adam_update(std::span<double> p, std::span<const double> g, std::vector<double>& m,
                 std::vector<double>& v, std::size_t step, const OptimizerState& hyper) {
  if (m.size() != p.size()) m.assign(p.size(), 0.0);
  if (v.size() != p.size()) v.assign(p.size(), 0.0);
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
    p[i] -= hyper.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + hyper.epsilon);
  }
}

void optimizer_step(ParameterSet& params, OptimizerState& state) {
  for (const auto& [path, t] : params) {
    if (!t.has_grad()) fail(ErrorKind::contract, "parameter '" + path + "' has no gradient");
  }
  ++state.step_count;
  for (auto& [path, t] : params) {
    auto p = t.mutable_values();
    if (state.kind == OptimizerKind::sgd) {
      auto g = t.grad();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= state.learning_rate * g[i];
    } else {
      adam_update(p, t.grad(), state.first_moment[path], state.second_moment[path], state.step_count,
                  state);
    }
    t.zero_grad();
  }
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& function,
                               const Shape& shape, std::span<const double> input, double h) {
  std::vector<double> base(input.begin(), input.end());
  Tensor x = Tensor::variable(shape, base);
  Tensor loss = function(x);
  backward(loss);
  std::vector<double> analytic(base.size(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  double worst = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto eval = [&](double offset) {
      std::vector<double> moved = base;
      moved[i] += offset;
      return function(Tensor::constant(shape, std::move(moved))).item();
    };
    const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace pcdiag::ag
