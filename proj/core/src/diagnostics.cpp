#include "pcdiag/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <thread>

#include "pcdiag/error.hpp"
#include "pcdiag/optim.hpp"
#include "pcdiag/report.hpp"
#include "pcdiag/rng.hpp"

namespace pcdiag::diag {

using ag::Tensor;

namespace {

const double kLogSigmaMin = std::log(kSigmaMin);
const double kLogSigmaMax = std::log(kSigmaMax);

double clamp_rho(double rho) { return std::clamp(rho, kLogSigmaMin, kLogSigmaMax); }

// Bounds map back to the exact cap values.
double sigma_of(double rho) {
  if (rho >= kLogSigmaMax) return kSigmaMax;
  if (rho <= kLogSigmaMin) return kSigmaMin;
  return std::exp(rho);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Feature map under a fixed plan: coords [3 x n] -> tap.
struct Evaluator {
  const Probe& probe;
  Tensor base;
  Tensor rotation;
  std::size_t n;

  explicit Evaluator(const Probe& p) : probe(p), base(geom::to_tensor(*p.cloud)), n(p.cloud->size()) {
    if (p.rotation != nullptr) rotation = geom::to_tensor(*p.rotation);
  }

  Tensor feature(const Tensor& coords) const {
    const Tensor c = rotation.defined() ? ag::matmul(rotation, coords) : coords;
    return probe.net->forward(c, *probe.plan).tap;
  }

  Tensor noisy(const Tensor& sigma, std::vector<double> draws) const {
    return base + ag::scale_columns(Tensor::constant({3, n}, std::move(draws)), sigma);
  }
};

std::vector<double> normal_draws(Rng& rng, std::size_t count) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(count);
  for (auto& x : u) x = normal(rng);
  return u;
}

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

void check_probe(const Probe& p) {
  if (p.net == nullptr || p.cloud == nullptr || p.plan == nullptr) {
    fail(ErrorKind::contract, "probe needs a network, a cloud and a plan");
  }
  if (p.plan->input_points != p.cloud->size()) {
    fail(ErrorKind::contract, "plan was built for " + std::to_string(p.plan->input_points) +
                                  " points, cloud has " + std::to_string(p.cloud->size()));
  }
}

}  // namespace

// ---- sigma fields -------------------------------------------------------------

std::vector<double> SigmaField::entropies() const {
  std::vector<double> h(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i) h[i] = std::log(sigma[i]) + kHalfLog2PiE;
  return h;
}

double SigmaField::total_entropy() const {
  double s = 0.0;
  for (double h : entropies()) s += h;
  return s;
}

void SigmaOptConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorKind::config, std::string(name) + " must be positive");
  };
  positive(target_factor, "sigma.target_factor");
  if (target) positive(*target, "sigma.target");
  positive(sigma0, "sigma.sigma0");
  positive(lambda_min, "sigma.lambda_min");
  positive(lambda_max, "sigma.lambda_max");
  positive(tolerance, "sigma.tolerance");
  positive(learning_rate, "sigma.learning_rate");
  if (lambda_min >= lambda_max) fail(ErrorKind::config, "sigma.lambda_min must be below lambda_max");
  if (tolerance >= 1.0) fail(ErrorKind::config, "sigma.tolerance must be < 1");
  if (variance_samples == 0 || lambda_iterations == 0 || steps == 0 || mc_samples == 0 || eval_samples == 0) {
    fail(ErrorKind::config, "sigma sample and step counts must be positive");
  }
}

double inherent_variance(const Probe& probe, double sigma0, std::size_t samples, std::uint64_t seed) {
  check_probe(probe);
  if (sigma0 < 0.0) fail(ErrorKind::value, "sigma0 must be non-negative");
  if (samples == 0) fail(ErrorKind::value, "inherent_variance needs at least one sample");
  ag::FreezeParameters freeze;
  const Evaluator ev(probe);
  const auto clean = ev.feature(ev.base);
  const Tensor sigma = Tensor::constant({ev.n}, std::vector<double>(ev.n, sigma0));
  Rng rng = make_rng(seed, "inherent-variance");
  double total = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto h = ev.feature(ev.noisy(sigma, normal_draws(rng, 3 * ev.n)));
    total += sq_distance(h.values(), clean.values());
  }
  return total / static_cast<double>(samples);
}

namespace {

struct Evaluation {
  double lambda = 0.0;
  std::vector<double> rho;
  double distance = 0.0;
};

class SigmaSolver {
 public:
  SigmaSolver(const Probe& probe, const SigmaOptConfig& config, std::uint64_t seed)
      : ev_(probe), config_(config), seed_(seed) {
    const auto f = ev_.feature(ev_.base);
    clean_ = Tensor::constant(f.shape(), std::vector<double>(f.values().begin(), f.values().end()));
    Rng rng = make_rng(seed, "sigma-eval");
    for (std::size_t s = 0; s < config.eval_samples; ++s) eval_draws_.push_back(normal_draws(rng, 3 * ev_.n));
  }

  std::size_t points() const { return ev_.n; }

  double distance(const std::vector<double>& rho) const {
    std::vector<double> sig(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) sig[i] = sigma_of(rho[i]);
    const Tensor sigma = Tensor::constant({ev_.n}, std::move(sig));
    double total = 0.0;
    for (const auto& u : eval_draws_) {
      total += sq_distance(ev_.feature(ev_.noisy(sigma, u)).values(), clean_.values());
    }
    return total / static_cast<double>(eval_draws_.size());
  }

  // Adam on rho at fixed lambda; returns the average of the last third of the iterates.
  std::vector<double> run(double lambda, std::vector<double> rho, std::size_t index) const {
    const std::size_t n = ev_.n;
    ag::OptimizerState hyper;
    hyper.learning_rate = config_.learning_rate;
    std::vector<double> m, v;
    Rng rng = make_rng(seed_, "sigma-noise", index);
    const std::size_t window_start = config_.steps - std::max<std::size_t>(1, config_.steps / 3);
    std::vector<double> sum(n, 0.0), lo(n, kLogSigmaMax), hi(n, kLogSigmaMin);
    std::size_t averaged = 0;
    const double weight = lambda / static_cast<double>(config_.mc_samples);
    for (std::size_t step = 1; step <= config_.steps; ++step) {
      const Tensor r = Tensor::variable({n}, rho);
      const Tensor sigma = ag::exp(r);
      Tensor penalty;
      for (std::size_t s = 0; s < config_.mc_samples; ++s) {
        const Tensor d = ag::sum(ag::square(ev_.feature(ev_.noisy(sigma, normal_draws(rng, 3 * n))) - clean_));
        penalty = penalty.defined() ? penalty + d : d;
      }
      const Tensor loss = penalty * weight - ag::sum(r);
      ag::backward(loss);
      ag::adam_update(rho, r.grad(), m, v, step, hyper);
      for (auto& x : rho) x = clamp_rho(x);
      if (step > window_start) {
        ++averaged;
        for (std::size_t i = 0; i < n; ++i) {
          sum[i] += rho[i];
          lo[i] = std::min(lo[i], rho[i]);
          hi[i] = std::max(hi[i], rho[i]);
        }
      }
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = lo[i] == hi[i] ? lo[i] : clamp_rho(sum[i] / static_cast<double>(averaged));
    }
    return out;
  }

 private:
  Evaluator ev_;
  const SigmaOptConfig& config_;
  std::uint64_t seed_;
  Tensor clean_;
  std::vector<std::vector<double>> eval_draws_;
};

SigmaResult make_result(const Evaluation& e, double target, std::size_t evaluations, bool converged) {
  SigmaResult r;
  r.field.sigma.resize(e.rho.size());
  for (std::size_t i = 0; i < e.rho.size(); ++i) r.field.sigma[i] = sigma_of(e.rho[i]);
  r.lambda = e.lambda;
  r.target = target;
  r.distance = e.distance;
  r.evaluations = evaluations;
  r.converged = converged;
  return r;
}

}  // namespace

SigmaResult optimize_sigma(const Probe& probe, const SigmaOptConfig& config, std::uint64_t seed) {
  check_probe(probe);
  config.validate();
  ag::FreezeParameters freeze;
  const std::size_t n = probe.cloud->size();

  double target = 0.0;
  double sigma_start = 0.0;
  if (config.target) {
    target = *config.target;
    sigma_start = std::sqrt(target / (3.0 * static_cast<double>(n)));
  } else {
    const double v0 = inherent_variance(probe, config.sigma0, config.variance_samples, seed);
    target = config.target_factor * v0;
    if (!(v0 > 0.0)) {
      // The tap ignores the input entirely: any noise meets the constraint.
      Evaluation capped{config.lambda_min, std::vector<double>(n, kLogSigmaMax), 0.0};
      return make_result(capped, 0.0, 0, true);
    }
    sigma_start = config.sigma0 * std::sqrt(target / v0);
  }

  const SigmaSolver solver(probe, config, seed);
  std::vector<Evaluation> evals;
  // A linear feature meets T at lambda = n / 2T; the search bracket is relative to it.
  const double lambda0 = static_cast<double>(n) / (2.0 * target);
  const double lambda_lo = config.lambda_min * lambda0, lambda_hi = config.lambda_max * lambda0;
  double lambda = lambda0;
  std::vector<double> rho_start(n, clamp_rho(std::log(sigma_start)));
  double too_loose = 0.0;  // largest lambda seen with distance above T
  double too_tight = 0.0;  // smallest lambda seen with distance below T

  for (std::size_t it = 0; it < config.lambda_iterations; ++it) {
    Evaluation e;
    e.lambda = lambda;
    e.rho = solver.run(lambda, rho_start, it);
    e.distance = solver.distance(e.rho);
    evals.push_back(e);

    const bool all_capped = std::all_of(e.rho.begin(), e.rho.end(), [](double r) { return r >= kLogSigmaMax; });
    const bool all_floor = std::all_of(e.rho.begin(), e.rho.end(), [](double r) { return r <= kLogSigmaMin; });
    const double d = e.distance;
    if (std::abs(d - target) <= config.tolerance * target) return make_result(e, target, evals.size(), true);
    if (d < target && (all_capped || lambda <= lambda_lo)) {
      return make_result(e, target, evals.size(), true);
    }
    if (d > target && (lambda >= lambda_hi || all_floor)) {
      std::string seen;
      for (const auto& x : evals) seen += " lambda=" + fmt(x.lambda) + ":d=" + fmt(x.distance);
      fail(ErrorKind::calibration, "distance target " + fmt(target) + " unreachable;" + seen);
    }

    if (d > target) {
      too_loose = std::max(too_loose, lambda);
    } else {
      too_tight = too_tight == 0.0 ? lambda : std::min(too_tight, lambda);
    }

    // Next lambda: secant in log-log space (distance ~ 1/lambda without history).
    double slope = -1.0;
    if (evals.size() >= 2 && d > 0.0) {
      const auto& prev = evals[evals.size() - 2];
      if (prev.distance > 0.0 && prev.lambda != lambda) {
        const double s = (std::log(d) - std::log(prev.distance)) / (std::log(lambda) - std::log(prev.lambda));
        if (std::isfinite(s) && s < -0.1 && s > -10.0) slope = s;
      }
    }
    double next = d > 0.0 ? lambda * std::exp((std::log(target) - std::log(d)) / slope) : lambda_lo;
    next = std::clamp(next, lambda_lo, lambda_hi);
    if (too_loose > 0.0 && too_tight > 0.0 && !(next > too_loose && next < too_tight)) {
      next = std::sqrt(too_loose * too_tight);
    }

    // Warm start from the evaluation closest in log-lambda, rescaled by the sigma ~ lambda^-1/2 law.
    const auto nearest = std::min_element(evals.begin(), evals.end(), [&](const auto& a, const auto& b) {
      return std::abs(std::log(a.lambda / next)) < std::abs(std::log(b.lambda / next));
    });
    const double shift = -0.5 * std::log(next / nearest->lambda);
    rho_start = nearest->rho;
    for (auto& r : rho_start) r = clamp_rho(r + shift);
    lambda = next;
  }

  const auto best = std::min_element(evals.begin(), evals.end(), [&](const auto& a, const auto& b) {
    return std::abs(std::log(std::max(a.distance, 1e-300) / target)) <
           std::abs(std::log(std::max(b.distance, 1e-300) / target));
  });
  return make_result(*best, target, evals.size(), false);
}

// ---- closed-form metrics --------------------------------------------------------

std::vector<double> information_discarding(const SigmaField& field) {
  for (double s : field.sigma) {
    if (!(s > 0.0)) fail(ErrorKind::value, "sigma values must be positive");
  }
  return field.entropies();
}

double information_concentration(std::span<const double> entropies, std::span<const bool> fg_mask) {
  if (entropies.size() != fg_mask.size()) {
    fail(ErrorKind::mask, "mask has " + std::to_string(fg_mask.size()) + " entries for " +
                              std::to_string(entropies.size()) + " points");
  }
  double fg = 0.0, bg = 0.0;
  std::size_t nfg = 0, nbg = 0;
  for (std::size_t i = 0; i < entropies.size(); ++i) {
    if (fg_mask[i]) {
      fg += entropies[i];
      ++nfg;
    } else {
      bg += entropies[i];
      ++nbg;
    }
  }
  if (nfg == 0 || nbg == 0) fail(ErrorKind::mask, "mask needs both foreground and background points");
  return bg / static_cast<double>(nbg) - fg / static_cast<double>(nfg);
}

double information_concentration(std::span<const double> entropies, const std::vector<bool>& fg_mask) {
  std::unique_ptr<bool[]> flags(new bool[fg_mask.size()]);
  for (std::size_t i = 0; i < fg_mask.size(); ++i) flags[i] = fg_mask[i];
  return information_concentration(entropies, std::span<const bool>(flags.get(), fg_mask.size()));
}

double gaussian_kl(const SigmaField& a, const SigmaField& b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::dimension, "gaussian_kl: fields of " + std::to_string(a.size()) + " and " +
                                   std::to_string(b.size()) + " points");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double sa = a.sigma[i], sb = b.sigma[i];
    kl += 3.0 * (std::log(sb / sa) + (sa * sa) / (2.0 * sb * sb) - 0.5);
  }
  // Near-identical fields can round a few ulps below zero.
  return std::max(kl, 0.0);
}

double jsd_variational(const SigmaField& a, const SigmaField& b) {
  const double kab = gaussian_kl(a, b);
  const double kba = gaussian_kl(b, a);
  // -log(0.5 (1 + e^-k)) = log 2 - log1p(e^-k)
  const double ja = std::numbers::ln2 - std::log1p(std::exp(-kab));
  const double jb = std::numbers::ln2 - std::log1p(std::exp(-kba));
  return 0.5 * ja + 0.5 * jb;
}

// ---- rotation ---------------------------------------------------------------------

RotationResult rotation_non_robustness(const nets::Network& net, const geom::PointCloud& cloud,
                                       std::span<const geom::Rotation> rotations,
                                       const SigmaOptConfig& config, std::uint64_t seed) {
  if (rotations.size() < 2) fail(ErrorKind::value, "rotation_non_robustness needs at least 2 rotations");
  RotationResult out;
  out.rotations.assign(rotations.begin(), rotations.end());
  for (const auto& rot : rotations) {
    const auto plan = net.plan(geom::apply_rotation(cloud, rot));
    const Probe probe{&net, &cloud, &plan, &rot};
    // Same seed for every rotation: the noise draws are shared across rotations.
    out.fields.push_back(optimize_sigma(probe, config, seed).field);
  }
  double total = 0.0;
  for (std::size_t a = 0; a < out.fields.size(); ++a) {
    for (std::size_t b = a + 1; b < out.fields.size(); ++b) {
      out.pair_jsd.push_back(jsd_variational(out.fields[a], out.fields[b]));
      total += out.pair_jsd.back();
    }
  }
  out.value = total / static_cast<double>(out.pair_jsd.size());
  return out;
}

RotationResult rotation_non_robustness(const nets::Network& net, const geom::PointCloud& cloud,
                                       const RotationConfig& config, std::uint64_t seed) {
  if (config.rotations < 2) fail(ErrorKind::value, "rotation_non_robustness needs at least 2 rotations");
  Rng rng = make_rng(seed, "rotations");
  std::vector<geom::Rotation> rots;
  for (std::size_t r = 0; r < config.rotations; ++r) rots.push_back(geom::random_rotation(rng, config.mode));
  return rotation_non_robustness(net, cloud, rots, config.sigma, seed);
}

// ---- attacks ----------------------------------------------------------------------

AttackResult targeted_attack(const nets::Network& net, const geom::PointCloud& cloud, std::size_t target,
                             const AttackConfig& config) {
  const std::size_t classes = net.num_classes();
  if (target >= classes) {
    fail(ErrorKind::index, "attack target " + std::to_string(target) + " outside " + std::to_string(classes) +
                               " classes");
  }
  if (!(config.c_min > 0.0) || config.c_min > config.c_max || config.search_steps == 0 || config.steps == 0 ||
      !(config.learning_rate > 0.0)) {
    fail(ErrorKind::config, "invalid attack configuration");
  }
  ag::FreezeParameters freeze;
  const auto prediction = nets::classify(net, cloud);
  if (prediction == target) {
    fail(ErrorKind::contract, "attack target " + std::to_string(target) + " is already the prediction");
  }
  const Tensor base = geom::to_tensor(cloud);
  const std::size_t n = cloud.size();
  auto moved_cloud = [&](const std::vector<double>& eps) {
    geom::PointCloud moved = cloud;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < 3; ++r) moved.points[i][r] += eps[r * n + i];
    }
    return moved;
  };
  std::vector<std::size_t> others;
  for (std::size_t j = 0; j < classes; ++j) {
    if (j != target) others.push_back(j);
  }
  const std::vector<std::size_t> target_idx{target};

  AttackResult best;
  best.target = target;
  best.l2 = std::numeric_limits<double>::infinity();
  ag::OptimizerState hyper;
  hyper.learning_rate = config.learning_rate;

  double c = std::clamp(config.c_initial, config.c_min, config.c_max);
  double c_fail = config.c_min;  // largest failing c so far
  double c_pass = 0.0;           // smallest successful c so far (0 = none)
  for (std::size_t round = 0; round < config.search_steps; ++round) {
    std::vector<double> eps(3 * n, 0.0), m, v;
    std::vector<double> run_best;
    double run_best_norm = std::numeric_limits<double>::infinity();
    for (std::size_t step = 0; step <= config.steps; ++step) {
      // Contexts follow the current iterate, so a hit here is a hit for classify().
      const auto plan = net.plan(moved_cloud(eps));
      const Tensor e = Tensor::variable({3, n}, eps);
      const Tensor logits = net.forward(base + e, plan).logits;
      if (nets::argmax(logits.values()) == target) {
        double norm = 0.0;
        for (double x : eps) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < run_best_norm) {
          run_best_norm = norm;
          run_best = eps;
        }
      }
      if (step == config.steps) break;
      const Tensor margin = ag::reduce_max(ag::select(logits, others)) - ag::select(logits, target_idx);
      const Tensor loss = ag::sum(ag::square(e)) + ag::relu(margin) * c;
      ag::backward(loss);
      ag::adam_update(eps, e.grad(), m, v, step + 1, hyper);
      ++best.iterations;
    }

    bool passed = false;
    if (!run_best.empty()) {
      passed = nets::classify(net, moved_cloud(run_best)) == target;
      if (passed && run_best_norm < best.l2) {
        best.success = true;
        best.l2 = run_best_norm;
        best.perturbation.assign(n, geom::Vec3{});
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t r = 0; r < 3; ++r) best.perturbation[i][r] = run_best[r * n + i];
        }
      }
    }

    if (passed) {
      c_pass = c_pass == 0.0 ? c : std::min(c_pass, c);
      c = std::sqrt(c_fail * c_pass);
    } else {
      c_fail = std::max(c_fail, c);
      c = c_pass > 0.0 ? std::sqrt(c_fail * c_pass) : std::min(c * 10.0, config.c_max);
    }
  }
  if (!best.success) {
    best.l2 = 0.0;
    best.perturbation.assign(n, geom::Vec3{});
  }
  return best;
}

RobustnessResult adversarial_robustness(const nets::Network& net, const geom::PointCloud& cloud,
                                        const AttackConfig& config, bool allow_unreliable) {
  if (net.num_classes() < 2) fail(ErrorKind::value, "adversarial robustness needs at least 2 classes");
  RobustnessResult out;
  out.prediction = nets::classify(net, cloud);
  double total = 0.0;
  std::size_t wins = 0;
  for (std::size_t t = 0; t < net.num_classes(); ++t) {
    if (t == out.prediction) continue;
    out.attacks.push_back(targeted_attack(net, cloud, t, config));
    if (out.attacks.back().success) {
      total += out.attacks.back().l2;
      ++wins;
    }
  }
  out.success_fraction = static_cast<double>(wins) / static_cast<double>(out.attacks.size());
  out.mean_l2 = wins > 0 ? total / static_cast<double>(wins) : std::numeric_limits<double>::quiet_NaN();
  if (!allow_unreliable && out.success_fraction < 0.5) {
    fail(ErrorKind::reliability, "only " + std::to_string(wins) + " of " + std::to_string(out.attacks.size()) +
                                     " targeted attacks succeeded");
  }
  return out;
}

double neighborhood_inconsistency(std::span<const double> entropies, const geom::PointCloud& cloud,
                                  std::size_t k) {
  const std::size_t n = cloud.size();
  if (entropies.size() != n) {
    fail(ErrorKind::dimension, std::to_string(entropies.size()) + " entropies for " + std::to_string(n) +
                                   " points");
  }
  if (k == 0 || n <= k) {
    fail(ErrorKind::count, "neighborhood_inconsistency needs more than " + std::to_string(k) + " points, got " +
                               std::to_string(n));
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const auto nbr = geom::knn_search(cloud.points, all, k, false);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto j : nbr.of(i)) {
      lo = std::min(lo, entropies[j]);
      hi = std::max(hi, entropies[j]);
    }
    total += hi - lo;
  }
  return total / static_cast<double>(n);
}

// ---- orchestration ----------------------------------------------------------------

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::discarding: return "discarding";
    case Metric::concentration: return "concentration";
    case Metric::rotation: return "rotation";
    case Metric::adversarial: return "adversarial";
    case Metric::neighborhood: return "neighborhood";
  }
  return "?";
}

std::vector<Metric> parse_metrics(std::string_view list) {
  constexpr Metric kAll[] = {Metric::discarding, Metric::concentration, Metric::rotation, Metric::adversarial,
                             Metric::neighborhood};
  std::vector<Metric> out;
  auto add = [&](Metric m) {
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  };
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const auto comma = list.find(',', pos);
    auto item = list.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      bool known = false;
      if (item == "all") {
        for (auto m : kAll) add(m);
        known = true;
      }
      for (auto m : kAll) {
        if (item == to_string(m)) {
          add(m);
          known = true;
        }
      }
      if (!known) fail(ErrorKind::config, "unknown metric '" + std::string(item) + "'");
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct SampleResult {
  std::vector<double> entropies;
  std::optional<double> discarding, concentration, rotation, adversarial, neighborhood;
  std::vector<double> pair_jsd;
  std::vector<AttackSummary> attacks;
};

bool wants(const DiagnoseConfig& c, Metric m) {
  return std::find(c.metrics.begin(), c.metrics.end(), m) != c.metrics.end();
}

SampleResult diagnose_one(const nets::Network& net, const geom::PointCloud& cloud, std::size_t index,
                          const DiagnoseConfig& config, std::uint64_t seed) {
  SampleResult r;
  const bool field = wants(config, Metric::discarding) || wants(config, Metric::concentration) ||
                     wants(config, Metric::neighborhood);
  if (field) {
    const auto plan = net.plan(cloud);
    const Probe probe{&net, &cloud, &plan, nullptr};
    const auto res = optimize_sigma(probe, config.sigma, derive_seed(seed, "sigma", index));
    r.entropies = information_discarding(res.field);
    double total = 0.0;
    for (double h : r.entropies) total += h;
    if (wants(config, Metric::discarding)) r.discarding = total;
    if (wants(config, Metric::concentration)) {
      if (!cloud.fg_mask) fail(ErrorKind::mask, "information concentration needs a foreground mask");
      r.concentration = information_concentration(r.entropies, *cloud.fg_mask);
    }
    if (wants(config, Metric::neighborhood)) {
      r.neighborhood = neighborhood_inconsistency(r.entropies, cloud, config.neighbors);
    }
  }
  if (wants(config, Metric::rotation)) {
    const RotationConfig rc{config.rotations, config.rotation_mode, config.sigma};
    auto rot = rotation_non_robustness(net, cloud, rc, derive_seed(seed, "rotation", index));
    r.rotation = rot.value;
    r.pair_jsd = std::move(rot.pair_jsd);
  }
  if (wants(config, Metric::adversarial)) {
    const auto adv = adversarial_robustness(net, cloud, config.attack);
    r.adversarial = adv.mean_l2;
    for (const auto& a : adv.attacks) r.attacks.push_back({index, a.target, a.success, a.l2});
  }
  return r;
}

std::optional<double> mean_of(const std::vector<SampleResult>& rs, std::optional<double> SampleResult::*field) {
  if (rs.empty() || !(rs.front().*field)) return std::nullopt;
  double total = 0.0;
  for (const auto& r : rs) total += *(r.*field);
  return total / static_cast<double>(rs.size());
}

}  // namespace

DiagnosisReport diagnose(const nets::Network& net, std::span<const geom::PointCloud> samples,
                         const DiagnoseConfig& config, std::uint64_t seed, std::string model_id,
                         std::size_t threads) {
  DiagnosisReport report;
  report.model_id = std::move(model_id);
  report.seed = seed;
  report.config = config_json(config);
  if (config.metrics.empty()) return report;
  if (samples.empty()) fail(ErrorKind::value, "no samples to diagnose");
  if (wants(config, Metric::discarding) || wants(config, Metric::concentration) ||
      wants(config, Metric::neighborhood) || wants(config, Metric::rotation)) {
    config.sigma.validate();
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label && *samples[i].label >= net.num_classes()) {
      fail(ErrorKind::label, "sample " + std::to_string(i) + " label exceeds the model's class count");
    }
  }

  std::vector<SampleResult> results(samples.size());
  std::vector<std::exception_ptr> errors(samples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    ag::FreezeParameters freeze;
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        results[i] = diagnose_one(net, samples[i], i, config, seed);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, samples.size());
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), "sample " + std::to_string(i) + ": " + e.detail());
    }
  }

  report.metrics.information_discarding = mean_of(results, &SampleResult::discarding);
  report.metrics.information_concentration = mean_of(results, &SampleResult::concentration);
  report.metrics.rotation_non_robustness = mean_of(results, &SampleResult::rotation);
  report.metrics.adversarial_robustness = mean_of(results, &SampleResult::adversarial);
  report.metrics.neighborhood_inconsistency = mean_of(results, &SampleResult::neighborhood);
  for (auto& r : results) {
    if (!r.entropies.empty()) report.per_point_H.push_back(std::move(r.entropies));
    if (!r.pair_jsd.empty()) report.per_pair_jsd.push_back(std::move(r.pair_jsd));
    report.attacks.insert(report.attacks.end(), r.attacks.begin(), r.attacks.end());
  }
  return report;
}

}  // namespace pcdiag::diag
