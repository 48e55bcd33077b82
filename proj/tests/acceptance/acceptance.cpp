// Acceptance harness: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "cli/experiment.hpp"
#include "fixtures.hpp"
#include "json.hpp"
#include "pcdiag/data.hpp"
#include "pcdiag/diagnostics.hpp"
#include "pcdiag/error.hpp"
#include "pcdiag/network.hpp"
#include "pcdiag/optim.hpp"
#include "pcdiag/rng.hpp"

#ifndef PCDIAG_CONFIG_DIR
#error "PCDIAG_CONFIG_DIR must point at tools/configs"
#endif

using namespace pcdiag;
using ag::Tensor;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kOpTolerance = 1e-4;
constexpr double kNetTolerance = 1e-3;
constexpr double kNetStep = 1e-6;
constexpr double kGradientSeconds = 120.0;
constexpr double kSigmaTolerance = 0.05;
constexpr double kSigmaSeconds = 60.0;
constexpr double kMaskConcentration = 0.5;
constexpr double kMaskSigma = 0.015;
constexpr double kJsdTolerance = 1e-12;
constexpr double kPlugInTolerance = 5e-7;
constexpr double kRotationSeconds = 600.0;
constexpr double kAttackTolerance = 0.10;
constexpr double kAttackSeconds = 60.0;
constexpr double kStudySeconds = 45.0 * 60.0;
constexpr double kBaselineAccuracy = 0.8;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss.precision(digits);
  ss << v;
  return ss.str();
}

std::vector<double> uniform(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  auto rng = make_rng(seed, "acceptance-uniform");
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  return ag::sum(y * Tensor::constant(y.shape(), uniform(y.size(), seed)));
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::vector<std::string>& args, std::string* err = nullptr) {
  std::ostringstream out, e;
  const int code = cli::run(args, out, e);
  if (err) *err = e.str();
  return code;
}

// ---- 1 -----------------------------------------------------------------------

double op_errors() {
  double worst = 0.0;
  auto check = [&](const std::function<Tensor(const Tensor&)>& f, ag::Shape shape, std::vector<double> x) {
    worst = std::max(worst, ag::finite_difference_check(f, shape, x));
  };
  const auto a = Tensor::constant({2, 3}, uniform(6, 1));
  const auto pos = Tensor::constant({2, 3}, uniform(6, 2, 0.5, 1.5));
  const auto m34 = Tensor::constant({3, 4}, uniform(12, 3));
  const auto x23 = uniform(6, 4);
  const auto x23_pos = uniform(6, 5, 0.5, 1.5);

  check([&](const Tensor& x) { return weighted_sum(ag::matmul(x, m34), 10); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::matmul(m34, x), 11); }, {4, 2}, uniform(8, 6));
  check([&](const Tensor& x) { return weighted_sum(ag::transpose(x), 12); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::add(x, a), 13); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::sub(a, x), 14); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::mul(x, a), 15); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::div(a, x), 16); }, {2, 3}, x23_pos);
  check([&](const Tensor& x) { return weighted_sum(ag::div(x, pos), 17); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::maximum(x, a), 18); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::add(x, 0.3), 19); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::mul(x, -1.7), 20); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::relu(x), 21); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::exp(x), 22); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::square(x), 23); }, {2, 3}, x23);
  check([&](const Tensor& x) { return ag::sum(x * x); }, {2, 3}, x23);
  check([&](const Tensor& x) { return weighted_sum(ag::reduce_max(x), 24); }, {4, 5}, uniform(20, 7));
  check([&](const Tensor& x) { return ag::softmax_cross_entropy(x, 2); }, {5}, uniform(5, 8));
  check([&](const Tensor& x) { return weighted_sum(ag::reshape(x, {3, 2}), 25); }, {2, 3}, x23);
  const std::vector<std::size_t> idx{5, 0, 3, 3};
  check([&](const Tensor& x) { return weighted_sum(ag::select(x, idx), 26); }, {2, 3}, x23);
  const std::vector<std::size_t> cols{2, 0, 2};
  check([&](const Tensor& x) { return weighted_sum(ag::gather_columns(x, cols), 27); }, {2, 3}, x23);
  check(
      [&](const Tensor& x) {
        const std::vector<Tensor> parts{x, a, x};
        return weighted_sum(ag::concat_rows(parts), 28);
      },
      {2, 3}, x23);
  const auto vec3 = Tensor::constant({3}, uniform(3, 9));
  const auto vec4 = Tensor::constant({4}, uniform(4, 10));
  check([&](const Tensor& x) { return weighted_sum(ag::add_bias(x, vec3), 29); }, {3, 4}, uniform(12, 11));
  check([&](const Tensor& w) { return weighted_sum(ag::add_bias(m34, w), 30); }, {3}, uniform(3, 12));
  check([&](const Tensor& x) { return weighted_sum(ag::scale_columns(x, vec4), 31); }, {3, 4}, uniform(12, 13));
  check([&](const Tensor& w) { return weighted_sum(ag::scale_columns(m34, w), 32); }, {4}, uniform(4, 14));
  check([&](const Tensor& x) { return weighted_sum(ag::scale_rows(x, vec3), 33); }, {3, 4}, uniform(12, 15));
  check([&](const Tensor& w) { return weighted_sum(ag::scale_rows(m34, w), 34); }, {3}, uniform(3, 16));
  check([&](const Tensor& x) { return weighted_sum(ag::column_sq_norm(x), 35); }, {3, 4}, uniform(12, 17));
  const auto F = Tensor::constant({2, 6}, uniform(12, 18));
  const auto W = Tensor::constant({4, 6}, uniform(24, 19));
  check([&](const Tensor& x) { return weighted_sum(ag::grouped_matmul_nt(x, W, 3), 36); }, {2, 6}, uniform(12, 20));
  check([&](const Tensor& w) { return weighted_sum(ag::grouped_matmul_nt(F, w, 3), 37); }, {4, 6}, uniform(24, 21));
  check([&](const Tensor& x) { return weighted_sum(ag::neighborhood_density(x, 4, 0.7), 38); }, {3, 8},
        uniform(24, 22));
  return worst;
}

nets::NetworkSpec desk_spec(const std::vector<nets::ArchToggle>& toggles) {
  const auto config = cli::load_experiment(fs::path(PCDIAG_CONFIG_DIR) / "desk.json");
  const auto& names = config.dataset.classes;
  auto spec = cli::model_spec(config, names.empty() ? data::shape_class_names().size() : names.size());
  for (const auto& t : toggles) spec = nets::insert_architecture(spec, t);
  return spec;
}

// Relative error of the whole-network gradient (inputs and a sample of every
// parameter tensor) under a fixed plan.
double network_error(const nets::Classifier& net, const geom::PointCloud& cloud, std::uint64_t seed) {
  const auto plan = net.plan(cloud);
  const auto coords = geom::to_tensor(cloud);
  const std::vector<double> x0(coords.values().begin(), coords.values().end());
  auto loss_of = [&](const Tensor& x) {
    const auto r = net.forward(x, plan);
    return weighted_sum(r.logits, seed) + weighted_sum(r.tap, seed + 1);
  };
  double worst;
  {
    ag::FreezeParameters freeze;
    worst = ag::finite_difference_check(loss_of, coords.shape(), x0, kNetStep);
  }

  auto& params = const_cast<ag::ParameterSet&>(net.parameters());
  params.zero_grad();
  ag::backward(loss_of(Tensor::constant(coords.shape(), x0)));
  auto rng = make_rng(seed, "acceptance-params");
  for (auto& [name, p] : params) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_values();
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    for (int draw = 0; draw < 16; ++draw) {
      const std::size_t i = pick(rng);
      const double keep = values[i];
      ag::FreezeParameters freeze;
      values[i] = keep + kNetStep;
      const double up = loss_of(Tensor::constant(coords.shape(), x0)).item();
      values[i] = keep - kNetStep;
      const double down = loss_of(Tensor::constant(coords.shape(), x0)).item();
      values[i] = keep;
      const double numeric = (up - down) / (2.0 * kNetStep);
      const double g = analytic.empty() ? 0.0 : analytic[i];
      worst = std::max(worst, std::abs(g - numeric) / std::max(1e-8, std::abs(numeric)));
    }
  }
  params.zero_grad();
  return worst;
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  const double ops = op_errors();

  nets::ArchToggle a1{.module = nets::ArchModule::arch1, .blocks = {1, 2}};
  nets::ArchToggle a2{.module = nets::ArchModule::arch2, .blocks = {2}};
  nets::ArchToggle a3{.module = nets::ArchModule::arch3, .blocks = {1}, .arch3_scales = {16, 8},
                      .arch3_widths = {{16, 16, 32}}};
  nets::ArchToggle a4{.module = nets::ArchModule::arch4, .blocks = {1, 2}, .arch4_radius = 0.6};
  const std::vector<std::vector<nets::ArchToggle>> variants{{}, {a1, a2}, {a3, a4}};

  double net_worst = 0.0;
  std::string per_net;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    nets::Classifier net(desk_spec(variants[v]), 100 + v);
    // Zero biases put every self-neighbor column exactly on a ReLU kink.
    auto jitter = make_rng(150 + v, "acceptance-jitter");
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& [name, p] : net.parameters()) {
      for (auto& x : p.mutable_values()) x += u(jitter);
    }
    const auto cloud = data::normalize(data::generate_shape(static_cast<data::ShapeClass>(v), 128, 200 + v));
    const double e = network_error(net, cloud, 300 + v);
    net_worst = std::max(net_worst, e);
    per_net += (v ? ", " : "") + fmt(e, 3);
  }
  const double t = seconds_since(t0);
  return {ops < kOpTolerance && net_worst < kNetTolerance && t < kGradientSeconds,
          "ops max rel err " + fmt(ops, 3) + ", networks " + per_net + ", " + fmt(t, 3) + " s"};
}

// ---- 2 -----------------------------------------------------------------------

Outcome criterion_sigma_oracle() {
  const auto t0 = Clock::now();
  const std::size_t n = 64;
  const double sigma = 0.04;
  const auto id = testing::identity_featurizer(n, 1);
  const auto cloud = testing::random_cloud(n, 2);
  const auto plan = id.plan(cloud);
  const diag::Probe probe{&id, &cloud, &plan, nullptr};

  diag::SigmaOptConfig cfg;
  cfg.target = 3.0 * n * sigma * sigma;
  const auto res = diag::optimize_sigma(probe, cfg, 3);
  double worst = 0.0;
  for (double s : res.field.sigma) worst = std::max(worst, std::abs(s - sigma) / sigma);

  cfg.target = 10.0 * *cfg.target;
  const auto capped = diag::optimize_sigma(probe, cfg, 3);
  const bool all_capped = std::all_of(capped.field.sigma.begin(), capped.field.sigma.end(),
                                      [](double s) { return s == diag::kSigmaMax; });
  const double t = seconds_since(t0);
  return {worst <= kSigmaTolerance && all_capped && t < kSigmaSeconds,
          "max rel deviation " + fmt(worst, 3) + ", capped " + (all_capped ? "all" : "not all") + ", " +
              fmt(t, 3) + " s"};
}

// ---- 3 -----------------------------------------------------------------------

Outcome criterion_masking() {
  const std::size_t fg_points = 48, bg_points = 16;
  std::size_t good = 0;
  double lowest = 1e300;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto fg = data::normalize(data::generate_shape(static_cast<data::ShapeClass>(s % 6), fg_points, 400 + s));
    const auto donor =
        data::normalize(data::generate_shape(static_cast<data::ShapeClass>((s + 1) % 6), 128, 500 + s));
    const auto cloud = data::compose_background(fg, donor, bg_points, 600 + s);
    const auto& mask = *cloud.fg_mask;
    const auto net = testing::masking_network(mask, 8, 700 + s);
    const auto plan = net.plan(cloud);
    const diag::Probe probe{&net, &cloud, &plan, nullptr};
    // Uniform foreground noise of kMaskSigma on a linear tap costs kMaskSigma^2 |W|_F^2.
    double frobenius = 0.0;
    for (double w : net.parameters().at("fc_1.w0").values()) frobenius += w * w;
    diag::SigmaOptConfig cfg;
    cfg.target = kMaskSigma * kMaskSigma * frobenius;
    const auto res = diag::optimize_sigma(probe, cfg, 800 + s);
    bool capped = true;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) capped = capped && res.field.sigma[i] == diag::kSigmaMax;
    }
    const double c = diag::information_concentration(diag::information_discarding(res.field), mask);
    lowest = std::min(lowest, c);
    good += capped && c > kMaskConcentration;
  }
  return {good == 10, std::to_string(good) + "/10 clouds, lowest concentration " + fmt(lowest, 4)};
}

// ---- 4 -----------------------------------------------------------------------

Outcome criterion_jsd() {
  auto rng = make_rng(1, "acceptance-jsd");
  std::uniform_real_distribution<double> log_sigma(std::log(diag::kSigmaMin), std::log(diag::kSigmaMax));
  std::uniform_int_distribution<std::size_t> size(1, 64);
  double worst_identity = 0.0, worst_asym = 0.0, worst_excess = -1e300;
  for (int pair = 0; pair < 1000; ++pair) {
    const std::size_t n = size(rng);
    diag::SigmaField a, b;
    for (std::size_t i = 0; i < n; ++i) {
      a.sigma.push_back(std::exp(log_sigma(rng)));
      b.sigma.push_back(std::exp(log_sigma(rng)));
    }
    worst_identity = std::max(worst_identity, std::abs(diag::jsd_variational(a, a)));
    const double ab = diag::jsd_variational(a, b), ba = diag::jsd_variational(b, a);
    worst_asym = std::max(worst_asym, std::abs(ab - ba));
    worst_excess = std::max(worst_excess, std::max(ab, ba) - std::log(2.0));
  }

  // Plug-in for one point with sigmas 0.05 and 0.08.
  const double s1 = 0.05, s2 = 0.08;
  auto kl = [](double p, double q) { return 3.0 * (std::log(q / p) + p * p / (2.0 * q * q) - 0.5); };
  const double k12 = kl(s1, s2), k21 = kl(s2, s1);
  const double expect = 0.5 * (std::log(2.0 / (1.0 + std::exp(-k12))) + std::log(2.0 / (1.0 + std::exp(-k21))));
  const double got = diag::jsd_variational(diag::SigmaField{{s1}}, diag::SigmaField{{s2}});
  const double plug_err = std::abs(got - expect);

  const bool pass = worst_identity == 0.0 && worst_asym <= kJsdTolerance && worst_excess <= kJsdTolerance &&
                    plug_err < kPlugInTolerance;
  return {pass, "identical max " + fmt(worst_identity, 3) + ", asymmetry " + fmt(worst_asym, 3) +
                    ", excess over log 2 " + fmt(worst_excess, 3) + ", plug-in " + fmt(got, 8) + " vs " +
                    fmt(expect, 8)};
}

// ---- 5 -----------------------------------------------------------------------

Outcome criterion_rotation() {
  const auto t0 = Clock::now();
  const std::size_t classes = 6, clouds = 10;
  diag::RotationConfig rc;
  rc.rotations = 2;
  rc.sigma.steps = 100;
  rc.sigma.lambda_iterations = 8;
  rc.sigma.mc_samples = 4;
  rc.sigma.variance_samples = 16;
  rc.sigma.eval_samples = 16;

  std::size_t wins = 0;
  std::string means;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const nets::Classifier baseline(testing::small_spec(classes), 1000 + seed);
    const nets::Classifier control(testing::small_spec(classes, nets::Encoding::distance), 1000 + seed);
    double b = 0.0, c = 0.0;
    for (std::size_t i = 0; i < clouds; ++i) {
      const auto cloud = data::normalize(
          data::generate_shape(static_cast<data::ShapeClass>(i % classes), 64, derive_seed(seed, "cloud", i)));
      const auto stream = derive_seed(seed, "rotation", i);
      b += diag::rotation_non_robustness(baseline, cloud, rc, stream).value / clouds;
      c += diag::rotation_non_robustness(control, cloud, rc, stream).value / clouds;
    }
    wins += c < b;
    means += (seed ? "; " : "") + fmt(c, 3) + " < " + fmt(b, 3);
  }
  const double t = seconds_since(t0);
  return {wins >= 4 && t < kRotationSeconds,
          std::to_string(wins) + "/5 seeds (control < baseline: " + means + "), " + fmt(t, 3) + " s"};
}

// ---- 6 -----------------------------------------------------------------------

Outcome criterion_attack() {
  const auto t0 = Clock::now();
  const std::size_t n = 8;
  std::vector<double> w(3 * n);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + 0.7 * static_cast<double>(i));
  const double b = 0.05;
  double ww = 0.0;
  for (double v : w) ww += v * v;
  const auto net = testing::linear_two_class(w, b);

  std::size_t good = 0;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto cloud = testing::random_cloud(n, 900 + s);
    double z = b;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < 3; ++k) z += w[k * n + i] * cloud.points[i][k];
    }
    const double expect = std::abs(z) / std::sqrt(ww);
    const auto r = diag::adversarial_robustness(net, cloud, diag::AttackConfig{});
    const double rel = std::abs(r.mean_l2 - expect) / expect;
    worst = std::max(worst, rel);
    good += rel <= kAttackTolerance;
  }
  const double t = seconds_since(t0);
  return {good == 20 && t < kAttackSeconds,
          std::to_string(good) + "/20 inputs, max rel deviation " + fmt(worst, 3) + ", " + fmt(t, 3) + " s"};
}

// ---- 7 -----------------------------------------------------------------------

Outcome criterion_geometry() {
  auto rng = make_rng(2, "acceptance-geometry");
  std::size_t fps_ok = 0, knn_ok = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 64)(rng);
    const auto cloud = testing::random_cloud(n, 1100 + s);
    const std::size_t m = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const std::size_t start = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    fps_ok += geom::farthest_point_sample(cloud, m, start) == testing::brute_force_fps(cloud.points, m, start);

    const bool self = s % 2 == 0;
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, self ? n : n - 1)(rng);
    std::vector<std::size_t> centers(n);
    for (std::size_t i = 0; i < n; ++i) centers[i] = i;
    const auto nb = geom::knn_search(cloud, centers, k, self);
    bool same = true;
    for (auto c : centers) {
      const auto row = nb.of(c);
      same = same && std::vector<std::size_t>(row.begin(), row.end()) ==
                         testing::brute_force_knn(cloud.points, c, k, self);
    }
    knn_ok += same;
  }
  return {fps_ok == 200 && knn_ok == 200,
          "fps " + std::to_string(fps_ok) + "/200, knn " + std::to_string(knn_ok) + "/200"};
}

// ---- 8 -----------------------------------------------------------------------

Outcome criterion_studies() {
  const auto t0 = Clock::now();
  const auto root = testing::scratch_dir("acceptance-studies");
  bool ok = true;
  std::string detail;
  for (const char* name : {"arch1", "arch2", "arch3", "arch4"}) {
    const auto cfg = fs::path(PCDIAG_CONFIG_DIR) / (std::string("study_") + name + ".json");
    const auto out = root / name;
    std::string err;
    const int code = run_cli({"compare", "--config", cfg.string(), "--out", out.string(), "--paper-refs"}, &err);
    if (code != 0) {
      ok = false;
      detail += std::string(name) + " exit " + std::to_string(code) + " (" + err.substr(0, err.find('\n')) + "); ";
      continue;
    }
    const auto table = json::parse(read_text(out / "comparison.json"));
    const double acc = table["variants"]["without"]["test_acc"].get<double>();
    ok = ok && acc >= kBaselineAccuracy;
    detail += std::string(name) + " baseline acc " + fmt(acc, 3);
    for (const auto& row : table["rows"]) {
      const double with = row["with"], without = row["without"], delta = row["delta"];
      const bool forward = row["convention"] == "with-without";
      ok = ok && delta == (forward ? with - without : without - with);
      detail += ", " + row["metric"].get<std::string>() + " delta " + fmt(delta, 3);
    }
    detail += "; ";
  }
  const double t = seconds_since(t0);
  return {ok && t < kStudySeconds, detail + fmt(t, 4) + " s"};
}

// ---- 9 -----------------------------------------------------------------------

json tiny_config() {
  json spec{{"classes", 3},
            {"tap", "fc_1"},
            {"layers",
             {{{"type", "sample"}, {"m", 16}},
              {{"type", "group"}, {"kind", "knn"}, {"k", 8}},
              {{"type", "shared_mlp"}, {"widths", {8, 16}}},
              {{"type", "max_aggregate"}},
              {{"type", "sample"}, {"m", 4}},
              {{"type", "group"}, {"kind", "knn"}, {"k", 4}},
              {{"type", "shared_mlp"}, {"widths", {16, 16}}},
              {{"type", "max_aggregate"}},
              {{"type", "global_max"}},
              {{"type", "fc"}, {"widths", {8}}},
              {{"type", "fc"}, {"widths", {3}}},
              {{"type", "softmax"}}}}};
  return {{"seed", 3},
          {"dataset",
           {{"classes", {"sphere", "cube", "cone"}},
            {"train_per_class", 4},
            {"test_per_class", 2},
            {"points", 64},
            {"background", true},
            {"background_points", 32}}},
          {"model", {{"spec", spec}}},
          {"training", {{"epochs", 2}, {"batch", 4}, {"learning_rate", 0.01}, {"optimizer", "adam"}, {"rotation", "none"}}},
          {"diagnosis",
           {{"metrics", {"all"}},
            {"samples", 2},
            {"rotations", 2},
            {"neighbors", 8},
            {"sigma", {{"steps", 100}, {"lambda_iterations", 8}, {"variance_samples", 16}, {"eval_samples", 16}}},
            {"attack", {{"steps", 60}, {"search_steps", 5}}}}},
          {"study", {{"name", "arch1"}, {"module", "arch1"}, {"blocks", {1}}, {"hidden", 4}}}};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text(e.path());
  }
  return files;
}

Outcome criterion_determinism() {
  const auto dir = testing::scratch_dir("acceptance-determinism");
  const auto cfg = dir / "cfg.json";
  std::ofstream(cfg) << tiny_config().dump(2);
  const auto manifest = (dir / "run" / "data" / "manifest.json").string();
  const auto ckpt = (dir / "run" / "m.pcdg").string();

  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"gen", {"gen", "--config", cfg.string(), "--out", (dir / "run" / "data").string()}},
      {"train", {"train", "--config", cfg.string(), "--out", ckpt}},
      {"diagnose",
       {"diagnose", "--ckpt", ckpt, "--data", manifest, "--metrics", "all", "--config", cfg.string(), "--out",
        (dir / "run" / "report.json").string()}},
      {"attack",
       {"attack", "--ckpt", ckpt, "--data", manifest, "--target", "all", "--config", cfg.string(), "--samples", "2",
        "--out", (dir / "run" / "attack.json").string()}},
      {"compare", {"compare", "--config", cfg.string(), "--out", (dir / "run" / "compare").string()}},
  };

  bool ok = true;
  std::string detail;
  std::map<std::string, std::string> reference;
  for (const char* threads : {"1", "2"}) {
    ::setenv("PCDIAG_THREADS", threads, 1);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& [name, args] : commands) {
        std::string err;
        const int code = run_cli(args, &err);
        if (code != 0) {
          ok = false;
          detail += name + " exit " + std::to_string(code) + " (" + err.substr(0, err.find('\n')) + "); ";
        }
      }
      const auto files = snapshot(dir / "run");
      if (reference.empty()) {
        reference = files;
        continue;
      }
      for (const auto& [path, bytes] : reference) {
        const auto it = files.find(path);
        if (it == files.end() || it->second != bytes) {
          ok = false;
          detail += path + " differs (threads " + threads + "); ";
        }
      }
    }
  }
  ::unsetenv("PCDIAG_THREADS");
  return {ok && !reference.empty(),
          detail + std::to_string(reference.size()) + " files identical over 4 runs (threads 1 and 2)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"gradient correctness", criterion_gradients},   {"sigma oracle", criterion_sigma_oracle},
      {"masking concentration", criterion_masking},    {"jsd properties", criterion_jsd},
      {"rotation directionality", criterion_rotation}, {"attack oracle", criterion_attack},
      {"geometry oracles", criterion_geometry},        {"end-to-end studies", criterion_studies},
      {"determinism", criterion_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && only.count(number) == 0) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << number << " " << (o.pass ? "PASS" : "FAIL") << ": " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
