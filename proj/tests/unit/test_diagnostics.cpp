#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "pcdiag/diagnostics.hpp"
#include "pcdiag/error.hpp"
#include "pcdiag/report.hpp"
#include "pcdiag/rng.hpp"

using namespace pcdiag;
using diag::SigmaField;

namespace {

void expect_error(ErrorKind kind, const std::function<void()>& f) {
  try {
    f();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == kind);
  }
}

std::vector<double> uniform(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng = make_rng(seed, "diagnostics-test");
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Cloud whose flattened coordinates equal x (row-major [3 x n]).
geom::PointCloud cloud_from_flat(std::span<const double> x) {
  const std::size_t n = x.size() / 3;
  geom::PointCloud c;
  c.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.points[i] = {x[i], x[n + i], x[2 * n + i]};
  return c;
}

// Hyperplane distance of the linear two-class model.
double plane_distance(std::span<const double> w, double b, std::span<const double> x) {
  return std::abs(dot(w, x) + b) / std::sqrt(dot(w, w));
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("inherent variance") {
  const std::size_t n = 64;
  const auto id = testing::identity_featurizer(n, 1);
  const auto cloud = testing::random_cloud(n, 2);
  const auto plan = id.plan(cloud);
  const diag::Probe probe{&id, &cloud, &plan, nullptr};
  CHECK(diag::inherent_variance(probe, 0.0, 64, 3) == 0.0);
  const double v = diag::inherent_variance(probe, 0.01, 64, 3);
  CHECK(v == doctest::Approx(3.0 * n * 1e-4).epsilon(0.2));

  const nets::Classifier net(testing::small_spec(3), 4);
  const auto p2 = net.plan(cloud);
  const diag::Probe probe2{&net, &cloud, &p2, nullptr};
  CHECK(diag::inherent_variance(probe2, 0.005, 32, 5) < diag::inherent_variance(probe2, 0.02, 32, 5));
}

TEST_CASE("sigma optimization on the identity feature") {
  const std::size_t n = 16;
  const auto id = testing::identity_featurizer(n, 1);
  const auto cloud = testing::random_cloud(n, 6);
  const auto plan = id.plan(cloud);
  const diag::Probe probe{&id, &cloud, &plan, nullptr};

  diag::SigmaOptConfig cfg;
  const double sigma = 0.04;
  cfg.target = 3.0 * n * sigma * sigma;
  const auto res = diag::optimize_sigma(probe, cfg, 7);
  CHECK(res.converged);
  for (double s : res.field.sigma) CHECK(s == doctest::Approx(sigma).epsilon(0.05));

  cfg.target = 10.0 * *cfg.target;
  const auto capped = diag::optimize_sigma(probe, cfg, 7);
  for (double s : capped.field.sigma) CHECK(s == diag::kSigmaMax);

  diag::SigmaOptConfig bad;
  bad.tolerance = 1.0;
  expect_error(ErrorKind::config, [&] { bad.validate(); });
}

TEST_CASE("sigma optimization on a masking network") {
  const std::size_t n = 16;
  std::vector<bool> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = i < 10;
  const auto net = testing::masking_network(mask, 8, 3);
  auto cloud = testing::random_cloud(n, 8);
  cloud.fg_mask = mask;
  const auto plan = net.plan(cloud);
  const diag::Probe probe{&net, &cloud, &plan, nullptr};
  diag::SigmaOptConfig cfg;
  cfg.target = 0.008;
  const auto res = diag::optimize_sigma(probe, cfg, 9);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) {
      CHECK(res.field.sigma[i] < diag::kSigmaMax);
    } else {
      CHECK(res.field.sigma[i] == diag::kSigmaMax);
    }
  }
  const auto h = diag::information_discarding(res.field);
  CHECK(diag::information_concentration(h, mask) > 0.5);
}

TEST_CASE("information discarding") {
  const SigmaField ones{{1, 1, 1, 1}};
  double total = 0.0;
  for (double h : diag::information_discarding(ones)) total += h;
  CHECK(total == doctest::Approx(5.675756).epsilon(1e-6));
  CHECK(ones.total_entropy() == doctest::Approx(5.675756).epsilon(1e-6));

  const SigmaField cap{{0.08}};
  CHECK(diag::information_discarding(cap)[0] == doctest::Approx(-1.106790).epsilon(1e-6));

  const auto a = diag::information_discarding(SigmaField{{0.01, 0.02}});
  const auto b = diag::information_discarding(SigmaField{{0.02, 0.02}});
  CHECK(b[0] - a[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a[i] == std::log(std::vector<double>{0.01, 0.02}[i]) + diag::kHalfLog2PiE);
  }
}

TEST_CASE("information concentration") {
  const std::vector<bool> mask{true, true, false, false};
  CHECK(diag::information_concentration(std::vector<double>{0.5, 0.5, 0.5, 0.5}, mask) == 0.0);
  const std::vector<double> h{-2.5, -3.5, -1.106790, -1.106790};
  CHECK(diag::information_concentration(h, mask) == doctest::Approx(1.893210).epsilon(1e-9));
  const std::vector<bool> swapped{false, false, true, true};
  CHECK(diag::information_concentration(h, swapped) == -diag::information_concentration(h, mask));
  expect_error(ErrorKind::mask, [&] { diag::information_concentration(h, std::vector<bool>(4, true)); });
  expect_error(ErrorKind::mask, [&] { diag::information_concentration(h, std::vector<bool>(4, false)); });
}

TEST_CASE("gaussian kl and variational jsd") {
  const SigmaField a{{0.05}}, b{{0.08}};
  CHECK(diag::gaussian_kl(a, a) == 0.0);
  const double k_ab = diag::gaussian_kl(a, b);
  CHECK(k_ab == doctest::Approx(3.0 * (std::log(1.6) + 0.0025 / 0.0128 - 0.5)).epsilon(1e-12));
  CHECK(std::abs(k_ab - 0.495950) < 5e-6);
  const double k_ba = diag::gaussian_kl(b, a);
  CHECK(k_ba > 0.0);
  CHECK(std::abs(k_ab - k_ba) > 1e-3);
  expect_error(ErrorKind::dimension, [&] { diag::gaussian_kl(a, SigmaField{{0.05, 0.05}}); });

  const double plug = -0.5 * std::log(0.5 * (1 + std::exp(-k_ab))) - 0.5 * std::log(0.5 * (1 + std::exp(-k_ba)));
  CHECK(diag::jsd_variational(a, b) == doctest::Approx(plug).epsilon(1e-12));
  CHECK(diag::jsd_variational(a, a) == 0.0);

  const SigmaField tiny{std::vector<double>(50, 1e-4)}, wide{std::vector<double>(50, 0.08)};
  CHECK(diag::jsd_variational(tiny, wide) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  for (std::uint64_t s = 0; s < 50; ++s) {
    SigmaField x{uniform(6, s, 1e-4, 0.08)}, y{uniform(6, s + 100, 1e-4, 0.08)};
    const double j = diag::jsd_variational(x, y);
    CHECK(j >= 0.0);
    CHECK(j <= std::log(2.0) + 1e-12);
    CHECK(std::abs(j - diag::jsd_variational(y, x)) <= 1e-12);
  }
}

TEST_CASE("rotation non-robustness") {
  const std::size_t n = 16;
  const auto id = testing::identity_featurizer(n, 1);
  const auto cloud = testing::random_cloud(n, 10);
  diag::SigmaOptConfig cfg;
  cfg.target = 3.0 * n * 0.03 * 0.03;
  cfg.steps = 100;

  const auto theta = geom::Rotation::about_z(0.9);
  const std::vector<geom::Rotation> same{theta, theta};
  const auto r0 = diag::rotation_non_robustness(id, cloud, same, cfg, 11);
  REQUIRE(r0.pair_jsd.size() == 1);
  CHECK(r0.pair_jsd[0] == 0.0);
  CHECK(r0.value == 0.0);

  const diag::RotationConfig rc{3, geom::RotationMode::so3, cfg};
  const auto r = diag::rotation_non_robustness(id, cloud, rc, 12);
  CHECK(r.pair_jsd.size() == 3);
  CHECK(r.fields.size() == 3);
  CHECK(r.value >= 0.0);
  CHECK(r.value <= std::log(2.0));
  const auto again = diag::rotation_non_robustness(id, cloud, rc, 12);
  CHECK(again.pair_jsd == r.pair_jsd);
}

TEST_CASE("targeted attack on the linear model") {
  const std::size_t n = 8;
  const diag::AttackConfig cfg;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto w = uniform(3 * n, s);
    const auto x = uniform(3 * n, s + 50);
    const double b = 0.1;
    const auto net = testing::linear_two_class(w, b);
    const auto cloud = cloud_from_flat(x);
    const std::size_t pred = nets::classify(net, cloud);
    const std::size_t target = 1 - pred;
    const auto res = diag::targeted_attack(net, cloud, target, cfg);
    REQUIRE(res.success);
    const double d = plane_distance(w, b, x);
    CHECK(res.l2 == doctest::Approx(d).epsilon(0.1));
    CHECK(res.l2 >= d * (1.0 - 1e-9));
    double norm = 0.0;
    for (const auto& p : res.perturbation) norm += p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    CHECK(std::abs(std::sqrt(norm) - res.l2) <= 1e-9);
    auto moved = cloud;
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) moved.points[i][k] += res.perturbation[i][k];
    }
    CHECK(nets::classify(net, moved) == target);

    expect_error(ErrorKind::contract, [&] { diag::targeted_attack(net, cloud, pred, cfg); });

    // Scaling the logits keeps the decision boundary.
    std::vector<double> w5(w);
    for (auto& v : w5) v *= 5.0;
    const auto scaled = diag::adversarial_robustness(testing::linear_two_class(w5, 5 * b), cloud, cfg);
    CHECK(scaled.success_fraction == 1.0);
    CHECK(scaled.mean_l2 == doctest::Approx(d).epsilon(0.1));
  }
}

TEST_CASE("attacks on a constant model fail without throwing") {
  const std::vector<double> w(3 * 4, 0.0);
  const auto net = testing::linear_two_class(w, 0.0);
  const auto cloud = testing::random_cloud(4, 13);
  CHECK(nets::classify(net, cloud) == 0);
  expect_error(ErrorKind::contract, [&] { diag::targeted_attack(net, cloud, 0, {}); });
  const auto res = diag::targeted_attack(net, cloud, 1, {});
  CHECK_FALSE(res.success);
  expect_error(ErrorKind::reliability, [&] { diag::adversarial_robustness(net, cloud, {}); });
  const auto loose = diag::adversarial_robustness(net, cloud, {}, true);
  CHECK(loose.success_fraction == 0.0);
}

TEST_CASE("neighborhood inconsistency") {
  geom::PointCloud three;
  three.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  CHECK(diag::neighborhood_inconsistency(std::vector<double>{1, 2, 4}, three, 2) == doctest::Approx(2.0).epsilon(1e-12));
  expect_error(ErrorKind::count, [&] { diag::neighborhood_inconsistency(std::vector<double>{1, 2, 4}, three, 3); });

  const auto cloud = testing::random_cloud(40, 14);
  CHECK(diag::neighborhood_inconsistency(std::vector<double>(40, -2.0), cloud, 16) == 0.0);
  const auto h = uniform(40, 15, -4.0, -1.0);
  const double base = diag::neighborhood_inconsistency(h, cloud, 16);
  auto shifted = h;
  for (auto& v : shifted) v += 3.5;
  CHECK(diag::neighborhood_inconsistency(shifted, cloud, 16) == doctest::Approx(base).epsilon(1e-12));
  Rng rng = make_rng(16, "diagnostics-test");
  const auto rotated = geom::apply_rotation(cloud, geom::random_rotation(rng, geom::RotationMode::so3));
  CHECK(diag::neighborhood_inconsistency(h, rotated, 16) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("metric names") {
  CHECK(diag::parse_metrics("all").size() == 5);
  CHECK(diag::parse_metrics("rotation, discarding,rotation") ==
        std::vector<diag::Metric>{diag::Metric::discarding, diag::Metric::rotation});
  expect_error(ErrorKind::config, [] { diag::parse_metrics("entropy"); });
}

TEST_CASE("diagnose") {
  const nets::Classifier net(testing::small_spec(3), 5);
  std::vector<geom::PointCloud> samples;
  for (std::uint64_t s = 0; s < 2; ++s) {
    auto c = testing::random_cloud(64, 20 + s);
    c.label = s;
    samples.push_back(c);
  }
  diag::DiagnoseConfig empty;
  const auto r0 = diag::diagnose(net, samples, empty, 3, "empty");
  CHECK_FALSE(r0.metrics.information_discarding);
  CHECK_FALSE(r0.metrics.rotation_non_robustness);
  CHECK(r0.per_point_H.empty());
  CHECK(r0.config == diag::config_json(empty));

  diag::DiagnoseConfig cfg;
  cfg.metrics = {diag::Metric::discarding, diag::Metric::neighborhood};
  cfg.sigma.steps = 60;
  cfg.sigma.lambda_iterations = 6;
  const auto a = diag::diagnose(net, samples, cfg, 3, "m");
  const auto b = diag::diagnose(net, samples, cfg, 3, "m", 2);
  CHECK(diag::to_json(a) == diag::to_json(b));
  CHECK(diag::to_csv(a) == diag::to_csv(b));
  REQUIRE(a.per_point_H.size() == 2);
  double total = 0.0;
  for (const auto& h : a.per_point_H) {
    for (double v : h) total += v;
  }
  CHECK(*a.metrics.information_discarding == doctest::Approx(total / 2.0).epsilon(1e-12));

  const auto back = diag::report_from_json(diag::to_json(a));
  CHECK(diag::to_json(back) == diag::to_json(a));

  cfg.metrics = {diag::Metric::concentration};
  try {
    diag::diagnose(net, samples, cfg, 3, "m");
    FAIL("expected a mask error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::mask);
    CHECK(std::string(e.what()).find("sample 0") != std::string::npos);
  }

  samples[1].label = 7;
  expect_error(ErrorKind::label, [&] { diag::diagnose(net, samples, cfg, 3, "m"); });
}

}  // TEST_SUITE
