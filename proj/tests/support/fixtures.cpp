#include "fixtures.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "pcdiag/rng.hpp"

namespace pcdiag::testing {

using nets::LayerKind;
using nets::LayerSpec;

geom::PointCloud random_cloud(std::size_t n, std::uint64_t seed, double scale) {
  Rng rng = make_rng(seed, "test-cloud");
  std::uniform_real_distribution<double> u(-scale, scale);
  geom::PointCloud c;
  c.points.resize(n);
  for (auto& p : c.points) p = {u(rng), u(rng), u(rng)};
  return c;
}

nets::NetworkSpec flatten_spec(std::size_t n, std::vector<std::size_t> hidden, std::size_t classes,
                               std::string tap) {
  nets::NetworkSpec s;
  s.num_classes = classes;
  s.input_points = n;
  s.layers.push_back(LayerSpec{.kind = LayerKind::flatten});
  for (auto w : hidden) s.layers.push_back(LayerSpec{.kind = LayerKind::fc, .widths = {w}});
  s.layers.push_back(LayerSpec{.kind = LayerKind::fc, .widths = {classes}});
  s.layers.push_back(LayerSpec{.kind = LayerKind::softmax});
  s.tap = std::move(tap);
  return nets::normalize(std::move(s));
}

nets::Classifier identity_featurizer(std::size_t n, std::uint64_t seed) {
  return nets::Classifier(flatten_spec(n, {}, 2, "flatten_1"), seed);
}

nets::Classifier linear_two_class(std::span<const double> w, double b) {
  const std::size_t n = w.size() / 3;
  nets::Classifier net(flatten_spec(n, {}, 2, "flatten_1"), 0);
  auto weight = net.parameters().at("fc_1.w0").mutable_values();
  std::fill(weight.begin(), weight.end(), 0.0);
  std::copy(w.begin(), w.end(), weight.begin());
  auto bias = net.parameters().at("fc_1.b0").mutable_values();
  bias[0] = b;
  bias[1] = 0.0;
  return net;
}

nets::Classifier masking_network(const std::vector<bool>& fg_mask, std::size_t width, std::uint64_t seed) {
  const std::size_t n = fg_mask.size();
  nets::Classifier net(flatten_spec(n, {width}, 2, "fc_1"), seed);
  auto weight = net.parameters().at("fc_1.w0").mutable_values();
  for (std::size_t row = 0; row < width; ++row) {
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!fg_mask[i]) weight[row * 3 * n + r * n + i] = 0.0;
      }
    }
  }
  return net;
}

nets::NetworkSpec small_spec(std::size_t classes, nets::Encoding encoding) {
  nets::NetworkSpec s;
  s.num_classes = classes;
  s.layers = {LayerSpec{.kind = LayerKind::sample, .count = 16},
              LayerSpec{.kind = LayerKind::group, .count = 8, .encoding = encoding},
              LayerSpec{.kind = LayerKind::shared_mlp, .widths = {16, 32}},
              LayerSpec{.kind = LayerKind::max_aggregate},
              LayerSpec{.kind = LayerKind::sample, .count = 4},
              LayerSpec{.kind = LayerKind::group, .count = 4, .encoding = encoding},
              LayerSpec{.kind = LayerKind::shared_mlp, .widths = {32, 32}},
              LayerSpec{.kind = LayerKind::max_aggregate},
              LayerSpec{.kind = LayerKind::global_max},
              LayerSpec{.kind = LayerKind::fc, .widths = {16}},
              LayerSpec{.kind = LayerKind::fc, .widths = {classes}},
              LayerSpec{.kind = LayerKind::softmax}};
  s.tap = "fc_1";
  return nets::normalize(std::move(s));
}

std::vector<std::size_t> brute_force_fps(std::span<const geom::Vec3> points, std::size_t m, std::size_t start) {
  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (int r = 0; r < 3; ++r) s += (points[a][r] - points[b][r]) * (points[a][r] - points[b][r]);
    return s;
  };
  std::vector<std::size_t> chosen{start};
  while (chosen.size() < m) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (auto c : chosen) d = std::min(d, dist(i, c));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

std::vector<std::size_t> brute_force_knn(std::span<const geom::Vec3> points, std::size_t center, std::size_t k,
                                         bool include_self) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!include_self && i == center) continue;
    double s = 0.0;
    for (int r = 0; r < 3; ++r) s += (points[i][r] - points[center][r]) * (points[i][r] - points[center][r]);
    all.emplace_back(s, i);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < k; ++j) out.push_back(all[j].second);
  return out;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "pcdiag-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace pcdiag::testing
