#include "pcdiag/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "pcdiag/error.hpp"

namespace pcdiag::geom {

void PointCloud::validate() const {
  if (points.empty()) fail(ErrorKind::value, "point cloud is empty");
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (double c : points[i]) {
      if (!std::isfinite(c)) fail(ErrorKind::value, "non-finite coordinate at point " + std::to_string(i));
    }
  }
  if (fg_mask && fg_mask->size() != points.size()) {
    fail(ErrorKind::mask, "foreground mask has " + std::to_string(fg_mask->size()) +
                              " entries for " + std::to_string(points.size()) + " points");
  }
}

ag::Tensor to_tensor(const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  std::vector<double> v(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < 3; ++r) v[r * n + i] = cloud.points[i][r];
  }
  return ag::Tensor::constant({3, n}, std::move(v));
}

double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t m,
                                               std::size_t start) {
  const std::size_t n = points.size();
  if (m == 0 || m > n) {
    fail(ErrorKind::count, "farthest_point_sample: requested " + std::to_string(m) + " of " +
                               std::to_string(n) + " points");
  }
  if (start >= n) fail(ErrorKind::index, "farthest_point_sample: start index out of range");
  std::vector<std::size_t> picked{start};
  picked.reserve(m);
  std::vector<double> mind(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  taken[start] = 1;
  std::size_t last = start;
  while (picked.size() < m) {
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      mind[i] = std::min(mind[i], squared_distance(points[i], points[last]));
      if (mind[i] > best_d) {
        best_d = mind[i];
        best = i;
      }
    }
    taken[best] = 1;
    picked.push_back(best);
    last = best;
  }
  return picked;
}

NeighborhoodIndex knn_search(std::span<const Vec3> points, std::span<const std::size_t> centers,
                             std::size_t k, bool include_self) {
  const std::size_t n = points.size();
  const std::size_t avail = include_self ? n : (n == 0 ? 0 : n - 1);
  if (k == 0 || k > avail) {
    fail(ErrorKind::count, "knn_search: k=" + std::to_string(k) + " exceeds the " +
                               std::to_string(avail) + " candidate points");
  }
  NeighborhoodIndex out;
  out.centers.assign(centers.begin(), centers.end());
  out.k = k;
  out.neighbors.reserve(centers.size() * k);
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(n);
  for (auto c : centers) {
    if (c >= n) fail(ErrorKind::index, "knn_search: center index out of range");
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (!include_self && j == c) continue;
      cand.emplace_back(squared_distance(points[c], points[j]), j);
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t t = 0; t < k; ++t) out.neighbors.push_back(cand[t].second);
  }
  return out;
}

NeighborhoodIndex ball_query(std::span<const Vec3> points, std::span<const std::size_t> centers,
                             double r, std::size_t k) {
  if (!(r > 0.0) || k == 0) fail(ErrorKind::value, "ball_query: need r > 0 and k >= 1");
  const std::size_t n = points.size();
  const double r2 = r * r;
  NeighborhoodIndex out;
  out.centers.assign(centers.begin(), centers.end());
  out.k = k;
  out.neighbors.reserve(centers.size() * k);
  std::vector<std::pair<double, std::size_t>> cand;
  for (auto c : centers) {
    if (c >= n) fail(ErrorKind::index, "ball_query: center index out of range");
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      const double d2 = squared_distance(points[c], points[j]);
      if (d2 <= r2) cand.emplace_back(d2, j);
    }
    std::sort(cand.begin(), cand.end());
    const std::size_t found = std::min(k, cand.size());
    for (std::size_t t = 0; t < found; ++t) out.neighbors.push_back(cand[t].second);
    const std::size_t pad = found > 0 ? cand[0].second : c;
    for (std::size_t t = found; t < k; ++t) out.neighbors.push_back(pad);
  }
  return out;
}

std::array<std::size_t, 8> octant_neighbors(std::span<const Vec3> points, std::size_t center,
                                            double r) {
  if (!(r > 0.0)) fail(ErrorKind::value, "octant_neighbors: radius must be > 0");
  if (center >= points.size()) fail(ErrorKind::index, "octant_neighbors: center out of range");
  std::array<std::size_t, 8> best;
  best.fill(center);
  std::array<double, 8> best_d;
  best_d.fill(std::numeric_limits<double>::infinity());
  const double r2 = r * r;
  const Vec3& c = points[center];
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (j == center) continue;
    const double d2 = squared_distance(points[j], c);
    if (d2 > r2) continue;
    const std::size_t o = (points[j][0] - c[0] >= 0.0 ? 4u : 0u) +
                          (points[j][1] - c[1] >= 0.0 ? 2u : 0u) +
                          (points[j][2] - c[2] >= 0.0 ? 1u : 0u);
    if (d2 < best_d[o]) {
      best_d[o] = d2;
      best[o] = j;
    }
  }
  return best;
}

std::vector<double> kde_density(std::span<const Vec3> points, const NeighborhoodIndex& nbr,
                                double bandwidth) {
  if (!(bandwidth > 0.0)) fail(ErrorKind::value, "kde_density: bandwidth must be > 0");
  const std::size_t k = nbr.k;
  const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  std::vector<double> out(nbr.centers.size() * k, 0.0);
  for (std::size_t c = 0; c < nbr.centers.size(); ++c) {
    const auto group = nbr.of(c);
    for (std::size_t a = 0; a < k; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < k; ++b) {
        s += std::exp(-squared_distance(points[group[a]], points[group[b]]) * inv2h2);
      }
      out[c * k + a] = s / static_cast<double>(k);
    }
  }
  return out;
}

double mean_nn_distance(std::span<const Vec3> points) {
  const std::size_t n = points.size();
  if (n < 2) fail(ErrorKind::count, "mean_nn_distance needs at least 2 points");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) best = std::min(best, squared_distance(points[i], points[j]));
    }
    total += std::sqrt(best);
  }
  return total / static_cast<double>(n);
}

Rotation Rotation::about_z(double angle) {
  Rotation r;
  r.mode = RotationMode::z_axis;
  const double c = std::cos(angle), s = std::sin(angle);
  r.matrix = {{{c, -s, 0.0}, {s, c, 0.0}, {0.0, 0.0, 1.0}}};
  return r;
}

Rotation Rotation::compose(const Rotation& first) const {
  Rotation out;
  out.mode = (mode == RotationMode::z_axis && first.mode == RotationMode::z_axis)
                 ? RotationMode::z_axis
                 : RotationMode::so3;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += matrix[i][k] * first.matrix[k][j];
      out.matrix[i][j] = s;
    }
  }
  return out;
}

Vec3 Rotation::apply(const Vec3& p) const {
  Vec3 q{};
  for (int i = 0; i < 3; ++i) q[i] = matrix[i][0] * p[0] + matrix[i][1] * p[1] + matrix[i][2] * p[2];
  return q;
}

double Rotation::determinant() const {
  const auto& m = matrix;
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Rotation random_rotation(Rng& rng, RotationMode mode) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (mode == RotationMode::z_axis) return Rotation::about_z(2.0 * std::numbers::pi * uni(rng));
  // Shoemake's uniform unit quaternion.
  const double u1 = uni(rng), u2 = uni(rng), u3 = uni(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double w = a * std::sin(2.0 * std::numbers::pi * u2);
  const double x = a * std::cos(2.0 * std::numbers::pi * u2);
  const double y = b * std::sin(2.0 * std::numbers::pi * u3);
  const double z = b * std::cos(2.0 * std::numbers::pi * u3);
  Rotation r;
  r.mode = RotationMode::so3;
  r.matrix = {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
               {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
               {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
  return r;
}

PointCloud apply_rotation(const PointCloud& cloud, const Rotation& rot) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = rot.apply(p);
  return out;
}

ag::Tensor to_tensor(const Rotation& rot) {
  std::vector<double> v(9);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) v[i * 3 + j] = rot.matrix[i][j];
  }
  return ag::Tensor::constant({3, 3}, std::move(v));
}

}  // namespace pcdiag::geom
