#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pcdiag/autograd.hpp"
#include "pcdiag/rng.hpp"

namespace pcdiag::geom {

using Vec3 = std::array<double, 3>;

struct PointCloud {
  std::vector<Vec3> points;
  std::optional<std::size_t> label;
  std::optional<std::vector<bool>> fg_mask;  // true = foreground

  std::size_t size() const { return points.size(); }
  /// Throws value/mask errors when the invariants do not hold.
  void validate() const;
};

/// Coordinates as a [3 x n] constant tensor (row r holds axis r).
ag::Tensor to_tensor(const PointCloud& cloud);

double squared_distance(const Vec3& a, const Vec3& b);

struct NeighborhoodIndex {
  std::vector<std::size_t> centers;
  std::size_t k = 0;
  std::vector<std::size_t> neighbors;  // centers.size() * k, row-major per center

  std::span<const std::size_t> of(std::size_t c) const {
    return std::span<const std::size_t>(neighbors).subspan(c * k, k);
  }
};

/// Greedy farthest-point sampling from `start`; ties go to the lowest index.
std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t m,
                                               std::size_t start = 0);
inline std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                                      std::size_t start = 0) {
  return farthest_point_sample(cloud.points, m, start);
}

/// k nearest points per center ordered by (distance, index).
NeighborhoodIndex knn_search(std::span<const Vec3> points, std::span<const std::size_t> centers,
                             std::size_t k, bool include_self);
inline NeighborhoodIndex knn_search(const PointCloud& cloud, std::span<const std::size_t> centers,
                                    std::size_t k, bool include_self) {
  return knn_search(cloud.points, centers, k, include_self);
}

/// Up to k points within radius r, padded by repeating the first hit (or the
/// center itself when nothing lies inside r).
NeighborhoodIndex ball_query(std::span<const Vec3> points, std::span<const std::size_t> centers,
                             double r, std::size_t k);
inline NeighborhoodIndex ball_query(const PointCloud& cloud, std::span<const std::size_t> centers,
                                    double r, std::size_t k) {
  return ball_query(cloud.points, centers, r, k);
}

/// Nearest point inside r in each octant, ordered ---, --+, -+-, -++, +--, +-+, ++-, +++.
/// A coordinate difference >= 0 counts as the + half-space; empty octants
/// yield the center index.
std::array<std::size_t, 8> octant_neighbors(std::span<const Vec3> points, std::size_t center,
                                            double r);

/// Gaussian KDE of every neighbor inside its own neighborhood:
/// density_j = (1/K) sum_{k in N(i)} exp(-|x_j - x_k|^2 / (2h^2)).
/// Result is row-major [centers x K].
std::vector<double> kde_density(std::span<const Vec3> points, const NeighborhoodIndex& nbr,
                                double bandwidth);

/// Mean distance from each point to its nearest other point.
double mean_nn_distance(std::span<const Vec3> points);

enum class RotationMode { so3, z_axis };

struct Rotation {
  std::array<std::array<double, 3>, 3> matrix{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  RotationMode mode = RotationMode::so3;

  static Rotation identity() { return {}; }
  static Rotation about_z(double angle);
  Rotation compose(const Rotation& first) const;  // this * first
  Vec3 apply(const Vec3& p) const;
  double determinant() const;
};

Rotation random_rotation(Rng& rng, RotationMode mode);
PointCloud apply_rotation(const PointCloud& cloud, const Rotation& rot);
/// Rotation matrix as a [3 x 3] constant tensor.
ag::Tensor to_tensor(const Rotation& rot);

}  // namespace pcdiag::geom
