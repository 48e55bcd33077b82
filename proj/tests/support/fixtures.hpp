#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pcdiag/geom.hpp"
#include "pcdiag/network.hpp"
#include "pcdiag/spec.hpp"

namespace pcdiag::testing {

/// Points uniform in [-scale, scale]^3.
geom::PointCloud random_cloud(std::size_t n, std::uint64_t seed, double scale = 1.0);

/// flatten -> fc(hidden...) -> fc(classes) -> softmax over exactly n input points.
nets::NetworkSpec flatten_spec(std::size_t n, std::vector<std::size_t> hidden, std::size_t classes,
                               std::string tap);

/// h(X) = X flattened: tap on the flatten layer, a 2-way head behind it.
nets::Classifier identity_featurizer(std::size_t n, std::uint64_t seed);

/// Logits z = (w . flatten(X) + b, 0) over n = w.size() / 3 points.
nets::Classifier linear_two_class(std::span<const double> w, double b);

/// Tap = fc_1 whose weight columns for background points are zero, so the
/// feature cannot see them.
nets::Classifier masking_network(const std::vector<bool>& fg_mask, std::size_t width, std::uint64_t seed);

/// Two small SA blocks for clouds of >= 64 points; tap fc_1.
nets::NetworkSpec small_spec(std::size_t classes, nets::Encoding encoding = nets::Encoding::relative);

std::vector<std::size_t> brute_force_fps(std::span<const geom::Vec3> points, std::size_t m, std::size_t start);
std::vector<std::size_t> brute_force_knn(std::span<const geom::Vec3> points, std::size_t center, std::size_t k,
                                         bool include_self);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace pcdiag::testing
