#pragma once

#include <cstddef>
#include <vector>

#include "pcdiag/geom.hpp"
#include "pcdiag/spec.hpp"

namespace pcdiag::geom {

/// Frozen sampling and grouping decisions for one set-abstraction block.
struct BlockContext {
  std::vector<std::size_t> centers;    // indices into the block's input level
  std::size_t k = 0;
  std::vector<std::size_t> neighbors;  // centers.size() * k indices into the input level
  std::vector<std::size_t> extra_scales;                  // arch3 K_2..K_T
  std::vector<std::vector<std::size_t>> scale_neighbors;  // one list per extra scale
  double bandwidth = 0.0;              // KDE bandwidth (mean 1-NN distance of the input level)
  std::vector<std::size_t> octants;    // arch4: centers.size() * 8 indices into the output level
};

/// Every index choice a forward pass makes, computed once on a clean cloud
/// so that forwards on perturbed copies read the same point sets.
struct ContextPlan {
  std::size_t input_points = 0;
  std::vector<BlockContext> blocks;
};

/// Runs sampling/grouping level by level on `cloud`. Throws count errors when
/// the spec asks for more points than a level holds.
ContextPlan build_fixed_contexts(const PointCloud& cloud, const nets::NetworkSpec& spec);

}  // namespace pcdiag::geom
