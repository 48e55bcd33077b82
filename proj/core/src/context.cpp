#include "pcdiag/context.hpp"

#include <string>

#include "pcdiag/error.hpp"

namespace pcdiag::geom {

ContextPlan build_fixed_contexts(const PointCloud& cloud, const nets::NetworkSpec& spec) {
  using nets::LayerKind;
  ContextPlan plan;
  plan.input_points = cloud.size();
  std::vector<Vec3> level = cloud.points;
  std::vector<Vec3> next;
  BlockContext* block = nullptr;

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::sample: {
        if (l.count > level.size()) {
          fail(ErrorKind::count, "layer " + std::to_string(i) + " (" + l.name + ") samples " +
                                     std::to_string(l.count) + " of " + std::to_string(level.size()) +
                                     " points");
        }
        plan.blocks.emplace_back();
        block = &plan.blocks.back();
        block->centers = farthest_point_sample(level, l.count, 0);
        next.clear();
        for (auto c : block->centers) next.push_back(level[c]);
        block->bandwidth = level.size() > 1 ? mean_nn_distance(level) : 1.0;
        if (!(block->bandwidth > 0.0)) block->bandwidth = 1.0;
        break;
      }
      case LayerKind::group: {
        block->k = l.count;
        if (l.group == nets::GroupKind::knn) {
          if (l.count > level.size()) {
            fail(ErrorKind::count, "layer " + std::to_string(i) + " (" + l.name + ") asks for " +
                                       std::to_string(l.count) + " neighbors among " +
                                       std::to_string(level.size()) + " points");
          }
          block->neighbors = knn_search(level, block->centers, l.count, true).neighbors;
        } else {
          block->neighbors = ball_query(level, block->centers, l.radius, l.count).neighbors;
        }
        break;
      }
      case LayerKind::max_aggregate:
        level = next;
        break;
      case LayerKind::arch3: {
        // `level` already holds the block output; scales group the block input.
        for (std::size_t t = 1; t < l.scales.size(); ++t) {
          block->extra_scales.push_back(l.scales[t]);
        }
        break;
      }
      case LayerKind::arch4: {
        block->octants.clear();
        block->octants.reserve(level.size() * 8);
        for (std::size_t c = 0; c < level.size(); ++c) {
          const auto oct = octant_neighbors(level, c, l.radius);
          block->octants.insert(block->octants.end(), oct.begin(), oct.end());
        }
        break;
      }
      default: break;
    }
  }

  // arch3 neighbor lists need the block's input level, so resolve them in a
  // second pass that replays the levels.
  level = cloud.points;
  std::size_t b = 0;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::sample) {
      auto& ctx = plan.blocks[b];
      for (auto s : ctx.extra_scales) {
        if (s > level.size()) {
          fail(ErrorKind::count, "arch3 scale " + std::to_string(s) + " exceeds the " +
                                     std::to_string(level.size()) + " points of block " +
                                     std::to_string(b + 1));
        }
        ctx.scale_neighbors.push_back(knn_search(level, ctx.centers, s, true).neighbors);
      }
      std::vector<Vec3> out;
      for (auto c : ctx.centers) out.push_back(level[c]);
      level = std::move(out);
      ++b;
    }
  }
  return plan;
}

}  // namespace pcdiag::geom
