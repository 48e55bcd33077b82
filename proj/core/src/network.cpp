#include "pcdiag/network.hpp"

#include <cmath>
#include <map>
#include <string>

#include "pcdiag/error.hpp"
#include "pcdiag/rng.hpp"

namespace pcdiag::nets {

using ag::Shape;
using ag::Tensor;

std::size_t argmax(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

std::size_t classify(const Network& net, const geom::PointCloud& cloud) {
  ag::FreezeParameters freeze;
  const auto plan = net.plan(cloud);
  const auto out = net.forward(geom::to_tensor(cloud), plan);
  return argmax(out.logits.values());
}

Tensor shared_mlp(const Tensor& features, std::span<const Dense> layers) {
  if (layers.empty()) fail(ErrorKind::dimension, "shared_mlp needs at least one layer");
  Tensor x = features;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.dim(1) != x.dim(0)) {
      fail(ErrorKind::dimension, "shared_mlp layer " + std::to_string(i) + " expects " +
                                     std::to_string(layers[i].weight.dim(1)) + " inputs, got " +
                                     std::to_string(x.dim(0)));
    }
    x = ag::add_bias(ag::matmul(layers[i].weight, x), layers[i].bias);
    if (i + 1 < layers.size()) x = ag::relu(x);
  }
  return x;
}

Tensor local_max_aggregate(const Tensor& features, std::size_t group) {
  if (features.rank() != 2 || group == 0 || features.dim(1) == 0 || features.dim(1) % group != 0) {
    fail(ErrorKind::dimension, "local_max_aggregate: " + ag::to_string(features.shape()) +
                                   " is not a whole number of groups of " + std::to_string(group));
  }
  const std::size_t d = features.dim(0), g = features.dim(1) / group;
  return ag::reshape(ag::reduce_max(ag::reshape(features, {d, g, group})), {d, g});
}

Tensor arch1_density_reweight(const Tensor& features, const Tensor& densities,
                              const Arch1Params& params) {
  if (features.rank() != 2 || densities.size() != features.dim(1)) {
    fail(ErrorKind::dimension, "arch1: " + std::to_string(densities.size()) + " densities for " +
                                   ag::to_string(features.shape()) + " features");
  }
  const Tensor d = ag::reshape(densities, {1, densities.size()});
  const Tensor h = ag::relu(ag::add_bias(ag::matmul(params.hidden.weight, d), params.hidden.bias));
  const Tensor w = ag::add_bias(ag::matmul(params.output.weight, h), params.output.bias);
  return ag::scale_columns(features, w);
}

Tensor arch2_coord_reweight(const Tensor& features, const Tensor& rel_coords, const Dense& params,
                            std::size_t group) {
  if (features.rank() != 2 || rel_coords.rank() != 2 || rel_coords.dim(0) != 3 ||
      rel_coords.dim(1) != features.dim(1)) {
    fail(ErrorKind::dimension, "arch2: coordinates " + ag::to_string(rel_coords.shape()) +
                                   " do not match features " + ag::to_string(features.shape()));
  }
  const Tensor w = ag::relu(ag::add_bias(ag::matmul(params.weight, rel_coords), params.bias));
  return ag::grouped_matmul_nt(features, w, group);
}

namespace {

// Pairs of column indices (minus half, plus half) that collapse the leading
// axis of length 2 in blocks of `inner` columns.
void half_indices(std::size_t groups, std::size_t inner, std::vector<std::size_t>& minus,
                  std::vector<std::size_t>& plus) {
  minus.clear();
  plus.clear();
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t j = 0; j < inner; ++j) {
      minus.push_back(g * 2 * inner + j);
      plus.push_back(g * 2 * inner + inner + j);
    }
  }
}

Tensor column_of(const Tensor& w, std::size_t col) {
  std::vector<std::size_t> idx(w.dim(0));
  for (std::size_t r = 0; r < idx.size(); ++r) idx[r] = r * 2 + col;
  return ag::select(w, idx);
}

Tensor collapse_axis(const Tensor& x, const Tensor& w, std::size_t groups, std::size_t inner) {
  std::vector<std::size_t> minus, plus;
  half_indices(groups, inner, minus, plus);
  const Tensor a = ag::scale_rows(ag::gather_columns(x, minus), column_of(w, 0));
  const Tensor b = ag::scale_rows(ag::gather_columns(x, plus), column_of(w, 1));
  return ag::relu(a + b);
}

}  // namespace

Tensor arch4_orientation_encode(const Tensor& cube, const Arch4Params& params) {
  if (cube.rank() != 2 || cube.dim(1) == 0 || cube.dim(1) % 8 != 0) {
    fail(ErrorKind::dimension, "arch4: cube " + ag::to_string(cube.shape()) +
                                   " is not [D x G*8]");
  }
  const std::size_t d = cube.dim(0), g = cube.dim(1) / 8;
  for (const Tensor* w : {&params.wx, &params.wy, &params.wz}) {
    if (w->rank() != 2 || w->dim(0) != d || w->dim(1) != 2) {
      fail(ErrorKind::dimension, "arch4: weight " + ag::to_string(w->shape()) + " for depth " +
                                     std::to_string(d));
    }
  }
  const Tensor sx = collapse_axis(cube, params.wx, g, 4);
  const Tensor sy = collapse_axis(sx, params.wy, g, 2);
  return collapse_axis(sy, params.wz, g, 1);
}

Grouped group_features(const Tensor& level_coords, const Tensor* level_features,
                       std::span<const std::size_t> centers, std::span<const std::size_t> neighbors,
                       std::size_t k, Encoding encoding, double bandwidth) {
  if (k == 0 || neighbors.size() != centers.size() * k) {
    fail(ErrorKind::dimension, "group_features: " + std::to_string(neighbors.size()) +
                                   " neighbor indices for " + std::to_string(centers.size()) +
                                   " centers of size " + std::to_string(k));
  }
  std::vector<std::size_t> center_rep;
  center_rep.reserve(neighbors.size());
  for (auto c : centers) center_rep.insert(center_rep.end(), k, c);
  Grouped out;
  out.rel = ag::gather_columns(level_coords, neighbors) - ag::gather_columns(level_coords, center_rep);
  std::vector<Tensor> parts;
  if (encoding == Encoding::relative) {
    parts.push_back(out.rel);
  } else {
    parts.push_back(ag::column_sq_norm(out.rel));
    parts.push_back(ag::neighborhood_density(out.rel, k, bandwidth));
  }
  if (level_features != nullptr) parts.push_back(ag::gather_columns(*level_features, neighbors));
  out.input = parts.size() == 1 ? parts.front() : ag::concat_rows(parts);
  return out;
}

Tensor arch3_multiscale(const Tensor& level_coords, const Tensor* level_features,
                        std::span<const std::size_t> centers,
                        std::span<const std::vector<std::size_t>> neighbor_lists,
                        std::span<const std::vector<Dense>> scale_mlps) {
  if (neighbor_lists.empty() || neighbor_lists.size() != scale_mlps.size()) {
    fail(ErrorKind::dimension, "arch3: " + std::to_string(neighbor_lists.size()) +
                                   " scales with " + std::to_string(scale_mlps.size()) + " MLPs");
  }
  std::vector<Tensor> parts;
  for (std::size_t t = 0; t < neighbor_lists.size(); ++t) {
    if (centers.empty() || neighbor_lists[t].size() % centers.size() != 0) {
      fail(ErrorKind::dimension, "arch3: scale " + std::to_string(t) + " neighbor list is ragged");
    }
    const std::size_t k = neighbor_lists[t].size() / centers.size();
    const auto g = group_features(level_coords, level_features, centers, neighbor_lists[t], k,
                                  Encoding::relative, 1.0);
    parts.push_back(local_max_aggregate(shared_mlp(g.input, scale_mlps[t]), k));
  }
  return parts.size() == 1 ? parts.front() : ag::concat_rows(parts);
}

// ---- parameter layout ----------------------------------------------------------

namespace {

struct LayoutWalker {
  std::vector<std::pair<std::string, Shape>> shapes;

  void dense_stack(const std::string& prefix, std::size_t in, std::span<const std::size_t> widths) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
      shapes.emplace_back(prefix + ".w" + std::to_string(i), Shape{widths[i], in});
      shapes.emplace_back(prefix + ".b" + std::to_string(i), Shape{widths[i]});
      in = widths[i];
    }
  }
};

std::size_t encoding_width(Encoding e) { return e == Encoding::relative ? 3 : 2; }

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_shapes(const NetworkSpec& spec) {
  LayoutWalker walk;
  std::size_t level_dim = 0;             // feature rows at the current level (0 = coordinates only)
  std::size_t level_points = spec.input_points;
  std::size_t block_in_dim = 0, group_in = 0, feat = 0, vec = 0;
  const std::vector<std::size_t>* block_widths = nullptr;
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::sample:
        block_in_dim = level_dim;
        level_points = l.count;
        break;
      case LayerKind::group:
        group_in = encoding_width(l.encoding) + block_in_dim;
        feat = group_in;
        break;
      case LayerKind::shared_mlp:
        walk.dense_stack(l.name, feat, l.widths);
        feat = l.widths.back();
        block_widths = &l.widths;
        break;
      case LayerKind::arch1:
        walk.shapes.emplace_back(l.name + ".w0", Shape{l.hidden, 1});
        walk.shapes.emplace_back(l.name + ".b0", Shape{l.hidden});
        walk.shapes.emplace_back(l.name + ".w1", Shape{1, l.hidden});
        walk.shapes.emplace_back(l.name + ".b1", Shape{1});
        break;
      case LayerKind::arch2:
        walk.shapes.emplace_back(l.name + ".w", Shape{l.outputs, 3});
        walk.shapes.emplace_back(l.name + ".b", Shape{l.outputs});
        break;
      case LayerKind::max_aggregate: level_dim = feat; break;
      case LayerKind::arch3:
        for (std::size_t t = 1; t < l.scales.size(); ++t) {
          const auto& widths = l.scale_widths.empty() ? *block_widths : l.scale_widths[t - 1];
          walk.dense_stack(l.name + ".s" + std::to_string(t), group_in, widths);
          level_dim += widths.back();
        }
        break;
      case LayerKind::arch4:
        for (const char* axis : {".wx", ".wy", ".wz"}) {
          walk.shapes.emplace_back(l.name + axis, Shape{level_dim, 2});
        }
        break;
      case LayerKind::global_max: vec = level_dim; break;
      case LayerKind::flatten: vec = (level_dim == 0 ? 3 : level_dim) * level_points; break;
      case LayerKind::fc:
        walk.dense_stack(l.name, vec, l.widths);
        vec = l.widths.back();
        break;
      case LayerKind::softmax: break;
    }
  }
  return walk.shapes;
}

// ---- classifier ------------------------------------------------------------------

namespace {

double fan_in(const std::string& path, const Shape& shape) {
  const auto dot = path.rfind('.');
  const std::string leaf = path.substr(dot + 1);
  if (leaf == "wx" || leaf == "wy" || leaf == "wz") return 2.0;
  return shape.size() == 2 ? static_cast<double>(shape[1]) : 0.0;
}

bool is_bias(const std::string& path) {
  const auto dot = path.rfind('.');
  return path.compare(dot + 1, 1, "b") == 0;
}

}  // namespace

Classifier::Classifier(NetworkSpec spec, std::uint64_t seed) : spec_(normalize(std::move(spec))) {
  std::map<std::string, LayerKind> kind_of;
  for (const auto& l : spec_.layers) kind_of[l.name] = l.kind;
  for (const auto& [path, shape] : parameter_shapes(spec_)) {
    std::vector<double> v(ag::numel(shape), 0.0);
    if (is_bias(path)) {
      const std::string layer = path.substr(0, path.rfind('.'));
      if (kind_of[layer] == LayerKind::arch1 && path.ends_with(".b1")) v.assign(v.size(), 1.0);
    } else {
      // One stream per tensor so inserting a module leaves the others untouched.
      Rng rng = make_rng(seed, path);
      const double bound = std::sqrt(6.0 / fan_in(path, shape));
      std::uniform_real_distribution<double> uni(-bound, bound);
      for (auto& x : v) x = uni(rng);
    }
    params_.add(path, shape, std::move(v));
  }
}

Classifier::Classifier(NetworkSpec spec, ag::ParameterSet params)
    : spec_(normalize(std::move(spec))), params_(std::move(params)) {
  const auto shapes = parameter_shapes(spec_);
  if (shapes.size() != params_.size()) {
    fail(ErrorKind::contract, "spec expects " + std::to_string(shapes.size()) + " parameter arrays, got " +
                                  std::to_string(params_.size()));
  }
  for (const auto& [path, shape] : shapes) {
    if (!params_.contains(path)) fail(ErrorKind::contract, "missing parameter '" + path + "'");
    if (params_.at(path).shape() != shape) {
      fail(ErrorKind::contract, "parameter '" + path + "' has shape " +
                                    ag::to_string(params_.at(path).shape()) + ", spec expects " +
                                    ag::to_string(shape));
    }
  }
}

geom::ContextPlan Classifier::plan(const geom::PointCloud& cloud) const {
  if (spec_.input_points != 0 && cloud.size() != spec_.input_points) {
    fail(ErrorKind::count, "network expects " + std::to_string(spec_.input_points) + " points, got " +
                               std::to_string(cloud.size()));
  }
  return geom::build_fixed_contexts(cloud, spec_);
}

ForwardResult Classifier::forward(const geom::PointCloud& cloud) const {
  return forward(geom::to_tensor(cloud), plan(cloud));
}

ForwardResult Classifier::forward(const Tensor& coords, const geom::ContextPlan& plan) const {
  if (coords.rank() != 2 || coords.dim(0) != 3 || coords.dim(1) != plan.input_points) {
    fail(ErrorKind::dimension, "forward: coordinates " + ag::to_string(coords.shape()) +
                                   " do not match a plan for " + std::to_string(plan.input_points) +
                                   " points");
  }
  auto dense = [&](const std::string& prefix, std::size_t count) {
    std::vector<Dense> out;
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back({params_.at(prefix + ".w" + std::to_string(i)),
                     params_.at(prefix + ".b" + std::to_string(i))});
    }
    return out;
  };

  Tensor level_coords = coords;
  Tensor level_feats;  // undefined at the input level
  Tensor block_coords, block_feats, next_coords, current, vec;
  Grouped grouped;
  const LayerSpec* block_group = nullptr;
  const LayerSpec* block_mlp = nullptr;
  const geom::BlockContext* ctx = nullptr;
  std::size_t block = 0, agg = 0;
  ForwardResult result;

  const auto& layers = spec_.layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    switch (l.kind) {
      case LayerKind::sample:
        if (block >= plan.blocks.size()) fail(ErrorKind::contract, "plan has too few blocks for the spec");
        ctx = &plan.blocks[block++];
        block_coords = level_coords;
        block_feats = level_feats;
        next_coords = ag::gather_columns(level_coords, ctx->centers);
        current = next_coords;
        break;
      case LayerKind::group:
        block_group = &l;
        grouped = group_features(block_coords, block_feats.defined() ? &block_feats : nullptr,
                                 ctx->centers, ctx->neighbors, ctx->k, l.encoding, ctx->bandwidth);
        current = grouped.input;
        agg = ctx->k;
        break;
      case LayerKind::shared_mlp: {
        block_mlp = &l;
        const auto layers_d = dense(l.name, l.widths.size());
        current = shared_mlp(current, layers_d);
        break;
      }
      case LayerKind::arch1: {
        const Arch1Params p{{params_.at(l.name + ".w0"), params_.at(l.name + ".b0")},
                            {params_.at(l.name + ".w1"), params_.at(l.name + ".b1")}};
        current = arch1_density_reweight(current, ag::neighborhood_density(grouped.rel, agg, ctx->bandwidth), p);
        break;
      }
      case LayerKind::arch2:
        current = arch2_coord_reweight(current, grouped.rel,
                                       {params_.at(l.name + ".w"), params_.at(l.name + ".b")}, agg);
        agg = l.outputs;
        break;
      case LayerKind::max_aggregate:
        level_feats = local_max_aggregate(current, agg);
        level_coords = next_coords;
        current = level_feats;
        break;
      case LayerKind::arch3: {
        std::vector<Tensor> parts{level_feats};
        for (std::size_t t = 0; t < ctx->scale_neighbors.size(); ++t) {
          const std::size_t k = ctx->extra_scales[t];
          const std::size_t nw = l.scale_widths.empty() ? block_mlp->widths.size() : l.scale_widths[t].size();
          const auto g = group_features(block_coords, block_feats.defined() ? &block_feats : nullptr,
                                        ctx->centers, ctx->scale_neighbors[t], k, block_group->encoding,
                                        ctx->bandwidth);
          const auto mlp = dense(l.name + ".s" + std::to_string(t + 1), nw);
          parts.push_back(local_max_aggregate(shared_mlp(g.input, mlp), k));
        }
        level_feats = ag::concat_rows(parts);
        current = level_feats;
        break;
      }
      case LayerKind::arch4: {
        const Arch4Params p{params_.at(l.name + ".wx"), params_.at(l.name + ".wy"),
                            params_.at(l.name + ".wz")};
        level_feats = arch4_orientation_encode(ag::gather_columns(level_feats, ctx->octants), p);
        current = level_feats;
        break;
      }
      case LayerKind::global_max:
        vec = ag::reshape(ag::reduce_max(level_feats), {level_feats.dim(0), 1});
        current = vec;
        break;
      case LayerKind::flatten: {
        const Tensor& src = level_feats.defined() ? level_feats : level_coords;
        vec = ag::reshape(src, {src.size(), 1});
        current = vec;
        break;
      }
      case LayerKind::fc: {
        const bool last = i + 1 < layers.size() && layers[i + 1].kind == LayerKind::softmax;
        const auto mlp = dense(l.name, l.widths.size());
        for (std::size_t j = 0; j < mlp.size(); ++j) {
          vec = ag::add_bias(ag::matmul(mlp[j].weight, vec), mlp[j].bias);
          if (!(last && j + 1 == mlp.size())) vec = ag::relu(vec);
        }
        current = vec;
        break;
      }
      case LayerKind::softmax:
        result.logits = ag::reshape(vec, {vec.size()});
        break;
    }
    if (l.name == spec_.tap) result.tap = ag::reshape(current, {current.size()});
  }
  return result;
}

}  // namespace pcdiag::nets
