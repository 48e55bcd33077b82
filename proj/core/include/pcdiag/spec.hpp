#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pcdiag::nets {

enum class LayerKind {
  sample,
  group,
  shared_mlp,
  max_aggregate,
  arch1,
  arch2,
  arch3,
  arch4,
  global_max,
  flatten,
  fc,
  softmax,
};

enum class GroupKind { knn, ball };

/// Per-neighbor input encoding of a group layer. `relative` feeds x_j - x_i;
/// `distance` feeds |x_j - x_i|^2 and the KDE density, which makes the whole
/// pipeline rotation invariant.
enum class Encoding { relative, distance };

struct LayerSpec {
  LayerKind kind = LayerKind::fc;
  std::string name;
  std::size_t count = 0;  // sample: centers; group: neighbors per center
  GroupKind group = GroupKind::knn;
  double radius = 0.0;  // ball-query radius (group) or octant search radius (arch4)
  Encoding encoding = Encoding::relative;
  std::vector<std::size_t> widths;  // shared_mlp / fc
  std::size_t hidden = 16;          // arch1 hidden units
  std::size_t outputs = 32;         // arch2 M
  std::vector<std::size_t> scales;  // arch3 K_1..K_T, K_1 equal to the block's k
  std::vector<std::vector<std::size_t>> scale_widths;  // arch3 MLP widths for K_2..K_T
};

struct NetworkSpec {
  std::size_t num_classes = 0;
  std::size_t input_points = 0;  // 0 = any; required when raw coordinates are flattened
  std::vector<LayerSpec> layers;
  std::string tap;
};

std::string_view to_string(LayerKind kind);

/// Assigns default names (`<type>_<ordinal>`) and checks the layer grammar:
///   ( sample group shared_mlp [arch1] [arch2] max_aggregate [arch3] [arch4] )*
///   ( global_max | flatten ) fc+ softmax
/// Throws spec errors that name the offending layer index.
NetworkSpec normalize(NetworkSpec spec);

/// Minimum point count a cloud needs for this spec (largest first-level request).
std::size_t required_points(const NetworkSpec& spec);

/// Canonical JSON text (stable key order, names filled in).
std::string to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(std::string_view text);

/// Desk-scale PointNet++-style classifier: two SA blocks (128/k32/[32,32,64],
/// 32/k16/[64,64,128]), global max, FC 64 (the tap) and FC classes.
NetworkSpec baseline_spec(std::size_t num_classes);

enum class ArchModule { arch1, arch2, arch3, arch4 };

std::string_view to_string(ArchModule module);
ArchModule arch_module_from_string(std::string_view name);

struct ArchToggle {
  ArchModule module = ArchModule::arch1;
  std::vector<std::size_t> blocks;  // 1-based SA block numbers
  std::size_t arch1_hidden = 16;
  std::size_t arch2_outputs = 32;
  std::vector<std::size_t> arch3_scales;  // first entry must equal the block's k
  std::vector<std::vector<std::size_t>> arch3_widths;
  double arch4_radius = 0.4;
};

/// Inserts the module behind the named blocks; every other layer keeps its
/// name and relative order.
NetworkSpec insert_architecture(const NetworkSpec& spec, const ArchToggle& toggle);
/// Removes every layer of the given module kind.
NetworkSpec remove_architecture(const NetworkSpec& spec, ArchModule module);

std::size_t count_blocks(const NetworkSpec& spec);

}  // namespace pcdiag::nets
