#include "pcdiag/spec.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"
#include "pcdiag/error.hpp"

namespace pcdiag::nets {

namespace {

using nlohmann::json;

struct KindName {
  LayerKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::sample, "sample"},       {LayerKind::group, "group"},
    {LayerKind::shared_mlp, "shared_mlp"}, {LayerKind::max_aggregate, "max_aggregate"},
    {LayerKind::arch1, "arch1"},         {LayerKind::arch2, "arch2"},
    {LayerKind::arch3, "arch3"},         {LayerKind::arch4, "arch4"},
    {LayerKind::global_max, "global_max"}, {LayerKind::flatten, "flatten"},
    {LayerKind::fc, "fc"},               {LayerKind::softmax, "softmax"},
};

LayerKind kind_from_string(std::string_view s, std::size_t index) {
  for (const auto& kn : kKindNames) {
    if (s == kn.name) return kn.kind;
  }
  fail(ErrorKind::spec, "layer " + std::to_string(index) + ": unknown layer type '" +
                            std::string(s) + "'");
}

[[noreturn]] void bad_layer(std::size_t index, const std::string& what) {
  fail(ErrorKind::spec, "layer " + std::to_string(index) + ": " + what);
}

bool strictly_monotone(const std::vector<std::size_t>& v) {
  if (v.size() < 2) return true;
  bool inc = true, dec = true;
  for (std::size_t i = 1; i < v.size(); ++i) {
    inc = inc && v[i] > v[i - 1];
    dec = dec && v[i] < v[i - 1];
  }
  return inc || dec;
}

void check_widths(const std::vector<std::size_t>& w, std::size_t index, const char* what) {
  if (w.empty()) bad_layer(index, std::string(what) + " needs at least one width");
  for (auto x : w) {
    if (x == 0) bad_layer(index, std::string(what) + " widths must be positive");
  }
}

json layer_to_json(const LayerSpec& l) {
  json j;
  j["type"] = std::string(to_string(l.kind));
  j["name"] = l.name;
  switch (l.kind) {
    case LayerKind::sample: j["m"] = l.count; break;
    case LayerKind::group:
      j["kind"] = l.group == GroupKind::knn ? "knn" : "ball";
      j["k"] = l.count;
      if (l.group == GroupKind::ball) j["radius"] = l.radius;
      j["encoding"] = l.encoding == Encoding::relative ? "relative" : "distance";
      break;
    case LayerKind::shared_mlp:
    case LayerKind::fc: j["widths"] = l.widths; break;
    case LayerKind::arch1: j["hidden"] = l.hidden; break;
    case LayerKind::arch2: j["m"] = l.outputs; break;
    case LayerKind::arch3:
      j["scales"] = l.scales;
      j["widths"] = l.scale_widths;
      break;
    case LayerKind::arch4: j["radius"] = l.radius; break;
    default: break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j, std::size_t index) {
  if (!j.is_object() || !j.contains("type")) bad_layer(index, "missing 'type'");
  LayerSpec l;
  l.kind = kind_from_string(j.at("type").get<std::string>(), index);
  l.name = j.value("name", std::string{});
  try {
    switch (l.kind) {
      case LayerKind::sample: l.count = j.at("m").get<std::size_t>(); break;
      case LayerKind::group: {
        const auto kind = j.value("kind", std::string("knn"));
        if (kind == "knn") {
          l.group = GroupKind::knn;
        } else if (kind == "ball") {
          l.group = GroupKind::ball;
          l.radius = j.at("radius").get<double>();
        } else {
          bad_layer(index, "unknown group kind '" + kind + "'");
        }
        l.count = j.at("k").get<std::size_t>();
        const auto enc = j.value("encoding", std::string("relative"));
        if (enc == "relative") {
          l.encoding = Encoding::relative;
        } else if (enc == "distance") {
          l.encoding = Encoding::distance;
        } else {
          bad_layer(index, "unknown encoding '" + enc + "'");
        }
        break;
      }
      case LayerKind::shared_mlp:
      case LayerKind::fc: l.widths = j.at("widths").get<std::vector<std::size_t>>(); break;
      case LayerKind::arch1: l.hidden = j.value("hidden", std::size_t{16}); break;
      case LayerKind::arch2: l.outputs = j.value("m", std::size_t{32}); break;
      case LayerKind::arch3:
        l.scales = j.at("scales").get<std::vector<std::size_t>>();
        l.scale_widths = j.value("widths", std::vector<std::vector<std::size_t>>{});
        break;
      case LayerKind::arch4: l.radius = j.at("radius").get<double>(); break;
      default: break;
    }
  } catch (const json::exception& e) {
    bad_layer(index, std::string("malformed fields: ") + e.what());
  }
  return l;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "?";
}

NetworkSpec normalize(NetworkSpec spec) {
  if (spec.num_classes < 2) fail(ErrorKind::spec, "network needs at least 2 classes");
  auto& layers = spec.layers;
  if (layers.empty()) fail(ErrorKind::spec, "network has no layers");

  // Default names: <type>_<ordinal>, ordinals counted per type.
  std::map<LayerKind, std::size_t> ordinal;
  std::set<std::string> names;
  for (auto& l : layers) {
    const std::size_t ord = ++ordinal[l.kind];
    if (l.name.empty()) {
      std::string candidate = std::string(to_string(l.kind)) + "_" + std::to_string(ord);
      while (names.count(candidate)) candidate += "'";
      l.name = candidate;
    }
    if (!names.insert(l.name).second) {
      fail(ErrorKind::spec, "duplicate layer name '" + l.name + "'");
    }
  }

  // Grammar walk.
  enum class State { block_start, after_sample, after_group, after_mlp, after_arch1, after_arch2,
                     after_max, after_arch3, after_arch4, head, after_fc, done };
  State st = State::block_start;
  std::size_t group_k = 0;
  std::size_t blocks = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const bool block_boundary = st == State::block_start || st == State::after_max ||
                                st == State::after_arch3 || st == State::after_arch4;
    switch (l.kind) {
      case LayerKind::sample:
        if (!block_boundary) bad_layer(i, "sample must start a set-abstraction block");
        if (l.count == 0) bad_layer(i, "sample count must be positive");
        st = State::after_sample;
        ++blocks;
        break;
      case LayerKind::group:
        if (st != State::after_sample) bad_layer(i, "group must follow sample");
        if (l.count == 0) bad_layer(i, "group k must be positive");
        if (l.group == GroupKind::ball && !(l.radius > 0.0)) bad_layer(i, "ball radius must be > 0");
        group_k = l.count;
        st = State::after_group;
        break;
      case LayerKind::shared_mlp:
        if (st != State::after_group) bad_layer(i, "shared_mlp must follow group");
        check_widths(l.widths, i, "shared_mlp");
        st = State::after_mlp;
        break;
      case LayerKind::arch1:
        if (st != State::after_mlp) bad_layer(i, "arch1 must follow shared_mlp");
        if (l.hidden == 0) bad_layer(i, "arch1 hidden width must be positive");
        st = State::after_arch1;
        break;
      case LayerKind::arch2:
        if (st != State::after_mlp && st != State::after_arch1) {
          bad_layer(i, "arch2 must follow shared_mlp or arch1");
        }
        if (l.outputs == 0) bad_layer(i, "arch2 M must be positive");
        st = State::after_arch2;
        break;
      case LayerKind::max_aggregate:
        if (st != State::after_mlp && st != State::after_arch1 && st != State::after_arch2) {
          bad_layer(i, "max_aggregate must close a block after shared_mlp/arch1/arch2");
        }
        st = State::after_max;
        break;
      case LayerKind::arch3:
        if (st != State::after_max) bad_layer(i, "arch3 must follow max_aggregate");
        if (l.scales.empty()) bad_layer(i, "arch3 scale list is empty");
        if (!strictly_monotone(l.scales)) bad_layer(i, "arch3 scales must be strictly monotone");
        if (l.scales.front() != group_k) {
          bad_layer(i, "arch3 first scale must equal the block's group k (" +
                           std::to_string(group_k) + ")");
        }
        for (auto s : l.scales) {
          if (s == 0) bad_layer(i, "arch3 scales must be positive");
        }
        if (!l.scale_widths.empty() && l.scale_widths.size() != l.scales.size() - 1) {
          bad_layer(i, "arch3 needs one width list per additional scale");
        }
        for (const auto& w : l.scale_widths) check_widths(w, i, "arch3");
        st = State::after_arch3;
        break;
      case LayerKind::arch4:
        if (st != State::after_max && st != State::after_arch3) {
          bad_layer(i, "arch4 must follow max_aggregate or arch3");
        }
        if (!(l.radius > 0.0)) bad_layer(i, "arch4 radius must be > 0");
        st = State::after_arch4;
        break;
      case LayerKind::global_max:
        if (!block_boundary || blocks == 0) bad_layer(i, "global_max must follow a complete block");
        st = State::head;
        break;
      case LayerKind::flatten:
        if (!block_boundary) bad_layer(i, "flatten must follow a complete block or the input");
        if (blocks == 0 && spec.input_points == 0) {
          bad_layer(i, "flattening raw coordinates needs 'points' in the spec");
        }
        st = State::head;
        break;
      case LayerKind::fc:
        if (st != State::head && st != State::after_fc) {
          bad_layer(i, "fc must follow global_max, flatten or fc");
        }
        check_widths(l.widths, i, "fc");
        st = State::after_fc;
        break;
      case LayerKind::softmax:
        if (st != State::after_fc) bad_layer(i, "softmax must follow fc");
        if (layers[i - 1].widths.back() != spec.num_classes) {
          bad_layer(i, "final fc width " + std::to_string(layers[i - 1].widths.back()) +
                           " does not match class count " + std::to_string(spec.num_classes));
        }
        if (i + 1 != layers.size()) bad_layer(i, "softmax must be the last layer");
        st = State::done;
        break;
    }
  }
  if (st != State::done) fail(ErrorKind::spec, "network must end with softmax");

  if (spec.tap.empty()) fail(ErrorKind::spec, "no tap layer named");
  auto tap_it = std::find_if(layers.begin(), layers.end(),
                             [&](const LayerSpec& l) { return l.name == spec.tap; });
  if (tap_it == layers.end()) fail(ErrorKind::spec, "tap layer '" + spec.tap + "' not found");
  if (tap_it->kind == LayerKind::softmax) fail(ErrorKind::spec, "tap layer must precede softmax");
  if (tap_it->kind == LayerKind::sample) {
    fail(ErrorKind::spec, "tap layer '" + spec.tap + "' produces no feature");
  }
  return spec;
}

std::size_t required_points(const NetworkSpec& spec) {
  std::size_t need = 1;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::sample) need = std::max(need, l.count);
    if (l.kind == LayerKind::group && l.group == GroupKind::knn) need = std::max(need, l.count);
    if (l.kind == LayerKind::arch3) {
      for (auto s : l.scales) need = std::max(need, s);
    }
    if (l.kind == LayerKind::max_aggregate) break;
  }
  return need;
}

std::string to_json(const NetworkSpec& spec) {
  json j;
  j["classes"] = spec.num_classes;
  j["points"] = spec.input_points;
  j["tap"] = spec.tap;
  json layers = json::array();
  for (const auto& l : spec.layers) layers.push_back(layer_to_json(l));
  j["layers"] = std::move(layers);
  return j.dump();
}

NetworkSpec spec_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::spec, std::string("network spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::spec, "network spec must be a JSON object");
  NetworkSpec spec;
  try {
    spec.num_classes = j.at("classes").get<std::size_t>();
    spec.input_points = j.value("points", std::size_t{0});
    spec.tap = j.value("tap", std::string{});
  } catch (const json::exception& e) {
    fail(ErrorKind::spec, std::string("network spec: ") + e.what());
  }
  if (!j.contains("layers") || !j["layers"].is_array()) fail(ErrorKind::spec, "network spec needs 'layers'");
  std::size_t i = 0;
  for (const auto& lj : j["layers"]) spec.layers.push_back(layer_from_json(lj, i++));
  return normalize(std::move(spec));
}

NetworkSpec baseline_spec(std::size_t num_classes) {
  NetworkSpec s;
  s.num_classes = num_classes;
  auto add = [&](LayerSpec l) { s.layers.push_back(std::move(l)); };
  LayerSpec sample1{.kind = LayerKind::sample, .count = 128};
  LayerSpec group1{.kind = LayerKind::group, .count = 32};
  LayerSpec mlp1{.kind = LayerKind::shared_mlp, .widths = {32, 32, 64}};
  LayerSpec max1{.kind = LayerKind::max_aggregate};
  LayerSpec sample2{.kind = LayerKind::sample, .count = 32};
  LayerSpec group2{.kind = LayerKind::group, .count = 16};
  LayerSpec mlp2{.kind = LayerKind::shared_mlp, .widths = {64, 64, 128}};
  LayerSpec max2{.kind = LayerKind::max_aggregate};
  add(sample1);
  add(group1);
  add(mlp1);
  add(max1);
  add(sample2);
  add(group2);
  add(mlp2);
  add(max2);
  add(LayerSpec{.kind = LayerKind::global_max});
  add(LayerSpec{.kind = LayerKind::fc, .widths = {64}});
  add(LayerSpec{.kind = LayerKind::fc, .widths = {num_classes}});
  add(LayerSpec{.kind = LayerKind::softmax});
  s.tap = "fc_1";
  return normalize(std::move(s));
}

std::string_view to_string(ArchModule module) {
  switch (module) {
    case ArchModule::arch1: return "arch1";
    case ArchModule::arch2: return "arch2";
    case ArchModule::arch3: return "arch3";
    case ArchModule::arch4: return "arch4";
  }
  return "?";
}

ArchModule arch_module_from_string(std::string_view name) {
  if (name == "arch1") return ArchModule::arch1;
  if (name == "arch2") return ArchModule::arch2;
  if (name == "arch3") return ArchModule::arch3;
  if (name == "arch4") return ArchModule::arch4;
  fail(ErrorKind::config, "unknown architecture module '" + std::string(name) + "'");
}

namespace {

LayerKind layer_kind_of(ArchModule m) {
  switch (m) {
    case ArchModule::arch1: return LayerKind::arch1;
    case ArchModule::arch2: return LayerKind::arch2;
    case ArchModule::arch3: return LayerKind::arch3;
    case ArchModule::arch4: return LayerKind::arch4;
  }
  return LayerKind::arch1;
}

}  // namespace

std::size_t count_blocks(const NetworkSpec& spec) {
  return static_cast<std::size_t>(std::count_if(spec.layers.begin(), spec.layers.end(), [](const LayerSpec& l) {
    return l.kind == LayerKind::sample;
  }));
}

NetworkSpec insert_architecture(const NetworkSpec& spec, const ArchToggle& toggle) {
  const std::size_t nblocks = count_blocks(spec);
  if (toggle.blocks.empty()) fail(ErrorKind::config, "architecture toggle lists no blocks");
  for (auto b : toggle.blocks) {
    if (b == 0 || b > nblocks) {
      fail(ErrorKind::config, std::string(to_string(toggle.module)) + " placement block " +
                                  std::to_string(b) + " outside 1.." + std::to_string(nblocks));
    }
  }
  const LayerKind kind = layer_kind_of(toggle.module);
  NetworkSpec out = remove_architecture(spec, toggle.module);
  std::vector<LayerSpec> layers;
  std::size_t block = 0;
  std::size_t group_k = 0;
  auto wanted = [&](std::size_t b) {
    return std::find(toggle.blocks.begin(), toggle.blocks.end(), b) != toggle.blocks.end();
  };
  auto make_module = [&](std::size_t b) {
    LayerSpec l{.kind = kind, .name = std::string(to_string(toggle.module)) + "_b" + std::to_string(b)};
    l.hidden = toggle.arch1_hidden;
    l.outputs = toggle.arch2_outputs;
    l.scales = toggle.arch3_scales;
    if (!l.scales.empty()) l.scales.front() = group_k;
    l.scale_widths = toggle.arch3_widths;
    l.radius = toggle.arch4_radius;
    return l;
  };
  const auto& src = out.layers;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto& l = src[i];
    if (l.kind == LayerKind::sample) ++block;
    if (l.kind == LayerKind::group) group_k = l.count;
    layers.push_back(l);
    if (!wanted(block)) continue;
    const LayerKind next = i + 1 < src.size() ? src[i + 1].kind : LayerKind::softmax;
    switch (kind) {
      case LayerKind::arch1:
        if (l.kind == LayerKind::shared_mlp) layers.push_back(make_module(block));
        break;
      case LayerKind::arch2:
        if ((l.kind == LayerKind::shared_mlp && next != LayerKind::arch1) || l.kind == LayerKind::arch1) {
          layers.push_back(make_module(block));
        }
        break;
      case LayerKind::arch3:
        if (l.kind == LayerKind::max_aggregate) layers.push_back(make_module(block));
        break;
      case LayerKind::arch4:
        if ((l.kind == LayerKind::max_aggregate && next != LayerKind::arch3) || l.kind == LayerKind::arch3) {
          layers.push_back(make_module(block));
        }
        break;
      default: break;
    }
  }
  out.layers = std::move(layers);
  return normalize(std::move(out));
}

NetworkSpec remove_architecture(const NetworkSpec& spec, ArchModule module) {
  const LayerKind kind = layer_kind_of(module);
  NetworkSpec out = spec;
  std::erase_if(out.layers, [&](const LayerSpec& l) { return l.kind == kind; });
  if (std::none_of(out.layers.begin(), out.layers.end(),
                   [&](const LayerSpec& l) { return l.name == out.tap; })) {
    fail(ErrorKind::config, "removing " + std::string(to_string(module)) + " would remove the tap layer");
  }
  return normalize(std::move(out));
}

}  // namespace pcdiag::nets
