#include "cli/experiment.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pcdiag/error.hpp"
#include "pcdiag/report.hpp"

namespace pcdiag::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::config, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) fail(ErrorKind::config, "unknown field '" + key + "' in " + where);
  }
}

template <class T>
T read(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::config, "field '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (j.contains(key)) out = read<T>(j, key, where);
}

data::DatasetConfig parse_dataset(const json& j) {
  check_keys(j, {"classes", "train_per_class", "test_per_class", "points", "background", "background_points",
                 "jitter", "manifest"},
             "dataset");
  data::DatasetConfig d;
  read_opt(j, "classes", d.classes, "dataset");
  read_opt(j, "train_per_class", d.train_per_class, "dataset");
  read_opt(j, "test_per_class", d.test_per_class, "dataset");
  read_opt(j, "points", d.points, "dataset");
  read_opt(j, "background", d.background, "dataset");
  read_opt(j, "background_points", d.background_points, "dataset");
  read_opt(j, "jitter", d.jitter, "dataset");
  for (const auto& c : d.classes) {
    try {
      data::shape_class_from_string(c);
    } catch (const Error& e) {
      fail(ErrorKind::config, "dataset.classes: " + e.detail());
    }
  }
  return d;
}

nets::ArchToggle parse_toggle(const json& j, const std::string& where, bool named) {
  std::set<std::string> allowed{"module", "blocks", "hidden", "m", "scales", "widths", "radius"};
  if (named) allowed.insert("name");
  check_keys(j, allowed, where);
  if (!j.contains("module")) fail(ErrorKind::config, "missing required field 'module' in " + where);
  if (!j.contains("blocks")) fail(ErrorKind::config, "missing required field 'blocks' in " + where);
  nets::ArchToggle t;
  try {
    t.module = nets::arch_module_from_string(read<std::string>(j, "module", where));
  } catch (const Error& e) {
    fail(ErrorKind::config, where + ": " + e.detail());
  }
  t.blocks = read<std::vector<std::size_t>>(j, "blocks", where);
  read_opt(j, "hidden", t.arch1_hidden, where);
  read_opt(j, "m", t.arch2_outputs, where);
  read_opt(j, "scales", t.arch3_scales, where);
  read_opt(j, "widths", t.arch3_widths, where);
  read_opt(j, "radius", t.arch4_radius, where);
  if (t.module == nets::ArchModule::arch3 && t.arch3_scales.size() < 2) {
    fail(ErrorKind::config, where + ": arch3 needs at least two scales");
  }
  return t;
}

nets::TrainConfig parse_training(const json& j) {
  check_keys(j, {"epochs", "batch", "learning_rate", "optimizer", "rotation"}, "training");
  nets::TrainConfig t;
  read_opt(j, "epochs", t.epochs, "training");
  read_opt(j, "batch", t.batch, "training");
  read_opt(j, "learning_rate", t.learning_rate, "training");
  if (j.contains("optimizer")) {
    const auto o = read<std::string>(j, "optimizer", "training");
    if (o == "adam") {
      t.optimizer = ag::OptimizerKind::adam;
    } else if (o == "sgd") {
      t.optimizer = ag::OptimizerKind::sgd;
    } else {
      fail(ErrorKind::config, "training.optimizer must be 'adam' or 'sgd'");
    }
  }
  if (j.contains("rotation")) {
    const auto r = read<std::string>(j, "rotation", "training");
    if (r == "none") {
      t.rotation = nets::RotationAugment::none;
    } else if (r == "z" || r == "z_axis") {
      t.rotation = nets::RotationAugment::z_axis;
    } else if (r == "so3") {
      t.rotation = nets::RotationAugment::so3;
    } else {
      fail(ErrorKind::config, "training.rotation must be 'none', 'z' or 'so3'");
    }
  }
  if (t.batch == 0) fail(ErrorKind::config, "training.batch must be positive");
  if (!(t.learning_rate >= 0.0)) fail(ErrorKind::config, "training.learning_rate must be >= 0");
  return t;
}

DiagnosisSection parse_diagnosis(const json& j) {
  DiagnosisSection d;
  if (!j.is_object()) fail(ErrorKind::config, "diagnosis must be an object");
  d.config = diag::config_from_json(j.dump());
  read_opt(j, "samples", d.samples, "diagnosis");
  read_opt(j, "split", d.split, "diagnosis");
  if (d.split != "train" && d.split != "test") fail(ErrorKind::config, "diagnosis.split must be 'train' or 'test'");
  return d;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ExperimentConfig parse_experiment(std::string_view text, const fs::path& base_dir,
                                  std::optional<std::uint64_t> seed_override) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"seed", "dataset", "model", "training", "diagnosis", "study"}, "config");

  ExperimentConfig c;
  if (seed_override) {
    c.seed = *seed_override;
  } else if (j.contains("seed")) {
    c.seed = read<std::uint64_t>(j, "seed", "config");
  } else {
    fail(ErrorKind::config, "missing required field 'seed'");
  }

  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    c.dataset = parse_dataset(d);
    if (d.contains("manifest")) {
      fs::path p = read<std::string>(d, "manifest", "dataset");
      c.manifest = p.is_absolute() ? p : base_dir / p;
    }
  }
  c.dataset.seed = c.seed;

  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"spec", "arch"}, "model");
    if (m.contains("spec")) {
      try {
        c.spec = nets::spec_from_json(m["spec"].dump());
      } catch (const Error& e) {
        fail(ErrorKind::config, "model.spec: " + e.detail());
      }
    }
    if (m.contains("arch")) {
      if (!m["arch"].is_array()) fail(ErrorKind::config, "model.arch must be an array");
      std::size_t i = 0;
      for (const auto& t : m["arch"]) c.arch.push_back(parse_toggle(t, "model.arch[" + std::to_string(i++) + "]", false));
    }
  }
  if (j.contains("training")) c.training = parse_training(j["training"]);
  c.training.seed = c.seed;
  if (j.contains("diagnosis")) c.diagnosis = parse_diagnosis(j["diagnosis"]);
  if (j.contains("study")) {
    const auto& s = j["study"];
    Study st;
    st.toggle = parse_toggle(s, "study", true);
    st.name = s.contains("name") ? read<std::string>(s, "name", "study") : std::string(nets::to_string(st.toggle.module));
    for (const auto& t : c.arch) {
      if (t.module == st.toggle.module) {
        fail(ErrorKind::config, "study module " + std::string(nets::to_string(t.module)) + " is also listed in model.arch");
      }
    }
    c.study = std::move(st);
  }
  return c;
}

ExperimentConfig load_experiment(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  return parse_experiment(read_file(path), path.parent_path(), seed_override);
}

nets::NetworkSpec model_spec(const ExperimentConfig& config, std::size_t num_classes) {
  nets::NetworkSpec spec = config.spec ? *config.spec : nets::baseline_spec(num_classes);
  if (spec.num_classes != num_classes) {
    fail(ErrorKind::config, "model.spec has " + std::to_string(spec.num_classes) + " classes but the dataset has " +
                                std::to_string(num_classes));
  }
  for (const auto& t : config.arch) spec = nets::insert_architecture(spec, t);
  return spec;
}

nets::ArchToggle toggle_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("toggle is not valid JSON: ") + e.what());
  }
  return parse_toggle(j, "toggle", true);
}

std::string training_json(const nets::TrainConfig& t) {
  const char* rotation = t.rotation == nets::RotationAugment::none     ? "none"
                         : t.rotation == nets::RotationAugment::z_axis ? "z"
                                                                       : "so3";
  json j{{"epochs", t.epochs},
         {"batch", t.batch},
         {"learning_rate", t.learning_rate},
         {"optimizer", t.optimizer == ag::OptimizerKind::adam ? "adam" : "sgd"},
         {"rotation", rotation},
         {"seed", t.seed}};
  return j.dump();
}

Splits load_data(const ExperimentConfig& config) {
  Splits s;
  if (config.manifest) {
    const auto m = data::load_manifest(*config.manifest);
    s.classes = m.classes;
    s.train = data::load_split(m, *config.manifest, "train");
    s.test = data::load_split(m, *config.manifest, "test");
  } else {
    auto d = data::generate_dataset(config.dataset);
    s.classes = std::move(d.classes);
    s.train = std::move(d.train);
    s.test = std::move(d.test);
  }
  return s;
}

std::vector<geom::PointCloud> spread_subset(const std::vector<geom::PointCloud>& clouds, std::size_t count) {
  if (count == 0 || count >= clouds.size()) return clouds;
  std::vector<geom::PointCloud> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(clouds[i * clouds.size() / count]);
  return out;
}

}  // namespace pcdiag::cli
