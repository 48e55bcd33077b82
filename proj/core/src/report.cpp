#include "pcdiag/report.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"
#include "pcdiag/error.hpp"

namespace pcdiag::diag {

namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

std::string config_json(const DiagnoseConfig& c) {
  json metrics = json::array();
  for (auto m : c.metrics) metrics.push_back(std::string(to_string(m)));
  json sigma{{"target_factor", c.sigma.target_factor},
             {"sigma0", c.sigma.sigma0},
             {"variance_samples", c.sigma.variance_samples},
             {"lambda_min", c.sigma.lambda_min},
             {"lambda_max", c.sigma.lambda_max},
             {"lambda_iterations", c.sigma.lambda_iterations},
             {"tolerance", c.sigma.tolerance},
             {"learning_rate", c.sigma.learning_rate},
             {"steps", c.sigma.steps},
             {"mc_samples", c.sigma.mc_samples},
             {"eval_samples", c.sigma.eval_samples}};
  if (c.sigma.target) sigma["target"] = *c.sigma.target;
  json attack{{"c_min", c.attack.c_min},
              {"c_max", c.attack.c_max},
              {"c_initial", c.attack.c_initial},
              {"search_steps", c.attack.search_steps},
              {"learning_rate", c.attack.learning_rate},
              {"steps", c.attack.steps}};
  json j{{"metrics", metrics},
         {"sigma", sigma},
         {"rotations", c.rotations},
         {"rotation_mode", c.rotation_mode == geom::RotationMode::so3 ? "so3" : "z"},
         {"attack", attack},
         {"neighbors", c.neighbors}};
  return j.dump();
}

DiagnoseConfig config_from_json(std::string_view text, DiagnoseConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("diagnosis config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::config, "diagnosis config must be an object");
  auto unknown = [](const std::string& where, const std::string& key) {
    fail(ErrorKind::config, "unknown key '" + key + "' in " + where);
  };
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "metrics") {
        if (v.is_string()) {
          c.metrics = parse_metrics(v.get<std::string>());
        } else {
          std::string list;
          for (const auto& m : v) list += m.get<std::string>() + ",";
          c.metrics = parse_metrics(list);
        }
      } else if (key == "rotations") {
        c.rotations = v.get<std::size_t>();
      } else if (key == "rotation_mode") {
        const auto mode = v.get<std::string>();
        if (mode == "so3") {
          c.rotation_mode = geom::RotationMode::so3;
        } else if (mode == "z" || mode == "z_axis") {
          c.rotation_mode = geom::RotationMode::z_axis;
        } else {
          fail(ErrorKind::config, "rotation_mode must be 'so3' or 'z'");
        }
      } else if (key == "neighbors") {
        c.neighbors = v.get<std::size_t>();
      } else if (key == "sigma") {
        for (const auto& [k, x] : v.items()) {
          auto& s = c.sigma;
          if (k == "target_factor") s.target_factor = x.get<double>();
          else if (k == "target") s.target = x.is_null() ? std::nullopt : std::optional<double>(x.get<double>());
          else if (k == "sigma0") s.sigma0 = x.get<double>();
          else if (k == "variance_samples") s.variance_samples = x.get<std::size_t>();
          else if (k == "lambda_min") s.lambda_min = x.get<double>();
          else if (k == "lambda_max") s.lambda_max = x.get<double>();
          else if (k == "lambda_iterations") s.lambda_iterations = x.get<std::size_t>();
          else if (k == "tolerance") s.tolerance = x.get<double>();
          else if (k == "learning_rate") s.learning_rate = x.get<double>();
          else if (k == "steps") s.steps = x.get<std::size_t>();
          else if (k == "mc_samples") s.mc_samples = x.get<std::size_t>();
          else if (k == "eval_samples") s.eval_samples = x.get<std::size_t>();
          else unknown("sigma", k);
        }
      } else if (key == "attack") {
        for (const auto& [k, x] : v.items()) {
          auto& a = c.attack;
          if (k == "c_min") a.c_min = x.get<double>();
          else if (k == "c_max") a.c_max = x.get<double>();
          else if (k == "c_initial") a.c_initial = x.get<double>();
          else if (k == "search_steps") a.search_steps = x.get<std::size_t>();
          else if (k == "learning_rate") a.learning_rate = x.get<double>();
          else if (k == "steps") a.steps = x.get<std::size_t>();
          else unknown("attack", k);
        }
      } else if (key == "samples" || key == "split") {
        // consumed by the caller
      } else {
        unknown("diagnosis", key);
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("diagnosis config: ") + e.what());
  }
  return c;
}

std::string to_json(const DiagnosisReport& r) {
  json metrics{{"information_discarding", optional_number(r.metrics.information_discarding)},
               {"information_concentration", optional_number(r.metrics.information_concentration)},
               {"rotation_non_robustness", optional_number(r.metrics.rotation_non_robustness)},
               {"adversarial_robustness", optional_number(r.metrics.adversarial_robustness)},
               {"neighborhood_inconsistency", optional_number(r.metrics.neighborhood_inconsistency)}};
  json attacks = json::array();
  for (const auto& a : r.attacks) {
    attacks.push_back({{"sample", a.sample}, {"target", a.target}, {"success", a.success}, {"l2", number_or_null(a.l2)}});
  }
  json config = r.config.empty() ? json::object() : json::parse(r.config);
  json j{{"model_id", r.model_id},      {"seed", r.seed},
         {"config", config},            {"metrics", metrics},
         {"per_point_H", r.per_point_H}, {"per_pair_jsd", r.per_pair_jsd},
         {"attacks", attacks}};
  return j.dump(2) + "\n";
}

DiagnosisReport report_from_json(std::string_view text) {
  DiagnosisReport r;
  try {
    const json j = json::parse(text);
    r.model_id = j.at("model_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = j.at("config").dump();
    const auto& m = j.at("metrics");
    r.metrics.information_discarding = read_optional(m, "information_discarding");
    r.metrics.information_concentration = read_optional(m, "information_concentration");
    r.metrics.rotation_non_robustness = read_optional(m, "rotation_non_robustness");
    r.metrics.adversarial_robustness = read_optional(m, "adversarial_robustness");
    r.metrics.neighborhood_inconsistency = read_optional(m, "neighborhood_inconsistency");
    r.per_point_H = j.at("per_point_H").get<std::vector<std::vector<double>>>();
    r.per_pair_jsd = j.at("per_pair_jsd").get<std::vector<std::vector<double>>>();
    for (const auto& a : j.at("attacks")) {
      r.attacks.push_back({a.at("sample").get<std::size_t>(), a.at("target").get<std::size_t>(),
                           a.at("success").get<bool>(), number_or_nan(a.at("l2"))});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("diagnosis report: ") + e.what());
  }
  return r;
}

std::string to_csv(const DiagnosisReport& r) {
  std::string out = "model_id,metric,value\n";
  auto row = [&](const char* name, const std::optional<double>& v) {
    if (!v) return;
    out += r.model_id + "," + name + "," + json(*v).dump() + "\n";
  };
  row("information_discarding", r.metrics.information_discarding);
  row("information_concentration", r.metrics.information_concentration);
  row("rotation_non_robustness", r.metrics.rotation_non_robustness);
  row("adversarial_robustness", r.metrics.adversarial_robustness);
  row("neighborhood_inconsistency", r.metrics.neighborhood_inconsistency);
  return out;
}

}  // namespace pcdiag::diag
