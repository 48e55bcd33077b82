#include "cli/commands.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "CLI11.hpp"
#include "cli/comparison.hpp"
#include "cli/experiment.hpp"
#include "json.hpp"
#include "pcdiag/checkpoint.hpp"
#include "pcdiag/data.hpp"
#include "pcdiag/diagnostics.hpp"
#include "pcdiag/report.hpp"
#include "pcdiag/train.hpp"

namespace pcdiag::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io:
    case ErrorKind::format:
    case ErrorKind::corruption:
    case ErrorKind::parse: return 3;
    case ErrorKind::divergence: return 4;
    case ErrorKind::reliability: return 5;
    default: return 2;
  }
}

std::size_t threads_from_env() {
  const char* raw = std::getenv("PCDIAG_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  const std::string_view text(raw);
  std::size_t n = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), n);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || n == 0) {
    fail(ErrorKind::config, "PCDIAG_THREADS must be a positive integer, got '" + std::string(text) + "'");
  }
  return n;
}

namespace {

void ensure_parent(const fs::path& path) {
  const auto parent = path.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + parent.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorKind::io, "write failed for " + path.string());
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  return path.parent_path() / (path.stem().string() + suffix);
}

/// Appends one CSV row per finished epoch and flushes, so a diverging run
/// leaves every completed epoch on disk.
class EpochLogWriter {
 public:
  explicit EpochLogWriter(const fs::path& path) : path_(path) {
    ensure_parent(path);
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) fail(ErrorKind::io, "cannot write " + path.string());
    file_ << "epoch,loss,train_acc,test_acc\n" << std::flush;
  }
  void operator()(const nets::EpochLog& e) {
    file_ << e.epoch << ',' << format_number(e.loss) << ',' << format_number(e.train_acc) << ','
          << format_number(e.test_acc) << '\n'
          << std::flush;
    if (!file_) fail(ErrorKind::io, "write failed for " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream file_;
};

struct Trained {
  nets::Classifier model;
  nets::EpochLog last;
};

Trained train_model(const nets::NetworkSpec& spec, const ExperimentConfig& config, const Splits& data,
                    const fs::path& checkpoint, const fs::path& log_path) {
  nets::Classifier model(spec, config.seed);
  EpochLogWriter log(log_path);
  const auto logs = nets::train(model, data.train, data.test, config.training,
                                [&](const nets::EpochLog& e) { log(e); });
  nets::save_checkpoint(model, checkpoint, {config.seed, training_json(config.training)});
  nets::EpochLog last;
  if (!logs.empty()) last = logs.back();
  return {std::move(model), last};
}

std::vector<geom::PointCloud> load_samples(const fs::path& manifest_path, const std::string& split,
                                           std::size_t samples, std::vector<std::string>* classes = nullptr) {
  if (split != "train" && split != "test") fail(ErrorKind::config, "split must be 'train' or 'test'");
  const auto manifest = data::load_manifest(manifest_path);
  if (classes) *classes = manifest.classes;
  auto clouds = data::load_split(manifest, manifest_path, split);
  if (clouds.empty()) fail(ErrorKind::value, "split '" + split + "' of " + manifest_path.string() + " is empty");
  return spread_subset(clouds, samples);
}

void require_masks(const std::vector<geom::PointCloud>& clouds, const std::vector<diag::Metric>& metrics,
                   const std::string& where) {
  bool wants = false;
  for (auto m : metrics) wants = wants || m == diag::Metric::concentration;
  if (!wants) return;
  for (const auto& c : clouds) {
    if (!c.fg_mask) {
      fail(ErrorKind::mask, "information concentration needs foreground masks, but " + where +
                                " has clouds without one (generate it with dataset.background = true)");
    }
  }
}

void check_classes(const nets::Classifier& model, std::size_t classes) {
  if (model.num_classes() != classes) {
    fail(ErrorKind::contract, "model predicts " + std::to_string(model.num_classes()) + " classes but the data has " +
                                  std::to_string(classes));
  }
}

std::string model_id_of(const fs::path& checkpoint) { return checkpoint.stem().string(); }

void write_report(const diag::DiagnosisReport& report, const fs::path& json_path) {
  write_text(json_path, diag::to_json(report));
  write_text(sibling(json_path, ".csv"), diag::to_csv(report));
}

json attack_config_json(const diag::AttackConfig& a) {
  return json{{"c_initial", a.c_initial}, {"c_max", a.c_max},   {"c_min", a.c_min},
              {"learning_rate", a.learning_rate}, {"search_steps", a.search_steps}, {"steps", a.steps}};
}

std::optional<ExperimentConfig> optional_config(const std::optional<fs::path>& path,
                                                std::optional<std::uint64_t> seed) {
  if (!path) return std::nullopt;
  return load_experiment(*path, seed);
}

}  // namespace

void cmd_gen(const GenOptions& o, std::ostream& out) {
  const auto config = load_experiment(o.config, o.seed);
  if (config.manifest) fail(ErrorKind::config, "gen needs dataset generation fields, not a manifest");
  const auto manifest = data::build_dataset(config.dataset, o.out);
  out << "wrote " << manifest.train.size() << " train and " << manifest.test.size() << " test clouds to "
      << (o.out / "manifest.json").string() << "\n";
}

void cmd_train(const TrainOptions& o, std::ostream& out) {
  const auto config = load_experiment(o.config, o.seed);
  const auto data = load_data(config);
  const auto spec = model_spec(config, data.classes.size());
  const fs::path log = o.log ? *o.log : sibling(o.out, ".log.csv");
  const auto trained = train_model(spec, config, data, o.out, log);
  out << "trained " << trained.model.parameters().scalar_count() << " parameters for " << trained.last.epoch
      << " epochs: loss " << format_number(trained.last.loss) << ", train accuracy "
      << format_number(trained.last.train_acc) << ", test accuracy " << format_number(trained.last.test_acc) << "\n";
}

void cmd_diagnose(const DiagnoseOptions& o, std::ostream& out) {
  auto loaded = nets::load_checkpoint(o.checkpoint);
  const auto config = optional_config(o.config, o.seed);
  DiagnosisSection section = config ? config->diagnosis : DiagnosisSection{};
  section.config.metrics = diag::parse_metrics(o.metrics);
  if (o.samples) section.samples = *o.samples;
  if (o.split) section.split = *o.split;
  const std::uint64_t seed = o.seed ? *o.seed : config ? config->seed : loaded.meta.seed;

  std::vector<std::string> classes;
  const auto clouds = load_samples(o.data, section.split, section.samples, &classes);
  check_classes(loaded.model, classes.size());
  require_masks(clouds, section.config.metrics, o.data.string());
  const auto report =
      diag::diagnose(loaded.model, clouds, section.config, seed, model_id_of(o.checkpoint), threads_from_env());
  write_report(report, o.out);
  out << diag::to_csv(report);
}

void cmd_compare(const CompareOptions& o, std::ostream& out) {
  const auto config = load_experiment(o.config, o.seed);
  if (!config.study) fail(ErrorKind::config, "compare needs a 'study' section");
  if (config.diagnosis.config.metrics.empty()) fail(ErrorKind::config, "compare needs diagnosis.metrics");
  const auto& study = *config.study;
  const auto data = load_data(config);
  const auto without_spec = model_spec(config, data.classes.size());
  const auto with_spec = nets::insert_architecture(without_spec, study.toggle);

  const auto& pool = config.diagnosis.split == "train" ? data.train : data.test;
  const auto samples = spread_subset(pool, config.diagnosis.samples);
  require_masks(samples, config.diagnosis.config.metrics, "the configured dataset");
  const std::size_t threads = threads_from_env();

  ComparisonTable table;
  table.study = study.name;
  table.module = study.toggle.module;
  std::vector<diag::DiagnosisReport> reports;
  for (const bool with : {true, false}) {
    const std::string variant = with ? "with" : "without";
    try {
      const auto trained = train_model(with ? with_spec : without_spec, config, data, o.out / (variant + ".pcdg"),
                                       o.out / (variant + ".log.csv"));
      auto& summary = with ? table.with : table.without;
      summary = {study.name + "/" + variant, trained.model.parameters().scalar_count(), trained.last.train_acc,
                 trained.last.test_acc};
      reports.push_back(diag::diagnose(trained.model, samples, config.diagnosis.config, config.seed, summary.model_id,
                                       threads));
      write_report(reports.back(), o.out / (variant + ".report.json"));
    } catch (const Error& e) {
      throw Error(e.kind(), "variant '" + variant + "': " + e.detail());
    }
  }
  table.rows = compare_reports(study.name, study.toggle.module, reports[0], reports[1], o.paper_refs);
  const std::string csv = table_csv(table, o.paper_refs);
  write_text(o.out / "comparison.csv", csv);
  write_text(o.out / "comparison.json", table_json(table));
  out << csv;
}

void cmd_attack(const AttackOptions& o, std::ostream& out) {
  auto loaded = nets::load_checkpoint(o.checkpoint);
  const auto config = optional_config(o.config, std::nullopt);
  DiagnosisSection section = config ? config->diagnosis : DiagnosisSection{};
  if (o.samples) section.samples = *o.samples;
  if (o.split) section.split = *o.split;
  const auto& attack = section.config.attack;

  std::vector<std::string> classes;
  const auto clouds = load_samples(o.data, section.split, section.samples, &classes);
  check_classes(loaded.model, classes.size());
  const auto& net = loaded.model;

  std::optional<std::size_t> target;
  if (o.target != "all") {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (classes[c] == o.target) target = c;
    }
    if (!target) {
      std::size_t idx = 0;
      const auto res = std::from_chars(o.target.data(), o.target.data() + o.target.size(), idx);
      if (res.ec != std::errc{} || res.ptr != o.target.data() + o.target.size() || idx >= classes.size()) {
        fail(ErrorKind::config, "attack target '" + o.target + "' is neither 'all', a class name nor a class index");
      }
      target = idx;
    }
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      if (clouds[i].label && *clouds[i].label == *target) {
        fail(ErrorKind::contract, "attack target " + classes[*target] + " is the true class of sample " +
                                      std::to_string(i));
      }
    }
  }

  json rows = json::array();
  std::string csv = "sample,label,prediction,target,success,l2,iterations\n";
  std::size_t attempts = 0, wins = 0;
  double total = 0.0;
  auto add_row = [&](std::size_t i, const geom::PointCloud& c, std::size_t prediction, const diag::AttackResult& r) {
    const std::string label = c.label ? std::to_string(*c.label) : "";
    rows.push_back({{"sample", i},
                    {"label", c.label ? json(*c.label) : json(nullptr)},
                    {"prediction", prediction},
                    {"target", r.target},
                    {"success", r.success},
                    {"l2", r.l2},
                    {"iterations", r.iterations}});
    csv += std::to_string(i) + "," + label + "," + std::to_string(prediction) + "," + std::to_string(r.target) + "," +
           (r.success ? "1" : "0") + "," + format_number(r.l2) + "," + std::to_string(r.iterations) + "\n";
    ++attempts;
    if (r.success) {
      ++wins;
      total += r.l2;
    }
  };
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    const auto prediction = nets::classify(net, clouds[i]);
    for (std::size_t t = 0; t < net.num_classes(); ++t) {
      if (target ? t != *target : t == prediction) continue;
      if (t == prediction) {
        // Already misclassified as the target: the empty perturbation succeeds.
        diag::AttackResult r;
        r.target = t;
        r.success = true;
        r.perturbation.assign(clouds[i].size(), geom::Vec3{});
        add_row(i, clouds[i], prediction, r);
      } else {
        add_row(i, clouds[i], prediction, diag::targeted_attack(net, clouds[i], t, attack));
      }
    }
  }
  const double fraction = attempts ? static_cast<double>(wins) / static_cast<double>(attempts) : 0.0;
  const double mean_l2 = wins ? total / static_cast<double>(wins) : std::numeric_limits<double>::quiet_NaN();
  json report{{"model_id", model_id_of(o.checkpoint)},
              {"target", o.target},
              {"config", attack_config_json(attack)},
              {"success_fraction", fraction},
              {"mean_l2", std::isfinite(mean_l2) ? json(mean_l2) : json(nullptr)},
              {"rows", std::move(rows)}};
  write_text(o.out, report.dump(2) + "\n");
  write_text(sibling(o.out, ".csv"), csv);
  out << "attacks: " << wins << " of " << attempts << " succeeded, mean L2 " << format_number(mean_l2) << "\n";
  if (attempts > 0 && fraction < 0.5) {
    fail(ErrorKind::reliability, "only " + std::to_string(wins) + " of " + std::to_string(attempts) +
                                     " attacks succeeded; the robustness estimate is not reliable");
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point-cloud network diagnostics", "pcdiag"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pcdiag 0.1.0");

  GenOptions gen;
  TrainOptions train;
  DiagnoseOptions diagnose;
  CompareOptions compare;
  AttackOptions attack;
  std::uint64_t seed = 0;
  std::string log, cfg, split;
  std::size_t samples = 0;

  auto* g = app.add_subcommand("gen", "Generate the synthetic dataset and its manifest");
  g->add_option("--config", gen.config, "Experiment config (JSON)")->required();
  g->add_option("--out", gen.out, "Output directory")->required();
  auto* g_seed = g->add_option("--seed", seed, "Override the config seed");

  auto* t = app.add_subcommand("train", "Train a model and write a checkpoint plus an epoch log");
  t->add_option("--config", train.config, "Experiment config (JSON)")->required();
  t->add_option("--out", train.out, "Checkpoint path")->required();
  auto* t_log = t->add_option("--log", log, "Epoch log CSV (default: <checkpoint stem>.log.csv)");
  auto* t_seed = t->add_option("--seed", seed, "Override the config seed");

  auto* d = app.add_subcommand("diagnose", "Measure metrics on a checkpoint");
  d->add_option("--ckpt", diagnose.checkpoint, "Checkpoint")->required();
  d->add_option("--data", diagnose.data, "Dataset manifest")->required();
  d->add_option("--metrics", diagnose.metrics, "Comma list of metrics or 'all'")->required();
  d->add_option("--out", diagnose.out, "Report JSON path; the CSV is written alongside")->required();
  auto* d_cfg = d->add_option("--config", cfg, "Experiment config supplying diagnosis settings");
  auto* d_samples = d->add_option("--samples", samples, "Clouds to diagnose (0 = all)");
  auto* d_split = d->add_option("--split", split, "train or test");
  auto* d_seed = d->add_option("--seed", seed, "Override the seed");

  auto* c = app.add_subcommand("compare", "Train with/without an architecture and compare metrics");
  c->add_option("--config", compare.config, "Experiment config with a study section")->required();
  c->add_option("--out", compare.out, "Output directory")->required();
  c->add_flag("--paper-refs", compare.paper_refs, "Add published reference values as context columns");
  auto* c_seed = c->add_option("--seed", seed, "Override the config seed");

  auto* a = app.add_subcommand("attack", "Targeted minimum-norm attacks on a checkpoint");
  a->add_option("--ckpt", attack.checkpoint, "Checkpoint")->required();
  a->add_option("--data", attack.data, "Dataset manifest")->required();
  a->add_option("--target", attack.target, "Class name, class index or 'all'")->required();
  a->add_option("--out", attack.out, "Report JSON path; the CSV is written alongside")->required();
  auto* a_cfg = a->add_option("--config", cfg, "Experiment config supplying attack settings");
  auto* a_samples = a->add_option("--samples", samples, "Clouds to attack (0 = all)");
  auto* a_split = a->add_option("--split", split, "train or test");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << "pcdiag 0.1.0\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "pcdiag: " << e.what() << "\n";
    return 2;
  }

  auto opt_seed = [&](CLI::Option* o) { return o->count() ? std::optional<std::uint64_t>(seed) : std::nullopt; };
  try {
    if (g->parsed()) {
      gen.seed = opt_seed(g_seed);
      cmd_gen(gen, out);
    } else if (t->parsed()) {
      train.seed = opt_seed(t_seed);
      if (t_log->count()) train.log = log;
      cmd_train(train, out);
    } else if (d->parsed()) {
      diagnose.seed = opt_seed(d_seed);
      if (d_cfg->count()) diagnose.config = cfg;
      if (d_samples->count()) diagnose.samples = samples;
      if (d_split->count()) diagnose.split = split;
      cmd_diagnose(diagnose, out);
    } else if (c->parsed()) {
      compare.seed = opt_seed(c_seed);
      cmd_compare(compare, out);
    } else if (a->parsed()) {
      if (a_cfg->count()) attack.config = cfg;
      if (a_samples->count()) attack.samples = samples;
      if (a_split->count()) attack.split = split;
      cmd_attack(attack, out);
    }
  } catch (const Error& e) {
    err << "pcdiag: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "pcdiag: io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "pcdiag: internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace pcdiag::cli
