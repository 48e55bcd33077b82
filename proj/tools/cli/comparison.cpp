#include "cli/comparison.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "json.hpp"

namespace pcdiag::cli {

using diag::Metric;
using nets::ArchModule;
using nlohmann::json;

bool higher_is_better(Metric metric) {
  return metric != Metric::rotation && metric != Metric::neighborhood;
}

double comparison_delta(Metric metric, double with, double without) {
  return higher_is_better(metric) ? with - without : without - with;
}

std::optional<PaperRef> paper_reference(ArchModule module, Metric metric) {
  struct Entry {
    ArchModule module;
    Metric metric;
    PaperRef ref;
  };
  static constexpr std::array<Entry, 5> kRefs{{
      {ArchModule::arch1, Metric::adversarial, {2.878, 2.629, 0.249}},
      {ArchModule::arch2, Metric::rotation, {4.875, 5.066, 0.191}},
      {ArchModule::arch3, Metric::adversarial, {2.526, 2.521, 0.005}},
      {ArchModule::arch3, Metric::neighborhood, {3.184, 3.332, 0.148}},
      {ArchModule::arch4, Metric::rotation, {3.931, 7.274, 3.343}},
  }};
  for (const auto& e : kRefs) {
    if (e.module == module && e.metric == metric) return e.ref;
  }
  return std::nullopt;
}

namespace {

std::optional<double> value_of(const diag::MetricValues& v, Metric m) {
  switch (m) {
    case Metric::discarding: return v.information_discarding;
    case Metric::concentration: return v.information_concentration;
    case Metric::rotation: return v.rotation_non_robustness;
    case Metric::adversarial: return v.adversarial_robustness;
    case Metric::neighborhood: return v.neighborhood_inconsistency;
  }
  return std::nullopt;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::vector<ComparisonRow> compare_reports(const std::string& study, ArchModule module,
                                           const diag::DiagnosisReport& with,
                                           const diag::DiagnosisReport& without, bool paper_refs) {
  std::vector<ComparisonRow> rows;
  for (Metric m : {Metric::discarding, Metric::concentration, Metric::rotation, Metric::adversarial,
                   Metric::neighborhood}) {
    const auto a = value_of(with.metrics, m);
    const auto b = value_of(without.metrics, m);
    if (!a || !b) continue;
    ComparisonRow r{study, m, *a, *b, comparison_delta(m, *a, *b), std::nullopt};
    if (paper_refs) r.paper = paper_reference(module, m);
    rows.push_back(r);
  }
  return rows;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string table_csv(const ComparisonTable& table, bool paper_refs) {
  std::string out = "study,metric,with,without,delta";
  if (paper_refs) out += ",paper_with,paper_without,paper_delta";
  out += "\n";
  for (const auto& r : table.rows) {
    out += r.study + "," + std::string(diag::to_string(r.metric)) + "," + format_number(r.with) + "," +
           format_number(r.without) + "," + format_number(r.delta);
    if (paper_refs) {
      if (r.paper) {
        out += "," + format_number(r.paper->with) + "," + format_number(r.paper->without) + "," +
               format_number(r.paper->delta);
      } else {
        out += ",,,";
      }
    }
    out += "\n";
  }
  return out;
}

std::string table_json(const ComparisonTable& table) {
  auto variant = [](const VariantSummary& v) {
    return json{{"model_id", v.model_id},
                {"parameters", v.parameters},
                {"train_acc", number_or_null(v.train_acc)},
                {"test_acc", number_or_null(v.test_acc)}};
  };
  json rows = json::array();
  for (const auto& r : table.rows) {
    json row{{"study", r.study},
             {"metric", std::string(diag::to_string(r.metric))},
             {"convention", higher_is_better(r.metric) ? "with-without" : "without-with"},
             {"with", number_or_null(r.with)},
             {"without", number_or_null(r.without)},
             {"delta", number_or_null(r.delta)}};
    if (r.paper) row["paper"] = json{{"with", r.paper->with}, {"without", r.paper->without}, {"delta", r.paper->delta}};
    rows.push_back(std::move(row));
  }
  json j{{"study", table.study},
         {"module", std::string(nets::to_string(table.module))},
         {"variants", {{"with", variant(table.with)}, {"without", variant(table.without)}}},
         {"rows", std::move(rows)}};
  return j.dump(2) + "\n";
}

}  // namespace pcdiag::cli
