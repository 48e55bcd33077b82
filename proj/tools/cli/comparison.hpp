#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pcdiag/diagnostics.hpp"
#include "pcdiag/spec.hpp"

namespace pcdiag::cli {

/// Whether a larger value of the metric means more of the utility under study.
/// Robustness-like metrics compare with - without; non-robustness and
/// inconsistency compare without - with.
bool higher_is_better(diag::Metric metric);
double comparison_delta(diag::Metric metric, double with, double without);

struct PaperRef {
  double with = 0.0;
  double without = 0.0;
  double delta = 0.0;
};

/// Published values for the hypothesis a module was studied under (display only).
std::optional<PaperRef> paper_reference(nets::ArchModule module, diag::Metric metric);

struct ComparisonRow {
  std::string study;
  diag::Metric metric = diag::Metric::discarding;
  double with = 0.0;
  double without = 0.0;
  double delta = 0.0;
  std::optional<PaperRef> paper;
};

struct VariantSummary {
  std::string model_id;
  std::size_t parameters = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct ComparisonTable {
  std::string study;
  nets::ArchModule module = nets::ArchModule::arch1;
  VariantSummary with;
  VariantSummary without;
  std::vector<ComparisonRow> rows;
};

/// One row per metric populated in both reports.
std::vector<ComparisonRow> compare_reports(const std::string& study, nets::ArchModule module,
                                           const diag::DiagnosisReport& with,
                                           const diag::DiagnosisReport& without, bool paper_refs);

std::string table_csv(const ComparisonTable& table, bool paper_refs);
std::string table_json(const ComparisonTable& table);

std::string format_number(double v);

}  // namespace pcdiag::cli
