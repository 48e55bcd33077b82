#pragma once

#include <string>
#include <string_view>

#include "pcdiag/diagnostics.hpp"

namespace pcdiag::diag {

/// Canonical JSON echo of a diagnosis configuration (sorted keys).
std::string config_json(const DiagnoseConfig& config);
/// Reads the fields present in `json` over the defaults in `base`; throws config
/// on unknown keys or bad values.
DiagnoseConfig config_from_json(std::string_view json, DiagnoseConfig base = {});

/// Deterministic JSON document with sorted keys; absent metrics are null.
std::string to_json(const DiagnosisReport& report);
DiagnosisReport report_from_json(std::string_view json);

/// One "model_id,metric,value" row per populated metric, with header.
std::string to_csv(const DiagnosisReport& report);

}  // namespace pcdiag::diag
