#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pcdiag/data.hpp"
#include "pcdiag/diagnostics.hpp"
#include "pcdiag/spec.hpp"
#include "pcdiag/train.hpp"

namespace pcdiag::cli {

struct DiagnosisSection {
  diag::DiagnoseConfig config;
  std::size_t samples = 4;
  std::string split = "test";
};

/// One with/without architecture study for `compare`.
struct Study {
  std::string name;
  nets::ArchToggle toggle;
};

/// A whole run described by one JSON document. The single seed drives the
/// dataset, initialization, training and diagnosis streams.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> manifest;  // use files instead of generating
  data::DatasetConfig dataset;
  std::optional<nets::NetworkSpec> spec;  // default: baseline for the dataset's classes
  std::vector<nets::ArchToggle> arch;
  nets::TrainConfig training;
  DiagnosisSection diagnosis;
  std::optional<Study> study;
};

/// Parses the JSON text; relative paths resolve against `base_dir`. Throws
/// config errors naming the offending field.
ExperimentConfig parse_experiment(std::string_view text, const std::filesystem::path& base_dir,
                                  std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_experiment(const std::filesystem::path& path,
                                 std::optional<std::uint64_t> seed_override = std::nullopt);

/// Base spec (or the baseline) with every `arch` toggle inserted.
nets::NetworkSpec model_spec(const ExperimentConfig& config, std::size_t num_classes);

/// Parses a toggle object: module, blocks and the module's own fields.
nets::ArchToggle toggle_from_json(std::string_view text);

std::string training_json(const nets::TrainConfig& config);

struct Splits {
  std::vector<std::string> classes;
  std::vector<geom::PointCloud> train;
  std::vector<geom::PointCloud> test;
};

/// Loads the manifest when one is configured, otherwise generates in memory.
Splits load_data(const ExperimentConfig& config);

/// `count` clouds spread evenly over `clouds` (all of them when count is 0 or too large).
std::vector<geom::PointCloud> spread_subset(const std::vector<geom::PointCloud>& clouds, std::size_t count);

}  // namespace pcdiag::cli
