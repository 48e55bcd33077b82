#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pcdiag/error.hpp"

namespace pcdiag::cli {

/// 0 ok, 2 config/contract, 3 I/O and file formats, 4 training divergence,
/// 5 attack reliability.
int exit_code(ErrorKind kind);

/// Worker count from PCDIAG_THREADS (1 when unset); throws config when malformed.
std::size_t threads_from_env();

struct GenOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

struct TrainOptions {
  std::filesystem::path config;
  std::filesystem::path out;  // checkpoint
  std::optional<std::filesystem::path> log;
  std::optional<std::uint64_t> seed;
};

struct DiagnoseOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;  // manifest
  std::string metrics;
  std::filesystem::path out;  // report.json; the CSV goes next to it
  std::optional<std::filesystem::path> config;
  std::optional<std::size_t> samples;
  std::optional<std::string> split;
  std::optional<std::uint64_t> seed;
};

struct CompareOptions {
  std::filesystem::path config;
  std::filesystem::path out;  // directory
  bool paper_refs = false;
  std::optional<std::uint64_t> seed;
};

struct AttackOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::string target;  // class name, class index or "all"
  std::filesystem::path out;
  std::optional<std::filesystem::path> config;
  std::optional<std::size_t> samples;
  std::optional<std::string> split;
};

// Each command throws pcdiag::Error on failure after writing whatever partial
// output the contract asks for.
void cmd_gen(const GenOptions& options, std::ostream& out);
void cmd_train(const TrainOptions& options, std::ostream& out);
void cmd_diagnose(const DiagnoseOptions& options, std::ostream& out);
void cmd_compare(const CompareOptions& options, std::ostream& out);
void cmd_attack(const AttackOptions& options, std::ostream& out);

/// Full command line (without the program name); returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pcdiag::cli
