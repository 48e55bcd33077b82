#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcdiag/context.hpp"
#include "pcdiag/geom.hpp"
#include "pcdiag/network.hpp"

namespace pcdiag::diag {

inline constexpr double kSigmaMin = 1e-4;
inline constexpr double kSigmaMax = 0.08;
/// 0.5 * log(2 * pi * e)
inline constexpr double kHalfLog2PiE = 1.4189385332046727;

/// Per-point isotropic noise scales.
struct SigmaField {
  std::vector<double> sigma;

  std::size_t size() const { return sigma.size(); }
  /// H_i = log sigma_i + 0.5 log(2 pi e)
  std::vector<double> entropies() const;
  double total_entropy() const;
};

struct SigmaOptConfig {
  double target_factor = 2.0;          // T = target_factor * inherent variance
  std::optional<double> target;        // explicit T, bypasses the inherent variance
  double sigma0 = 0.01;                // baseline noise for the inherent variance
  std::size_t variance_samples = 64;
  double lambda_min = 1e-3;            // search bracket, in units of n / (2T)
  double lambda_max = 1e3;
  std::size_t lambda_iterations = 12;  // inner optimizations per calibration
  double tolerance = 0.1;              // relative tolerance on the achieved distance
  double learning_rate = 0.01;
  std::size_t steps = 300;
  std::size_t mc_samples = 8;
  std::size_t eval_samples = 32;       // fixed draws used to measure the achieved distance

  /// Throws config on non-positive values or tolerance >= 1.
  void validate() const;
};

struct SigmaResult {
  SigmaField field;
  double lambda = 0.0;
  double target = 0.0;      // T
  double distance = 0.0;    // achieved E|h(X') - f|^2 on the evaluation draws
  std::size_t evaluations = 0;
  bool converged = false;   // distance within tolerance of T (or the cap/bound made it moot)
};

/// Fixed-plan probe h(theta (X + delta)); `rotation` may be null.
struct Probe {
  const nets::Network* net = nullptr;
  const geom::PointCloud* cloud = nullptr;
  const geom::ContextPlan* plan = nullptr;
  const geom::Rotation* rotation = nullptr;
};

/// Mean |h(X + sigma0 u) - h(X)|^2 over `samples` standard-normal draws.
double inherent_variance(const Probe& probe, double sigma0, std::size_t samples, std::uint64_t seed);

/// Maximizes sum log sigma_i - lambda E|h(X + sigma u) - f|^2 over rho = log sigma,
/// calibrating lambda so the achieved distance meets T. Throws calibration
/// when no lambda in range can meet T.
SigmaResult optimize_sigma(const Probe& probe, const SigmaOptConfig& config, std::uint64_t seed);

std::vector<double> information_discarding(const SigmaField& field);

/// mean background H - mean foreground H; throws mask when a side is empty.
double information_concentration(std::span<const double> entropies, std::span<const bool> fg_mask);
double information_concentration(std::span<const double> entropies, const std::vector<bool>& fg_mask);

/// KL(a || b) between isotropic per-point Gaussians (three axes per point).
double gaussian_kl(const SigmaField& a, const SigmaField& b);
/// Variational Jensen-Shannon divergence of two fields, in [0, log 2].
double jsd_variational(const SigmaField& a, const SigmaField& b);

struct RotationConfig {
  std::size_t rotations = 4;
  geom::RotationMode mode = geom::RotationMode::so3;
  SigmaOptConfig sigma;
};

struct RotationResult {
  double value = 0.0;                 // mean over unordered pairs
  std::vector<double> pair_jsd;       // (0,1), (0,2), ..., (R-2,R-1)
  std::vector<SigmaField> fields;
  std::vector<geom::Rotation> rotations;
};

/// Optimizes a sigma field per random rotation (common noise draws across
/// rotations) and averages the pairwise variational JSD.
RotationResult rotation_non_robustness(const nets::Network& net, const geom::PointCloud& cloud,
                                       const RotationConfig& config, std::uint64_t seed);
/// Same with caller-supplied rotations.
RotationResult rotation_non_robustness(const nets::Network& net, const geom::PointCloud& cloud,
                                       std::span<const geom::Rotation> rotations,
                                       const SigmaOptConfig& config, std::uint64_t seed);

struct AttackConfig {
  double c_min = 1e-3;
  double c_max = 1e3;
  double c_initial = 1.0;
  std::size_t search_steps = 9;
  double learning_rate = 0.01;
  std::size_t steps = 200;
};

struct AttackResult {
  std::size_t target = 0;
  bool success = false;
  std::vector<geom::Vec3> perturbation;  // n x 3
  double l2 = 0.0;
  std::size_t iterations = 0;
};

/// Minimum-norm targeted perturbation by the penalty method with a search
/// over c. Throws contract when `target` is already the prediction.
AttackResult targeted_attack(const nets::Network& net, const geom::PointCloud& cloud, std::size_t target,
                             const AttackConfig& config);

struct RobustnessResult {
  double mean_l2 = 0.0;  // over successful targets
  double success_fraction = 0.0;
  std::size_t prediction = 0;
  std::vector<AttackResult> attacks;  // one per incorrect class, ascending target
};

/// Attacks every class other than the current prediction. Throws reliability
/// when fewer than half of the attacks succeed, unless `allow_unreliable`.
RobustnessResult adversarial_robustness(const nets::Network& net, const geom::PointCloud& cloud,
                                        const AttackConfig& config, bool allow_unreliable = false);

/// Mean over points of the H range inside each point's K nearest neighbors
/// (self excluded). Throws count when n <= K.
double neighborhood_inconsistency(std::span<const double> entropies, const geom::PointCloud& cloud,
                                  std::size_t k = 16);

enum class Metric { discarding, concentration, rotation, adversarial, neighborhood };

std::string_view to_string(Metric metric);
/// Accepts the metric names plus "all"; throws config otherwise.
std::vector<Metric> parse_metrics(std::string_view list);

struct DiagnoseConfig {
  std::vector<Metric> metrics;
  SigmaOptConfig sigma;
  std::size_t rotations = 4;
  geom::RotationMode rotation_mode = geom::RotationMode::so3;
  AttackConfig attack;
  std::size_t neighbors = 16;
};

struct AttackSummary {
  std::size_t sample = 0;
  std::size_t target = 0;
  bool success = false;
  double l2 = 0.0;
};

struct MetricValues {
  std::optional<double> information_discarding;
  std::optional<double> information_concentration;
  std::optional<double> rotation_non_robustness;
  std::optional<double> adversarial_robustness;
  std::optional<double> neighborhood_inconsistency;
};

struct DiagnosisReport {
  std::string model_id;
  std::uint64_t seed = 0;
  std::string config;  // JSON echo
  MetricValues metrics;
  std::vector<std::vector<double>> per_point_H;   // one vector per sample
  std::vector<std::vector<double>> per_pair_jsd;  // one vector per sample
  std::vector<AttackSummary> attacks;
};

/// Runs the selected metrics on every sample (in parallel over `threads`
/// workers, each sample on its own derived random streams) and averages in
/// sample order. Errors carry the sample index.
DiagnosisReport diagnose(const nets::Network& net, std::span<const geom::PointCloud> samples,
                         const DiagnoseConfig& config, std::uint64_t seed, std::string model_id,
                         std::size_t threads = 1);

}  // namespace pcdiag::diag
