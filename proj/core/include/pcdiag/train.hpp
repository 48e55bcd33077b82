#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pcdiag/geom.hpp"
#include "pcdiag/network.hpp"
#include "pcdiag/optim.hpp"

namespace pcdiag::nets {

enum class RotationAugment { none, z_axis, so3 };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double learning_rate = 1e-3;
  ag::OptimizerKind optimizer = ag::OptimizerKind::adam;
  RotationAugment rotation = RotationAugment::none;
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean cross-entropy over the epoch
  double train_acc = 0.0;
  double test_acc = 0.0;  // NaN without a test set
};

/// Fraction of labeled clouds classified correctly.
double accuracy(const Network& net, std::span<const geom::PointCloud> clouds);

/// Mini-batch training by per-sample gradient accumulation. `on_epoch` sees
/// every finished epoch before the next starts. Throws divergence on a
/// non-finite loss, label on missing/out-of-range labels.
std::vector<EpochLog> train(Classifier& model, std::span<const geom::PointCloud> train_set,
                            std::span<const geom::PointCloud> test_set, const TrainConfig& config,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace pcdiag::nets
