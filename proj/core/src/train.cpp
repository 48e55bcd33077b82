#include "pcdiag/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pcdiag/error.hpp"
#include "pcdiag/rng.hpp"

namespace pcdiag::nets {

namespace {

void check_labels(std::span<const geom::PointCloud> clouds, std::size_t classes, const char* split) {
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    if (!clouds[i].label || *clouds[i].label >= classes) {
      fail(ErrorKind::label, std::string(split) + " sample " + std::to_string(i) +
                                 " has no label below " + std::to_string(classes));
    }
  }
}

}  // namespace

double accuracy(const Network& net, std::span<const geom::PointCloud> clouds) {
  if (clouds.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hits = 0;
  for (const auto& c : clouds) {
    if (c.label && classify(net, c) == *c.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(clouds.size());
}

std::vector<EpochLog> train(Classifier& model, std::span<const geom::PointCloud> train_set,
                            std::span<const geom::PointCloud> test_set, const TrainConfig& config,
                            const std::function<void(const EpochLog&)>& on_epoch) {
  if (train_set.empty()) fail(ErrorKind::value, "training set is empty");
  if (config.batch == 0) fail(ErrorKind::config, "batch size must be positive");
  check_labels(train_set, model.num_classes(), "train");
  check_labels(test_set, model.num_classes(), "test");

  ag::OptimizerState opt;
  opt.kind = config.optimizer;
  opt.learning_rate = config.learning_rate;
  auto& params = model.parameters();
  params.zero_grad();

  std::vector<EpochLog> log;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = make_rng(config.seed, "train-shuffle", epoch);
    std::shuffle(order.begin(), order.end(), shuffle);
    Rng augment = make_rng(config.seed, "train-rotate", epoch);

    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t s = start; s < stop; ++s) {
        const auto& sample = train_set[order[s]];
        const geom::PointCloud* cloud = &sample;
        geom::PointCloud rotated;
        if (config.rotation != RotationAugment::none) {
          const auto mode = config.rotation == RotationAugment::z_axis ? geom::RotationMode::z_axis
                                                                       : geom::RotationMode::so3;
          rotated = geom::apply_rotation(sample, geom::random_rotation(augment, mode));
          cloud = &rotated;
        }
        const auto out = model.forward(*cloud);
        const ag::Tensor loss = ag::softmax_cross_entropy(out.logits, *sample.label);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          fail(ErrorKind::divergence, "non-finite training loss in epoch " + std::to_string(epoch));
        }
        loss_sum += value;
        if (argmax(out.logits.values()) == *sample.label) ++hits;
        ag::backward(loss * scale);
      }
      // Parameters the batch never reached (possible with dead ReLUs) get a zero gradient.
      for (auto& [_, t] : params) {
        if (!t.has_grad()) t.node().grad_buffer();
      }
      ag::optimizer_step(params, opt);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = loss_sum / static_cast<double>(order.size());
    entry.train_acc = static_cast<double>(hits) / static_cast<double>(order.size());
    entry.test_acc = accuracy(model, test_set);
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

}  // namespace pcdiag::nets
