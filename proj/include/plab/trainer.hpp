#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "plab/data.hpp"
#include "plab/metrics.hpp"
#include "plab/model.hpp"
#include "plab/optimizer.hpp"
#include "plab/peft.hpp"

namespace plab {

enum class LossKind { kCrossEntropy, kMse };

std::string_view to_string(LossKind kind);
LossKind parse_loss(std::string_view text);

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 0.02;
    double dropout = 0.1;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::kAdamW;
    LossKind loss = LossKind::kCrossEntropy;
    bool decay_toward_one = true;
    bool clamp = false;
    double clamp_min = 0.0;
    double clamp_max = 2.0;
    // Accuracy (or Pearson for regression) that counts as converged.
    double threshold = 0.9;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    OptimizerConfig optimizer_config() const;

    bool operator==(const TrainConfig&) const = default;
};

struct Evaluation {
    double loss = 0.0;
    MetricReport metrics;
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;  // optimizer steps taken so far
    double train_loss = 0.0;  // mean mini-batch loss over the epoch
    Evaluation train;
    std::optional<Evaluation> validation;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::optional<std::size_t> steps_to_threshold;
    std::size_t trainable_count = 0;
};

/// Runs optimizer steps on the trainable parameters of an adapter set.
/// The base model is never written.
template <std::floating_point Real>
class Trainer {
   public:
    Trainer(const FrozenModel<Real>& model, AdapterSet<Real>& adapters, const TrainConfig& config);

    /// One forward/backward/update on the examples at `indices`; returns the loss.
    /// Throws DivergedError when the loss is not finite.
    double step(const Dataset& data, std::span<const std::size_t> indices);

    /// Loss and metrics in eval mode (no dropout, no update).
    Evaluation evaluate(const Dataset& data) const;

    std::size_t steps() const { return optimizer_.steps(); }

   private:
    Tensor<Real> loss(const Tensor<Real>& output, const Dataset& data,
                      std::span<const std::size_t> indices) const;

    const FrozenModel<Real>& model_;
    AdapterSet<Real>& adapters_;
    TrainConfig config_;
    Optimizer<Real> optimizer_;
    std::vector<Parameter<Real>> params_;
    std::mt19937_64 dropout_rng_;
};

/// Fixed-epoch training with seeded per-epoch shuffling.
template <std::floating_point Real>
TrainResult train(const FrozenModel<Real>& model, AdapterSet<Real>& adapters, const Dataset& train_set,
                  const Dataset* validation, const TrainConfig& config);

}  // namespace plab
