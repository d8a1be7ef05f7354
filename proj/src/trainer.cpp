#include "plab/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "plab/error.hpp"
#include "plab/losses.hpp"

namespace plab {

std::string_view to_string(LossKind kind) {
    return kind == LossKind::kCrossEntropy ? "cross_entropy" : "mse";
}

LossKind parse_loss(std::string_view text) {
    std::string t(text);
    for (auto& ch : t) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (t == "cross_entropy" || t == "ce") return LossKind::kCrossEntropy;
    if (t == "mse") return LossKind::kMse;
    throw ConfigError("unknown loss '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("train.learning_rate: must be a finite value >= 0");
    }
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay: must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train.dropout: must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    if (clamp && !(clamp_min <= clamp_max)) {
        throw ConfigError("train.clamp_min: must not exceed train.clamp_max");
    }
}

OptimizerConfig TrainConfig::optimizer_config() const {
    OptimizerConfig c;
    c.kind = optimizer;
    c.learning_rate = learning_rate;
    c.weight_decay = weight_decay;
    c.use_decay_target = decay_toward_one;
    return c;
}

template <std::floating_point Real>
Trainer<Real>::Trainer(const FrozenModel<Real>& model, AdapterSet<Real>& adapters,
                       const TrainConfig& config)
    : model_(model),
      adapters_(adapters),
      config_(config),
      optimizer_(config.optimizer_config()),
      params_(adapters.trainable_parameters()),
      dropout_rng_(config.seed ^ 0x5DEECE66DULL) {
    config_.validate();
    adapters_.validate_against(model_);
}

template <std::floating_point Real>
Tensor<Real> Trainer<Real>::loss(const Tensor<Real>& output, const Dataset& data,
                                 std::span<const std::size_t> indices) const {
    if (config_.loss == LossKind::kCrossEntropy) {
        if (data.task != Task::kClassification) {
            throw ConfigError("train.loss: cross_entropy needs a classification task");
        }
        std::vector<std::size_t> labels;
        labels.reserve(indices.size());
        for (auto i : indices) labels.push_back(data.labels.at(i));
        return cross_entropy(output, std::span<const std::size_t>(labels));
    }
    if (data.task != Task::kRegression) throw ConfigError("train.loss: mse needs a regression task");
    if (output.cols() != 1) {
        throw ConfigError("train.loss: mse needs a single model output, got " +
                          std::to_string(output.cols()));
    }
    std::vector<Real> targets;
    targets.reserve(indices.size());
    for (auto i : indices) targets.push_back(static_cast<Real>(data.targets.at(i)));
    return mse(output, Tensor<Real>::vector(std::move(targets)));
}

template <std::floating_point Real>
double Trainer<Real>::step(const Dataset& data, std::span<const std::size_t> indices) {
    for (auto& p : params_) p.tensor.clear_grad();
    ForwardOptions options{true, config_.dropout, &dropout_rng_};
    const auto out = model_.forward(data.inputs<Real>(indices), adapters_, options);
    const auto l = loss(out, data, indices);
    const double value = static_cast<double>(l.item());
    if (!std::isfinite(value)) throw DivergedError(optimizer_.steps() + 1);
    if (!params_.empty()) l.backward();
    optimizer_.step(params_);
    if (config_.clamp) {
        adapters_.clamp_scaling(static_cast<Real>(config_.clamp_min),
                                static_cast<Real>(config_.clamp_max));
    }
    return value;
}

template <std::floating_point Real>
Evaluation Trainer<Real>::evaluate(const Dataset& data) const {
    if (data.empty()) throw DataError("cannot evaluate an empty dataset");
    const std::size_t n = data.size();
    long double total = 0;
    std::vector<std::size_t> predicted;
    std::vector<double> outputs;
    for (std::size_t start = 0; start < n; start += config_.batch_size) {
        std::vector<std::size_t> idx(std::min(config_.batch_size, n - start));
        std::iota(idx.begin(), idx.end(), start);
        const auto out = model_.forward(data.inputs<Real>(idx), adapters_);
        total += static_cast<long double>(loss(out, data, idx).item()) *
                 static_cast<long double>(idx.size());
        const std::size_t c = out.cols();
        for (std::size_t r = 0; r < idx.size(); ++r) {
            if (data.task == Task::kClassification) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < c; ++j) {
                    if (out(r, j) > out(r, best)) best = j;
                }
                predicted.push_back(best);
            } else {
                outputs.push_back(static_cast<double>(out(r, 0)));
            }
        }
    }
    Evaluation e;
    e.loss = static_cast<double>(total / static_cast<long double>(n));
    e.metrics = data.task == Task::kClassification
                    ? classification_metrics(predicted, data.labels, data.n_classes)
                    : regression_metrics(outputs, data.targets);
    return e;
}

template <std::floating_point Real>
TrainResult train(const FrozenModel<Real>& model, AdapterSet<Real>& adapters, const Dataset& train_set,
                  const Dataset* validation, const TrainConfig& config) {
    train_set.check_against(model.spec());
    if (validation && !validation->empty()) validation->check_against(model.spec());
    Trainer<Real> trainer(model, adapters, config);
    TrainResult result;
    result.trainable_count = adapters.trainable_count();

    std::mt19937_64 shuffle_rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::span<const std::size_t> all(order);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        long double sum = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const auto count = std::min(config.batch_size, order.size() - start);
            sum += trainer.step(train_set, all.subspan(start, count));
            ++batches;
        }
        EpochRecord record;
        record.epoch = epoch;
        record.step = trainer.steps();
        record.train_loss = static_cast<double>(sum / static_cast<long double>(batches));
        record.train = trainer.evaluate(train_set);
        if (validation && !validation->empty()) record.validation = trainer.evaluate(*validation);

        const auto& m = record.train.metrics;
        const double score = m.accuracy ? *m.accuracy : (m.pearson ? m.pearson->value : 0.0);
        if (!result.steps_to_threshold && score >= config.threshold) {
            result.steps_to_threshold = record.step;
        }
        result.history.push_back(std::move(record));
    }
    return result;
}

template class Trainer<float>;
template class Trainer<double>;
template TrainResult train(const FrozenModel<float>&, AdapterSet<float>&, const Dataset&,
                           const Dataset*, const TrainConfig&);
template TrainResult train(const FrozenModel<double>&, AdapterSet<double>&, const Dataset&,
                           const Dataset*, const TrainConfig&);

}  // namespace plab
