#include "plab/optimizer.hpp"

#include <cctype>
#include <cmath>

#include "plab/error.hpp"

namespace plab {

std::string_view to_string(OptimizerKind kind) {
    return kind == OptimizerKind::kSgd ? "sgd" : "adamw";
}

OptimizerKind parse_optimizer(std::string_view text) {
    std::string t(text);
    for (auto& ch : t) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (t == "sgd") return OptimizerKind::kSgd;
    if (t == "adamw" || t == "adam") return OptimizerKind::kAdamW;
    throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

template <std::floating_point Real>
void Optimizer<Real>::step(const std::vector<Parameter<Real>>& params) {
    ++steps_;
    const double lr = config_.learning_rate;
    const double wd = config_.weight_decay;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));

    for (const auto& p : params) {
        if (!p.trainable) continue;
        auto tensor = p.tensor;
        auto values = tensor.mutable_data();
        const bool has_grad = tensor.has_grad();
        const auto grad = has_grad ? tensor.grad() : std::span<const Real>{};
        const double target = config_.use_decay_target ? static_cast<double>(p.decay_target) : 0.0;

        if (config_.kind == OptimizerKind::kSgd) {
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double g = has_grad ? static_cast<double>(grad[i]) : 0.0;
                const double x = values[i];
                values[i] = static_cast<Real>(x - lr * (g + wd * (x - target)));
            }
            continue;
        }

        auto& state = moments_[p.name];
        if (state.m.size() != values.size()) {
            state.m.assign(values.size(), 0.0);
            state.v.assign(values.size(), 0.0);
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = has_grad ? static_cast<double>(grad[i]) : 0.0;
            state.m[i] = config_.beta1 * state.m[i] + (1.0 - config_.beta1) * g;
            state.v[i] = config_.beta2 * state.v[i] + (1.0 - config_.beta2) * g * g;
            const double m_hat = state.m[i] / bc1;
            const double v_hat = state.v[i] / bc2;
            const double x = values[i];
            values[i] = static_cast<Real>(
                x - lr * (m_hat / (std::sqrt(v_hat) + config_.eps) + wd * (x - target)));
        }
    }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace plab
