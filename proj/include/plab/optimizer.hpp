#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "plab/tensor.hpp"

namespace plab {

enum class OptimizerKind { kSgd, kAdamW };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::kAdamW;
    double learning_rate = 1e-4;
    double weight_decay = 0.02;
    // When false every parameter decays toward 0 regardless of its decay_target.
    bool use_decay_target = true;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// SGD:   p <- p - lr (g + wd (p - target))
/// AdamW: p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd (p - target))
/// Parameters without a gradient count as having a zero gradient.
template <std::floating_point Real>
class Optimizer {
   public:
    explicit Optimizer(OptimizerConfig config) : config_(config) {}

    void step(const std::vector<Parameter<Real>>& params);

    std::size_t steps() const { return steps_; }
    const OptimizerConfig& config() const { return config_; }

   private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };

    OptimizerConfig config_;
    std::size_t steps_ = 0;
    std::map<std::string, Moments> moments_;
};

}  // namespace plab
