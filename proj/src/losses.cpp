#include "plab/losses.hpp"

#include <algorithm>
#include <cmath>

#include "plab/error.hpp"

namespace plab {

template <std::floating_point Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, std::span<const std::size_t> labels) {
    if (logits.dim() != 2) {
        throw DimensionError("cross_entropy: logits must be [T x C], got " + shape_str(logits.shape()));
    }
    const std::size_t t = logits.rows();
    const std::size_t c = logits.cols();
    if (c < 2) throw ContractError("cross_entropy: needs at least 2 classes");
    if (labels.size() != t) {
        throw DimensionError("cross_entropy: " + std::to_string(t) + " rows but " +
                             std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < t; ++i) {
        if (labels[i] >= c) {
            throw DataError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                            " outside [0, " + std::to_string(c) + ")");
        }
    }
    const auto z = logits.data();
    // Row-wise softmax probabilities, kept for the gradient.
    std::vector<Real> prob(t * c);
    long double total = 0;
    for (std::size_t i = 0; i < t; ++i) {
        const Real* row = z.data() + i * c;
        const Real m = *std::max_element(row, row + c);
        Real s = 0;
        for (std::size_t j = 0; j < c; ++j) {
            prob[i * c + j] = std::exp(row[j] - m);
            s += prob[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) prob[i * c + j] /= s;
        total += std::log(s) - (row[labels[i]] - m);
    }
    std::vector<std::size_t> y(labels.begin(), labels.end());
    return Tensor<Real>::from_op(
        "cross_entropy", {1}, {static_cast<Real>(total / static_cast<long double>(t))}, {logits},
        [t, c, prob = std::move(prob), y = std::move(y)](std::span<const Real>,
                                                          std::span<const Real> g,
                                                          GradInputs<Real>& in) {
            auto d = in.grad(0);
            const Real scale = g[0] / static_cast<Real>(t);
            for (std::size_t i = 0; i < t; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    const Real target = j == y[i] ? Real{1} : Real{0};
                    d[i * c + j] += scale * (prob[i * c + j] - target);
                }
            }
        });
}

template <std::floating_point Real>
Tensor<Real> mse(const Tensor<Real>& prediction, const Tensor<Real>& target) {
    if (prediction.numel() != target.numel() || target.dim() != 1 ||
        (prediction.dim() == 2 && prediction.cols() != 1) || prediction.dim() > 2) {
        throw DimensionError("mse: prediction " + shape_str(prediction.shape()) +
                             " does not match target " + shape_str(target.shape()));
    }
    const auto flat = prediction.dim() == 1 ? prediction : reshape(prediction, target.shape());
    return mean(pow_int(sub(flat, target), 2));
}

template Tensor<float> cross_entropy(const Tensor<float>&, std::span<const std::size_t>);
template Tensor<double> cross_entropy(const Tensor<double>&, std::span<const std::size_t>);
template Tensor<float> mse(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse(const Tensor<double>&, const Tensor<double>&);

}  // namespace plab
