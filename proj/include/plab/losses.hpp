#pragma once

#include <cstddef>
#include <span>

#include "plab/tensor.hpp"

namespace plab {

/// Mean negative log-likelihood of softmax(logits) at the given labels.
/// Throws DataError for a label outside [0, logits.cols()).
template <std::floating_point Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, std::span<const std::size_t> labels);

/// (1/T) sum (prediction - target)^2. `prediction` may be [T] or [T x 1].
template <std::floating_point Real>
Tensor<Real> mse(const Tensor<Real>& prediction, const Tensor<Real>& target);

}  // namespace plab
