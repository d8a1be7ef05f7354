#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include "plab/model.hpp"
#include "plab/peft.hpp"

namespace plab {

enum class ParamSubset {
    kFull,        // every base parameter
    kPropulsion,  // the adapter's own parameters
};

std::string_view to_string(ParamSubset subset);

/// Gradients of the summed logits, one row per probe.
struct JacobianSnapshot {
    std::size_t step = 0;
    ParamSubset subset = ParamSubset::kPropulsion;
    Eigen::MatrixXd values;  // probes x parameters
};

struct KernelMatrix {
    ParamSubset subset = ParamSubset::kPropulsion;
    Eigen::MatrixXd values;

    std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
    bool is_symmetric(double tol = 1e-10) const;
    double min_eigenvalue() const;
};

template <std::floating_point Real>
JacobianSnapshot jacobian(const FrozenModel<Real>& model, const AdapterSet<Real>& adapters,
                          const Batch<Real>& probes, ParamSubset subset, std::size_t step = 0);

/// K = J J^T. Throws ConfigError for an empty probe set.
template <std::floating_point Real>
KernelMatrix compute_ntk(const FrozenModel<Real>& model, const AdapterSet<Real>& adapters,
                         const Batch<Real>& probes, ParamSubset subset);

KernelMatrix kernel_from_jacobian(const JacobianSnapshot& j);

struct KernelDistance {
    Eigen::MatrixXd diff;  // |A - B| after optional normalisation
    double max = 0.0;
    double frobenius = 0.0;
};

/// With `normalize`, each kernel is divided by its mean diagonal first.
KernelDistance ntk_distance(const KernelMatrix& a, const KernelMatrix& b, bool normalize = true);

struct Drift {
    Eigen::MatrixXd diff;  // |J_t - J_0|
    double relative = 0.0;  // ||J_t - J_0||_F / ||J_0||_F
};

Drift jacobian_drift(const JacobianSnapshot& initial, const JacobianSnapshot& current);

struct Residual {
    double absolute = 0.0;
    double relative = 0.0;  // absolute / |change in output|; 0 when the output did not move
};

/// First-order Taylor error of the summed logits between two adapter states,
/// worst case over probes. The gradient is taken at `before` over its
/// trainable parameters.
template <std::floating_point Real>
Residual linearization_residual(const FrozenModel<Real>& model, const AdapterSet<Real>& before,
                                const AdapterSet<Real>& after, const Batch<Real>& probes);

/// 4 exp(-(eps^2 - eps^3) d / 4). Throws DomainError unless 0 < eps < 1 and d >= 1.
double jl_failure_bound(double eps, std::size_t d);

/// 1 - jl_failure_bound(eps, d), clamped to [0, 1].
double jl_bound(double eps, std::size_t d);

struct JLBoundRecord {
    double eps = 0.0;
    double c = 1.0;
    std::size_t d = 0;
    std::size_t trials = 0;
    std::size_t failures = 0;
    double failure_bound = 0.0;
    double empirical = 0.0;
    double margin = 0.0;  // 3 sigma binomial margin at the bound
    bool vacuous = false;  // bound >= 1

    bool within_bound() const { return vacuous || empirical <= failure_bound + margin; }
};

/// Monte-Carlo check of the JL inner-product bound with a fresh d x d
/// N(0, 1/d) matrix and unit-norm pair per trial. With `identical_pair` the
/// two vectors coincide.
JLBoundRecord jl_empirical(std::size_t d, std::size_t trials, double eps, double c,
                           std::uint64_t seed, bool identical_pair = false);

/// Unit-norm Gaussian probes [n x dim].
template <std::floating_point Real>
Tensor<Real> unit_probes(std::size_t n, std::size_t dim, std::uint64_t seed);

}  // namespace plab
