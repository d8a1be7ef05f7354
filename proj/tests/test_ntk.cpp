#include <gtest/gtest.h>

#include <cmath>

#include "plab/error.hpp"
#include "plab/ntk.hpp"

using namespace plab;
using T = Tensor<double>;

namespace {

ModelSpec linear_spec(std::size_t d_in, std::size_t d_out, std::uint64_t seed = 1) {
    ModelSpec s;
    s.kind = ModelKind::kLinear;
    s.depth = 1;
    s.d_model = d_out;
    s.input_dim = d_in;
    s.seed = seed;
    return s;
}

ModelSpec mlp_spec(std::size_t d) {
    ModelSpec s;
    s.depth = 2;
    s.d_model = d;
    s.input_dim = 4;
    s.seed = 2;
    return s;
}

KernelMatrix kernel(Eigen::MatrixXd m) {
    KernelMatrix k;
    k.values = std::move(m);
    return k;
}

// Shifts every z by delta.
AdapterSet<double> shifted(const AdapterSet<double>& set, double delta) {
    auto out = set.clone();
    for (auto& p : out.trainable_parameters()) {
        for (auto& v : p.tensor.mutable_data()) v += delta;
    }
    return out;
}

}  // namespace

TEST(Ntk, FullSubsetLinearClosedForm) {
    const std::size_t d_in = 5, d_out = 3;
    auto m = FrozenModel<double>::build(linear_spec(d_in, d_out));
    auto probes = unit_probes<double>(4, d_in, 9);
    auto k = compute_ntk<double>(m, {}, probes, ParamSubset::kFull);
    ASSERT_EQ(k.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            double dot = 0;
            for (std::size_t c = 0; c < d_in; ++c) dot += probes(i, c) * probes(j, c);
            EXPECT_NEAR(k.values(i, j), static_cast<double>(d_out) * dot, 1e-12);
        }
    }
}

TEST(Ntk, PropulsionSubsetAtInitIsGramOfFeatures) {
    const std::size_t d_in = 4, d_out = 6;
    auto m = FrozenModel<double>::build(linear_spec(d_in, d_out));
    auto set = AdapterSet<double>::propulsion(m.sites(), 1);
    auto probes = unit_probes<double>(3, d_in, 4);
    auto k = compute_ntk<double>(m, set, probes, ParamSubset::kPropulsion);
    const auto& w = m.parameter("layer1.mlp.weight").tensor;
    auto feat = [&](std::size_t i) {
        std::vector<double> f(d_out, 0.0);
        for (std::size_t o = 0; o < d_out; ++o)
            for (std::size_t c = 0; c < d_in; ++c) f[o] += probes(i, c) * w(c, o);
        return f;
    };
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            const auto a = feat(i), b = feat(j);
            double dot = 0;
            for (std::size_t o = 0; o < d_out; ++o) dot += a[o] * b[o];
            EXPECT_NEAR(k.values(i, j), dot, 1e-12);
        }
    }
}

TEST(Ntk, SingleProbeIsSquaredGradientNorm) {
    auto m = FrozenModel<double>::build(mlp_spec(8));
    auto set = AdapterSet<double>::propulsion(m.sites(), 2);
    auto probe = unit_probes<double>(1, 4, 1);
    auto j = jacobian<double>(m, set, probe, ParamSubset::kPropulsion);
    auto k = compute_ntk<double>(m, set, probe, ParamSubset::kPropulsion);
    ASSERT_EQ(k.size(), 1u);
    EXPECT_NEAR(k.values(0, 0), j.values.row(0).squaredNorm(), 1e-12);
    EXPECT_GE(k.values(0, 0), 0.0);
}

TEST(Ntk, JacobianMatchesFiniteDifferences) {
    auto m = FrozenModel<double>::build(mlp_spec(6));
    auto set = AdapterSet<double>::propulsion(m.sites(), 3);
    auto probe = unit_probes<double>(1, 4, 3);
    auto j = jacobian<double>(m, set, probe, ParamSubset::kPropulsion);
    auto params = set.trainable_parameters();
    Eigen::Index col = 0;
    for (auto& p : params) {
        auto fd = finite_diff_grad<double>([&] { return sum(m.forward(probe, set)).item(); }, p, 1e-6);
        for (std::size_t i = 0; i < fd.numel(); ++i, ++col) EXPECT_NEAR(j.values(0, col), fd[i], 1e-6);
    }
    EXPECT_EQ(col, j.values.cols());
}

TEST(Ntk, SymmetricPositiveSemidefinite) {
    auto m = FrozenModel<double>::build(mlp_spec(16));
    auto set = AdapterSet<double>::propulsion(m.sites(), 1);
    auto probes = unit_probes<double>(8, 4, 5);
    for (auto subset : {ParamSubset::kFull, ParamSubset::kPropulsion}) {
        auto k = compute_ntk<double>(m, set, probes, subset);
        EXPECT_TRUE(k.is_symmetric());
        EXPECT_GE(k.min_eigenvalue(), -1e-9 * k.values.diagonal().mean());
    }
}

TEST(Ntk, EmptyProbesRejected) {
    auto m = FrozenModel<double>::build(linear_spec(3, 3));
    Batch<double> empty = TokenBatch{};
    EXPECT_THROW(compute_ntk<double>(m, {}, empty, ParamSubset::kFull), ConfigError);
}

TEST(Distance, SelfIsZero) {
    Eigen::MatrixXd a(2, 2);
    a << 2, 1, 1, 3;
    auto d = ntk_distance(kernel(a), kernel(a));
    EXPECT_EQ(d.max, 0.0);
    EXPECT_EQ(d.frobenius, 0.0);
}

TEST(Distance, OneByOneUnnormalized) {
    auto d = ntk_distance(kernel(Eigen::MatrixXd::Constant(1, 1, 4.0)),
                          kernel(Eigen::MatrixXd::Constant(1, 1, 5.0)), false);
    EXPECT_EQ(d.diff(0, 0), 1.0);
    EXPECT_EQ(d.max, 1.0);
}

TEST(Distance, NormalizationRemovesScale) {
    Eigen::MatrixXd a(2, 2);
    a << 2, 1, 1, 3;
    auto d = ntk_distance(kernel(a), kernel(7.5 * a));
    EXPECT_NEAR(d.max, 0.0, 1e-15);
}

TEST(Distance, ShapeMismatch) {
    EXPECT_THROW(ntk_distance(kernel(Eigen::MatrixXd::Ones(2, 2)), kernel(Eigen::MatrixXd::Ones(3, 3))),
                 DimensionError);
}

TEST(Drift, SameSnapshotIsZero) {
    auto m = FrozenModel<double>::build(mlp_spec(8));
    auto set = AdapterSet<double>::propulsion(m.sites(), 1);
    auto j = jacobian<double>(m, set, unit_probes<double>(3, 4, 1), ParamSubset::kPropulsion);
    auto d = jacobian_drift(j, j);
    EXPECT_EQ(d.relative, 0.0);
    EXPECT_EQ(d.diff.maxCoeff(), 0.0);
}

TEST(Drift, MovesWithParameters) {
    auto m = FrozenModel<double>::build(mlp_spec(8));
    auto set = AdapterSet<double>::propulsion(m.sites(), 2);
    auto probes = unit_probes<double>(3, 4, 1);
    auto j0 = jacobian<double>(m, set, probes, ParamSubset::kPropulsion);
    auto j1 = jacobian<double>(m, shifted(set, 0.1), probes, ParamSubset::kPropulsion, 1);
    EXPECT_GT(jacobian_drift(j0, j1).relative, 0.0);
}

TEST(Residual, ZeroStepIsZero) {
    auto m = FrozenModel<double>::build(mlp_spec(8));
    auto set = AdapterSet<double>::propulsion(m.sites(), 2);
    auto r = linearization_residual<double>(m, set, set.clone(), unit_probes<double>(4, 4, 2));
    EXPECT_EQ(r.absolute, 0.0);
    EXPECT_EQ(r.relative, 0.0);
}

TEST(Residual, LinearInZIsExact) {
    auto m = FrozenModel<double>::build(linear_spec(6, 5));
    auto set = AdapterSet<double>::propulsion(m.sites(), 1);
    auto r = linearization_residual<double>(m, set, shifted(set, 0.75), unit_probes<double>(4, 6, 2));
    EXPECT_LT(r.relative, 1e-14);
}

TEST(Residual, QuadraticShrinksFourfold) {
    auto m = FrozenModel<double>::build(linear_spec(6, 5));
    auto set = AdapterSet<double>::propulsion(m.sites(), 2);
    auto probes = unit_probes<double>(4, 6, 2);
    const double r1 = linearization_residual<double>(m, set, shifted(set, 1e-2), probes).absolute;
    const double r2 = linearization_residual<double>(m, set, shifted(set, 5e-3), probes).absolute;
    EXPECT_NEAR(r1 / r2, 4.0, 0.05);
}

TEST(JL, BoundValues) {
    EXPECT_NEAR(jl_bound(0.5, 128), 1.0 - 4.0 * std::exp(-4.0), 1e-15);
    EXPECT_NEAR(jl_bound(0.5, 128), 0.92674, 1e-5);
    EXPECT_EQ(jl_bound(0.5, 16), 0.0);
    EXPECT_NEAR(jl_failure_bound(0.5, 16), 4.0 * std::exp(-0.5), 1e-15);
}

TEST(JL, Monotone) {
    double prev = 0;
    for (std::size_t d = 64; d <= 8192; d *= 2) {
        const double b = jl_bound(0.3, d);
        EXPECT_GE(b, prev);
        prev = b;
    }
    EXPECT_NEAR(prev, 1.0, 1e-12);
}

TEST(JL, DomainErrors) {
    EXPECT_THROW(jl_failure_bound(0.0, 10), DomainError);
    EXPECT_THROW(jl_failure_bound(1.0, 10), DomainError);
    EXPECT_THROW(jl_failure_bound(0.5, 0), DomainError);
}

TEST(JL, EmpiricalWithinBound) {
    auto r = jl_empirical(128, 2000, 0.5, 1.0, 11);
    EXPECT_FALSE(r.vacuous);
    EXPECT_TRUE(r.within_bound());
    EXPECT_EQ(r.trials, 2000u);
}

TEST(JL, IdenticalPairConcentrates) {
    auto r = jl_empirical(256, 500, 0.5, 1.0, 3, true);
    EXPECT_LT(r.empirical, 0.1 * r.failure_bound);
}

TEST(JL, SmallDimensionIsVacuous) {
    auto r = jl_empirical(8, 100, 0.5, 1.0, 1);
    EXPECT_TRUE(r.vacuous);
    EXPECT_TRUE(r.within_bound());
}

TEST(Probes, UnitNorm) {
    auto p = unit_probes<double>(5, 7, 3);
    for (std::size_t i = 0; i < 5; ++i) {
        double s = 0;
        for (std::size_t c = 0; c < 7; ++c) s += p(i, c) * p(i, c);
        EXPECT_NEAR(s, 1.0, 1e-14);
    }
}
