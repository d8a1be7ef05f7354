#include "plab/ntk.hpp"

#include <cmath>
#include <map>
#include <random>

#include "plab/data.hpp"
#include "plab/error.hpp"

namespace plab {

std::string_view to_string(ParamSubset subset) {
    return subset == ParamSubset::kFull ? "full" : "propulsion";
}

bool KernelMatrix::is_symmetric(double tol) const {
    if (values.rows() != values.cols()) return false;
    return (values - values.transpose()).cwiseAbs().maxCoeff() <= tol;
}

double KernelMatrix::min_eigenvalue() const {
    if (values.size() == 0) return 0.0;
    const Eigen::MatrixXd sym = 0.5 * (values + values.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

namespace {

template <typename Real>
std::size_t probe_count(const FrozenModel<Real>& model, const Batch<Real>& probes) {
    if (const auto* x = std::get_if<Tensor<Real>>(&probes)) {
        if (!x->defined() || x->dim() != 2) return 0;
    }
    return model.batch_size(probes);
}

// Working copy whose trainable parameters are exactly the requested subset.
template <typename Real>
AdapterSet<Real> subset_view(const FrozenModel<Real>& model, const AdapterSet<Real>& adapters,
                             ParamSubset subset) {
    auto view = adapters.clone();
    view.set_trainable(false);
    if (subset == ParamSubset::kPropulsion) {
        view.set_adapters_trainable(true);
        return view;
    }
    for (const auto& p : model.parameters()) {
        if (!view.overrides().contains(p.name)) {
            view.add_override({p.name, p.tensor.clone(), false, Real{0}});
        }
    }
    view.set_overrides_trainable(true);
    return view;
}

template <typename Real>
long double summed_output(const Tensor<Real>& logits) {
    long double s = 0;
    for (Real v : logits.data()) s += v;
    return s;
}

}  // namespace

template <std::floating_point Real>
JacobianSnapshot jacobian(const FrozenModel<Real>& model, const AdapterSet<Real>& adapters,
                          const Batch<Real>& probes, ParamSubset subset, std::size_t step) {
    const std::size_t n = probe_count(model, probes);
    if (n == 0) throw ConfigError("ntk.probes: probe set is empty");
    const auto view = subset_view(model, adapters, subset);
    const auto params = view.trainable_parameters();
    std::size_t width = 0;
    for (const auto& p : params) width += p.tensor.numel();
    if (width == 0) {
        throw ConfigError(std::string("parameter subset '") + std::string(to_string(subset)) +
                          "' is empty");
    }

    JacobianSnapshot snap{step, subset, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                              static_cast<Eigen::Index>(width))};
    for (std::size_t i = 0; i < n; ++i) {
        for (auto p : params) p.tensor.clear_grad();
        const std::size_t idx[] = {i};
        const auto out = model.forward(batch_subset(probes, std::span<const std::size_t>(idx)), view);
        sum(out).backward();
        Eigen::Index col = 0;
        for (const auto& p : params) {
            if (p.tensor.has_grad()) {
                const auto g = p.tensor.grad();
                for (std::size_t k = 0; k < g.size(); ++k) {
                    snap.values(static_cast<Eigen::Index>(i), col + static_cast<Eigen::Index>(k)) =
                        static_cast<double>(g[k]);
                }
            }
            col += static_cast<Eigen::Index>(p.tensor.numel());
        }
    }
    return snap;
}

KernelMatrix kernel_from_jacobian(const JacobianSnapshot& j) {
    return {j.subset, j.values * j.values.transpose()};
}

template <std::floating_point Real>
KernelMatrix compute_ntk(const FrozenModel<Real>& model, const AdapterSet<Real>& adapters,
                         const Batch<Real>& probes, ParamSubset subset) {
    return kernel_from_jacobian(jacobian(model, adapters, probes, subset));
}

KernelDistance ntk_distance(const KernelMatrix& a, const KernelMatrix& b, bool normalize) {
    if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
        throw DimensionError("ntk_distance: kernels of size " + std::to_string(a.values.rows()) +
                             " and " + std::to_string(b.values.rows()));
    }
    auto scaled = [normalize](const Eigen::MatrixXd& k) -> Eigen::MatrixXd {
        if (!normalize || k.size() == 0) return k;
        const double mean_diag = k.diagonal().mean();
        return mean_diag != 0.0 ? Eigen::MatrixXd(k / mean_diag) : k;
    };
    KernelDistance d;
    d.diff = (scaled(a.values) - scaled(b.values)).cwiseAbs();
    d.max = d.diff.size() ? d.diff.maxCoeff() : 0.0;
    d.frobenius = d.diff.norm();
    return d;
}

Drift jacobian_drift(const JacobianSnapshot& initial, const JacobianSnapshot& current) {
    if (initial.values.rows() != current.values.rows() ||
        initial.values.cols() != current.values.cols()) {
        throw DimensionError("jacobian_drift: snapshots differ in shape");
    }
    Drift d;
    const Eigen::MatrixXd delta = current.values - initial.values;
    d.diff = delta.cwiseAbs();
    const double base = initial.values.norm();
    d.relative = base > 0.0 ? delta.norm() / base : delta.norm();
    return d;
}

template <std::floating_point Real>
Residual linearization_residual(const FrozenModel<Real>& model, const AdapterSet<Real>& before,
                                const AdapterSet<Real>& after, const Batch<Real>& probes) {
    const std::size_t n = probe_count(model, probes);
    if (n == 0) throw ConfigError("ntk.probes: probe set is empty");
    const auto start = before.clone();
    const auto params = start.trainable_parameters();
    std::map<std::string, Tensor<Real>> moved;
    for (const auto& p : after.parameters()) moved.emplace(p.name, p.tensor);

    Residual r;
    for (std::size_t i = 0; i < n; ++i) {
        for (auto p : params) p.tensor.clear_grad();
        const std::size_t idx[] = {i};
        const auto x = batch_subset(probes, std::span<const std::size_t>(idx));
        const auto out0 = model.forward(x, start);
        const long double phi0 = summed_output(out0);
        sum(out0).backward();
        const long double phi1 = summed_output(model.forward(x, after));

        long double predicted = 0;
        for (const auto& p : params) {
            auto it = moved.find(p.name);
            if (it == moved.end()) throw ContractError("adapter states differ: no " + p.name);
            if (!p.tensor.has_grad()) continue;
            const auto g = p.tensor.grad();
            const auto v0 = p.tensor.data();
            const auto v1 = it->second.data();
            for (std::size_t k = 0; k < g.size(); ++k) {
                predicted += static_cast<long double>(g[k]) *
                             (static_cast<long double>(v1[k]) - static_cast<long double>(v0[k]));
            }
        }
        const long double change = phi1 - phi0;
        const double abs_err = static_cast<double>(std::fabs(change - predicted));
        r.absolute = std::max(r.absolute, abs_err);
        if (change != 0) {
            r.relative = std::max(r.relative, abs_err / static_cast<double>(std::fabs(change)));
        }
    }
    return r;
}

double jl_failure_bound(double eps, std::size_t d) {
    if (!(eps > 0.0 && eps < 1.0)) {
        throw DomainError("eps must lie in (0, 1), got " + std::to_string(eps));
    }
    if (d < 1) throw DomainError("width d must be >= 1");
    return 4.0 * std::exp(-(eps * eps - eps * eps * eps) * static_cast<double>(d) / 4.0);
}

double jl_bound(double eps, std::size_t d) {
    return std::clamp(1.0 - jl_failure_bound(eps, d), 0.0, 1.0);
}

JLBoundRecord jl_empirical(std::size_t d, std::size_t trials, double eps, double c,
                           std::uint64_t seed, bool identical_pair) {
    JLBoundRecord rec;
    rec.eps = eps;
    rec.c = c;
    rec.d = d;
    rec.trials = trials;
    rec.failure_bound = jl_failure_bound(eps, d);
    rec.vacuous = rec.failure_bound >= 1.0;
    if (trials == 0) throw ConfigError("ntk.jl.trials: must be >= 1");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    const double row_scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> x(d), y(d), row(d);
    auto draw_unit = [&](std::vector<double>& v) {
        double norm = 0;
        for (auto& e : v) {
            e = unit(rng);
            norm += e * e;
        }
        norm = std::sqrt(norm);
        for (auto& e : v) e /= norm;
    };
    for (std::size_t t = 0; t < trials; ++t) {
        draw_unit(x);
        if (identical_pair) {
            y = x;
        } else {
            draw_unit(y);
        }
        double exact = 0;
        for (std::size_t k = 0; k < d; ++k) exact += x[k] * y[k];
        double projected = 0;
        for (std::size_t r = 0; r < d; ++r) {
            double px = 0, py = 0;
            for (std::size_t k = 0; k < d; ++k) {
                const double w = unit(rng) * row_scale;
                px += w * x[k];
                py += w * y[k];
            }
            projected += px * py;
        }
        if (std::fabs(projected - exact) >= c * eps) ++rec.failures;
    }
    rec.empirical = static_cast<double>(rec.failures) / static_cast<double>(trials);
    const double b = std::min(rec.failure_bound, 1.0);
    rec.margin = 3.0 * std::sqrt(b * (1.0 - b) / static_cast<double>(trials));
    return rec;
}

template <std::floating_point Real>
Tensor<Real> unit_probes(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<Real> values(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(dim);
        double norm = 0;
        for (auto& e : v) {
            e = unit(rng);
            norm += e * e;
        }
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < dim; ++k) values[i * dim + k] = static_cast<Real>(v[k] / norm);
    }
    return Tensor<Real>({n, dim}, std::move(values));
}

#define PLAB_INSTANTIATE_NTK(Real)                                                                \
    template JacobianSnapshot jacobian(const FrozenModel<Real>&, const AdapterSet<Real>&,         \
                                       const Batch<Real>&, ParamSubset, std::size_t);             \
    template KernelMatrix compute_ntk(const FrozenModel<Real>&, const AdapterSet<Real>&,          \
                                      const Batch<Real>&, ParamSubset);                           \
    template Residual linearization_residual(const FrozenModel<Real>&, const AdapterSet<Real>&,   \
                                             const AdapterSet<Real>&, const Batch<Real>&);        \
    template Tensor<Real> unit_probes(std::size_t, std::size_t, std::uint64_t);

PLAB_INSTANTIATE_NTK(float)
PLAB_INSTANTIATE_NTK(double)

}  // namespace plab
