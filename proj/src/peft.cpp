#include "plab/peft.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "plab/error.hpp"

namespace plab {

namespace {

std::string normalize(std::string_view text) {
    std::string out;
    for (unsigned char c : text) {
        if (c == '-' || c == '_' || c == ' ' || c == '(' || c == ')') continue;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

template <typename Real>
void check_width(const Tensor<Real>& v, const Tensor<Real>& z, std::string_view what) {
    if (z.dim() != 1 || v.dim() != 2 || z.numel() != v.cols()) {
        throw AttachmentError(std::string(what) + ": vector of shape " + shape_str(z.shape()) +
                              " does not fit output " + shape_str(v.shape()));
    }
}

}  // namespace

std::string_view to_string(AdapterKind kind) {
    switch (kind) {
        case AdapterKind::kNone:
            return "None";
        case AdapterKind::kPropulsion:
            return "Propulsion";
        case AdapterKind::kMultiPropulsion:
            return "MultiPropulsion";
        case AdapterKind::kLoRA:
            return "LoRA";
        case AdapterKind::kBitFit:
            return "BitFit";
        case AdapterKind::kFullFT:
            return "FullFT";
    }
    return "?";
}

std::string_view to_string(Pooling pooling) {
    switch (pooling) {
        case Pooling::kAverage:
            return "Average";
        case Pooling::kMax:
            return "Max";
        case Pooling::kMin:
            return "Min";
        case Pooling::kL2:
            return "L2";
    }
    return "?";
}

AdapterKind parse_adapter_kind(std::string_view text) {
    const auto t = normalize(text);
    if (t == "none") return AdapterKind::kNone;
    if (t == "propulsion") return AdapterKind::kPropulsion;
    if (t == "multipropulsion") return AdapterKind::kMultiPropulsion;
    if (t == "lora") return AdapterKind::kLoRA;
    if (t == "bitfit") return AdapterKind::kBitFit;
    if (t == "fullft" || t == "ft" || t == "full") return AdapterKind::kFullFT;
    throw ConfigError("unknown adapter kind '" + std::string(text) + "'");
}

Pooling parse_pooling(std::string_view text) {
    const auto t = normalize(text);
    if (t == "average" || t == "mean" || t == "avg") return Pooling::kAverage;
    if (t == "max") return Pooling::kMax;
    if (t == "min") return Pooling::kMin;
    if (t == "l2") return Pooling::kL2;
    throw ConfigError("unknown pooling '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Transforms

template <std::floating_point Real>
Tensor<Real> propulsion_apply(const Tensor<Real>& v, const Tensor<Real>& z, int degree) {
    check_width(v, z, "propulsion");
    return ew_mul(v, pow_int(z, degree));
}

template <std::floating_point Real>
Tensor<Real> pool(const std::vector<Tensor<Real>>& candidates, Pooling pooling) {
    if (candidates.empty()) throw ConfigError("pooling needs at least one candidate");
    const auto& shape = candidates.front().shape();
    for (const auto& c : candidates) {
        if (c.shape() != shape) {
            throw DimensionError("pool: incompatible shapes " + shape_str(shape) + " and " +
                                 shape_str(c.shape()));
        }
    }
    if (candidates.size() == 1) return candidates.front();

    const std::size_t p = candidates.size();
    const std::size_t n = shape_numel(shape);
    const Real inv_p = Real{1} / static_cast<Real>(p);
    std::vector<std::span<const Real>> values;
    values.reserve(p);
    for (const auto& c : candidates) values.push_back(c.data());

    std::vector<Real> out(n);
    // Index of the candidate selected by Max/Min.
    std::vector<std::size_t> pick;
    if (pooling == Pooling::kMax || pooling == Pooling::kMin) pick.assign(n, 0);

    for (std::size_t i = 0; i < n; ++i) {
        const Real x0 = values[0][i];
        switch (pooling) {
            case Pooling::kAverage: {
                // Offsets from the first candidate keep identical inputs exact.
                Real offset = 0;
                for (std::size_t j = 1; j < p; ++j) offset += values[j][i] - x0;
                out[i] = x0 + offset * inv_p;
                break;
            }
            case Pooling::kMax:
            case Pooling::kMin: {
                std::size_t best = 0;
                for (std::size_t j = 1; j < p; ++j) {
                    const Real x = values[j][i];
                    const Real b = values[best][i];
                    if (pooling == Pooling::kMax ? x > b : x < b) best = j;
                }
                pick[i] = best;
                out[i] = values[best][i];
                break;
            }
            case Pooling::kL2: {
                bool same = true;
                Real sq = 0, total = 0;
                for (std::size_t j = 0; j < p; ++j) {
                    const Real x = values[j][i];
                    same = same && x == x0;
                    sq += x * x;
                    total += x;
                }
                const Real rms = std::sqrt(sq * inv_p);
                out[i] = same ? x0 : (total < 0 ? -rms : rms);
                break;
            }
        }
    }

    return Tensor<Real>::from_op(
        "pool", shape, std::move(out), candidates,
        [p, n, inv_p, pooling, pick = std::move(pick)](
            std::span<const Real> y, std::span<const Real> g, GradInputs<Real>& in) {
            for (std::size_t j = 0; j < p; ++j) {
                if (!in.needs_grad(j)) continue;
                auto dx = in.grad(j);
                const auto x = in.value(j);
                for (std::size_t i = 0; i < n; ++i) {
                    switch (pooling) {
                        case Pooling::kAverage:
                            dx[i] += g[i] * inv_p;
                            break;
                        case Pooling::kMax:
                        case Pooling::kMin:
                            if (pick[i] == j) dx[i] += g[i];
                            break;
                        case Pooling::kL2:
                            // d/dx_j of s*sqrt(mean x^2) = x_j / (p * y), with y carrying the sign.
                            if (y[i] != 0) dx[i] += g[i] * x[i] * inv_p / y[i];
                            break;
                    }
                }
            }
        });
}

template <std::floating_point Real>
Tensor<Real> multi_propulsion_apply(const Tensor<Real>& v, const std::vector<Tensor<Real>>& vectors,
                                    int degree, Pooling pooling) {
    if (vectors.empty()) throw ConfigError("multi-propulsion needs at least one vector");
    std::vector<Tensor<Real>> candidates;
    candidates.reserve(vectors.size());
    for (const auto& z : vectors) candidates.push_back(propulsion_apply(v, z, degree));
    return pool(candidates, pooling);
}

template <std::floating_point Real>
Tensor<Real> lora_apply(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& a,
                        const Tensor<Real>& b, Real scaling) {
    if (a.dim() != 2 || b.dim() != 2 || a.cols() != b.rows() || a.cols() < 1) {
        throw ConfigError("lora: factors " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                          " do not form a rank-r update");
    }
    return add(matmul(x, w), scale(matmul(matmul(x, a), b), scaling));
}

template <std::floating_point Real>
Tensor<Real> materialize_effective_weight(const Tensor<Real>& w, const Tensor<Real>& z, int degree) {
    check_width(w, z, "materialize_effective_weight");
    return ew_mul(w, pow_int(z, degree));
}

// ---------------------------------------------------------------------------
// Adapters

template <std::floating_point Real>
PropulsionAdapter<Real> make_propulsion(const AttachmentSite& site, int degree) {
    if (degree < 0) {
        throw UnsupportedDegreeError("degree must be a non-negative integer, got " +
                                     std::to_string(degree));
    }
    auto z = Tensor<Real>::ones({site.d_out});
    z.set_requires_grad(true);
    return {site, Parameter<Real>{site.name() + ".z", z, true, Real{1}}, degree};
}

template <std::floating_point Real>
MultiPropulsionAdapter<Real> make_multi_propulsion(const AttachmentSite& site, int degree,
                                                   std::size_t count, Pooling pooling) {
    if (count < 1) throw ConfigError("adapter.num_vectors: must be >= 1");
    if (degree < 0) {
        throw UnsupportedDegreeError("degree must be a non-negative integer, got " +
                                     std::to_string(degree));
    }
    MultiPropulsionAdapter<Real> out{site, {}, degree, pooling};
    for (std::size_t i = 0; i < count; ++i) {
        auto z = Tensor<Real>::ones({site.d_out});
        z.set_requires_grad(true);
        out.vectors.push_back({site.name() + ".z" + std::to_string(i), z, true, Real{1}});
    }
    return out;
}

template <std::floating_point Real>
LoRAAdapter<Real> make_lora(const AttachmentSite& site, std::size_t rank, Real alpha,
                            std::mt19937_64& rng) {
    if (rank < 1 || rank > std::min(site.d_in, site.d_out)) {
        throw ConfigError("adapter.rank: " + std::to_string(rank) + " outside [1, " +
                          std::to_string(std::min(site.d_in, site.d_out)) + "] for site " +
                          site.name());
    }
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(site.d_in)));
    std::vector<Real> a(site.d_in * rank);
    for (auto& v : a) v = static_cast<Real>(normal(rng));
    Tensor<Real> ta({site.d_in, rank}, std::move(a), true);
    auto tb = Tensor<Real>::zeros({rank, site.d_out});
    tb.set_requires_grad(true);
    const Real effective_alpha = alpha > 0 ? alpha : static_cast<Real>(rank);
    return {site,
            Parameter<Real>{site.name() + ".lora_a", ta, true, Real{0}},
            Parameter<Real>{site.name() + ".lora_b", tb, true, Real{0}},
            rank,
            effective_alpha / static_cast<Real>(rank)};
}

void AdapterConfig::validate() const {
    if (degree < 0) {
        throw UnsupportedDegreeError("adapter.degree: must be a non-negative integer, got " +
                                     std::to_string(degree));
    }
    if (num_vectors < 1) throw ConfigError("adapter.num_vectors: must be >= 1");
    if (kind == AdapterKind::kLoRA && rank < 1) throw ConfigError("adapter.rank: must be >= 1");
    if (alpha < 0) throw ConfigError("adapter.alpha: must be >= 0");
}

template <std::floating_point Real>
AdapterSet<Real> AdapterSet<Real>::propulsion(std::span<const AttachmentSite> sites, int degree) {
    AdapterSet set;
    set.set_kind(AdapterKind::kPropulsion);
    for (const auto& s : sites) set.attach(make_propulsion<Real>(s, degree));
    return set;
}

template <std::floating_point Real>
AdapterSet<Real> AdapterSet<Real>::multi_propulsion(std::span<const AttachmentSite> sites,
                                                    int degree, std::size_t count,
                                                    Pooling pooling) {
    AdapterSet set;
    set.set_kind(AdapterKind::kMultiPropulsion);
    for (const auto& s : sites) set.attach(make_multi_propulsion<Real>(s, degree, count, pooling));
    return set;
}

template <std::floating_point Real>
AdapterSet<Real> AdapterSet<Real>::lora(std::span<const AttachmentSite> sites, std::size_t rank,
                                        Real alpha, std::uint64_t seed) {
    AdapterSet set;
    set.set_kind(AdapterKind::kLoRA);
    std::mt19937_64 rng(seed);
    for (const auto& s : sites) set.attach(make_lora<Real>(s, rank, alpha, rng));
    return set;
}

template <std::floating_point Real>
AdapterSet<Real> AdapterSet<Real>::bitfit(const FrozenModel<Real>& model) {
    AdapterSet set;
    set.set_kind(AdapterKind::kBitFit);
    for (const auto& p : model.parameters()) {
        if (!p.name.ends_with(".bias")) continue;
        set.add_override({p.name, p.tensor.clone_with_grad(true), true, Real{0}});
    }
    return set;
}

template <std::floating_point Real>
AdapterSet<Real> AdapterSet<Real>::full_finetune(const FrozenModel<Real>& model) {
    AdapterSet set;
    set.set_kind(AdapterKind::kFullFT);
    for (const auto& p : model.parameters()) {
        set.add_override({p.name, p.tensor.clone_with_grad(true), true, Real{0}});
    }
    return set;
}

template <std::floating_point Real>
AdapterSet<Real> AdapterSet<Real>::from_config(const FrozenModel<Real>& model,
                                               const AdapterConfig& config, std::uint64_t seed) {
    config.validate();
    const auto sites = model.site_group(config.sites);
    switch (config.kind) {
        case AdapterKind::kNone:
            return {};
        case AdapterKind::kPropulsion:
            return propulsion(sites, config.degree);
        case AdapterKind::kMultiPropulsion:
            return multi_propulsion(sites, config.degree, config.num_vectors, config.pooling);
        case AdapterKind::kLoRA:
            return lora(sites, config.rank, static_cast<Real>(config.alpha), seed);
        case AdapterKind::kBitFit:
            return bitfit(model);
        case AdapterKind::kFullFT:
            return full_finetune(model);
    }
    return {};
}

template <std::floating_point Real>
void AdapterSet<Real>::set_kind(AdapterKind kind) {
    if (kind_ != AdapterKind::kNone && kind_ != kind) {
        throw AttachmentError("cannot mix " + std::string(to_string(kind_)) + " and " +
                              std::string(to_string(kind)) + " adapters in one set");
    }
    kind_ = kind;
}

template <std::floating_point Real>
void AdapterSet<Real>::attach(SiteAdapter<Real> adapter) {
    const auto& site = std::visit([](const auto& a) -> const AttachmentSite& { return a.site; },
                                  adapter);
    const AdapterKind kind = std::visit(
        [](const auto& a) {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, PropulsionAdapter<Real>>) {
                return AdapterKind::kPropulsion;
            } else if constexpr (std::is_same_v<T, MultiPropulsionAdapter<Real>>) {
                return AdapterKind::kMultiPropulsion;
            } else {
                return AdapterKind::kLoRA;
            }
        },
        adapter);
    const auto name = site.name();
    if (adapters_.contains(name)) throw AttachmentError("site " + name + " already has an adapter");
    set_kind(kind);
    adapters_.emplace(name, std::move(adapter));
}

template <std::floating_point Real>
void AdapterSet<Real>::detach(const AttachmentSite& site) {
    adapters_.erase(site.name());
}

template <std::floating_point Real>
const SiteAdapter<Real>* AdapterSet<Real>::find(const AttachmentSite& site) const {
    auto it = adapters_.find(site.name());
    return it == adapters_.end() ? nullptr : &it->second;
}

template <std::floating_point Real>
void AdapterSet<Real>::add_override(Parameter<Real> param) {
    if (overrides_.contains(param.name)) {
        throw AttachmentError("parameter " + param.name + " is already overridden");
    }
    auto name = param.name;
    overrides_.emplace(std::move(name), std::move(param));
}

template <std::floating_point Real>
const Tensor<Real>& AdapterSet<Real>::resolve(const Parameter<Real>& base) const {
    auto it = overrides_.find(base.name);
    return it == overrides_.end() ? base.tensor : it->second.tensor;
}

template <std::floating_point Real>
std::vector<Parameter<Real>> AdapterSet<Real>::parameters() const {
    std::vector<Parameter<Real>> out;
    for (const auto& [name, adapter] : adapters_) {
        std::visit(
            [&out](const auto& a) {
                using T = std::decay_t<decltype(a)>;
                if constexpr (std::is_same_v<T, PropulsionAdapter<Real>>) {
                    out.push_back(a.z);
                } else if constexpr (std::is_same_v<T, MultiPropulsionAdapter<Real>>) {
                    out.insert(out.end(), a.vectors.begin(), a.vectors.end());
                } else {
                    out.push_back(a.a);
                    out.push_back(a.b);
                }
            },
            adapter);
    }
    for (const auto& [name, p] : overrides_) out.push_back(p);
    return out;
}

template <std::floating_point Real>
std::vector<Parameter<Real>> AdapterSet<Real>::trainable_parameters() const {
    auto all = parameters();
    std::erase_if(all, [](const auto& p) { return !p.trainable; });
    return all;
}

template <std::floating_point Real>
std::size_t AdapterSet<Real>::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : trainable_parameters()) n += p.tensor.numel();
    return n;
}

namespace {

template <typename Real>
void mark_trainable(Parameter<Real>& p, bool trainable) {
    p.trainable = trainable;
    p.tensor.set_requires_grad(trainable);
}

}  // namespace

template <std::floating_point Real>
void AdapterSet<Real>::set_trainable(bool trainable) {
    set_adapters_trainable(trainable);
    set_overrides_trainable(trainable);
}

template <std::floating_point Real>
void AdapterSet<Real>::set_adapters_trainable(bool trainable) {
    for (auto& [name, adapter] : adapters_) {
        std::visit(
            [trainable](auto& a) {
                using T = std::decay_t<decltype(a)>;
                if constexpr (std::is_same_v<T, PropulsionAdapter<Real>>) {
                    mark_trainable(a.z, trainable);
                } else if constexpr (std::is_same_v<T, MultiPropulsionAdapter<Real>>) {
                    for (auto& z : a.vectors) mark_trainable(z, trainable);
                } else {
                    mark_trainable(a.a, trainable);
                    mark_trainable(a.b, trainable);
                }
            },
            adapter);
    }
}

template <std::floating_point Real>
void AdapterSet<Real>::set_overrides_trainable(bool trainable) {
    for (auto& [name, p] : overrides_) mark_trainable(p, trainable);
}

template <std::floating_point Real>
AdapterSet<Real> AdapterSet<Real>::clone() const {
    auto copy_param = [](const Parameter<Real>& p) {
        return Parameter<Real>{p.name, p.tensor.clone_with_grad(p.tensor.requires_grad()),
                               p.trainable, p.decay_target};
    };
    AdapterSet out;
    out.kind_ = kind_;
    for (const auto& [name, adapter] : adapters_) {
        out.adapters_.emplace(name, std::visit(
                                        [&copy_param](const auto& a) -> SiteAdapter<Real> {
                                            auto c = a;
                                            using T = std::decay_t<decltype(a)>;
                                            if constexpr (std::is_same_v<T, PropulsionAdapter<Real>>) {
                                                c.z = copy_param(a.z);
                                            } else if constexpr (std::is_same_v<
                                                                     T, MultiPropulsionAdapter<Real>>) {
                                                for (auto& z : c.vectors) z = copy_param(z);
                                            } else {
                                                c.a = copy_param(a.a);
                                                c.b = copy_param(a.b);
                                            }
                                            return c;
                                        },
                                        adapter));
    }
    for (const auto& [name, p] : overrides_) out.overrides_.emplace(name, copy_param(p));
    return out;
}

template <std::floating_point Real>
void AdapterSet<Real>::validate_against(const FrozenModel<Real>& model) const {
    const auto& sites = model.sites();
    for (const auto& [name, adapter] : adapters_) {
        const auto& site = std::visit([](const auto& a) -> const AttachmentSite& { return a.site; },
                                      adapter);
        if (std::find(sites.begin(), sites.end(), site) == sites.end()) {
            throw AttachmentError("model has no site " + name + " with widths " +
                                  std::to_string(site.d_in) + "x" + std::to_string(site.d_out));
        }
    }
    for (const auto& [name, p] : overrides_) {
        if (!model.has_parameter(name)) throw AttachmentError("model has no parameter " + name);
        if (model.parameter(name).tensor.shape() != p.tensor.shape()) {
            throw AttachmentError("override " + name + " has shape " + shape_str(p.tensor.shape()) +
                                  ", model has " + shape_str(model.parameter(name).tensor.shape()));
        }
    }
}

template <std::floating_point Real>
void AdapterSet<Real>::clamp_scaling(Real lo, Real hi) {
    auto clamp = [lo, hi](Parameter<Real>& p) {
        for (auto& v : p.tensor.mutable_data()) v = std::clamp(v, lo, hi);
    };
    for (auto& [name, adapter] : adapters_) {
        if (auto* a = std::get_if<PropulsionAdapter<Real>>(&adapter)) clamp(a->z);
        if (auto* a = std::get_if<MultiPropulsionAdapter<Real>>(&adapter)) {
            for (auto& z : a->vectors) clamp(z);
        }
    }
}

template <std::floating_point Real>
PreparedAdapters<Real> AdapterSet<Real>::prepare() const {
    return PreparedAdapters<Real>(*this);
}

template <std::floating_point Real>
PreparedAdapters<Real>::PreparedAdapters(const AdapterSet<Real>& set) : set_(&set) {
    for (const auto& [name, adapter] : set.adapters()) {
        if (const auto* a = std::get_if<PropulsionAdapter<Real>>(&adapter)) {
            scales_[name] = {pow_int(a->z.tensor, a->degree)};
        } else if (const auto* a = std::get_if<MultiPropulsionAdapter<Real>>(&adapter)) {
            auto& out = scales_[name];
            for (const auto& z : a->vectors) out.push_back(pow_int(z.tensor, a->degree));
        }
    }
}

template <std::floating_point Real>
Tensor<Real> PreparedAdapters<Real>::apply(const AttachmentSite& site, const SiteInput<Real>& input,
                                           const Tensor<Real>& v) const {
    const auto* adapter = set_->find(site);
    if (!adapter) return v;
    if (const auto* lora = std::get_if<LoRAAdapter<Real>>(adapter)) {
        const auto& a = lora->a.tensor;
        const auto low = input.dense ? matmul(*input.dense, a) : gather_rows(a, input.ids);
        return add(v, scale(matmul(low, lora->b.tensor), lora->scaling));
    }
    const auto& scales = scales_.at(site.name());
    std::vector<Tensor<Real>> candidates;
    candidates.reserve(scales.size());
    for (const auto& s : scales) {
        check_width(v, s, site.name());
        candidates.push_back(ew_mul(v, s));
    }
    if (candidates.size() == 1) return candidates.front();
    return pool(candidates, std::get<MultiPropulsionAdapter<Real>>(*adapter).pooling);
}

// ---------------------------------------------------------------------------
// Budgets

const std::vector<std::string>& budget_methods() {
    static const std::vector<std::string> methods = {
        "propulsion", "multi_propulsion", "full_ft", "lora",   "adalora",
        "loha",       "ia3",              "prompt",  "prefix", "bitfit"};
    return methods;
}

ParamBudget count_trainable(std::string_view method, const ModelSpec& spec,
                            std::span<const AttachmentSite> sites, const BudgetOptions& options) {
    const auto m = normalize(method);
    const std::size_t r = options.rank;
    const std::size_t p = options.num_vectors;
    ParamBudget out;

    auto per_site = [&](std::string name, std::string formula, auto count) {
        out.method = std::move(name);
        out.formula = std::move(formula);
        for (const auto& s : sites) {
            const std::size_t c = count(s.d_in, s.d_out);
            out.per_site.push_back({s.name(), s.d_in, s.d_out, c});
            out.total += c;
        }
    };
    auto global = [&](std::string name, std::string formula, std::size_t count) {
        out.method = std::move(name);
        out.formula = std::move(formula);
        out.per_site.push_back({"global", spec.d_model, spec.d_model, count});
        out.total = count;
    };

    if (m == "propulsion") {
        per_site("propulsion", "d_out", [](std::size_t, std::size_t o) { return o; });
    } else if (m == "multipropulsion") {
        per_site("multi_propulsion", "p*d_out", [p](std::size_t, std::size_t o) { return p * o; });
    } else if (m == "fullft" || m == "ft") {
        per_site("full_ft", "d_in*d_out", [](std::size_t i, std::size_t o) { return i * o; });
    } else if (m == "lora") {
        per_site("lora", "r*(d_in+d_out)", [r](std::size_t i, std::size_t o) { return r * (i + o); });
    } else if (m == "adalora") {
        per_site("adalora", "r*(d_in+d_out)+r^2",
                 [r](std::size_t i, std::size_t o) { return r * (i + o) + r * r; });
    } else if (m == "loha") {
        per_site("loha", "2*r*(d_in+d_out)",
                 [r](std::size_t i, std::size_t o) { return 2 * r * (i + o); });
    } else if (m == "ia3") {
        per_site("ia3", "3*d_out", [](std::size_t, std::size_t o) { return 3 * o; });
    } else if (m == "bitfit") {
        per_site("bitfit", "d_out", [](std::size_t, std::size_t o) { return o; });
    } else if (m == "prompt") {
        global("prompt", "l_p*d", options.prompt_length * spec.d_model);
    } else if (m == "prefix") {
        global("prefix", "L*l_p*d", spec.depth * options.prompt_length * spec.d_model);
    } else {
        throw ConfigError("budget.methods: unknown method '" + std::string(method) + "'");
    }
    return out;
}

#define PLAB_INSTANTIATE_PEFT(Real)                                                               \
    template Tensor<Real> propulsion_apply(const Tensor<Real>&, const Tensor<Real>&, int);        \
    template Tensor<Real> pool(const std::vector<Tensor<Real>>&, Pooling);                        \
    template Tensor<Real> multi_propulsion_apply(const Tensor<Real>&,                             \
                                                 const std::vector<Tensor<Real>>&, int, Pooling); \
    template Tensor<Real> lora_apply(const Tensor<Real>&, const Tensor<Real>&,                    \
                                     const Tensor<Real>&, const Tensor<Real>&, Real);             \
    template Tensor<Real> materialize_effective_weight(const Tensor<Real>&, const Tensor<Real>&,  \
                                                       int);                                      \
    template PropulsionAdapter<Real> make_propulsion(const AttachmentSite&, int);                 \
    template MultiPropulsionAdapter<Real> make_multi_propulsion(const AttachmentSite&, int,       \
                                                                std::size_t, Pooling);            \
    template LoRAAdapter<Real> make_lora(const AttachmentSite&, std::size_t, Real,                \
                                         std::mt19937_64&);                                       \
    template class AdapterSet<Real>;                                                              \
    template class PreparedAdapters<Real>;

PLAB_INSTANTIATE_PEFT(float)
PLAB_INSTANTIATE_PEFT(double)

}  // namespace plab
