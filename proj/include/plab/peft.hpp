#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "plab/model.hpp"
#include "plab/tensor.hpp"

namespace plab {

enum class AdapterKind { kNone, kPropulsion, kMultiPropulsion, kLoRA, kBitFit, kFullFT };

enum class Pooling { kAverage, kMax, kMin, kL2 };

std::string_view to_string(AdapterKind kind);
std::string_view to_string(Pooling pooling);
AdapterKind parse_adapter_kind(std::string_view text);
Pooling parse_pooling(std::string_view text);

// ---------------------------------------------------------------------------
// Transforms

/// Row j of the result is v_j * z^degree (z broadcast over rows).
template <std::floating_point Real>
Tensor<Real> propulsion_apply(const Tensor<Real>& v, const Tensor<Real>& z, int degree);

/// Elementwise pooling of same-shape candidates.
///
/// Average and Max/Min are the usual elementwise reductions; Max/Min route the
/// gradient to the first candidate attaining the extremum. L2 is the
/// sign-preserving root-mean-square sign(mean x) * sqrt(mean x^2), which
/// reduces to the identity when all candidates agree.
template <std::floating_point Real>
Tensor<Real> pool(const std::vector<Tensor<Real>>& candidates, Pooling pooling);

template <std::floating_point Real>
Tensor<Real> multi_propulsion_apply(const Tensor<Real>& v, const std::vector<Tensor<Real>>& vectors,
                                    int degree, Pooling pooling);

/// x W + scaling * (x A) B.
template <std::floating_point Real>
Tensor<Real> lora_apply(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& a,
                        const Tensor<Real>& b, Real scaling);

/// W diag(z^degree): a plain forward through it equals propulsion_apply(x W, z, degree).
template <std::floating_point Real>
Tensor<Real> materialize_effective_weight(const Tensor<Real>& w, const Tensor<Real>& z, int degree);

// ---------------------------------------------------------------------------
// Adapters

template <std::floating_point Real>
struct PropulsionAdapter {
    AttachmentSite site;
    Parameter<Real> z;  // length site.d_out, initialised to ones
    int degree = 1;
};

template <std::floating_point Real>
struct MultiPropulsionAdapter {
    AttachmentSite site;
    std::vector<Parameter<Real>> vectors;
    int degree = 1;
    Pooling pooling = Pooling::kAverage;
};

template <std::floating_point Real>
struct LoRAAdapter {
    AttachmentSite site;
    Parameter<Real> a;  // d_in x r, seeded Gaussian
    Parameter<Real> b;  // r x d_out, zeros
    std::size_t rank = 1;
    Real scaling = 1;
};

template <std::floating_point Real>
using SiteAdapter =
    std::variant<PropulsionAdapter<Real>, MultiPropulsionAdapter<Real>, LoRAAdapter<Real>>;

template <std::floating_point Real>
PropulsionAdapter<Real> make_propulsion(const AttachmentSite& site, int degree);

template <std::floating_point Real>
MultiPropulsionAdapter<Real> make_multi_propulsion(const AttachmentSite& site, int degree,
                                                   std::size_t count, Pooling pooling);

template <std::floating_point Real>
LoRAAdapter<Real> make_lora(const AttachmentSite& site, std::size_t rank, Real alpha,
                            std::mt19937_64& rng);

/// Declarative description of the adapters of one run.
struct AdapterConfig {
    AdapterKind kind = AdapterKind::kPropulsion;
    std::string sites = "All";
    int degree = 1;
    std::size_t num_vectors = 1;
    Pooling pooling = Pooling::kAverage;
    std::size_t rank = 8;
    double alpha = 0.0;  // 0: alpha = rank

    void validate() const;
    bool operator==(const AdapterConfig&) const = default;
};

template <std::floating_point Real>
class PreparedAdapters;

/// Input seen by a site: dense activations or the token ids of an embedding lookup.
template <std::floating_point Real>
struct SiteInput {
    const Tensor<Real>* dense = nullptr;
    std::span<const std::size_t> ids;
};

/// Adapters attached to a model, at most one per site, plus trainable
/// overrides of base parameters (BitFit, full fine-tuning).
template <std::floating_point Real>
class AdapterSet {
   public:
    AdapterSet() = default;

    static AdapterSet propulsion(std::span<const AttachmentSite> sites, int degree);
    static AdapterSet multi_propulsion(std::span<const AttachmentSite> sites, int degree,
                                       std::size_t count, Pooling pooling);
    static AdapterSet lora(std::span<const AttachmentSite> sites, std::size_t rank, Real alpha,
                           std::uint64_t seed);
    /// Trainable copies of every bias; weights stay frozen.
    static AdapterSet bitfit(const FrozenModel<Real>& model);
    static AdapterSet full_finetune(const FrozenModel<Real>& model);
    static AdapterSet from_config(const FrozenModel<Real>& model, const AdapterConfig& config,
                                  std::uint64_t seed);

    AdapterKind kind() const { return kind_; }
    std::size_t size() const { return adapters_.size(); }
    bool empty() const { return adapters_.empty() && overrides_.empty(); }

    void attach(SiteAdapter<Real> adapter);
    void detach(const AttachmentSite& site);
    const SiteAdapter<Real>* find(const AttachmentSite& site) const;
    const std::map<std::string, SiteAdapter<Real>>& adapters() const { return adapters_; }

    void add_override(Parameter<Real> param);
    const std::map<std::string, Parameter<Real>>& overrides() const { return overrides_; }
    /// Tensor to use for a base parameter: its override when present.
    const Tensor<Real>& resolve(const Parameter<Real>& base) const;

    /// Every parameter owned by the set (adapter vectors, LoRA factors, overrides).
    std::vector<Parameter<Real>> parameters() const;
    std::vector<Parameter<Real>> trainable_parameters() const;
    std::size_t trainable_count() const;
    void set_trainable(bool trainable);
    void set_adapters_trainable(bool trainable);
    void set_overrides_trainable(bool trainable);

    /// Deep copy; the copy shares no storage with this set.
    AdapterSet clone() const;

    /// Throws AttachmentError when a site is missing from the model or widths differ.
    void validate_against(const FrozenModel<Real>& model) const;

    /// Clamp every propulsion vector into [lo, hi].
    void clamp_scaling(Real lo, Real hi);

    /// Records z^k once per forward pass.
    PreparedAdapters<Real> prepare() const;

   private:
    void set_kind(AdapterKind kind);

    AdapterKind kind_ = AdapterKind::kNone;
    std::map<std::string, SiteAdapter<Real>> adapters_;
    std::map<std::string, Parameter<Real>> overrides_;
};

template <std::floating_point Real>
class PreparedAdapters {
   public:
    explicit PreparedAdapters(const AdapterSet<Real>& set);

    /// Transform the raw site output `v`; identity when no adapter is attached.
    Tensor<Real> apply(const AttachmentSite& site, const SiteInput<Real>& input,
                       const Tensor<Real>& v) const;

   private:
    const AdapterSet<Real>* set_;
    std::map<std::string, std::vector<Tensor<Real>>> scales_;
};

// ---------------------------------------------------------------------------
// Budgets

struct BudgetOptions {
    std::size_t rank = 8;
    std::size_t num_vectors = 1;
    std::size_t prompt_length = 10;
};

struct SiteBudget {
    std::string where;  // site name, or "global" for per-model formulas
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    std::size_t count = 0;
};

struct ParamBudget {
    std::string method;
    std::string formula;
    std::vector<SiteBudget> per_site;
    std::size_t total = 0;
};

/// Methods: propulsion, multi_propulsion, full_ft, lora, adalora, loha, ia3,
/// prompt, prefix, bitfit. Throws ConfigError for anything else.
const std::vector<std::string>& budget_methods();

ParamBudget count_trainable(std::string_view method, const ModelSpec& spec,
                            std::span<const AttachmentSite> sites, const BudgetOptions& options);

}  // namespace plab
