#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "plab/tensor.hpp"

namespace plab {

enum class ModelKind {
    kLinear,  // one bias-free layer, logits = x W (width d_model)
    kMlp,
    kTransformer,
};

enum class SiteKind { kEmbedding, kKey, kQuery, kValue, kMlp };

std::string_view to_string(ModelKind kind);
std::string_view to_string(SiteKind kind);
ModelKind parse_model_kind(std::string_view text);
SiteKind parse_site_kind(std::string_view text);

struct ModelSpec {
    ModelKind kind = ModelKind::kMlp;
    std::size_t depth = 2;
    std::size_t d_model = 8;
    std::size_t d_ff = 0;  // 0: 4 * d_model for transformers, unused otherwise
    std::size_t n_heads = 1;
    std::size_t vocab_size = 0;
    std::size_t max_seq = 0;
    std::size_t n_classes = 2;
    std::size_t input_dim = 0;  // dense feature width; 0 means d_model
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    std::size_t feature_dim() const { return input_dim ? input_dim : d_model; }
    std::size_t ff_dim() const { return d_ff ? d_ff : 4 * d_model; }
    std::size_t output_dim() const { return kind == ModelKind::kLinear ? d_model : n_classes; }

    bool operator==(const ModelSpec&) const = default;
};

/// A layer output that an adapter may intercept. Layer 0 is the embedding.
struct AttachmentSite {
    std::size_t layer = 0;
    SiteKind kind = SiteKind::kMlp;
    std::size_t d_in = 0;
    std::size_t d_out = 0;

    /// Dotted path, e.g. "layer3.attn.value" or "embed".
    std::string name() const;

    auto operator<=>(const AttachmentSite&) const = default;
};

/// Every site a model built from `spec` exposes, in forward order.
std::vector<AttachmentSite> enumerate_sites(const ModelSpec& spec);

/// Expands a site group: "All", "Attn" (Key, Query, Value), a single kind
/// ("Key", "MLP", ...), or kinds joined with '+' ("Key+Value").
std::vector<AttachmentSite> select_sites(std::span<const AttachmentSite> sites,
                                         std::string_view group);

using TokenBatch = std::vector<std::vector<std::size_t>>;

/// Dense features [batch x input_dim] or one token sequence per example.
template <std::floating_point Real>
using Batch = std::variant<Tensor<Real>, TokenBatch>;

struct ForwardOptions {
    bool train = false;
    double dropout = 0.0;
    std::mt19937_64* rng = nullptr;  // required when train && dropout > 0
};

template <std::floating_point Real>
class AdapterSet;

/// Frozen base network. Immutable once built; adapters carry all mutable state.
template <std::floating_point Real>
class FrozenModel {
   public:
    /// Seeded N(0, 1/d_in) weights; all parameters frozen.
    static FrozenModel build(const ModelSpec& spec);

    /// Assemble from explicit parameters (checkpoints, hand-built tests).
    /// Names and shapes must match what build() would produce.
    static FrozenModel from_parameters(const ModelSpec& spec, std::vector<Parameter<Real>> params);

    const ModelSpec& spec() const { return spec_; }
    const std::vector<Parameter<Real>>& parameters() const { return params_; }
    const Parameter<Real>& parameter(std::string_view name) const;
    bool has_parameter(std::string_view name) const;
    const std::vector<AttachmentSite>& sites() const { return sites_; }
    std::vector<AttachmentSite> site_group(std::string_view group) const;

    void freeze_all();

    /// Logits [batch x output_dim].
    Tensor<Real> forward(const Batch<Real>& batch) const;
    Tensor<Real> forward(const Batch<Real>& batch, const AdapterSet<Real>& adapters,
                         const ForwardOptions& options = {}) const;

    std::size_t batch_size(const Batch<Real>& batch) const;

   private:
    FrozenModel(ModelSpec spec, std::vector<Parameter<Real>> params);

    ModelSpec spec_;
    std::vector<Parameter<Real>> params_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<AttachmentSite> sites_;
};

/// Name and shape of every parameter build() creates, in creation order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelSpec& spec);

/// FNV-1a over names and raw values; detects any change to stored weights.
template <std::floating_point Real>
std::uint64_t parameter_checksum(std::span<const Parameter<Real>> params);

}  // namespace plab
