#include "plab/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <numeric>

#include "plab/error.hpp"
#include "plab/peft.hpp"

namespace plab {

namespace {

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::kLinear:
            return "linear";
        case ModelKind::kMlp:
            return "mlp";
        case ModelKind::kTransformer:
            return "transformer";
    }
    return "?";
}

std::string_view to_string(SiteKind kind) {
    switch (kind) {
        case SiteKind::kEmbedding:
            return "Embedding";
        case SiteKind::kKey:
            return "Key";
        case SiteKind::kQuery:
            return "Query";
        case SiteKind::kValue:
            return "Value";
        case SiteKind::kMlp:
            return "MLP";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view text) {
    const auto t = lower(text);
    if (t == "linear") return ModelKind::kLinear;
    if (t == "mlp") return ModelKind::kMlp;
    if (t == "transformer") return ModelKind::kTransformer;
    throw ConfigError("unknown model kind '" + std::string(text) + "'");
}

SiteKind parse_site_kind(std::string_view text) {
    const auto t = lower(text);
    if (t == "embedding") return SiteKind::kEmbedding;
    if (t == "key" || t == "k") return SiteKind::kKey;
    if (t == "query" || t == "q") return SiteKind::kQuery;
    if (t == "value" || t == "v") return SiteKind::kValue;
    if (t == "mlp") return SiteKind::kMlp;
    throw ConfigError("unknown site group '" + std::string(text) + "'");
}

void ModelSpec::validate() const {
    auto positive = [](std::size_t v, const char* field) {
        if (v < 1) throw ConfigError(std::string("model.") + field + ": must be >= 1");
    };
    positive(depth, "depth");
    positive(d_model, "d_model");
    positive(n_heads, "n_heads");
    if (kind != ModelKind::kLinear) positive(n_classes, "n_classes");
    if (kind == ModelKind::kLinear && depth != 1) {
        throw ConfigError("model.depth: linear models have exactly one layer");
    }
    if (kind == ModelKind::kTransformer) {
        positive(vocab_size, "vocab_size");
        positive(max_seq, "max_seq");
        if (d_model % n_heads != 0) {
            throw ConfigError("model.n_heads: d_model (" + std::to_string(d_model) +
                              ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
        }
    }
}

std::string AttachmentSite::name() const {
    if (kind == SiteKind::kEmbedding) return "embed";
    const std::string prefix = "layer" + std::to_string(layer);
    switch (kind) {
        case SiteKind::kKey:
            return prefix + ".attn.key";
        case SiteKind::kQuery:
            return prefix + ".attn.query";
        case SiteKind::kValue:
            return prefix + ".attn.value";
        default:
            return prefix + ".mlp";
    }
}

std::vector<AttachmentSite> enumerate_sites(const ModelSpec& spec) {
    spec.validate();
    std::vector<AttachmentSite> sites;
    switch (spec.kind) {
        case ModelKind::kLinear:
            sites.push_back({1, SiteKind::kMlp, spec.feature_dim(), spec.d_model});
            break;
        case ModelKind::kMlp:
            for (std::size_t l = 1; l <= spec.depth; ++l) {
                sites.push_back(
                    {l, SiteKind::kMlp, l == 1 ? spec.feature_dim() : spec.d_model, spec.d_model});
            }
            break;
        case ModelKind::kTransformer:
            sites.push_back({0, SiteKind::kEmbedding, spec.vocab_size, spec.d_model});
            for (std::size_t l = 1; l <= spec.depth; ++l) {
                sites.push_back({l, SiteKind::kQuery, spec.d_model, spec.d_model});
                sites.push_back({l, SiteKind::kKey, spec.d_model, spec.d_model});
                sites.push_back({l, SiteKind::kValue, spec.d_model, spec.d_model});
                sites.push_back({l, SiteKind::kMlp, spec.d_model, spec.ff_dim()});
            }
            break;
    }
    return sites;
}

std::vector<AttachmentSite> select_sites(std::span<const AttachmentSite> sites,
                                         std::string_view group) {
    const auto g = lower(group);
    if (g == "all") return {sites.begin(), sites.end()};
    if (g == "none") return {};
    std::vector<SiteKind> kinds;
    std::size_t start = 0;
    while (start <= group.size()) {
        const auto plus = group.find('+', start);
        const auto part = group.substr(start, plus == std::string_view::npos ? plus : plus - start);
        if (lower(part) == "attn") {
            kinds.insert(kinds.end(), {SiteKind::kKey, SiteKind::kQuery, SiteKind::kValue});
        } else {
            kinds.push_back(parse_site_kind(part));
        }
        if (plus == std::string_view::npos) break;
        start = plus + 1;
    }
    std::vector<AttachmentSite> out;
    for (const auto& s : sites) {
        if (std::find(kinds.begin(), kinds.end(), s.kind) != kinds.end()) out.push_back(s);
    }
    return out;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelSpec& spec) {
    spec.validate();
    std::vector<std::pair<std::string, Shape>> layout;
    const std::size_t d = spec.d_model;
    switch (spec.kind) {
        case ModelKind::kLinear:
            layout.push_back({"layer1.mlp.weight", {spec.feature_dim(), d}});
            break;
        case ModelKind::kMlp:
            for (std::size_t l = 1; l <= spec.depth; ++l) {
                const std::string p = "layer" + std::to_string(l) + ".mlp.";
                layout.push_back({p + "weight", {l == 1 ? spec.feature_dim() : d, d}});
                layout.push_back({p + "bias", {d}});
            }
            layout.push_back({"head.weight", {d, spec.n_classes}});
            layout.push_back({"head.bias", {spec.n_classes}});
            break;
        case ModelKind::kTransformer:
            layout.push_back({"embed.token", {spec.vocab_size, d}});
            layout.push_back({"embed.position", {spec.max_seq, d}});
            for (std::size_t l = 1; l <= spec.depth; ++l) {
                const std::string p = "layer" + std::to_string(l) + ".";
                for (const char* proj : {"attn.query.", "attn.key.", "attn.value.", "attn.out."}) {
                    layout.push_back({p + proj + "weight", {d, d}});
                    layout.push_back({p + proj + "bias", {d}});
                }
                layout.push_back({p + "mlp.up.weight", {d, spec.ff_dim()}});
                layout.push_back({p + "mlp.up.bias", {spec.ff_dim()}});
                layout.push_back({p + "mlp.down.weight", {spec.ff_dim(), d}});
                layout.push_back({p + "mlp.down.bias", {d}});
            }
            layout.push_back({"head.weight", {d, spec.n_classes}});
            layout.push_back({"head.bias", {spec.n_classes}});
            break;
    }
    return layout;
}

// ---------------------------------------------------------------------------
// FrozenModel

template <std::floating_point Real>
FrozenModel<Real>::FrozenModel(ModelSpec spec, std::vector<Parameter<Real>> params)
    : spec_(std::move(spec)), params_(std::move(params)), sites_(enumerate_sites(spec_)) {
    for (std::size_t i = 0; i < params_.size(); ++i) index_.emplace(params_[i].name, i);
    freeze_all();
}

template <std::floating_point Real>
FrozenModel<Real> FrozenModel<Real>::build(const ModelSpec& spec) {
    const auto layout = parameter_layout(spec);
    std::mt19937_64 rng(spec.seed);
    std::vector<Parameter<Real>> params;
    params.reserve(layout.size());
    std::size_t fan_in = 1;
    for (const auto& [name, shape] : layout) {
        // Weights set the fan-in used by the bias that follows them.
        if (name.starts_with("embed.")) {
            fan_in = spec.d_model;
        } else if (shape.size() == 2) {
            fan_in = shape[0];
        }
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
        std::vector<Real> values(shape_numel(shape));
        for (auto& v : values) v = static_cast<Real>(normal(rng));
        params.push_back({name, Tensor<Real>(shape, std::move(values)), false, Real{0}});
    }
    return FrozenModel(spec, std::move(params));
}

template <std::floating_point Real>
FrozenModel<Real> FrozenModel<Real>::from_parameters(const ModelSpec& spec,
                                                     std::vector<Parameter<Real>> params) {
    const auto layout = parameter_layout(spec);
    if (params.size() != layout.size()) {
        throw ConfigError("model expects " + std::to_string(layout.size()) + " parameters, got " +
                          std::to_string(params.size()));
    }
    std::vector<Parameter<Real>> ordered;
    ordered.reserve(layout.size());
    for (const auto& [name, shape] : layout) {
        auto it = std::find_if(params.begin(), params.end(),
                               [&](const auto& p) { return p.name == name; });
        if (it == params.end()) throw ConfigError("missing parameter '" + name + "'");
        if (it->tensor.shape() != shape) {
            throw DimensionError("parameter '" + name + "' has shape " +
                                 shape_str(it->tensor.shape()) + ", expected " + shape_str(shape));
        }
        ordered.push_back({name, it->tensor.clone(), false, Real{0}});
    }
    return FrozenModel(spec, std::move(ordered));
}

template <std::floating_point Real>
const Parameter<Real>& FrozenModel<Real>::parameter(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ContractError("no parameter named '" + std::string(name) + "'");
    return params_[it->second];
}

template <std::floating_point Real>
bool FrozenModel<Real>::has_parameter(std::string_view name) const {
    return index_.contains(std::string(name));
}

template <std::floating_point Real>
std::vector<AttachmentSite> FrozenModel<Real>::site_group(std::string_view group) const {
    return select_sites(sites_, group);
}

template <std::floating_point Real>
void FrozenModel<Real>::freeze_all() {
    for (auto& p : params_) {
        p.trainable = false;
        p.tensor.set_requires_grad(false);
    }
}

template <std::floating_point Real>
std::size_t FrozenModel<Real>::batch_size(const Batch<Real>& batch) const {
    if (const auto* dense = std::get_if<Tensor<Real>>(&batch)) return dense->rows();
    return std::get<TokenBatch>(batch).size();
}

template <std::floating_point Real>
Tensor<Real> FrozenModel<Real>::forward(const Batch<Real>& batch) const {
    return forward(batch, AdapterSet<Real>{});
}

namespace {

template <typename Real>
struct ForwardPass {
    const FrozenModel<Real>& model;
    const AdapterSet<Real>& adapters;
    const PreparedAdapters<Real>& prepared;
    const ForwardOptions& options;

    const Tensor<Real>& param(const std::string& name) const {
        return adapters.resolve(model.parameter(name));
    }

    Tensor<Real> drop(const Tensor<Real>& t) const {
        if (!options.train || options.dropout <= 0.0) return t;
        if (!options.rng) throw ContractError("dropout in train mode needs an rng");
        return dropout(t, static_cast<Real>(options.dropout), *options.rng);
    }

    // x W (+ b), then the site's adapter.
    Tensor<Real> affine_site(const AttachmentSite& site, const Tensor<Real>& x,
                             const std::string& prefix, bool has_bias) const {
        auto v = matmul(x, param(prefix + "weight"));
        if (has_bias) v = add(v, param(prefix + "bias"));
        return prepared.apply(site, SiteInput<Real>{&x, {}}, v);
    }

    Tensor<Real> affine(const Tensor<Real>& x, const std::string& prefix) const {
        return add(matmul(x, param(prefix + "weight")), param(prefix + "bias"));
    }

    const AttachmentSite& site(std::size_t layer, SiteKind kind) const {
        for (const auto& s : model.sites()) {
            if (s.layer == layer && s.kind == kind) return s;
        }
        throw ContractError("model has no such site");
    }

    Tensor<Real> dense(const Tensor<Real>& x) const {
        const auto& spec = model.spec();
        if (x.dim() != 2 || x.cols() != spec.feature_dim()) {
            throw DimensionError("expected features [batch x " + std::to_string(spec.feature_dim()) +
                                 "], got " + shape_str(x.shape()));
        }
        if (spec.kind == ModelKind::kLinear) {
            return affine_site(site(1, SiteKind::kMlp), x, "layer1.mlp.", false);
        }
        Tensor<Real> h = x;
        for (std::size_t l = 1; l <= spec.depth; ++l) {
            const std::string prefix = "layer" + std::to_string(l) + ".mlp.";
            h = drop(gelu(affine_site(site(l, SiteKind::kMlp), h, prefix, true)));
        }
        return affine(h, "head.");
    }

    Tensor<Real> sequence(const std::vector<std::size_t>& ids) const {
        const auto& spec = model.spec();
        if (ids.empty() || ids.size() > spec.max_seq) {
            throw DimensionError("sequence length " + std::to_string(ids.size()) +
                                 " outside [1, " + std::to_string(spec.max_seq) + "]");
        }
        const std::size_t d = spec.d_model;
        const std::size_t heads = spec.n_heads;
        const std::size_t dh = d / heads;
        const Real attn_scale = Real{1} / std::sqrt(static_cast<Real>(dh));

        std::vector<std::size_t> positions(ids.size());
        std::iota(positions.begin(), positions.end(), std::size_t{0});
        auto tokens = gather_rows(param("embed.token"), std::span<const std::size_t>(ids));
        tokens = prepared.apply(site(0, SiteKind::kEmbedding),
                                SiteInput<Real>{nullptr, std::span<const std::size_t>(ids)}, tokens);
        auto x = add(tokens, gather_rows(param("embed.position"),
                                         std::span<const std::size_t>(positions)));

        for (std::size_t l = 1; l <= spec.depth; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            const auto q = affine_site(site(l, SiteKind::kQuery), x, p + "attn.query.", true);
            const auto k = affine_site(site(l, SiteKind::kKey), x, p + "attn.key.", true);
            const auto v = affine_site(site(l, SiteKind::kValue), x, p + "attn.value.", true);
            std::vector<Tensor<Real>> head_out;
            head_out.reserve(heads);
            for (std::size_t h = 0; h < heads; ++h) {
                const auto qh = heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
                const auto kh = heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
                const auto vh = heads == 1 ? v : slice_cols(v, h * dh, (h + 1) * dh);
                const auto attn = softmax_rows(scale(matmul(qh, transpose(kh)), attn_scale));
                head_out.push_back(matmul(attn, vh));
            }
            const auto o = heads == 1 ? head_out.front() : concat_cols(head_out);
            x = add(x, drop(affine(o, p + "attn.out.")));

            const auto up = affine_site(site(l, SiteKind::kMlp), x, p + "mlp.up.", true);
            x = add(x, drop(affine(gelu(up), p + "mlp.down.")));
        }
        return affine(mean_rows(x), "head.");
    }
};

}  // namespace

template <std::floating_point Real>
Tensor<Real> FrozenModel<Real>::forward(const Batch<Real>& batch, const AdapterSet<Real>& adapters,
                                        const ForwardOptions& options) const {
    adapters.validate_against(*this);
    const auto prepared = adapters.prepare();
    ForwardPass<Real> pass{*this, adapters, prepared, options};
    if (const auto* dense = std::get_if<Tensor<Real>>(&batch)) {
        if (spec_.kind == ModelKind::kTransformer) {
            throw ContractError("transformer models take token batches");
        }
        return pass.dense(*dense);
    }
    if (spec_.kind != ModelKind::kTransformer) {
        throw ContractError("dense models take feature matrices");
    }
    const auto& seqs = std::get<TokenBatch>(batch);
    if (seqs.empty()) throw DimensionError("empty token batch");
    std::vector<Tensor<Real>> logits;
    logits.reserve(seqs.size());
    for (const auto& ids : seqs) logits.push_back(pass.sequence(ids));
    return logits.size() == 1 ? logits.front() : concat_rows(logits);
}

template <std::floating_point Real>
std::uint64_t parameter_checksum(std::span<const Parameter<Real>> params) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* bytes, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : params) {
        mix(p.name.data(), p.name.size());
        const auto values = p.tensor.data();
        mix(values.data(), values.size_bytes());
    }
    return h;
}

template class FrozenModel<float>;
template class FrozenModel<double>;
template std::uint64_t parameter_checksum(std::span<const Parameter<float>>);
template std::uint64_t parameter_checksum(std::span<const Parameter<double>>);

}  // namespace plab
