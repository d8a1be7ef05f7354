#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "plab/checkpoint.hpp"
#include "plab/error.hpp"
#include "plab/model.hpp"
#include "plab/peft.hpp"

using namespace plab;
using T = Tensor<double>;

namespace {

ModelSpec mlp_spec(std::size_t depth = 2, std::size_t d = 8) {
    ModelSpec s;
    s.kind = ModelKind::kMlp;
    s.depth = depth;
    s.d_model = d;
    s.seed = 11;
    return s;
}

ModelSpec transformer_spec(std::size_t depth = 2) {
    ModelSpec s;
    s.kind = ModelKind::kTransformer;
    s.depth = depth;
    s.d_model = 8;
    s.n_heads = 2;
    s.vocab_size = 20;
    s.max_seq = 6;
    s.seed = 5;
    return s;
}

std::vector<double> values(const T& t) {
    return {t.data().begin(), t.data().end()};
}

double gelu_ref(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

}  // namespace

TEST(Build, MlpSites) {
    auto m = FrozenModel<double>::build(mlp_spec());
    ASSERT_EQ(m.sites().size(), 2u);
    for (const auto& s : m.sites()) {
        EXPECT_EQ(s.kind, SiteKind::kMlp);
        EXPECT_EQ(s.d_out, 8u);
    }
    EXPECT_EQ(m.sites()[0].name(), "layer1.mlp");
}

TEST(Build, DeterministicWeights) {
    auto a = FrozenModel<double>::build(mlp_spec());
    auto b = FrozenModel<double>::build(mlp_spec());
    EXPECT_EQ(parameter_checksum<double>(a.parameters()), parameter_checksum<double>(b.parameters()));
    auto other = mlp_spec();
    other.seed = 12;
    auto c = FrozenModel<double>::build(other);
    EXPECT_NE(parameter_checksum<double>(a.parameters()), parameter_checksum<double>(c.parameters()));
}

TEST(Build, InitialisationVariance) {
    ModelSpec s = mlp_spec(1, 256);
    auto m = FrozenModel<double>::build(s);
    const auto w = m.parameter("layer1.mlp.weight").tensor.data();
    double sq = 0;
    for (double v : w) sq += v * v;
    EXPECT_NEAR(sq / static_cast<double>(w.size()), 1.0 / 256.0, 0.1 / 256.0);
}

TEST(Build, AllFrozen) {
    auto m = FrozenModel<double>::build(transformer_spec());
    for (const auto& p : m.parameters()) {
        EXPECT_FALSE(p.trainable) << p.name;
        EXPECT_FALSE(p.tensor.requires_grad()) << p.name;
    }
}

TEST(Build, InvalidSpec) {
    auto s = transformer_spec();
    s.n_heads = 3;
    EXPECT_THROW(FrozenModel<double>::build(s), ConfigError);
    auto z = mlp_spec();
    z.d_model = 0;
    EXPECT_THROW(FrozenModel<double>::build(z), ConfigError);
}

TEST(Sites, TransformerCounts) {
    auto m = FrozenModel<double>::build(transformer_spec());
    EXPECT_EQ(m.sites().size(), 9u);
    EXPECT_EQ(m.site_group("All").size(), 9u);
    EXPECT_EQ(m.site_group("Key").size(), 2u);
    EXPECT_EQ(m.site_group("Attn").size(), 6u);
    EXPECT_EQ(m.site_group("Key+Value").size(), 4u);
    EXPECT_EQ(m.site_group("Embedding").size(), 1u);
    EXPECT_THROW(m.site_group("Bogus"), ConfigError);
}

TEST(Sites, AttnOnTwelveLayers) {
    auto s = transformer_spec(12);
    s.d_model = 768;
    s.n_heads = 12;
    EXPECT_EQ(select_sites(enumerate_sites(s), "Attn").size(), 36u);
}

TEST(Sites, UniqueLayerKindPairs) {
    const auto sites = enumerate_sites(transformer_spec(3));
    for (std::size_t i = 0; i < sites.size(); ++i) {
        for (std::size_t j = i + 1; j < sites.size(); ++j) {
            EXPECT_FALSE(sites[i].layer == sites[j].layer && sites[i].kind == sites[j].kind);
        }
    }
}

TEST(Forward, MlpMatchesLoopOracle) {
    auto spec = mlp_spec(2, 3);
    spec.input_dim = 2;
    auto m = FrozenModel<double>::build(spec);
    const std::vector<double> x = {0.3, -1.2};
    auto out = m.forward(T::matrix({{0.3, -1.2}}));

    auto layer = [&](const std::vector<double>& in, const std::string& prefix, bool act) {
        const auto& w = m.parameter(prefix + "weight").tensor;
        const auto& b = m.parameter(prefix + "bias").tensor;
        std::vector<double> y(w.cols());
        for (std::size_t j = 0; j < w.cols(); ++j) {
            double s = b[j];
            for (std::size_t i = 0; i < in.size(); ++i) s += in[i] * w(i, j);
            y[j] = act ? gelu_ref(s) : s;
        }
        return y;
    };
    auto h = layer(x, "layer1.mlp.", true);
    h = layer(h, "layer2.mlp.", true);
    const auto logits = layer(h, "head.", false);
    ASSERT_EQ(out.shape(), (Shape{1, 2}));
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(out(0, j), logits[j], 1e-13);
}

// Single token, d_model 2, weights chosen by hand.
TEST(Forward, HandTracedTransformer) {
    ModelSpec s;
    s.kind = ModelKind::kTransformer;
    s.depth = 1;
    s.d_model = 2;
    s.d_ff = 2;
    s.n_heads = 1;
    s.vocab_size = 3;
    s.max_seq = 1;
    s.n_classes = 2;

    auto mat = [](std::initializer_list<std::initializer_list<double>> r) { return T::matrix(r); };
    std::vector<Parameter<double>> p = {
        {"embed.token", mat({{0, 0}, {1, 2}, {3, 4}})},
        {"embed.position", mat({{0.5, -0.5}})},
        {"layer1.attn.query.weight", mat({{1, 0}, {0, 1}})},
        {"layer1.attn.query.bias", T::vector({0, 0})},
        {"layer1.attn.key.weight", mat({{1, 0}, {0, 1}})},
        {"layer1.attn.key.bias", T::vector({0, 0})},
        {"layer1.attn.value.weight", mat({{2, 0}, {0, 1}})},
        {"layer1.attn.value.bias", T::vector({0, 1})},
        {"layer1.attn.out.weight", mat({{1, 1}, {0, 1}})},
        {"layer1.attn.out.bias", T::vector({0, 0})},
        {"layer1.mlp.up.weight", mat({{1, 0}, {0, -1}})},
        {"layer1.mlp.up.bias", T::vector({0, 0})},
        {"layer1.mlp.down.weight", mat({{1, 0}, {0, 1}})},
        {"layer1.mlp.down.bias", T::vector({0, 0})},
        {"head.weight", mat({{1, 0}, {0, 1}})},
        {"head.bias", T::vector({0, 0.25})},
    };
    auto m = FrozenModel<double>::from_parameters(s, p);
    auto out = m.forward(TokenBatch{{1}});

    // x = [1, 2] + [0.5, -0.5] = [1.5, 1.5]
    // v = [3, 2.5]; one token so attention weight is 1; o = v Wo = [3, 5.5]
    // x1 = [4.5, 7]; up = [4.5, -7]; x2 = x1 + gelu(up)
    const double x2a = 4.5 + gelu_ref(4.5);
    const double x2b = 7.0 + gelu_ref(-7.0);
    EXPECT_NEAR(out(0, 0), x2a, 1e-14);
    EXPECT_NEAR(out(0, 1), x2b + 0.25, 1e-14);
}

TEST(Forward, EmptyAdaptersExactIdentity) {
    auto m = FrozenModel<double>::build(transformer_spec());
    TokenBatch batch = {{1, 4, 7}, {2, 2}};
    EXPECT_EQ(values(m.forward(batch)), values(m.forward(batch, AdapterSet<double>{})));
}

TEST(Forward, PropulsionAtInitIsIdentity) {
    auto m = FrozenModel<double>::build(transformer_spec());
    auto adapters = AdapterSet<double>::propulsion(m.sites(), 15);
    TokenBatch batch = {{1, 4, 7}, {2, 2, 3, 9}};
    const auto base = values(m.forward(batch));
    const auto adapted = values(m.forward(batch, adapters));
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(base[i], adapted[i], 1e-12);
}

TEST(Forward, AttachDetachRestoresBaseline) {
    auto m = FrozenModel<double>::build(mlp_spec());
    auto x = T::matrix({{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}});
    const auto base = values(m.forward(x));
    AdapterSet<double> set;
    auto a = make_propulsion<double>(m.sites()[0], 1);
    a.z.tensor.mutable_data()[0] = 3.0;
    set.attach(a);
    EXPECT_NE(values(m.forward(x, set)), base);
    set.detach(m.sites()[0]);
    EXPECT_EQ(values(m.forward(x, set)), base);
}

TEST(Forward, RepeatedCallsAgreeBitwise) {
    auto m = FrozenModel<double>::build(transformer_spec());
    TokenBatch batch = {{3, 4, 5}};
    EXPECT_EQ(values(m.forward(batch)), values(m.forward(batch)));
}

TEST(Forward, SiteMismatchIsAttachmentError) {
    auto m = FrozenModel<double>::build(mlp_spec());
    AdapterSet<double> set;
    AttachmentSite wrong{1, SiteKind::kMlp, 8, 5};
    set.attach(make_propulsion<double>(wrong, 1));
    EXPECT_THROW(m.forward(T::zeros({1, 8}), set), AttachmentError);

    AdapterSet<double> missing;
    missing.attach(make_propulsion<double>(AttachmentSite{7, SiteKind::kMlp, 8, 8}, 1));
    EXPECT_THROW(m.forward(T::zeros({1, 8}), missing), AttachmentError);
}

TEST(Forward, WrongInputs) {
    auto m = FrozenModel<double>::build(mlp_spec());
    EXPECT_THROW(m.forward(T::zeros({1, 5})), DimensionError);
    EXPECT_THROW(m.forward(TokenBatch{{1}}), ContractError);
    auto t = FrozenModel<double>::build(transformer_spec());
    EXPECT_THROW(t.forward(TokenBatch{{1, 2, 3, 4, 5, 6, 7}}), DimensionError);
}

TEST(Forward, DropoutOnlyInTrainMode) {
    auto m = FrozenModel<double>::build(mlp_spec());
    auto x = T::full({4, 8}, 0.5);
    std::mt19937_64 rng(1);
    ForwardOptions eval{false, 0.5, &rng};
    EXPECT_EQ(values(m.forward(x, {}, eval)), values(m.forward(x)));
    ForwardOptions train{true, 0.5, &rng};
    EXPECT_NE(values(m.forward(x, {}, train)), values(m.forward(x)));
}

TEST(Linear, LogitsAreXW) {
    ModelSpec s;
    s.kind = ModelKind::kLinear;
    s.depth = 1;
    s.d_model = 4;
    s.input_dim = 3;
    auto m = FrozenModel<double>::build(s);
    auto x = T::matrix({{1, 2, 3}});
    auto out = m.forward(x);
    const auto& w = m.parameter("layer1.mlp.weight").tensor;
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_NEAR(out(0, j), w(0, j) + 2 * w(1, j) + 3 * w(2, j), 1e-14);
    }
    EXPECT_EQ(m.sites().size(), 1u);
}

TEST(Checkpoint, ModelRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "plab_model_ckpt.bin";
    auto m = FrozenModel<double>::build(transformer_spec());
    save_checkpoint<double>(path, m.parameters(), "model", 5);
    auto ck = load_checkpoint<double>(path);
    EXPECT_EQ(ck.kind, "model");
    EXPECT_EQ(ck.seed, 5u);
    auto restored = FrozenModel<double>::from_parameters(transformer_spec(), ck.params);
    EXPECT_EQ(parameter_checksum<double>(restored.parameters()),
              parameter_checksum<double>(m.parameters()));

    auto as_float = load_checkpoint<float>(path);
    EXPECT_FLOAT_EQ(as_float.params[0].tensor[0], static_cast<float>(m.parameters()[0].tensor[0]));
    std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFileIsDataError) {
    const auto path = std::filesystem::temp_directory_path() / "plab_bad_ckpt.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPT";
    }
    EXPECT_THROW(load_checkpoint<double>(path), DataError);
    std::filesystem::remove(path);
}
