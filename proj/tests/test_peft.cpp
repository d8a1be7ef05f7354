#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "plab/data.hpp"
#include "plab/error.hpp"
#include "plab/peft.hpp"
#include "plab/trainer.hpp"

using namespace plab;
using T = Tensor<double>;

namespace {

std::vector<double> values(const T& t) {
    return {t.data().begin(), t.data().end()};
}

Parameter<double> trainable(std::string name, T t) {
    t.set_requires_grad(true);
    return {std::move(name), t, true, 1.0};
}

ModelSpec mlp_spec() {
    ModelSpec s;
    s.depth = 2;
    s.d_model = 8;
    s.seed = 3;
    return s;
}

}  // namespace

TEST(Propulsion, OnesIsIdentity) {
    auto v = T::matrix({{1.5, -2, 3}, {0, 4, -7}});
    for (int k : {0, 1, 2, 15, 100}) {
        EXPECT_EQ(values(propulsion_apply(v, T::ones({3}), k)), values(v)) << k;
    }
}

TEST(Propulsion, HandExample) {
    auto out = propulsion_apply(T::matrix({{2, 3}}), T::vector({2, 1}), 2);
    EXPECT_EQ(values(out), (std::vector<double>{8, 3}));
}

TEST(Propulsion, GradientScalesWithDegree) {
    const auto v = T::matrix({{2, 3}});
    for (auto [k, expected] : {std::pair{1, std::vector<double>{2, 3}},
                               std::pair{15, std::vector<double>{30, 45}}}) {
        auto z = trainable("z", T::ones({2}));
        sum(propulsion_apply(v, z.tensor, k)).backward();
        auto analytic = values(T({2}, {z.tensor.grad().begin(), z.tensor.grad().end()}));
        auto fd = finite_diff_grad<double>(
            [&] { return sum(propulsion_apply(v, z.tensor, k)).item(); }, z, 1e-6);
        for (std::size_t i = 0; i < 2; ++i) {
            EXPECT_NEAR(analytic[i], expected[i], 1e-12);
            EXPECT_NEAR(fd[i], expected[i], 1e-4);
        }
    }
}

TEST(Propulsion, NegativeDegreeRejected) {
    EXPECT_THROW(propulsion_apply(T::matrix({{1}}), T::vector({1}), -1), UnsupportedDegreeError);
    AttachmentSite site{1, SiteKind::kMlp, 4, 4};
    EXPECT_THROW(make_propulsion<double>(site, -2), UnsupportedDegreeError);
}

TEST(Propulsion, WidthMismatch) {
    EXPECT_THROW(propulsion_apply(T::matrix({{1, 2, 3}}), T::vector({1, 1}), 1), AttachmentError);
}

TEST(Pooling, Extremes) {
    std::vector<T> c = {T::matrix({{1}}), T::matrix({{3}})};
    EXPECT_EQ(pool(c, Pooling::kMax).item(), 3.0);
    EXPECT_EQ(pool(c, Pooling::kMin).item(), 1.0);
    EXPECT_EQ(pool(c, Pooling::kAverage).item(), 2.0);
}

TEST(Pooling, L2IsRootMeanSquare) {
    std::vector<T> c = {T::matrix({{3}}), T::matrix({{4}})};
    EXPECT_NEAR(pool(c, Pooling::kL2).item(), std::sqrt(12.5), 1e-14);
    std::vector<T> neg = {T::matrix({{-3}}), T::matrix({{-4}})};
    EXPECT_NEAR(pool(neg, Pooling::kL2).item(), -std::sqrt(12.5), 1e-14);
}

TEST(Pooling, IdenticalCandidatesPoolExactly) {
    const auto v = T::matrix({{0.1, -2.5, 1e-3}});
    for (auto p : {Pooling::kAverage, Pooling::kMax, Pooling::kMin, Pooling::kL2}) {
        std::vector<T> c(4, v);
        EXPECT_EQ(values(pool(c, p)), values(v)) << to_string(p);
    }
}

TEST(Pooling, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto mode : {Pooling::kAverage, Pooling::kMax, Pooling::kMin, Pooling::kL2}) {
        std::vector<Parameter<double>> ps;
        for (int i = 0; i < 3; ++i) {
            std::vector<double> d(4);
            for (auto& x : d) x = n(rng);
            ps.push_back(trainable("c" + std::to_string(i), T({1, 4}, d)));
        }
        const auto w = T::matrix({{1.0, -2.0, 0.5, 3.0}});
        auto f = [&] {
            std::vector<T> c;
            for (auto& p : ps) c.push_back(p.tensor);
            return sum(ew_mul(pool(c, mode), w));
        };
        f().backward();
        for (auto& p : ps) {
            std::vector<double> analytic(4, 0.0);
            if (p.tensor.has_grad()) analytic.assign(p.tensor.grad().begin(), p.tensor.grad().end());
            auto fd = finite_diff_grad<double>([&] { return f().item(); }, p, 1e-6);
            EXPECT_LT(grad_relative_error(analytic, fd.data()), 1e-6) << to_string(mode);
        }
    }
}

TEST(MultiPropulsion, IdenticalVectorsMatchSingle) {
    const auto v = T::matrix({{1, 2, 3}, {-1, 0.5, 2}});
    auto z = T::vector({1.1, 0.9, 1.3});
    const auto single = values(propulsion_apply(v, z, 3));
    for (auto p : {Pooling::kAverage, Pooling::kMax, Pooling::kMin, Pooling::kL2}) {
        std::vector<T> vecs(4, z);
        auto multi = values(multi_propulsion_apply(v, vecs, 3, p));
        for (std::size_t i = 0; i < single.size(); ++i) EXPECT_NEAR(multi[i], single[i], 1e-14);
    }
}

TEST(MultiPropulsion, EmptyListRejected) {
    EXPECT_THROW(multi_propulsion_apply(T::matrix({{1}}), {}, 1, Pooling::kAverage), ConfigError);
    AttachmentSite site{1, SiteKind::kMlp, 2, 2};
    EXPECT_THROW(make_multi_propulsion<double>(site, 1, 0, Pooling::kAverage), ConfigError);
}

TEST(LoRA, ZeroBIsIdentity) {
    auto x = T::matrix({{1, 2}, {3, -1}});
    auto w = T::matrix({{0.5, 1}, {2, -1}});
    auto a = T::matrix({{0.3}, {0.7}});
    EXPECT_EQ(values(lora_apply(x, w, a, T::zeros({1, 2}), 2.0)), values(matmul(x, w)));
}

TEST(LoRA, HandExample) {
    auto x = T::matrix({{5, 7}});
    auto w = T::zeros({2, 2});
    auto out = lora_apply(x, w, T::matrix({{1}, {0}}), T::matrix({{0, 1}}), 1.0);
    EXPECT_EQ(values(out), (std::vector<double>{0, 5}));
}

TEST(LoRA, RankBounds) {
    std::mt19937_64 rng(1);
    AttachmentSite site{1, SiteKind::kMlp, 4, 3};
    EXPECT_NO_THROW(make_lora<double>(site, 3, 3.0, rng));
    EXPECT_THROW(make_lora<double>(site, 4, 4.0, rng), ConfigError);
    EXPECT_THROW(make_lora<double>(site, 0, 1.0, rng), ConfigError);
}

TEST(LoRA, FreshAdaptersPreserveOutput) {
    auto m = FrozenModel<double>::build(mlp_spec());
    auto set = AdapterSet<double>::lora(m.sites(), 2, 2.0, 9);
    auto x = T::full({3, 8}, 0.25);
    EXPECT_EQ(values(m.forward(x, set)), values(m.forward(x)));
    EXPECT_EQ(set.trainable_count(), 2u * (2 * 8 + 2 * 8));
}

TEST(Materialize, OnesUnchanged) {
    auto w = T::matrix({{1, 2}, {3, 4}});
    EXPECT_EQ(values(materialize_effective_weight(w, T::ones({2}), 7)), values(w));
}

TEST(Materialize, ColumnScaling) {
    auto w = T::matrix({{1, 2}, {3, 4}});
    auto eff = materialize_effective_weight(w, T::vector({2, 3}), 1);
    EXPECT_EQ(values(eff), (std::vector<double>{2, 6, 6, 12}));
}

TEST(Materialize, PlainForwardMatchesAdapted) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    std::vector<double> wd(12), xd(6), zd(4);
    for (auto& v : wd) v = n(rng);
    for (auto& v : xd) v = n(rng);
    for (auto& v : zd) v = 1.0 + 0.1 * n(rng);
    T w({3, 4}, wd), x({2, 3}, xd), z({4}, zd);
    auto lhs = values(matmul(x, materialize_effective_weight(w, z, 3)));
    auto rhs = values(propulsion_apply(matmul(x, w), z, 3));
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-12);
}

TEST(AdapterSet, ParameterNamesAndDecayTargets) {
    auto m = FrozenModel<double>::build(mlp_spec());
    auto set = AdapterSet<double>::propulsion(m.sites(), 2);
    auto ps = set.trainable_parameters();
    ASSERT_EQ(ps.size(), 2u);
    EXPECT_EQ(ps[0].name, "layer1.mlp.z");
    EXPECT_EQ(ps[0].decay_target, 1.0);
    EXPECT_EQ(set.trainable_count(), 16u);
}

TEST(AdapterSet, DuplicateAndMixedAttachRejected) {
    AttachmentSite site{1, SiteKind::kMlp, 4, 4};
    AdapterSet<double> set;
    set.attach(make_propulsion<double>(site, 1));
    EXPECT_THROW(set.attach(make_propulsion<double>(site, 1)), AttachmentError);
    std::mt19937_64 rng(0);
    AttachmentSite other{2, SiteKind::kMlp, 4, 4};
    EXPECT_THROW(set.attach(make_lora<double>(other, 1, 1.0, rng)), AttachmentError);
}

TEST(AdapterSet, CloneIsIndependent) {
    auto m = FrozenModel<double>::build(mlp_spec());
    auto set = AdapterSet<double>::propulsion(m.sites(), 1);
    auto copy = set.clone();
    copy.trainable_parameters()[0].tensor.mutable_data()[0] = 5.0;
    EXPECT_EQ(set.trainable_parameters()[0].tensor[0], 1.0);
}

TEST(AdapterSet, ClampScaling) {
    auto m = FrozenModel<double>::build(mlp_spec());
    auto set = AdapterSet<double>::propulsion(m.sites(), 1);
    auto p = set.trainable_parameters()[0];
    p.tensor.mutable_data()[0] = 9.0;
    p.tensor.mutable_data()[1] = -3.0;
    set.clamp_scaling(0.0, 2.0);
    EXPECT_EQ(p.tensor[0], 2.0);
    EXPECT_EQ(p.tensor[1], 0.0);
}

TEST(AdapterConfig, Validation) {
    AdapterConfig c;
    c.degree = -1;
    EXPECT_THROW(c.validate(), UnsupportedDegreeError);
    c = {};
    c.kind = AdapterKind::kMultiPropulsion;
    c.num_vectors = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(parse_pooling("median"), ConfigError);
    EXPECT_EQ(parse_adapter_kind("lora"), AdapterKind::kLoRA);
}

TEST(BitFit, CountsBiasesOnly) {
    auto m = FrozenModel<double>::build(mlp_spec());
    auto set = AdapterSet<double>::bitfit(m);
    // two hidden biases of width 8 plus the head bias
    EXPECT_EQ(set.trainable_count(), 2u * 8 + 2);
}

TEST(BitFit, OneStepChangesOnlyBiases) {
    auto m = FrozenModel<double>::build(mlp_spec());
    auto set = AdapterSet<double>::bitfit(m);
    auto before = set.clone();
    auto data = make_blobs(16, 8, 2, 3.0, 1);
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.dropout = 0.0;
    Trainer<double> trainer(m, set, cfg);
    std::vector<std::size_t> idx(16);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    trainer.step(data, idx);
    for (const auto& [name, p] : set.overrides()) {
        EXPECT_TRUE(name.ends_with(".bias")) << name;
        EXPECT_NE(values(p.tensor), values(before.overrides().at(name).tensor)) << name;
    }
    for (const auto& p : m.parameters()) {
        if (set.overrides().count(p.name)) continue;
        EXPECT_EQ(&set.resolve(p), &p.tensor) << p.name;
    }
}

TEST(FullFT, EveryBaseParameterTrainable) {
    auto m = FrozenModel<double>::build(mlp_spec());
    auto set = AdapterSet<double>::full_finetune(m);
    std::size_t total = 0;
    for (const auto& p : m.parameters()) total += p.tensor.numel();
    EXPECT_EQ(set.trainable_count(), total);
    EXPECT_EQ(values(m.forward(T::ones({1, 8}), set)), values(m.forward(T::ones({1, 8}))));
}

TEST(Budget, SquareSiteRows) {
    ModelSpec spec;
    spec.d_model = 768;
    std::vector<AttachmentSite> site = {{1, SiteKind::kMlp, 768, 768}};
    BudgetOptions opt;
    opt.rank = 8;
    EXPECT_EQ(count_trainable("propulsion", spec, site, opt).total, 768u);
    EXPECT_EQ(count_trainable("lora", spec, site, opt).total, 12288u);
    EXPECT_EQ(count_trainable("full_ft", spec, site, opt).total, 589824u);
}

TEST(Budget, FormulaEnumeration) {
    ModelSpec spec;
    spec.d_model = 16;
    spec.depth = 3;
    std::vector<AttachmentSite> sites = {{1, SiteKind::kMlp, 16, 16}, {2, SiteKind::kKey, 8, 16}};
    BudgetOptions opt;
    opt.rank = 2;
    opt.num_vectors = 3;
    opt.prompt_length = 5;
    EXPECT_EQ(count_trainable("multi_propulsion", spec, sites, opt).total, 3u * 32);
    EXPECT_EQ(count_trainable("adalora", spec, sites, opt).total, 2u * 32 + 2 * 24 + 8);
    EXPECT_EQ(count_trainable("loha", spec, sites, opt).total, 4u * 32 + 4 * 24);
    EXPECT_EQ(count_trainable("ia3", spec, sites, opt).total, 3u * 32);
    EXPECT_EQ(count_trainable("bitfit", spec, sites, opt).total, 32u);
    EXPECT_EQ(count_trainable("prompt", spec, sites, opt).total, 5u * 16);
    EXPECT_EQ(count_trainable("prefix", spec, sites, opt).total, 3u * 5 * 16);
    EXPECT_EQ(count_trainable("full_ft", spec, sites, opt).total, 256u + 128);
}

TEST(Budget, MatchesInstantiatedAdapters) {
    auto m = FrozenModel<double>::build(mlp_spec());
    BudgetOptions opt;
    opt.rank = 2;
    EXPECT_EQ(count_trainable("propulsion", m.spec(), m.sites(), opt).total,
              AdapterSet<double>::propulsion(m.sites(), 1).trainable_count());
    EXPECT_EQ(count_trainable("lora", m.spec(), m.sites(), opt).total,
              AdapterSet<double>::lora(m.sites(), 2, 2.0, 1).trainable_count());
}

TEST(Budget, UnknownMethod) {
    ModelSpec spec;
    EXPECT_THROW(count_trainable("magic", spec, {}, BudgetOptions{}), ConfigError);
}
