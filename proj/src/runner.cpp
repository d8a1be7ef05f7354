#include "plab/runner.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "plab/checkpoint.hpp"
#include "plab/csv.hpp"
#include "plab/data.hpp"
#include "plab/error.hpp"
#include "plab/ntk.hpp"
#include "plab/trainer.hpp"

namespace plab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kAdapterSeed = 1;
constexpr std::uint64_t kDataSeed = 2;
constexpr std::uint64_t kSplitSeed = 3;

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ResourceError("cannot write " + path.string());
    out << text;
}

Dataset load_data(const ExperimentConfig& c) {
    const auto& d = c.data;
    const std::uint64_t seed = c.seed + kDataSeed;
    if (d.source == "file") {
        Dataset data = load_csv(d.path, d.task, c.model.vocab_size, c.model.max_seq);
        return data;
    }
    if (d.generator == "blobs") return make_blobs(d.n, d.dim, d.classes, d.sep, seed);
    if (d.generator == "moons") return make_moons(d.n, d.noise, seed);
    return make_keyword(d.n, c.model.vocab_size, c.model.max_seq, seed);
}

std::string opt_number(const std::optional<double>& v) {
    return v ? format_number(*v) : std::string();
}

json metrics_json(const MetricReport& m) {
    json j = json::object();
    if (m.accuracy) j["accuracy"] = *m.accuracy;
    if (m.f1) j["f1"] = *m.f1;
    if (m.mcc) {
        j["mcc"] = m.mcc->value;
        j["mcc_degenerate"] = m.mcc->degenerate;
    }
    if (m.pearson) j["pearson"] = m.pearson->value;
    if (m.spearman) j["spearman"] = m.spearman->value;
    return j;
}

std::vector<std::string> metric_fields(const std::optional<Evaluation>& e) {
    if (!e) return {"", "", "", "", "", ""};
    const auto& m = e->metrics;
    return {format_number(e->loss),
            opt_number(m.accuracy),
            opt_number(m.f1),
            m.mcc ? format_number(m.mcc->value) : "",
            m.pearson ? format_number(m.pearson->value) : "",
            m.spearman ? format_number(m.spearman->value) : ""};
}

void write_metrics(const fs::path& path, const TrainResult& result) {
    std::vector<std::string> header = {"epoch", "step", "train_loss"};
    for (const char* prefix : {"", "val_"}) {
        for (const char* name : {"loss", "accuracy", "f1", "mcc", "pearson", "spearman"}) {
            header.push_back(std::string(prefix) + name);
        }
    }
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : result.history) {
        std::vector<std::string> row = {std::to_string(r.epoch), std::to_string(r.step),
                                        format_number(r.train_loss)};
        for (auto& f : metric_fields(r.train)) row.push_back(std::move(f));
        for (auto& f : metric_fields(r.validation)) row.push_back(std::move(f));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

json spec_json(const ModelSpec& m) {
    return {{"kind", to_string(m.kind)},   {"depth", m.depth},         {"d_model", m.d_model},
            {"d_ff", m.d_ff},              {"n_heads", m.n_heads},     {"vocab_size", m.vocab_size},
            {"max_seq", m.max_seq},        {"n_classes", m.n_classes}, {"input_dim", m.input_dim},
            {"seed", m.seed}};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <std::floating_point Real>
json train_impl(const ExperimentConfig& c, const fs::path& out) {
    const auto start = std::chrono::steady_clock::now();
    fs::create_directories(out);
    write_text(out / "config.lock", normalized_config(c));

    const auto model = FrozenModel<Real>::build(c.model);
    const auto data = load_data(c);
    const auto split = split_dataset(data, c.data.validation_fraction, c.seed + kSplitSeed);
    auto adapters = AdapterSet<Real>::from_config(model, c.adapter, c.seed + kAdapterSeed);

    const auto checksum_before = parameter_checksum<Real>(model.parameters());
    const auto result = train(model, adapters, split.train,
                              split.validation.empty() ? nullptr : &split.validation, c.train);
    const auto checksum_after = parameter_checksum<Real>(model.parameters());

    write_metrics(out / "metrics.csv", result);
    const auto params = adapters.parameters();
    json meta = {{"model", spec_json(c.model)}, {"adapter", to_json(c)["adapter"]}};
    save_checkpoint<Real>(out / "adapters.bin", params, "adapters", c.seed, meta);

    std::size_t base_count = 0;
    for (const auto& p : model.parameters()) base_count += p.tensor.numel();

    json summary;
    summary["config_hash"] = config_hash(c);
    summary["precision"] = to_string(c.precision);
    summary["adapter"] = to_string(adapters.kind());
    summary["epochs"] = result.history.size();
    summary["trainable_parameters"] = result.trainable_count;
    summary["base_parameters"] = base_count;
    summary["base_unchanged"] = checksum_before == checksum_after;
    summary["steps_to_threshold"] =
        result.steps_to_threshold ? json(*result.steps_to_threshold) : json(nullptr);
    if (!result.history.empty()) {
        const auto& last = result.history.back();
        summary["final"] = metrics_json(last.train.metrics);
        summary["final"]["loss"] = last.train.loss;
        summary["final"]["step"] = last.step;
        if (last.validation) {
            summary["final_validation"] = metrics_json(last.validation->metrics);
            summary["final_validation"]["loss"] = last.validation->loss;
        }
    }
    summary["runtime_seconds"] = seconds_since(start);
    write_text(out / "summary.json", summary.dump(2) + "\n");
    return summary;
}

template <std::floating_point Real>
json ntk_impl(const ExperimentConfig& c, const fs::path& out) {
    const auto start = std::chrono::steady_clock::now();
    const auto& n = c.ntk;
    if (c.model.d_model > n.max_width || c.model.feature_dim() > n.max_width) {
        throw ResourceError("ntk: width " + std::to_string(std::max(c.model.d_model, c.model.feature_dim())) +
                            " exceeds the full-Jacobian limit of " + std::to_string(n.max_width));
    }
    fs::create_directories(out);
    write_text(out / "config.lock", normalized_config(c));

    const auto model = FrozenModel<Real>::build(c.model);
    auto adapters = AdapterSet<Real>::from_config(model, c.adapter, c.seed + kAdapterSeed);
    const auto data = load_data(c);
    data.check_against(c.model);

    Batch<Real> probes;
    if (n.probes_from_data || c.model.kind == ModelKind::kTransformer) {
        std::vector<std::size_t> idx(std::min(n.probes, data.size()));
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        probes = data.inputs<Real>(idx);
    } else {
        probes = unit_probes<Real>(n.probes, c.model.feature_dim(), n.probe_seed);
    }

    const auto kf = compute_ntk(model, adapters, probes, ParamSubset::kFull);
    const auto kp = compute_ntk(model, adapters, probes, ParamSubset::kPropulsion);
    const auto dist = ntk_distance(kf, kp, true);
    write_matrix_csv(out / "kernel_F.csv", kf.values);
    write_matrix_csv(out / "kernel_P.csv", kp.values);
    write_matrix_csv(out / "kernel_diff.csv", dist.diff);

    // Short run with per-step Jacobian snapshots over the adapter parameters.
    TrainConfig tc = c.train;
    tc.learning_rate = n.learning_rate;
    tc.dropout = 0.0;
    tc.validate();
    Trainer<Real> trainer(model, adapters, tc);
    const auto j0 = jacobian(model, adapters, probes, ParamSubset::kPropulsion, 0);
    auto jt = j0;
    std::vector<std::vector<std::string>> drift_rows;
    std::mt19937_64 rng(c.seed + kSplitSeed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    for (std::size_t step = 1; step <= n.steps; ++step) {
        const std::size_t count = std::min(tc.batch_size, order.size());
        if (cursor + count > order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const auto before = adapters.clone();
        trainer.step(data, std::span<const std::size_t>(order).subspan(cursor, count));
        cursor += count;
        const auto residual = linearization_residual(model, before, adapters, probes);
        jt = jacobian(model, adapters, probes, ParamSubset::kPropulsion, step);
        const auto drift = jacobian_drift(j0, jt);
        drift_rows.push_back({std::to_string(step), format_number(drift.relative),
                              format_number(residual.absolute), format_number(residual.relative)});
    }
    write_csv(out / "drift.csv", {"step", "relative_drift", "residual_abs", "residual_rel"},
              drift_rows);
    write_matrix_csv(out / "jacobian_0.csv", j0.values);
    write_matrix_csv(out / "jacobian_t.csv", jt.values);
    write_matrix_csv(out / "jacobian_diff.csv", jacobian_drift(j0, jt).diff);

    json jl = json::array();
    std::vector<std::vector<std::string>> jl_rows;
    for (auto d : n.jl.d) {
        for (double eps : n.jl.eps) {
            const auto rec = jl_empirical(d, n.jl.trials, eps, n.jl.c, n.jl.seed);
            jl.push_back({{"d", d},
                          {"eps", eps},
                          {"c", rec.c},
                          {"trials", rec.trials},
                          {"failures", rec.failures},
                          {"empirical", rec.empirical},
                          {"failure_bound", rec.failure_bound},
                          {"probability_bound", jl_bound(eps, d)},
                          {"margin", rec.margin},
                          {"vacuous", rec.vacuous},
                          {"within_bound", rec.within_bound()}});
            jl_rows.push_back({std::to_string(d), format_number(eps), std::to_string(rec.trials),
                               format_number(rec.empirical), format_number(rec.failure_bound),
                               format_number(rec.margin), rec.vacuous ? "true" : "false",
                               rec.within_bound() ? "true" : "false"});
        }
    }
    write_csv(out / "jl.csv",
              {"d", "eps", "trials", "empirical", "failure_bound", "margin", "vacuous", "within_bound"},
              jl_rows);

    json summary;
    summary["config_hash"] = config_hash(c);
    summary["probes"] = kf.size();
    summary["kernel"] = {{"normalized_max_distance", dist.max},
                         {"normalized_frobenius_distance", dist.frobenius},
                         {"full_symmetric", kf.is_symmetric()},
                         {"propulsion_symmetric", kp.is_symmetric()},
                         {"full_min_eigenvalue", kf.min_eigenvalue()},
                         {"propulsion_min_eigenvalue", kp.min_eigenvalue()}};
    summary["final_relative_drift"] = n.steps ? jacobian_drift(j0, jt).relative : 0.0;
    summary["jl"] = jl;
    summary["runtime_seconds"] = seconds_since(start);
    write_text(out / "summary.json", summary.dump(2) + "\n");
    return summary;
}

template <typename Fn>
json dispatch(const ExperimentConfig& c, Fn&& fn) {
    return c.precision == Precision::kF32 ? fn(float{}) : fn(double{});
}

}  // namespace

json run_train(const ExperimentConfig& config, const fs::path& out) {
    return dispatch(config, [&](auto tag) { return train_impl<decltype(tag)>(config, out); });
}

json run_ntk(const ExperimentConfig& config, const fs::path& out) {
    return dispatch(config, [&](auto tag) { return ntk_impl<decltype(tag)>(config, out); });
}

json run_sweep(const ExperimentConfig& config, const fs::path& out, std::size_t jobs) {
    if (config.sweep.empty()) throw ConfigError("sweep: at least one axis (degree, pooling, sites) is required");

    auto degrees = config.sweep.degree;
    std::sort(degrees.begin(), degrees.end());
    auto poolings = config.sweep.pooling;
    std::sort(poolings.begin(), poolings.end());
    auto site_groups = config.sweep.sites;
    std::sort(site_groups.begin(), site_groups.end());

    struct Run {
        std::string name;
        std::optional<int> degree;
        std::optional<std::string> pooling;
        std::optional<std::string> sites;
        ExperimentConfig config;
        json summary;
    };
    std::vector<Run> runs;
    const std::vector<std::optional<int>> d_axis =
        degrees.empty() ? std::vector<std::optional<int>>{std::nullopt}
                        : std::vector<std::optional<int>>(degrees.begin(), degrees.end());
    const std::vector<std::optional<std::string>> p_axis =
        poolings.empty() ? std::vector<std::optional<std::string>>{std::nullopt}
                         : std::vector<std::optional<std::string>>(poolings.begin(), poolings.end());
    const std::vector<std::optional<std::string>> s_axis =
        site_groups.empty()
            ? std::vector<std::optional<std::string>>{std::nullopt}
            : std::vector<std::optional<std::string>>(site_groups.begin(), site_groups.end());
    for (const auto& d : d_axis) {
        for (const auto& p : p_axis) {
            for (const auto& s : s_axis) {
                Run r{fmt::format("run_{:03}", runs.size()), d, p, s, config, {}};
                if (d) r.config.adapter.degree = *d;
                if (p) r.config.adapter.pooling = parse_pooling(*p);
                if (s) r.config.adapter.sites = *s;
                r.config.sweep = {};
                runs.push_back(std::move(r));
            }
        }
    }

    const auto start = std::chrono::steady_clock::now();
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) {
            try {
                runs[i].summary = run_train(runs[i].config, out / runs[i].name);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, runs.size());
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);

    std::vector<std::vector<std::string>> rows;
    json runs_json = json::array();
    std::vector<std::optional<std::size_t>> steps;
    for (const auto& r : runs) {
        const auto& s = r.summary;
        const auto& fin = s.contains("final") ? s["final"] : json::object();
        const double metric = fin.contains("accuracy") ? fin["accuracy"].get<double>()
                              : fin.contains("pearson") ? fin["pearson"].get<double>()
                                                        : 0.0;
        const bool reached = !s["steps_to_threshold"].is_null();
        steps.push_back(reached ? std::optional<std::size_t>(s["steps_to_threshold"].get<std::size_t>())
                                : std::nullopt);
        rows.push_back({r.name, r.degree ? std::to_string(*r.degree) : "", r.pooling.value_or(""),
                        r.sites.value_or(""), format_number(metric),
                        fin.contains("loss") ? format_number(fin["loss"].get<double>()) : "",
                        reached ? std::to_string(*steps.back()) : ""});
        runs_json.push_back({{"run", r.name}, {"summary", s}});
    }
    write_csv(out / "summary.csv",
              {"run", "degree", "pooling", "sites", "final_metric", "final_loss", "steps_to_threshold"},
              rows);

    json summary;
    summary["config_hash"] = config_hash(config);
    summary["runs"] = runs_json;
    if (degrees.size() > 1 && poolings.size() <= 1 && site_groups.size() <= 1) {
        // Runs that never reach the threshold count as slowest.
        bool nondecreasing = true;
        for (std::size_t i = 1; i < steps.size(); ++i) {
            const auto prev = steps[i - 1].value_or(SIZE_MAX);
            const auto cur = steps[i].value_or(SIZE_MAX);
            nondecreasing = nondecreasing && cur >= prev;
        }
        json trend = json::array();
        for (const auto& s : steps) trend.push_back(s ? json(*s) : json(nullptr));
        summary["degree_trend"] = {{"steps_to_threshold", trend},
                                   {"lower_degree_converges_no_slower", nondecreasing}};
    }
    summary["runtime_seconds"] = seconds_since(start);
    write_text(out / "summary.json", summary.dump(2) + "\n");
    return summary;
}

json run_budget(const ExperimentConfig& config, const fs::path& out) {
    const auto sites = select_sites(enumerate_sites(config.model), config.budget.sites);
    BudgetOptions options{config.budget.rank, config.budget.num_vectors, config.budget.prompt_length};
    if (config.budget.methods.empty()) throw ConfigError("budget.methods: list at least one method");
    std::vector<std::vector<std::string>> rows;
    json totals = json::object();
    for (const auto& method : config.budget.methods) {
        const auto b = count_trainable(method, config.model, sites, options);
        for (const auto& s : b.per_site) {
            rows.push_back({b.method, b.formula, s.where, std::to_string(s.d_in),
                            std::to_string(s.d_out), std::to_string(s.count)});
        }
        rows.push_back({b.method, b.formula, "total", "", "", std::to_string(b.total)});
        totals[b.method] = b.total;
    }
    fs::create_directories(out);
    write_csv(out / "budget.csv", {"method", "formula", "where", "d_in", "d_out", "count"}, rows);
    json summary = {{"config_hash", config_hash(config)}, {"totals", totals}};
    write_text(out / "summary.json", summary.dump(2) + "\n");
    return summary;
}

}  // namespace plab
