#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "plab/config.hpp"
#include "plab/error.hpp"
#include "plab/runner.hpp"

namespace {

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    std::string precision;
};

void add_common(CLI::App* cmd, Options& opt, bool with_jobs) {
    cmd->add_option("--config", opt.config, "Experiment config (JSON)")->required();
    cmd->add_option("--out", opt.out, "Output directory (overrides output.dir)");
    cmd->add_option("--seed", opt.seed, "Seed (overrides the config)");
    cmd->add_option("--precision", opt.precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    if (with_jobs) cmd->add_option("--jobs", opt.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
}

plab::ExperimentConfig resolve(const Options& opt) {
    auto config = plab::load_config(opt.config);
    if (opt.seed) config.apply_seed(*opt.seed);
    if (!opt.precision.empty()) config.precision = plab::parse_precision(opt.precision);
    if (!opt.out.empty()) config.output_dir = opt.out;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Propulsion fine-tuning experiments"};
    app.require_subcommand(1);
    Options opt;
    auto* train = app.add_subcommand("train", "Train adapters on a frozen model");
    auto* sweep = app.add_subcommand("sweep", "Train once per point of the sweep axes");
    auto* ntk = app.add_subcommand("ntk", "Kernel, drift and JL bound artifacts");
    auto* budget = app.add_subcommand("budget", "Trainable-parameter counts per method");
    add_common(train, opt, false);
    add_common(sweep, opt, true);
    add_common(ntk, opt, false);
    add_common(budget, opt, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(plab::ExitCode::kConfig);
    }

    try {
        const auto config = resolve(opt);
        nlohmann::json summary;
        if (train->parsed()) {
            summary = plab::run_train(config, config.output_dir);
        } else if (sweep->parsed()) {
            summary = plab::run_sweep(config, config.output_dir, opt.jobs);
        } else if (ntk->parsed()) {
            summary = plab::run_ntk(config, config.output_dir);
        } else {
            summary = plab::run_budget(config, config.output_dir);
        }
        fmt::print("{}\n", summary.dump(2));
        return 0;
    } catch (const plab::Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return static_cast<int>(plab::ExitCode::kFailure);
    }
}
