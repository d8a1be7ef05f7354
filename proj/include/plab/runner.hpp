#pragma once

#include <cstddef>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "plab/config.hpp"

namespace plab {

/// Each command writes its artifacts under `out` and returns the summary it
/// wrote to summary.json (or budget totals for run_budget).

nlohmann::json run_train(const ExperimentConfig& config, const std::filesystem::path& out);

/// Cartesian product of the sweep axes, one subdirectory per run, up to
/// `jobs` runs at once. Throws ConfigError when every axis is empty.
nlohmann::json run_sweep(const ExperimentConfig& config, const std::filesystem::path& out,
                         std::size_t jobs);

nlohmann::json run_ntk(const ExperimentConfig& config, const std::filesystem::path& out);

nlohmann::json run_budget(const ExperimentConfig& config, const std::filesystem::path& out);

}  // namespace plab
