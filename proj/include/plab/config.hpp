#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "plab/metrics.hpp"
#include "plab/model.hpp"
#include "plab/peft.hpp"
#include "plab/trainer.hpp"

namespace plab {

enum class Precision { kF32, kF64 };

std::string_view to_string(Precision precision);
Precision parse_precision(std::string_view text);

struct DataConfig {
    std::string source = "synthetic";  // "synthetic" or "file"
    std::string generator = "blobs";   // blobs, moons, keyword
    std::string path;
    Task task = Task::kClassification;
    std::size_t n = 200;
    std::size_t dim = 8;
    std::size_t classes = 2;
    double sep = 3.0;
    double noise = 0.1;
    double validation_fraction = 0.0;

    bool operator==(const DataConfig&) const = default;
};

struct SweepConfig {
    std::vector<int> degree;
    std::vector<std::string> pooling;
    std::vector<std::string> sites;

    bool empty() const { return degree.empty() && pooling.empty() && sites.empty(); }
    bool operator==(const SweepConfig&) const = default;
};

struct JLConfig {
    std::vector<std::size_t> d = {128};
    std::vector<double> eps = {0.5};
    double c = 1.0;
    std::size_t trials = 10000;
    std::uint64_t seed = 0;

    bool operator==(const JLConfig&) const = default;
};

struct NtkConfig {
    std::size_t probes = 16;
    std::uint64_t probe_seed = 0;
    bool probes_from_data = false;
    std::size_t steps = 100;
    double learning_rate = 1e-3;
    std::size_t max_width = 512;
    JLConfig jl;

    bool operator==(const NtkConfig&) const = default;
};

struct BudgetConfig {
    std::vector<std::string> methods = {"propulsion", "lora", "full_ft"};
    std::size_t rank = 8;
    std::size_t prompt_length = 10;
    std::size_t num_vectors = 1;
    std::string sites = "All";

    bool operator==(const BudgetConfig&) const = default;
};

struct ExperimentConfig {
    ModelSpec model;
    AdapterConfig adapter;
    TrainConfig train;
    DataConfig data;
    SweepConfig sweep;
    NtkConfig ntk;
    BudgetConfig budget;
    std::string output_dir = "runs";
    std::uint64_t seed = 0;
    Precision precision = Precision::kF64;

    /// Seeds of the model, adapters, data and training loop, all derived from `seed`.
    void apply_seed(std::uint64_t value);

    bool operator==(const ExperimentConfig&) const = default;
};

/// Throws ConfigError naming the field path of any unknown key, wrong type or bad value.
ExperimentConfig parse_config(const nlohmann::json& json);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every field, defaults included.
nlohmann::json to_json(const ExperimentConfig& config);

/// Indented JSON with sorted keys; parse_config of it yields the same config.
std::string normalized_config(const ExperimentConfig& config);

/// FNV-1a of the normalized text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace plab
