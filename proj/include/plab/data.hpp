#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plab/metrics.hpp"
#include "plab/model.hpp"

namespace plab {

/// Examples with either dense features or token sequences, and either class
/// labels or real targets.
struct Dataset {
    Task task = Task::kClassification;
    std::size_t n_classes = 2;
    std::size_t feature_dim = 0;  // 0 for token data
    std::vector<std::vector<double>> features;
    TokenBatch tokens;
    std::vector<std::size_t> labels;
    std::vector<double> targets;

    std::size_t size() const;
    bool empty() const { return size() == 0; }
    bool is_tokens() const { return !tokens.empty(); }

    /// Examples at `indices`, in that order.
    Dataset subset(std::span<const std::size_t> indices) const;

    template <std::floating_point Real>
    Batch<Real> inputs(std::span<const std::size_t> indices) const;
    template <std::floating_point Real>
    Batch<Real> inputs() const;

    /// Throws DataError when labels or sequences break the model's contract.
    void check_against(const ModelSpec& spec) const;
};

struct DatasetSplit {
    Dataset train;
    Dataset validation;  // empty when fraction is 0
};

/// Seeded shuffle, then the first round(fraction * n) items become validation.
DatasetSplit split_dataset(const Dataset& data, double validation_fraction, std::uint64_t seed);

/// Class c is centred at sep * e_c (c-th axis) with unit Gaussian noise.
/// Labels cycle 0..classes-1, so classes are balanced.
Dataset make_blobs(std::size_t n, std::size_t dim, std::size_t classes, double sep,
                   std::uint64_t seed);

/// Two interleaving half circles in 2-D with Gaussian noise.
Dataset make_moons(std::size_t n, double noise, std::uint64_t seed);

/// Random token sequences; label 1 when the keyword token (id 1) occurs.
/// Id 0 is reserved and never sampled.
Dataset make_keyword(std::size_t n, std::size_t vocab_size, std::size_t max_seq,
                     std::uint64_t seed);

/// Whitespace split, lowercase, FNV-1a hash of each word modulo vocab_size,
/// truncated to max_seq tokens.
std::vector<std::size_t> tokenize(std::string_view text, std::size_t vocab_size,
                                  std::size_t max_seq);

/// Delimited text with header `label,text` (classification over tokens) or
/// `target,f1,...,fn` (numeric features; integer targets when `task` is classification).
Dataset load_csv(const std::filesystem::path& path, Task task, std::size_t vocab_size,
                 std::size_t max_seq);

/// Copies the rows (or sequences) at `indices`.
template <std::floating_point Real>
Batch<Real> batch_subset(const Batch<Real>& batch, std::span<const std::size_t> indices);

}  // namespace plab
