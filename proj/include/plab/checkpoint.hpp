#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "plab/tensor.hpp"

namespace plab {

/// Named-parameter binary file: 8-byte magic "PLABCKPT", u64 header length,
/// JSON header, then raw little-endian tensor data in header order.
template <std::floating_point Real>
struct Checkpoint {
    std::string kind;  // "model" or "adapters"
    std::uint64_t seed = 0;
    nlohmann::json meta;
    std::vector<Parameter<Real>> params;
};

template <std::floating_point Real>
void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter<Real>> params,
                     const std::string& kind, std::uint64_t seed, const nlohmann::json& meta = {});

/// Values are converted to Real whatever precision they were stored in.
/// Throws DataError for a truncated or malformed file.
template <std::floating_point Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& path);

}  // namespace plab
