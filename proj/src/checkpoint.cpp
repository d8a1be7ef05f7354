#include "plab/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "plab/error.hpp"

namespace plab {

namespace {

constexpr std::array<char, 8> kMagic = {'P', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};

template <typename Real>
constexpr const char* dtype_name() {
    return sizeof(Real) == 4 ? "f32" : "f64";
}

template <typename Stored, typename Real>
void convert(const char* bytes, std::size_t count, std::vector<Real>& out) {
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        Stored v;
        std::memcpy(&v, bytes + i * sizeof(Stored), sizeof(Stored));
        out[i] = static_cast<Real>(v);
    }
}

}  // namespace

template <std::floating_point Real>
void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter<Real>> params,
                     const std::string& kind, std::uint64_t seed, const nlohmann::json& meta) {
    nlohmann::json header;
    header["format"] = 1;
    header["dtype"] = dtype_name<Real>();
    header["seed"] = seed;
    header["kind"] = kind;
    header["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
    auto& tensors = header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& p : params) {
        tensors.push_back({{"name", p.name},
                           {"shape", p.tensor.shape()},
                           {"offset", offset},
                           {"trainable", p.trainable},
                           {"decay_target", static_cast<double>(p.decay_target)}});
        offset += p.tensor.numel() * sizeof(Real);
    }
    const std::string text = header.dump();
    const std::uint64_t length = text.size();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ResourceError("cannot write " + path.string());
    out.write(kMagic.data(), kMagic.size());
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) {
        const auto data = p.tensor.data();
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size_bytes()));
    }
    if (!out) throw ResourceError("failed writing " + path.string());
}

template <std::floating_point Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t prefix = kMagic.size() + sizeof(std::uint64_t);
    if (bytes.size() < prefix || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw DataError(path.string() + ": not a checkpoint");
    }
    std::uint64_t length = 0;
    std::memcpy(&length, bytes.data() + kMagic.size(), sizeof(length));
    if (bytes.size() < prefix + length) throw DataError(path.string() + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(prefix, length));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": bad header: " + e.what());
    }
    const char* data = bytes.data() + prefix + length;
    const std::size_t data_size = bytes.size() - prefix - length;

    Checkpoint<Real> ck;
    try {
        const std::string dtype = header.at("dtype");
        if (dtype != "f32" && dtype != "f64") throw DataError("unknown dtype " + dtype);
        const std::size_t elem = dtype == "f32" ? 4 : 8;
        ck.kind = header.at("kind");
        ck.seed = header.at("seed");
        ck.meta = header.value("meta", nlohmann::json::object());
        for (const auto& t : header.at("tensors")) {
            const Shape shape = t.at("shape");
            const std::uint64_t offset = t.at("offset");
            const std::size_t count = shape_numel(shape);
            if (offset + count * elem > data_size) {
                throw DataError(path.string() + ": tensor data truncated");
            }
            std::vector<Real> values;
            if (elem == 4) {
                convert<float>(data + offset, count, values);
            } else {
                convert<double>(data + offset, count, values);
            }
            const bool trainable = t.value("trainable", false);
            ck.params.push_back({t.at("name"), Tensor<Real>(shape, std::move(values), trainable),
                                 trainable, static_cast<Real>(t.value("decay_target", 0.0))});
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": bad header: " + e.what());
    }
    return ck;
}

template void save_checkpoint(const std::filesystem::path&, std::span<const Parameter<float>>,
                              const std::string&, std::uint64_t, const nlohmann::json&);
template void save_checkpoint(const std::filesystem::path&, std::span<const Parameter<double>>,
                              const std::string&, std::uint64_t, const nlohmann::json&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);

}  // namespace plab
