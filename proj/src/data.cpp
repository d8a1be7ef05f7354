#include "plab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "plab/error.hpp"

namespace plab {

std::size_t Dataset::size() const {
    return is_tokens() ? tokens.size() : features.size();
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.task = task;
    out.n_classes = n_classes;
    out.feature_dim = feature_dim;
    for (auto i : indices) {
        if (i >= size()) throw ContractError("dataset index out of range");
        if (is_tokens()) {
            out.tokens.push_back(tokens[i]);
        } else {
            out.features.push_back(features[i]);
        }
        if (!labels.empty()) out.labels.push_back(labels[i]);
        if (!targets.empty()) out.targets.push_back(targets[i]);
    }
    return out;
}

template <std::floating_point Real>
Batch<Real> Dataset::inputs(std::span<const std::size_t> indices) const {
    if (is_tokens()) {
        TokenBatch batch;
        batch.reserve(indices.size());
        for (auto i : indices) batch.push_back(tokens.at(i));
        return batch;
    }
    std::vector<Real> values;
    values.reserve(indices.size() * feature_dim);
    for (auto i : indices) {
        for (double v : features.at(i)) values.push_back(static_cast<Real>(v));
    }
    return Tensor<Real>({indices.size(), feature_dim}, std::move(values));
}

template <std::floating_point Real>
Batch<Real> Dataset::inputs() const {
    std::vector<std::size_t> all(size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return inputs<Real>(all);
}

void Dataset::check_against(const ModelSpec& spec) const {
    if (empty()) throw DataError("dataset is empty");
    const bool wants_tokens = spec.kind == ModelKind::kTransformer;
    if (wants_tokens != is_tokens()) {
        throw DataError(std::string("model '") + std::string(to_string(spec.kind)) + "' needs " +
                        (wants_tokens ? "token sequences" : "dense features"));
    }
    if (!is_tokens() && feature_dim != spec.feature_dim()) {
        throw DataError("features have width " + std::to_string(feature_dim) + ", model expects " +
                        std::to_string(spec.feature_dim()));
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].empty() || tokens[i].size() > spec.max_seq) {
            throw DataError("sequence " + std::to_string(i) + " has length " +
                            std::to_string(tokens[i].size()) + ", limit " +
                            std::to_string(spec.max_seq));
        }
        for (auto id : tokens[i]) {
            if (id >= spec.vocab_size) {
                throw DataError("token " + std::to_string(id) + " in sequence " + std::to_string(i) +
                                " outside vocabulary");
            }
        }
    }
    if (task == Task::kClassification) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= spec.output_dim()) {
                throw DataError("label " + std::to_string(labels[i]) + " of item " +
                                std::to_string(i) + " outside [0, " +
                                std::to_string(spec.output_dim()) + ")");
            }
        }
    }
}

DatasetSplit split_dataset(const Dataset& data, double validation_fraction, std::uint64_t seed) {
    if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
        throw ConfigError("data.validation_fraction: must be in [0, 1)");
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (validation_fraction == 0.0) return {data, data.subset({})};
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(
        std::llround(validation_fraction * static_cast<double>(data.size())));
    const std::span<const std::size_t> all(order);
    return {data.subset(all.subspan(n_val)), data.subset(all.first(n_val))};
}

Dataset make_blobs(std::size_t n, std::size_t dim, std::size_t classes, double sep,
                   std::uint64_t seed) {
    if (classes < 2 || classes > dim) {
        throw ConfigError("data.classes: need 2 <= classes <= dim");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    Dataset out;
    out.n_classes = classes;
    out.feature_dim = dim;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % classes;
        std::vector<double> x(dim);
        for (auto& v : x) v = noise(rng);
        x[label] += sep;
        out.features.push_back(std::move(x));
        out.labels.push_back(label);
    }
    return out;
}

Dataset make_moons(std::size_t n, double noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::normal_distribution<double> jitter(0.0, noise);
    Dataset out;
    out.n_classes = 2;
    out.feature_dim = 2;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % 2;
        const double t = angle(rng);
        double x = std::cos(t), y = std::sin(t);
        if (label == 1) {
            x = 1.0 - x;
            y = 0.5 - y;
        }
        out.features.push_back({x + jitter(rng), y + jitter(rng)});
        out.labels.push_back(label);
    }
    return out;
}

Dataset make_keyword(std::size_t n, std::size_t vocab_size, std::size_t max_seq,
                     std::uint64_t seed) {
    if (vocab_size < 3) throw ConfigError("model.vocab_size: keyword data needs at least 3 tokens");
    if (max_seq < 2) throw ConfigError("model.max_seq: keyword data needs sequences of length >= 2");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> length(std::max<std::size_t>(2, max_seq / 2), max_seq);
    std::uniform_int_distribution<std::size_t> token(2, vocab_size - 1);
    Dataset out;
    out.n_classes = 2;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % 2;
        std::vector<std::size_t> seq(length(rng));
        for (auto& t : seq) t = token(rng);
        if (label == 1) {
            std::uniform_int_distribution<std::size_t> where(0, seq.size() - 1);
            seq[where(rng)] = 1;
        }
        out.tokens.push_back(std::move(seq));
        out.labels.push_back(label);
    }
    return out;
}

std::vector<std::size_t> tokenize(std::string_view text, std::size_t vocab_size,
                                  std::size_t max_seq) {
    if (vocab_size == 0) throw ConfigError("model.vocab_size: must be >= 1");
    std::vector<std::size_t> ids;
    std::size_t i = 0;
    while (i < text.size() && ids.size() < max_seq) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        std::uint64_t h = 1469598103934665603ULL;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
            h ^= static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(text[i])));
            h *= 1099511628211ULL;
            ++i;
        }
        ids.push_back(static_cast<std::size_t>(h % vocab_size));
    }
    return ids;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view s, std::size_t line) {
    s = trim(s);
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw DataError("line " + std::to_string(line) + ": '" + std::string(s) +
                        "' is not a number");
    }
    return v;
}

std::size_t parse_label(std::string_view s, std::size_t line) {
    s = trim(s);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw DataError("line " + std::to_string(line) + ": '" + std::string(s) +
                        "' is not a class label");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(s.substr(start, comma == std::string_view::npos ? comma : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, Task task, std::size_t vocab_size,
                 std::size_t max_seq) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::string header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = std::string(trim(line));
            break;
        }
    }
    if (header.empty()) throw DataError(path.string() + ": empty file");
    const auto columns = split(header);
    const bool text = columns.size() == 2 && trim(columns[0]) == "label" && trim(columns[1]) == "text";
    if (!text && (columns.size() < 2 || trim(columns[0]) != "target")) {
        throw DataError(path.string() + ": header must be 'label,text' or 'target,f1,...,fn'");
    }

    Dataset out;
    out.task = text ? Task::kClassification : task;
    out.feature_dim = text ? 0 : columns.size() - 1;
    std::size_t max_label = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (text) {
            const auto comma = line.find(',');
            if (comma == std::string::npos) {
                throw DataError("line " + std::to_string(line_no) + ": expected 'label,text'");
            }
            const auto label = parse_label(std::string_view(line).substr(0, comma), line_no);
            auto ids = tokenize(std::string_view(line).substr(comma + 1), vocab_size, max_seq);
            if (ids.empty()) throw DataError("line " + std::to_string(line_no) + ": empty text");
            out.tokens.push_back(std::move(ids));
            out.labels.push_back(label);
            max_label = std::max(max_label, label);
            continue;
        }
        const auto fields = split(line);
        if (fields.size() != columns.size()) {
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(columns.size()) + " fields, got " +
                            std::to_string(fields.size()));
        }
        std::vector<double> x;
        x.reserve(fields.size() - 1);
        for (std::size_t j = 1; j < fields.size(); ++j) x.push_back(parse_double(fields[j], line_no));
        out.features.push_back(std::move(x));
        if (out.task == Task::kClassification) {
            const auto label = parse_label(fields[0], line_no);
            out.labels.push_back(label);
            max_label = std::max(max_label, label);
        } else {
            out.targets.push_back(parse_double(fields[0], line_no));
        }
    }
    if (out.empty()) throw DataError(path.string() + ": no data rows");
    out.n_classes = out.task == Task::kClassification ? std::max<std::size_t>(2, max_label + 1) : 1;
    return out;
}

template <std::floating_point Real>
Batch<Real> batch_subset(const Batch<Real>& batch, std::span<const std::size_t> indices) {
    if (const auto* seqs = std::get_if<TokenBatch>(&batch)) {
        TokenBatch out;
        for (auto i : indices) out.push_back(seqs->at(i));
        return out;
    }
    const auto& x = std::get<Tensor<Real>>(batch);
    const std::size_t cols = x.cols();
    std::vector<Real> values;
    values.reserve(indices.size() * cols);
    for (auto i : indices) {
        if (i >= x.rows()) throw ContractError("batch row out of range");
        const auto row = x.data().subspan(i * cols, cols);
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor<Real>({indices.size(), cols}, std::move(values));
}

template Batch<float> Dataset::inputs<float>(std::span<const std::size_t>) const;
template Batch<double> Dataset::inputs<double>(std::span<const std::size_t>) const;
template Batch<float> Dataset::inputs<float>() const;
template Batch<double> Dataset::inputs<double>() const;
template Batch<float> batch_subset(const Batch<float>&, std::span<const std::size_t>);
template Batch<double> batch_subset(const Batch<double>&, std::span<const std::size_t>);

}  // namespace plab
