#include "plab/config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <set>

#include "plab/error.hpp"

namespace plab {

using nlohmann::json;

std::string_view to_string(Precision precision) {
    return precision == Precision::kF32 ? "f32" : "f64";
}

Precision parse_precision(std::string_view text) {
    if (text == "f32") return Precision::kF32;
    if (text == "f64") return Precision::kF64;
    throw ConfigError("precision: expected f32 or f64, got '" + std::string(text) + "'");
}

void ExperimentConfig::apply_seed(std::uint64_t value) {
    seed = value;
    model.seed = value;
    train.seed = value;
}

namespace {

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

// One JSON object being read; remembers which keys were consumed.
class Section {
   public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError((path_.empty() ? "config" : path_) + ": expected an object");
    }

    template <typename T>
    bool read(const std::string& key, T& out) {
        known_.insert(key);
        if (!j_.contains(key)) return false;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(join(path_, key) + ": wrong type (" + j_.at(key).dump() + ")");
        }
        return true;
    }

    // Reads through a parser such as parse_pooling, prefixing its error with the field path.
    template <typename T, typename Parse>
    bool read_with(const std::string& key, T& out, Parse parse) {
        std::string text;
        if (!read(key, text)) return false;
        try {
            out = parse(text);
        } catch (const Error& e) {
            throw ConfigError(join(path_, key) + ": " + e.what());
        }
        return true;
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    Section child(const std::string& key) {
        known_.insert(key);
        static const json empty = json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, join(path_, key));
    }

    std::string field(const std::string& key) const { return join(path_, key); }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!known_.contains(key)) throw ConfigError(join(path_, key) + ": unknown key");
        }
    }

   private:
    const json& j_;
    std::string path_;
    std::set<std::string> known_;
};

template <typename Fn>
void with_path(const std::string& prefix, Fn fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        std::string what = e.what();
        constexpr std::string_view tag = "config error: ";
        if (what.starts_with(tag)) what.erase(0, tag.size());
        if (what.starts_with(prefix + ".")) throw;
        throw ConfigError(prefix + ": " + what);
    } catch (const Error& e) {
        // Domain errors from validators still count as bad configuration.
        throw ConfigError(prefix + ": " + e.what());
    }
}

Task parse_task(std::string_view text) {
    if (text == "classification") return Task::kClassification;
    if (text == "regression") return Task::kRegression;
    throw ConfigError("expected classification or regression, got '" + std::string(text) + "'");
}

std::string_view task_name(Task task) {
    return task == Task::kClassification ? "classification" : "regression";
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    Section root(j, "");

    {
        auto s = root.child("model");
        auto& m = c.model;
        s.read_with("kind", m.kind, parse_model_kind);
        s.read("depth", m.depth);
        s.read("d_model", m.d_model);
        s.read("d_ff", m.d_ff);
        s.read("n_heads", m.n_heads);
        s.read("vocab_size", m.vocab_size);
        s.read("max_seq", m.max_seq);
        s.read("n_classes", m.n_classes);
        s.read("input_dim", m.input_dim);
        s.finish();
    }
    {
        auto s = root.child("adapter");
        auto& a = c.adapter;
        s.read_with("kind", a.kind, parse_adapter_kind);
        s.read("sites", a.sites);
        s.read("degree", a.degree);
        s.read("num_vectors", a.num_vectors);
        s.read_with("pooling", a.pooling, parse_pooling);
        s.read("rank", a.rank);
        s.read("alpha", a.alpha);
        s.finish();
    }
    {
        auto s = root.child("train");
        auto& t = c.train;
        s.read("learning_rate", t.learning_rate);
        s.read("weight_decay", t.weight_decay);
        s.read("dropout", t.dropout);
        s.read("epochs", t.epochs);
        s.read("batch_size", t.batch_size);
        s.read_with("optimizer", t.optimizer, parse_optimizer);
        s.read_with("loss", t.loss, parse_loss);
        s.read("decay_toward_one", t.decay_toward_one);
        s.read("clamp", t.clamp);
        s.read("clamp_min", t.clamp_min);
        s.read("clamp_max", t.clamp_max);
        s.read("threshold", t.threshold);
        s.finish();
    }
    {
        auto s = root.child("data");
        auto& d = c.data;
        s.read("source", d.source);
        const bool has_generator = s.read("generator", d.generator);
        s.read("path", d.path);
        s.read_with("task", d.task, parse_task);
        s.read("n", d.n);
        s.read("dim", d.dim);
        s.read("classes", d.classes);
        s.read("sep", d.sep);
        s.read("noise", d.noise);
        s.read("validation_fraction", d.validation_fraction);
        s.finish();
        if (d.source == "synthetic") {
            if (!d.path.empty()) throw ConfigError("data: give exactly one source (generator or path)");
            if (d.generator != "blobs" && d.generator != "moons" && d.generator != "keyword") {
                throw ConfigError("data.generator: unknown generator '" + d.generator + "'");
            }
        } else if (d.source == "file") {
            if (d.path.empty()) throw ConfigError("data.path: required when data.source is 'file'");
            if (has_generator) throw ConfigError("data: give exactly one source (generator or path)");
        } else {
            throw ConfigError("data.source: expected synthetic or file, got '" + d.source + "'");
        }
        if (d.validation_fraction < 0.0 || d.validation_fraction >= 1.0) {
            throw ConfigError("data.validation_fraction: must be in [0, 1)");
        }
        if (d.n < 1) throw ConfigError("data.n: must be >= 1");
    }
    {
        auto s = root.child("output");
        s.read("dir", c.output_dir);
        s.finish();
    }
    std::uint64_t seed = 0;
    root.read("seed", seed);
    root.read_with("precision", c.precision, parse_precision);
    {
        auto s = root.child("sweep");
        s.read("degree", c.sweep.degree);
        s.read("pooling", c.sweep.pooling);
        s.read("sites", c.sweep.sites);
        s.finish();
        for (const auto& p : c.sweep.pooling) {
            with_path("sweep.pooling", [&] { parse_pooling(p); });
        }
        for (int k : c.sweep.degree) {
            if (k < 0) throw ConfigError("sweep.degree: degrees must be non-negative integers");
        }
    }
    {
        auto s = root.child("ntk");
        auto& n = c.ntk;
        s.read("probes", n.probes);
        s.read("probe_seed", n.probe_seed);
        s.read("probes_from_data", n.probes_from_data);
        s.read("steps", n.steps);
        s.read("learning_rate", n.learning_rate);
        s.read("max_width", n.max_width);
        auto jl = s.child("jl");
        jl.read("d", n.jl.d);
        jl.read("eps", n.jl.eps);
        jl.read("c", n.jl.c);
        jl.read("trials", n.jl.trials);
        jl.read("seed", n.jl.seed);
        jl.finish();
        s.finish();
        if (n.probes < 1 || n.probes > 64) throw ConfigError("ntk.probes: must be in [1, 64]");
        for (double e : n.jl.eps) {
            if (!(e > 0.0 && e < 1.0)) throw ConfigError("ntk.jl.eps: values must lie in (0, 1)");
        }
        for (auto d : n.jl.d) {
            if (d < 1) throw ConfigError("ntk.jl.d: widths must be >= 1");
        }
    }
    {
        auto s = root.child("budget");
        auto& b = c.budget;
        s.read("methods", b.methods);
        s.read("rank", b.rank);
        s.read("prompt_length", b.prompt_length);
        s.read("num_vectors", b.num_vectors);
        s.read("sites", b.sites);
        s.finish();
    }
    root.finish();

    c.apply_seed(seed);
    with_path("model", [&] { c.model.validate(); });
    with_path("adapter", [&] { c.adapter.validate(); });
    with_path("train", [&] { c.train.validate(); });
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
    json j;
    const auto& m = c.model;
    j["model"] = {{"kind", to_string(m.kind)},
                  {"depth", m.depth},
                  {"d_model", m.d_model},
                  {"d_ff", m.d_ff},
                  {"n_heads", m.n_heads},
                  {"vocab_size", m.vocab_size},
                  {"max_seq", m.max_seq},
                  {"n_classes", m.n_classes},
                  {"input_dim", m.input_dim}};
    const auto& a = c.adapter;
    j["adapter"] = {{"kind", to_string(a.kind)},   {"sites", a.sites},
                    {"degree", a.degree},          {"num_vectors", a.num_vectors},
                    {"pooling", to_string(a.pooling)}, {"rank", a.rank},
                    {"alpha", a.alpha}};
    const auto& t = c.train;
    j["train"] = {{"learning_rate", t.learning_rate},
                  {"weight_decay", t.weight_decay},
                  {"dropout", t.dropout},
                  {"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"optimizer", to_string(t.optimizer)},
                  {"loss", to_string(t.loss)},
                  {"decay_toward_one", t.decay_toward_one},
                  {"clamp", t.clamp},
                  {"clamp_min", t.clamp_min},
                  {"clamp_max", t.clamp_max},
                  {"threshold", t.threshold}};
    const auto& d = c.data;
    j["data"] = {{"source", d.source},
                 {"task", task_name(d.task)},
                 {"n", d.n},
                 {"dim", d.dim},
                 {"classes", d.classes},
                 {"sep", d.sep},
                 {"noise", d.noise},
                 {"validation_fraction", d.validation_fraction}};
    if (d.source == "file") {
        j["data"]["path"] = d.path;
    } else {
        j["data"]["generator"] = d.generator;
    }
    j["output"] = {{"dir", c.output_dir}};
    j["seed"] = c.seed;
    j["precision"] = to_string(c.precision);
    j["sweep"] = {{"degree", c.sweep.degree}, {"pooling", c.sweep.pooling}, {"sites", c.sweep.sites}};
    const auto& n = c.ntk;
    j["ntk"] = {{"probes", n.probes},
                {"probe_seed", n.probe_seed},
                {"probes_from_data", n.probes_from_data},
                {"steps", n.steps},
                {"learning_rate", n.learning_rate},
                {"max_width", n.max_width},
                {"jl",
                 {{"d", n.jl.d},
                  {"eps", n.jl.eps},
                  {"c", n.jl.c},
                  {"trials", n.jl.trials},
                  {"seed", n.jl.seed}}}};
    const auto& b = c.budget;
    j["budget"] = {{"methods", b.methods},
                   {"rank", b.rank},
                   {"prompt_length", b.prompt_length},
                   {"num_vectors", b.num_vectors},
                   {"sites", b.sites}};
    return j;
}

std::string normalized_config(const ExperimentConfig& config) {
    // nlohmann::json objects keep keys sorted.
    return to_json(config).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : normalized_config(config)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace plab
