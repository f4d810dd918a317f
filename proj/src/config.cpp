#include "rebar/config.hpp"

#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rebar/errors.hpp"
#include "rebar/io.hpp"

namespace rebar {

namespace pt = boost::property_tree;

namespace {

struct Field {
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

template <typename T>
T parse_value(const std::string& s) {
    if constexpr (std::is_same_v<T, bool>) {
        if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "0" || s == "no" || s == "off") return false;
        throw std::invalid_argument("expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
        return s;
    } else if constexpr (std::is_floating_point_v<T>) {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return static_cast<T>(v);
    } else if constexpr (std::is_unsigned_v<T>) {
        if (!s.empty() && s[0] == '-') throw std::invalid_argument("expected a non-negative integer");
        std::size_t pos = 0;
        const auto v = std::stoull(s, &pos, 0);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return static_cast<T>(v);
    } else {
        std::size_t pos = 0;
        const auto v = std::stoll(s, &pos, 10);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return static_cast<T>(v);
    }
}

template <typename T>
std::string show(const T& v) {
    if constexpr (std::is_same_v<T, bool>)
        return v ? "true" : "false";
    else if constexpr (std::is_same_v<T, std::string>)
        return v;
    else if constexpr (std::is_floating_point_v<T>)
        return format_double(v);
    else
        return std::to_string(v);
}

template <typename T>
Field bind(T& ref) {
    return {[&ref](const std::string& s) { ref = parse_value<T>(s); }, [&ref] { return show(ref); }};
}

Field bind_path(std::filesystem::path& ref) {
    return {[&ref](const std::string& s) { ref = s; }, [&ref] { return ref.string(); }};
}

Field bind_split(Split& ref) {
    return {[&ref](const std::string& s) { ref = parse_split(s); }, [&ref] { return std::string(to_string(ref)); }};
}

Field bind_mask(MaskKind& ref) {
    return {[&ref](const std::string& s) { ref = parse_mask_kind(s); }, [&ref] { return std::string(to_string(ref)); }};
}

using Schema = std::map<std::string, std::map<std::string, Field>>;

/// Ordered section list so to_ini() is stable.
const std::vector<std::string> kSections = {"run",     "synthetic",   "rebar",     "rebar_train",
                                            "encoder", "contrastive", "evaluation"};

Schema schema(RunConfig& c) {
    Schema s;
    s["run"] = {{"seed", bind(c.seed)},
                {"name", bind(c.name)},
                {"dataset", bind_path(c.dataset)},
                {"output_dir", bind_path(c.output_dir)}};
    auto& sy = c.synthetic;
    s["synthetic"] = {{"num_classes", bind(sy.num_classes)},
                      {"num_series", bind(sy.num_series)},
                      {"series_length", bind(sy.series_length)},
                      {"channels", bind(sy.channels)},
                      {"motifs_per_class", bind(sy.motifs_per_class)},
                      {"motif_length", bind(sy.motif_length)},
                      {"segment_min", bind(sy.segment_length_range.first)},
                      {"segment_max", bind(sy.segment_length_range.second)},
                      {"noise_std", bind(sy.noise_std)},
                      {"sample_rate_hz", bind(sy.sample_rate_hz)}};
    auto& r = c.rebar;
    s["rebar"] = {{"embed_channels", bind(r.embed_channels)},
                  {"bottleneck_channels", bind(r.bottleneck_channels)},
                  {"base_kernel", bind(r.base_kernel)},
                  {"num_layers", bind(r.num_layers)},
                  {"num_heads", bind(r.num_heads)},
                  {"softmax_scale", bind(r.softmax_scale)},
                  {"revin_eps", bind(r.revin_eps)}};
    auto& t = c.rebar_train;
    s["rebar_train"] = {{"extended_mask_len", bind(t.extended_mask_len)},
                        {"subseq_len", bind(t.subseq_len)},
                        {"batch_size", bind(t.batch_size)},
                        {"learning_rate", bind(t.learning_rate)},
                        {"max_epochs", bind(t.max_epochs)},
                        {"patience", bind(t.patience)},
                        {"ablation_linear_qkv", bind(t.ablation_linear_qkv)},
                        {"mask_kind", bind_mask(t.mask_kind)},
                        {"samples_per_epoch", bind(t.samples_per_epoch)},
                        {"val_samples", bind(t.val_samples)}};
    auto& e = c.encoder;
    s["encoder"] = {{"hidden_channels", bind(e.hidden_channels)},
                    {"num_blocks", bind(e.num_blocks)},
                    {"kernel", bind(e.kernel)},
                    {"embed_dim", bind(e.embed_dim)}};
    auto& k = c.contrastive;
    s["contrastive"] = {{"n_cand", bind(k.n_cand)},
                        {"tau", bind(k.tau)},
                        {"alpha", bind(k.alpha)},
                        {"batch_size", bind(k.batch_size)},
                        {"learning_rate", bind(k.learning_rate)},
                        {"max_epochs", bind(k.max_epochs)},
                        {"transient_mask_fraction", bind(k.transient_mask_fraction)},
                        {"anchors_per_series", bind(k.anchors_per_series)}};
    auto& v = c.evaluation;
    s["evaluation"] = {{"trials", bind(v.trials)},
                       {"n_cand", bind(v.n_cand)},
                       {"transient_mask_fraction", bind(v.transient_mask_fraction)},
                       {"split", bind_split(v.split)},
                       {"probe_train_split", bind_split(v.probe_train_split)}};
    return s;
}

/// Per-stage seeds follow run.seed.
void propagate_seeds(RunConfig& c) {
    c.synthetic.seed = c.seed;
    c.rebar.seed = mix_seed(c.seed, 1);
    c.rebar_train.seed = mix_seed(c.seed, 2);
    c.encoder.seed = mix_seed(c.seed, 3);
    c.contrastive.seed = mix_seed(c.seed, 4);
    c.contrastive.subseq_len = c.rebar_train.subseq_len;
}

template <typename F>
void collect(std::vector<std::string>& errors, F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        const std::string prefix = "config error: ";
        if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
        errors.push_back(msg);
    }
}

}  // namespace

std::filesystem::path RunConfig::resolved_output_dir() const {
    if (!output_dir.empty()) return output_dir;
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) return std::filesystem::path(root) / name;
    return std::filesystem::path("runs") / name;
}

std::filesystem::path RunConfig::resolved_dataset() const {
    return dataset.empty() ? resolved_output_dir() / ("dataset_" + name) : dataset;
}

std::string RunConfig::to_ini() const {
    RunConfig copy = *this;
    auto s = schema(copy);
    std::string out;
    for (const auto& sec : kSections) {
        out += "[" + sec + "]\n";
        for (const auto& [key, f] : s[sec]) out += key + " = " + f.get() + "\n";
        out += "\n";
    }
    return out;
}

RunConfig parse_run_config(const std::string& ini_text, const std::vector<std::string>& overrides) {
    RunConfig c;
    auto s = schema(c);
    std::vector<std::string> errors;

    auto assign = [&](const std::string& sec, const std::string& key, const std::string& value, const std::string& where) {
        auto si = s.find(sec);
        if (si == s.end()) {
            errors.push_back(where + ": unknown section [" + sec + "]");
            return;
        }
        auto fi = si->second.find(key);
        if (fi == si->second.end()) {
            errors.push_back(where + ": unknown key " + sec + "." + key);
            return;
        }
        try {
            fi->second.set(value);
        } catch (const std::exception& e) {
            errors.push_back(where + ": bad value '" + value + "' for " + sec + "." + key + " (" + e.what() + ")");
        }
    };

    pt::ptree tree;
    try {
        std::istringstream in(ini_text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("cannot parse config: " + e.message() + " at line " + std::to_string(e.line()));
    }
    for (const auto& [sec, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            errors.push_back("config: key '" + sec + "' outside any section");
            continue;
        }
        for (const auto& [key, val] : body) assign(sec, key, val.data(), "config");
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        const auto dot = o.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
            errors.push_back("--set '" + o + "': expected section.key=value");
            continue;
        }
        assign(o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1), "--set");
    }

    propagate_seeds(c);
    collect(errors, [&] { c.rebar.validate(); });
    collect(errors, [&] { c.rebar_train.validate(); });
    collect(errors, [&] { c.encoder.validate(); });
    collect(errors, [&] { c.contrastive.validate(); });
    const auto& sy = c.synthetic;
    if (sy.num_classes < 2) errors.push_back("synthetic.num_classes must be >= 2");
    if (sy.num_series < 1) errors.push_back("synthetic.num_series must be >= 1");
    if (sy.series_length < 1) errors.push_back("synthetic.series_length must be >= 1");
    if (sy.channels < 1) errors.push_back("synthetic.channels must be >= 1");
    if (sy.motifs_per_class < 1) errors.push_back("synthetic.motifs_per_class must be >= 1");
    if (sy.segment_length_range.first < sy.motif_length)
        errors.push_back("synthetic.segment_min must be >= synthetic.motif_length");
    if (sy.segment_length_range.second < sy.segment_length_range.first)
        errors.push_back("synthetic.segment_max must be >= synthetic.segment_min");
    if (!(sy.noise_std >= 0.0)) errors.push_back("synthetic.noise_std must be >= 0");
    if (c.evaluation.trials < 1) errors.push_back("evaluation.trials must be >= 1");
    if (c.evaluation.n_cand < 1) errors.push_back("evaluation.n_cand must be >= 1");
    if (!(c.evaluation.transient_mask_fraction > 0.0 && c.evaluation.transient_mask_fraction <= 1.0))
        errors.push_back("evaluation.transient_mask_fraction must lie in (0, 1]");
    if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos)
        errors.push_back("run.name must be a non-empty plain name");

    if (!errors.empty()) {
        std::string msg = std::to_string(errors.size()) + " problem(s) in configuration:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    return parse_run_config(read_text(path), overrides);
}

}  // namespace rebar
