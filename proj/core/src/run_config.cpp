#include "irff/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

IRFF_BEGIN_NAMESPACE

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) bad_value(key, value, "a number");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    bad_value(key, value, "a boolean");
}

template <class T>
std::string fmt(T v) {
    if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, ptr);
    }
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

template <class T, std::size_t N>
std::array<T, N> parse_array(const std::string& key, const std::string& value) {
    const auto items = split_list(value);
    if (items.size() != N) {
        throw ConfigError("config key '" + key + "' expects " + std::to_string(N) + " comma-separated values");
    }
    std::array<T, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = parse_number<T>(key, items[i]);
    return out;
}

template <class T, std::size_t N>
std::string fmt_array(const std::array<T, N>& a) {
    std::string s;
    for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + fmt(a[i]);
    return s;
}

std::array<bool, kStages> parse_stages(const std::string& key, const std::string& value) {
    std::array<bool, kStages> out{};
    if (value == "none") return out;
    for (const auto& item : split_list(value)) {
        const auto stage = parse_number<std::size_t>(key, item);
        if (stage >= kStages) throw ConfigError("config key '" + key + "': stage " + item + " does not exist");
        out[stage] = true;
    }
    return out;
}

std::string fmt_stages(const std::array<bool, kStages>& stages) {
    std::string s;
    for (std::size_t i = 0; i < kStages; ++i) {
        if (stages[i]) s += (s.empty() ? "" : ",") + std::to_string(i);
    }
    return s.empty() ? "none" : s;
}

struct Field {
    const char* key;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define IRFF_NUM(name, member)                                                                            \
    Field {                                                                                               \
        name,                                                                                             \
            [](RunConfig& c, const std::string& k, const std::string& v) {                                \
                c.member = parse_number<std::decay_t<decltype(c.member)>>(k, v);                          \
            },                                                                                            \
            [](const RunConfig& c) { return fmt(c.member); }                                              \
    }
#define IRFF_BOOL(name, member)                                                                            \
    Field {                                                                                                \
        name, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }, \
            [](const RunConfig& c) { return fmt(c.member); }                                               \
    }
#define IRFF_STR(name, member)                                                                \
    Field {                                                                                   \
        name, [](RunConfig& c, const std::string&, const std::string& v) { c.member = v; },  \
            [](const RunConfig& c) { return c.member; }                                       \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        IRFF_STR("data_root", data_root),
        IRFF_STR("output_dir", output_dir),
        IRFF_NUM("seed", seed),
        IRFF_NUM("data_seed", data_seed),
        IRFF_NUM("train_count", train_count),
        IRFF_NUM("test_count", test_count),
        IRFF_NUM("synth.size", synth.size),
        IRFF_NUM("synth.min_cracks", synth.min_cracks),
        IRFF_NUM("synth.max_cracks", synth.max_cracks),
        IRFF_NUM("synth.min_length", synth.min_length),
        IRFF_NUM("synth.max_length", synth.max_length),
        IRFF_NUM("synth.step_jitter", synth.step_jitter),
        IRFF_NUM("synth.branch_probability", synth.branch_probability),
        IRFF_NUM("synth.min_width", synth.min_width),
        IRFF_NUM("synth.max_width", synth.max_width),
        IRFF_NUM("synth.texture_amplitude", synth.texture_amplitude),
        IRFF_NUM("synth.crack_darkening", synth.crack_darkening),
        IRFF_NUM("synth.thermal_contrast", synth.thermal_contrast),
        IRFF_NUM("synth.thermal_blur", synth.thermal_blur),
        IRFF_NUM("synth.rgb_noise", synth.rgb_noise),
        IRFF_NUM("synth.thermal_noise", synth.thermal_noise),
        IRFF_BOOL("synth.shadows", synth.shadows),
        IRFF_BOOL("synth.watermarks", synth.watermarks),
        Field{"model.stage_channels",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  c.model.stage_channels = parse_array<std::size_t, kStages>(k, v);
              },
              [](const RunConfig& c) { return fmt_array(c.model.stage_channels); }},
        Field{"model.stage_strides",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  c.model.stage_strides = parse_array<std::size_t, kStages>(k, v);
              },
              [](const RunConfig& c) { return fmt_array(c.model.stage_strides); }},
        Field{"model.fusion_stages",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  c.model.fusion_enabled = parse_stages(k, v);
              },
              [](const RunConfig& c) { return fmt_stages(c.model.fusion_enabled); }},
        IRFF_NUM("model.heads", model.heads),
        IRFF_NUM("model.mlp_ratio", model.mlp_ratio),
        IRFF_NUM("model.segments", model.segments),
        IRFF_NUM("model.decoder_width", model.decoder_width),
        IRFF_NUM("loss.alpha", loss.alpha),
        IRFF_NUM("loss.beta", loss.beta),
        IRFF_NUM("loss.gamma", loss.gamma),
        IRFF_NUM("loss.delta", loss.delta),
        IRFF_NUM("loss.skeleton_iterations", loss.skeleton_iterations),
        IRFF_NUM("loss.epsilon", loss.epsilon),
        IRFF_NUM("optim.lr", optim.lr),
        IRFF_NUM("optim.weight_decay", optim.weight_decay),
        IRFF_NUM("optim.beta1", optim.beta1),
        IRFF_NUM("optim.beta2", optim.beta2),
        IRFF_NUM("optim.eps", optim.eps),
        IRFF_NUM("batch_size", batch_size),
        IRFF_NUM("epochs", epochs),
        IRFF_NUM("train_size", train_size),
        IRFF_NUM("eval_size", eval_size),
        IRFF_BOOL("augment", augment),
        IRFF_NUM("threshold", threshold),
        Field{"aggregation",
              [](RunConfig& c, const std::string&, const std::string& v) { c.aggregation = parse_aggregation(v); },
              [](const RunConfig& c) { return to_string(c.aggregation); }},
        Field{"norm.rgb_mean",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  c.norm.rgb_mean = parse_array<double, 3>(k, v);
              },
              [](const RunConfig& c) { return fmt_array(c.norm.rgb_mean); }},
        Field{"norm.rgb_std",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  c.norm.rgb_std = parse_array<double, 3>(k, v);
              },
              [](const RunConfig& c) { return fmt_array(c.norm.rgb_std); }},
        IRFF_NUM("norm.thermal_mean", norm.thermal_mean),
        IRFF_NUM("norm.thermal_std", norm.thermal_std),
    };
    return table;
}

#undef IRFF_NUM
#undef IRFF_BOOL
#undef IRFF_STR

}  // namespace

void RunConfig::validate() const {
    synth.validate();
    model.validate();
    loss.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (train_size < 32 || eval_size < 32) throw ConfigError("train_size and eval_size must be >= 32");
    const auto f = model.stride_product();
    if (train_size % f != 0 || eval_size % f != 0) {
        throw ConfigError("train_size and eval_size must be divisible by the cumulative stride " + std::to_string(f));
    }
    if (!(optim.lr > 0)) throw ConfigError("optim.lr must be positive");
    if (optim.weight_decay < 0) throw ConfigError("optim.weight_decay must be non-negative");
    if (!(optim.beta1 >= 0 && optim.beta1 < 1 && optim.beta2 >= 0 && optim.beta2 < 1)) {
        throw ConfigError("optim betas must lie in [0, 1)");
    }
    if (!(threshold > 0 && threshold < 1)) throw ConfigError("threshold must lie in (0, 1)");
    for (std::size_t k = 0; k < 3; ++k) {
        if (!(norm.rgb_std[k] > 0)) throw ConfigError("norm.rgb_std must be positive");
    }
    if (!(norm.thermal_std > 0)) throw ConfigError("norm.thermal_std must be positive");
}

std::vector<std::string> preset_names() { return {"desk", "paper-protocol"}; }

RunConfig preset_config(const std::string& name) {
    RunConfig c;
    c.preset = name;
    if (name == "desk") {
        c.optim.lr = real(2e-3);
        return c;
    }
    if (name == "paper-protocol") {
        c.batch_size = 8;
        c.epochs = 150;
        c.optim.weight_decay = real(1e-4);
        c.optim.lr = real(1e-3);
        c.train_size = 480;
        c.eval_size = 480;
        c.synth.size = 480;
        return c;
    }
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper-protocol)");
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "preset") {
        cfg = preset_config(value);
        return;
    }
    for (const auto& f : fields()) {
        if (key == f.key) {
            f.set(cfg, key, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
    const auto items = parse_config_text(text);
    // A preset line anywhere in the file is the base for every other line.
    for (const auto& [k, v] : items) {
        if (k == "preset") apply_setting(cfg, k, v);
    }
    for (const auto& [k, v] : items) {
        if (k != "preset") apply_setting(cfg, k, v);
    }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str());
}

std::vector<std::pair<std::string, std::string>> config_items(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back("preset", cfg.preset);
    for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
    return out;
}

std::string format_config(const RunConfig& cfg) {
    std::string s;
    for (const auto& [k, v] : config_items(cfg)) s += k + " = " + v + "\n";
    return s;
}

void write_config(const std::filesystem::path& path, const RunConfig& cfg) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write config " + path.string());
    out << format_config(cfg);
    if (!out) throw IoError("cannot write config " + path.string());
}

IRFF_END_NAMESPACE
