#include "longred/config.hpp"

#include <fstream>
#include <sstream>

#include "longred/errors.hpp"

namespace longred {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

KvConfig KvConfig::parse_string(const std::string& text) {
    KvConfig kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (kv.values_.count(key))
            throw ConfigError("config: duplicate key: " + key);
        kv.values_[key] = val;
    }
    return kv;
}

bool KvConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string KvConfig::get_string(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key: " + key);
    consumed_.insert(key);
    return it->second;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    return get_string(key);
}

std::int64_t KvConfig::get_int(const std::string& key) {
    const std::string s = get_string(key);
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key " + key + " is not an integer: " + s);
    }
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) {
    if (!has(key)) return fallback;
    return get_int(key);
}

double KvConfig::get_double(const std::string& key) {
    const std::string s = get_string(key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key " + key + " is not a number: " + s);
    }
}

double KvConfig::get_double(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    return get_double(key);
}

void KvConfig::finish() const {
    for (const auto& [key, value] : values_)
        if (!consumed_.count(key)) throw ConfigError("config: unknown key: " + key);
}

namespace {

std::array<double, 3> parse_mix(const std::string& s) {
    std::array<double, 3> mix{};
    std::istringstream ss(s);
    std::string part;
    int i = 0;
    while (std::getline(ss, part, ':')) {
        if (i >= 3) throw ConfigError("train.mix must have three ratio parts");
        try {
            mix[static_cast<std::size_t>(i)] = std::stod(part);
        } catch (const std::exception&) {
            throw ConfigError("train.mix: bad ratio part: " + part);
        }
        ++i;
    }
    if (i != 3) throw ConfigError("train.mix must have three ratio parts");
    return mix;
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    KvConfig kv = KvConfig::parse_file(path);
    return from_kv(kv);
}

RunConfig RunConfig::from_kv(KvConfig& kv) {
    RunConfig rc;
    rc.seed = static_cast<std::uint64_t>(kv.get_int("seed"));
    rc.out_dir = kv.get_string("out");
    rc.init = kv.get_string("init", "");
    rc.teacher = kv.get_string("teacher", "");

    rc.train.mode = TrainPlan::parse_mode(kv.get_string("mode", "longred"));
    rc.train.steps = static_cast<int>(kv.get_int("train.steps"));
    rc.train.alpha1 = kv.get_double("train.alpha1", 5.0);
    rc.train.alpha2 = kv.get_double("train.alpha2", 10.0);
    rc.train.distill_layer_count = static_cast<int>(kv.get_int("train.m", 0));
    rc.train.mix_ratio = parse_mix(kv.get_string("train.mix", "4:3:1"));
    rc.train.batch_tokens = kv.get_int("train.batch_tokens");
    rc.train.t_long = static_cast<int>(kv.get_int("train.t_long"));
    rc.train.t_short = static_cast<int>(kv.get_int("train.t_short", 0));
    rc.train.t_base = static_cast<int>(kv.get_int("train.t_base", 0));
    rc.train.probe_sequences = static_cast<int>(kv.get_int("train.probe_sequences", 8));
    rc.train.optim.lr = kv.get_double("train.lr", 2e-5);
    rc.train.optim.weight_decay = kv.get_double("train.weight_decay", 0.1);
    rc.train.optim.beta1 = kv.get_double("train.beta1", 0.9);
    rc.train.optim.beta2 = kv.get_double("train.beta2", 0.95);
    rc.train.optim.eps = kv.get_double("train.eps", 1e-8);

    if (rc.init.empty()) {
        rc.dtype = kv.get_string("dtype");
        rc.model.layers = static_cast<int>(kv.get_int("model.layers"));
        rc.model.heads = static_cast<int>(kv.get_int("model.heads"));
        rc.model.d_model = static_cast<int>(kv.get_int("model.d_model"));
        rc.model.head_dim = static_cast<int>(
            kv.get_int("model.head_dim", rc.model.heads > 0 ? rc.model.d_model / rc.model.heads : 0));
        rc.model.vocab = static_cast<int>(kv.get_int("model.vocab"));
        rc.model.window = static_cast<int>(kv.get_int("model.window"));
        rc.model.rope_base = kv.get_double("model.rope_base", 10000.0);
        rc.model.ffn_mult = static_cast<int>(kv.get_int("model.ffn_mult", 4));
    } else {
        rc.dtype = kv.get_string("dtype", "");
    }

    rc.extension.kind = ExtensionSpec::parse_kind(kv.get_string("extension.kind", "none"));
    if (rc.extension.kind == ExtensionSpec::Kind::abf)
        rc.extension.new_base = kv.get_double("extension.new_base");
    if (rc.extension.kind == ExtensionSpec::Kind::pi)
        rc.extension.scale = kv.get_double("extension.scale");
    if (rc.extension.kind != ExtensionSpec::Kind::none)
        rc.extension.target_window = static_cast<int>(kv.get_int("extension.target_window"));

    rc.skip.sampler = SkipConfig::parse_sampler(kv.get_string("skip.sampler", "uniform"));
    rc.skip.tb_policy = SkipConfig::parse_tb_policy(kv.get_string("skip.tb_policy", "fixed"));
    if (rc.skip.tb_policy == SkipConfig::TbPolicy::fixed)
        rc.skip.tb_value = static_cast<int>(kv.get_int("skip.tb", 0));
    rc.skip.sigma = kv.get_double("skip.sigma", 3.0);
    rc.skip.grid_points = static_cast<int>(kv.get_int("skip.grid_points", 1000));
    rc.skip.input_len = rc.train.t_base;
    rc.skip.target_len = rc.train.t_long;

    rc.data_d1 = kv.get_string("data.d1", "");
    rc.data_d2 = kv.get_string("data.d2", "");
    rc.data_d3 = kv.get_string("data.d3", "");

    kv.finish();
    return rc;
}

void RunConfig::validate() const {
    if (dtype != "" && dtype != "f32" && dtype != "f64")
        throw ConfigError("dtype must be f32 or f64");
    if (out_dir.empty()) throw ConfigError("out directory is required");
    if (data_d1.empty()) throw ConfigError("data.d1 is required");
    if (train.mode == TrainPlan::Mode::longred) {
        if (teacher.empty()) throw ConfigError("longred mode requires a teacher checkpoint");
        if (train.alpha1 > 0.0 && data_d2.empty())
            throw ConfigError("longred mode with alpha1 > 0 requires data.d2");
        if (train.alpha2 > 0.0 && data_d3.empty())
            throw ConfigError("longred mode with alpha2 > 0 requires data.d3");
        if (train.alpha2 > 0.0) {
            if (train.t_base < 3) throw ConfigError("train.t_base required for short-to-long");
            skip.validate();
            if (extension.kind != ExtensionSpec::Kind::none &&
                skip.target_len != extension.target_window)
                throw ConfigError("skip target length must equal extension.target_window");
        }
        if (train.alpha1 > 0.0 && train.t_short < 2)
            throw ConfigError("train.t_short required for short-text distillation");
    }
    if (extension.kind != ExtensionSpec::Kind::none && extension.target_window != train.t_long)
        throw ConfigError("extension.target_window must equal train.t_long");
}

}  // namespace longred
