#include "shiftmmd/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "shiftmmd/errors.hpp"

namespace shiftmmd {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

ConfigDoc ConfigDoc::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_string(buffer.str(), path);
}

ConfigDoc ConfigDoc::parse_string(const std::string& text, const std::string& origin) {
    ConfigDoc doc;
    std::stringstream ss(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty()) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
            }
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        doc.values_[section.empty() ? key : section + "." + key] = value;
    }
    return doc;
}

bool ConfigDoc::has(const std::string& key) const { return values_.count(key) > 0; }

void ConfigDoc::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::string ConfigDoc::get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string ConfigDoc::require_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required config key: " + key);
    return it->second;
}

double ConfigDoc::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    char* end = nullptr;
    double v = std::strtod(it->second.c_str(), &end);
    if (end != it->second.c_str() + it->second.size() || it->second.empty()) {
        throw ConfigError("config key " + key + " is not a number: '" + it->second + "'");
    }
    return v;
}

int ConfigDoc::get_int(const std::string& key, int fallback) const {
    double v = get_double(key, static_cast<double>(fallback));
    int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) {
        throw ConfigError("config key " + key + " is not an integer");
    }
    return i;
}

bool ConfigDoc::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw ConfigError("config key " + key + " is not a boolean: '" + it->second + "'");
}

std::vector<std::string> ConfigDoc::get_list(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return {};
    std::vector<std::string> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::string t = trim(tok);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::vector<double> ConfigDoc::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : get_list(key)) {
        char* end = nullptr;
        double v = std::strtod(s.c_str(), &end);
        if (end != s.c_str() + s.size()) {
            throw ConfigError("config key " + key + " has a non-numeric element: '" + s + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::string ConfigDoc::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k;
        out += "=";
        out += v;
        out += "\n";
    }
    return out;
}

std::uint64_t ConfigDoc::hash() const { return fnv1a64(canonical()); }

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

ExperimentConfig ExperimentConfig::from_doc(const ConfigDoc& doc) {
    ExperimentConfig cfg;
    cfg.config_hash = doc.hash();

    cfg.dataset_kind = doc.get_str("dataset.kind", "synthetic");
    if (cfg.dataset_kind == "synthetic") {
        SyntheticConfig& s = cfg.synth;
        s.n_train = doc.get_int("dataset.n_train", s.n_train);
        s.noise_x1_sd = doc.get_double("dataset.noise_x1_sd", s.noise_x1_sd);
        s.noise_x2_sd = doc.get_double("dataset.noise_x2_sd", s.noise_x2_sd);
        s.shift_mean = doc.get_double("dataset.shift_mean", s.shift_mean);
        s.shift_sd = doc.get_double("dataset.shift_sd", s.shift_sd);
        s.latent_lo = doc.get_double("dataset.latent_lo", s.latent_lo);
        s.latent_hi = doc.get_double("dataset.latent_hi", s.latent_hi);
        s.missing_lo = doc.get_double("dataset.missing_lo", s.missing_lo);
        s.missing_hi = doc.get_double("dataset.missing_hi", s.missing_hi);
        s.shift_lo = doc.get_double("dataset.shift_lo", s.shift_lo);
        s.shift_hi = doc.get_double("dataset.shift_hi", s.shift_hi);
        s.slope = doc.get_double("dataset.slope", s.slope);
        s.intercept = doc.get_double("dataset.intercept", s.intercept);
        s.curvature = doc.get_double("dataset.curvature", s.curvature);
        s.validate();
    } else if (cfg.dataset_kind == "csv") {
        cfg.csv_path = doc.require_str("dataset.csv");
        cfg.schema_path = doc.require_str("dataset.schema");
    } else {
        throw ConfigError("dataset.kind must be synthetic or csv");
    }
    cfg.standardize = doc.get_bool("dataset.standardize", true);

    if (doc.has("kernel.bandwidths")) {
        cfg.base.kernel.bandwidths = doc.get_double_list("kernel.bandwidths");
    }
    cfg.base.kernel.bandwidths_are_variance =
        doc.get_bool("kernel.bandwidths_are_variance", false);
    cfg.base.kernel.validate();
    cfg.kmm.kernel = cfg.base.kernel;

    if (doc.has("train.methods")) {
        cfg.methods.clear();
        for (const auto& name : doc.get_list("train.methods")) {
            cfg.methods.push_back(parse_method(name));
        }
    }
    if (cfg.methods.empty()) throw ConfigError("train.methods must name at least one method");
    if (doc.has("train.seeds")) {
        cfg.seeds.clear();
        for (double v : doc.get_double_list("train.seeds")) {
            cfg.seeds.push_back(static_cast<std::uint64_t>(v));
        }
    }
    if (cfg.seeds.empty()) throw ConfigError("train.seeds must name at least one seed");

    TrainingConfig& t = cfg.base;
    const std::string task = doc.get_str("train.task", "regression");
    if (task == "regression") t.task = Task::regression;
    else if (task == "binary_classification") t.task = Task::binary_classification;
    else throw ConfigError("train.task must be regression or binary_classification");
    t.epochs = doc.get_int("train.epochs", 5000);
    t.batch_size = doc.get_int("train.batch", 0);
    t.mmd_batch = doc.get_int("train.mmd_batch", 256);
    t.learning_rate = doc.get_double("train.lr", 0.01);
    t.rms_decay = doc.get_double("train.rms_decay", 0.99);
    t.rms_eps = doc.get_double("train.rms_eps", 1e-8);
    if (doc.has("train.hidden")) {
        t.hidden_sizes.clear();
        for (double v : doc.get_double_list("train.hidden")) {
            t.hidden_sizes.push_back(static_cast<int>(v));
        }
    }
    if (doc.has("train.masker_hidden")) {
        t.masker_hidden.clear();
        for (double v : doc.get_double_list("train.masker_hidden")) {
            t.masker_hidden.push_back(static_cast<int>(v));
        }
    }
    t.mmd_layers = doc.get_int("train.mmd_layers", 2);
    t.mask_multiplicity = doc.get_int("train.mask_multiplicity", 1);
    t.include_original_rows = doc.get_bool("train.include_original_rows", false);
    t.masker.tau_start = doc.get_double("train.tau_start", 0.1);
    t.masker.tau_end = doc.get_double("train.tau_end", 0.01);

    const std::string lambda = doc.get_str("train.lambda", "1");
    if (lambda == "auto") {
        cfg.lambda_mode = LambdaMode::automatic;
    } else if (lambda == "grid") {
        cfg.lambda_mode = LambdaMode::grid;
    } else {
        cfg.lambda_mode = LambdaMode::fixed;
        char* end = nullptr;
        t.lambda = std::strtod(lambda.c_str(), &end);
        if (end != lambda.c_str() + lambda.size()) {
            throw ConfigError("train.lambda must be a number, auto, or grid");
        }
        if (t.lambda < 0.0) throw ConfigError("train.lambda must be nonnegative");
    }
    cfg.lambda_grid = doc.get_double_list("train.lambda_grid");
    if (cfg.lambda_mode == LambdaMode::grid && cfg.lambda_grid.empty()) {
        throw ConfigError("train.lambda = grid requires train.lambda_grid");
    }
    for (Method m : {Method::mmd_repr, Method::dan, Method::jan, Method::mmd_hybrid}) {
        const std::string key = "train.lambda." + method_name(m);
        if (doc.has(key)) cfg.lambda_by_method[method_name(m)] = doc.get_double(key, 0.0);
    }
    cfg.validation_ratio = doc.get_double("train.validation_ratio", 0.75);

    cfg.kmm.upper_bound = doc.get_double("kmm.upper_bound", 1000.0);
    if (doc.get_str("kmm.slack", "auto") != "auto") {
        cfg.kmm.slack = doc.get_double("kmm.slack", -1.0);
    }
    cfg.kmm.max_iters = doc.get_int("kmm.max_iters", 5000);
    if (doc.get_str("kmm.step", "auto") != "auto") {
        cfg.kmm.step_size = doc.get_double("kmm.step", 0.0);
    }
    cfg.kmm.tolerance = doc.get_double("kmm.tolerance", 1e-6);

    cfg.out_dir = doc.get_str("output.dir", "");
    cfg.workers = doc.get_int("output.workers", 2);
    if (cfg.workers < 1) throw ConfigError("output.workers must be >= 1");
    return cfg;
}

} // namespace shiftmmd
