#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shiftmmd/datasets.hpp"
#include "shiftmmd/kmm.hpp"
#include "shiftmmd/train.hpp"

namespace shiftmmd {

// Flat "[section]" + "key = value" document. Keys are addressed as
// "section.key"; values are untyped strings until read.
class ConfigDoc {
public:
    static ConfigDoc parse_file(const std::string& path);
    static ConfigDoc parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    std::string get_str(const std::string& key, const std::string& fallback) const;
    std::string require_str(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;        // empty when absent
    std::vector<double> get_double_list(const std::string& key) const;

    // Sorted key=value lines; the basis of the config hash.
    std::string canonical() const;
    std::uint64_t hash() const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

enum class LambdaMode { fixed, automatic, grid };

// Everything a full experiment needs: data source, kernel, the training
// template, the method/seed matrix, KMM settings, output location.
struct ExperimentConfig {
    std::string dataset_kind = "synthetic";   // synthetic | csv
    SyntheticConfig synth;
    std::string csv_path;
    std::string schema_path;
    // Rescale features (train-fit, unit variance) before models, MMD terms,
    // and KMM see them; keeps the fixed bandwidth list on a sane scale.
    bool standardize = true;

    std::vector<Method> methods{Method::baseline};
    std::vector<std::uint64_t> seeds{0};
    TrainingConfig base;
    LambdaMode lambda_mode = LambdaMode::fixed;
    std::vector<double> lambda_grid;
    std::map<std::string, double> lambda_by_method;
    double validation_ratio = 0.75;

    KmmConfig kmm;

    std::string out_dir;
    int workers = 2;

    std::uint64_t config_hash = 0;

    static ExperimentConfig from_doc(const ConfigDoc& doc);
};

} // namespace shiftmmd
