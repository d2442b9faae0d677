#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shiftmmd/matrix.hpp"

namespace shiftmmd {

enum class FeatureKind { numeric, ordinal, onehot };
enum class TargetTransform { none, log1p };

struct FeatureMeta {
    std::string name;
    FeatureKind kind = FeatureKind::numeric;
    double impute_value = 0.0;
};

// Modeling-ready table: imputed features, {0,1} missingness indicators, an
// optional target, and per-column metadata.
struct Dataset {
    Matrix features;
    Matrix indicators;
    std::vector<double> target;    // empty when unlabeled
    std::vector<FeatureMeta> meta;
    TargetTransform target_transform = TargetTransform::none;

    int n() const { return features.rows(); }
    int dim() const { return features.cols(); }
    bool has_target() const { return !target.empty(); }
    std::vector<double> impute_vector() const;
    std::vector<std::string> feature_names() const;
};

// Synthetic two-feature regression data with a missingness shift and a
// distribution shift injected into X1 on the test side. The generative
// constants (slope/intercept/curvature) shape y = slope*t + intercept with
// X1 = t + noise and X2 = sign * sqrt(y / curvature) + noise, so y is linear
// in X1 and parabolic in X2.
struct SyntheticConfig {
    int n_train = 5000;
    double noise_x1_sd = 0.1;
    double noise_x2_sd = 0.5;
    double shift_mean = 1.0;
    double shift_sd = 0.1;
    // The latent range extends past the shift ranges so the test set keeps
    // genuinely unshifted X1 regions on both flanks.
    double latent_lo = -4.5, latent_hi = 4.5;
    double missing_lo = -3.5, missing_hi = 0.0;   // X1 masked in [lo, hi]
    double shift_lo = 0.0, shift_hi = 3.5;        // X1 shifted in (lo, hi]
    double slope = 2.0;
    double intercept = 10.0;                      // keeps y positive over the latent range
    double curvature = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticData {
    Dataset train;
    Dataset test;
    // Exact conditional mean of y for each test row given the latent draw;
    // the "golden" reference predictions.
    std::vector<double> golden;
    // Pre-shift feature values of the test rows, for residual diagnostics.
    Matrix test_clean_features;
};

SyntheticData generate_synthetic(const SyntheticConfig& config);

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

struct ColumnSpec {
    std::string name;
    FeatureKind kind = FeatureKind::numeric;
};

struct TableSchema {
    std::vector<ColumnSpec> feature_columns;
    std::string target_column;                    // empty = unlabeled
    TargetTransform target_transform = TargetTransform::none;
    std::string date_column;                      // empty = no date filtering
    std::string train_range;                      // "YYYY-MM..YYYY-MM", inclusive
    std::string test_range;
    std::vector<std::string> missing_sentinels{"", "NA", "NaN", "null"};

    bool is_missing_cell(const std::string& cell) const;
};

TableSchema load_schema(const std::string& path);

struct RawTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const;   // -1 when absent
};

// Comma-separated, first row header. Malformed rows raise IoError with the
// line number; columns named by the schema must exist.
RawTable load_csv(const std::string& path, const TableSchema& schema);

// Rows whose date column falls in "YYYY-MM..YYYY-MM" (inclusive on both ends,
// compared on the YYYY-MM prefix).
RawTable filter_by_month_range(const RawTable& table, const TableSchema& schema,
                               const std::string& range);

// Fitted on training rows only: per-column imputation means, ordinal maps
// (unseen categories become missing), one-hot layouts, target transform.
struct PreprocessSpec {
    struct Column {
        ColumnSpec spec;
        int raw_index = -1;
        double mean = 0.0;                         // numeric / ordinal imputation
        std::map<std::string, double> ordinal_map; // category -> value
        std::vector<std::string> categories;       // one-hot layout
    };
    std::vector<Column> columns;
    std::vector<std::string> raw_columns;          // layout guard for transform
    int target_raw_index = -1;
    TargetTransform target_transform = TargetTransform::none;
    std::vector<std::string> missing_sentinels;
};

PreprocessSpec fit_preprocess(const RawTable& train, const TableSchema& schema);
Dataset transform(const RawTable& table, const PreprocessSpec& spec);

// Disjoint random split; deterministic under seed.
std::pair<Dataset, Dataset> split_train_val(const Dataset& data, double ratio, std::uint64_t seed);

// Per-column affine rescaling to zero mean and unit variance, fitted on the
// training features (post-imputation). Imputation values in the metadata are
// mapped into the same units.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;
};

Standardizer fit_standardizer(const Dataset& train);
void apply_standardizer(Dataset& data, const Standardizer& s);

Dataset select_rows(const Dataset& data, const std::vector<int>& rows);

std::vector<double> invert_target_transform(const std::vector<double>& values, TargetTransform t);

// Features with the missingness indicators appended: the input layout every
// model in the toolkit consumes.
Matrix model_inputs(const Dataset& data);

void write_dataset_csv(const Dataset& data, const std::string& path);

} // namespace shiftmmd
