#pragma once

#include <optional>
#include <string>
#include <vector>

#include "shiftmmd/datasets.hpp"
#include "shiftmmd/models.hpp"

namespace shiftmmd {

double mse(const std::vector<double>& predictions, const std::vector<double>& truth);
double rmse(const std::vector<double>& predictions, const std::vector<double>& truth);

// Mann-Whitney form with midranks for ties; labels must contain both classes.
double auc(const std::vector<double>& scores, const std::vector<double>& labels);

// Mean and n-1 standard deviation over per-seed metric values.
struct MetricReport {
    std::string metric;
    std::vector<double> per_seed;
    double mean = 0.0;
    double stddev = 0.0;    // NaN when fewer than two seeds

    static MetricReport from(std::string metric, std::vector<double> per_seed);
};

enum class ShiftTag { none, missingness, distribution };

// Residuals (prediction - truth) bucketed along one feature. Buckets partition
// the edge range; values outside are clamped into the end buckets so counts
// always sum to n.
struct ResidualBuckets {
    std::string feature;
    std::vector<double> edges;
    std::vector<int> counts;
    std::vector<std::optional<double>> means;
    std::vector<std::optional<double>> stddevs;
    std::vector<std::optional<double>> mean_abs;
    std::vector<ShiftTag> tags;
};

struct ShiftRange {
    double lo = 0.0;
    double hi = 0.0;
};

ResidualBuckets residual_buckets(const std::vector<double>& predictions,
                                 const std::vector<double>& truth,
                                 const std::vector<double>& feature_column,
                                 std::string feature_name,
                                 const std::vector<double>& edges,
                                 std::optional<ShiftRange> missingness_range,
                                 std::optional<ShiftRange> distribution_range);

std::vector<double> equal_width_edges(double lo, double hi, int buckets);

// Observed-value histograms of one feature in the original training set, the
// test set, and the masked training set, on shared bins. Entries whose
// indicator is set are excluded (they carry no observed value).
struct HistogramComparison {
    std::vector<double> edges;
    std::vector<int> train_counts;
    std::vector<int> test_counts;
    std::vector<int> masked_counts;
};

HistogramComparison mask_histogram(const Dataset& train, const Dataset& test,
                                   const MaskedDataset& masked_train, int feature_index,
                                   int bins = 20);

// Fraction of rows with feature value in [lo, hi] whose mask entry is set.
double masked_fraction(const std::vector<double>& feature_column,
                       const std::vector<double>& mask_column, double lo, double hi);

std::vector<double> matrix_column(const Matrix& m, int col);

// CSV with a source column (train|test) and one column per embedding
// dimension of the last hidden layer.
void export_embeddings(const Mlp& predictor, const Dataset& train, const Dataset& test,
                       const std::string& path);

void write_mask_csv(const std::vector<std::string>& feature_names, const Matrix& hard_mask,
                    const std::string& path);

void write_weights_csv(const std::vector<double>& weights, const std::string& path);

} // namespace shiftmmd
