#include "shiftmmd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "shiftmmd/errors.hpp"

namespace shiftmmd {

double mse(const std::vector<double>& predictions, const std::vector<double>& truth) {
    if (predictions.size() != truth.size()) throw ArgumentError("mse: length mismatch");
    if (predictions.empty()) throw ArgumentError("mse: empty inputs");
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - truth[i];
        acc += d * d;
    }
    return acc / static_cast<double>(predictions.size());
}

double rmse(const std::vector<double>& predictions, const std::vector<double>& truth) {
    return std::sqrt(mse(predictions, truth));
}

double auc(const std::vector<double>& scores, const std::vector<double>& labels) {
    if (scores.size() != labels.size()) throw ArgumentError("auc: length mismatch");
    if (scores.empty()) throw ArgumentError("auc: empty inputs");
    std::size_t n_pos = 0, n_neg = 0;
    for (double l : labels) {
        if (l == 1.0) ++n_pos;
        else if (l == 0.0) ++n_neg;
        else throw ArgumentError("auc: labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0) {
        throw ArgumentError("auc is undefined with a single class");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks over tied score groups.
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1.0) pos_rank_sum += midrank;
        }
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricReport MetricReport::from(std::string metric, std::vector<double> per_seed) {
    if (per_seed.empty()) throw ArgumentError("metric report needs at least one value");
    MetricReport r;
    r.metric = std::move(metric);
    r.per_seed = std::move(per_seed);
    double sum = 0.0;
    for (double v : r.per_seed) sum += v;
    r.mean = sum / static_cast<double>(r.per_seed.size());
    if (r.per_seed.size() < 2) {
        r.stddev = std::numeric_limits<double>::quiet_NaN();
    } else {
        double ss = 0.0;
        for (double v : r.per_seed) ss += (v - r.mean) * (v - r.mean);
        r.stddev = std::sqrt(ss / static_cast<double>(r.per_seed.size() - 1));
    }
    return r;
}

std::vector<double> equal_width_edges(double lo, double hi, int buckets) {
    if (buckets < 1 || !(hi > lo)) throw ArgumentError("invalid bucket edges request");
    std::vector<double> edges(static_cast<std::size_t>(buckets) + 1);
    for (int k = 0; k <= buckets; ++k) {
        edges[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / buckets;
    }
    return edges;
}

namespace {

// Positive-measure overlap; touching at a single point does not count.
bool overlaps(double a_lo, double a_hi, double b_lo, double b_hi) {
    return std::min(a_hi, b_hi) - std::max(a_lo, b_lo) > 0.0;
}

int bucket_of(double v, const std::vector<double>& edges) {
    const int n_buckets = static_cast<int>(edges.size()) - 1;
    if (v < edges.front()) return 0;
    if (v >= edges.back()) return n_buckets - 1;
    int lo = 0, hi = n_buckets - 1;
    while (lo < hi) {
        const int mid = (lo + hi + 1) / 2;
        if (v >= edges[static_cast<std::size_t>(mid)]) lo = mid;
        else hi = mid - 1;
    }
    return lo;
}

} // namespace

ResidualBuckets residual_buckets(const std::vector<double>& predictions,
                                 const std::vector<double>& truth,
                                 const std::vector<double>& feature_column,
                                 std::string feature_name,
                                 const std::vector<double>& edges,
                                 std::optional<ShiftRange> missingness_range,
                                 std::optional<ShiftRange> distribution_range) {
    if (predictions.size() != truth.size() || predictions.size() != feature_column.size()) {
        throw ArgumentError("residual_buckets: length mismatch");
    }
    if (edges.size() < 2) throw ArgumentError("residual_buckets: need at least two edges");
    for (std::size_t k = 1; k < edges.size(); ++k) {
        if (!(edges[k] > edges[k - 1])) throw ArgumentError("residual_buckets: edges must increase");
    }

    const int n_buckets = static_cast<int>(edges.size()) - 1;
    ResidualBuckets out;
    out.feature = std::move(feature_name);
    out.edges = edges;
    out.counts.assign(static_cast<std::size_t>(n_buckets), 0);
    out.means.assign(static_cast<std::size_t>(n_buckets), std::nullopt);
    out.stddevs.assign(static_cast<std::size_t>(n_buckets), std::nullopt);
    out.mean_abs.assign(static_cast<std::size_t>(n_buckets), std::nullopt);
    out.tags.assign(static_cast<std::size_t>(n_buckets), ShiftTag::none);

    for (int b = 0; b < n_buckets; ++b) {
        const double lo = edges[static_cast<std::size_t>(b)];
        const double hi = edges[static_cast<std::size_t>(b) + 1];
        if (missingness_range && overlaps(lo, hi, missingness_range->lo, missingness_range->hi)) {
            out.tags[static_cast<std::size_t>(b)] = ShiftTag::missingness;
        } else if (distribution_range &&
                   overlaps(lo, hi, distribution_range->lo, distribution_range->hi)) {
            out.tags[static_cast<std::size_t>(b)] = ShiftTag::distribution;
        }
    }

    std::vector<double> sum(static_cast<std::size_t>(n_buckets), 0.0);
    std::vector<double> sum_sq(static_cast<std::size_t>(n_buckets), 0.0);
    std::vector<double> sum_abs(static_cast<std::size_t>(n_buckets), 0.0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int b = bucket_of(feature_column[i], edges);
        const double r = predictions[i] - truth[i];
        ++out.counts[static_cast<std::size_t>(b)];
        sum[static_cast<std::size_t>(b)] += r;
        sum_sq[static_cast<std::size_t>(b)] += r * r;
        sum_abs[static_cast<std::size_t>(b)] += std::fabs(r);
    }
    for (int b = 0; b < n_buckets; ++b) {
        const int c = out.counts[static_cast<std::size_t>(b)];
        if (c == 0) continue;
        const double m = sum[static_cast<std::size_t>(b)] / c;
        out.means[static_cast<std::size_t>(b)] = m;
        out.mean_abs[static_cast<std::size_t>(b)] = sum_abs[static_cast<std::size_t>(b)] / c;
        if (c > 1) {
            const double var = (sum_sq[static_cast<std::size_t>(b)] - c * m * m) / (c - 1);
            out.stddevs[static_cast<std::size_t>(b)] = std::sqrt(std::max(0.0, var));
        }
    }
    return out;
}

HistogramComparison mask_histogram(const Dataset& train, const Dataset& test,
                                   const MaskedDataset& masked_train, int feature_index,
                                   int bins) {
    if (feature_index < 0 || feature_index >= train.dim() || feature_index >= test.dim() ||
        feature_index >= masked_train.features_prime.cols()) {
        throw ArgumentError("mask_histogram: feature index out of range");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    auto widen = [&](double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    };
    for (int i = 0; i < train.n(); ++i) {
        if (train.indicators(i, feature_index) == 0.0) widen(train.features(i, feature_index));
    }
    for (int i = 0; i < test.n(); ++i) {
        if (test.indicators(i, feature_index) == 0.0) widen(test.features(i, feature_index));
    }
    if (!(hi > lo)) hi = lo + 1.0;

    HistogramComparison out;
    out.edges = equal_width_edges(lo, hi, bins);
    out.train_counts.assign(static_cast<std::size_t>(bins), 0);
    out.test_counts.assign(static_cast<std::size_t>(bins), 0);
    out.masked_counts.assign(static_cast<std::size_t>(bins), 0);

    for (int i = 0; i < train.n(); ++i) {
        if (train.indicators(i, feature_index) != 0.0) continue;
        ++out.train_counts[static_cast<std::size_t>(bucket_of(train.features(i, feature_index), out.edges))];
    }
    for (int i = 0; i < test.n(); ++i) {
        if (test.indicators(i, feature_index) != 0.0) continue;
        ++out.test_counts[static_cast<std::size_t>(bucket_of(test.features(i, feature_index), out.edges))];
    }
    for (int i = 0; i < masked_train.features_prime.rows(); ++i) {
        if (masked_train.indicator_hat(i, feature_index) != 0.0) continue;
        ++out.masked_counts[static_cast<std::size_t>(
            bucket_of(masked_train.features_prime(i, feature_index), out.edges))];
    }
    return out;
}

double masked_fraction(const std::vector<double>& feature_column,
                       const std::vector<double>& mask_column, double lo, double hi) {
    if (feature_column.size() != mask_column.size()) {
        throw ArgumentError("masked_fraction: length mismatch");
    }
    int in_range = 0, masked = 0;
    for (std::size_t i = 0; i < feature_column.size(); ++i) {
        if (feature_column[i] >= lo && feature_column[i] <= hi) {
            ++in_range;
            if (mask_column[i] != 0.0) ++masked;
        }
    }
    if (in_range == 0) throw ArgumentError("masked_fraction: no rows in range");
    return static_cast<double>(masked) / static_cast<double>(in_range);
}

std::vector<double> matrix_column(const Matrix& m, int col) {
    std::vector<double> v(static_cast<std::size_t>(m.rows()));
    for (int i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, col);
    return v;
}

namespace {

void write_embedding_rows(std::ofstream& out, const char* source, const Matrix& emb) {
    char buf[64];
    for (int i = 0; i < emb.rows(); ++i) {
        out << source;
        for (int j = 0; j < emb.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", emb(i, j));
            out << "," << buf;
        }
        out << "\n";
    }
}

} // namespace

void export_embeddings(const Mlp& predictor, const Dataset& train, const Dataset& test,
                       const std::string& path) {
    Matrix emb_train = predictor.embed(model_inputs(train));
    Matrix emb_test = predictor.embed(model_inputs(test));
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "source";
    for (int j = 0; j < emb_train.cols(); ++j) out << ",emb_" << j;
    out << "\n";
    write_embedding_rows(out, "train", emb_train);
    write_embedding_rows(out, "test", emb_test);
}

void write_mask_csv(const std::vector<std::string>& feature_names, const Matrix& hard_mask,
                    const std::string& path) {
    if (static_cast<int>(feature_names.size()) != hard_mask.cols()) {
        throw ArgumentError("mask csv: header length does not match mask width");
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
        if (j) out << ",";
        out << feature_names[j];
    }
    out << "\n";
    for (int i = 0; i < hard_mask.rows(); ++i) {
        for (int j = 0; j < hard_mask.cols(); ++j) {
            if (j) out << ",";
            out << (hard_mask(i, j) >= 0.5 ? 1 : 0);
        }
        out << "\n";
    }
}

void write_weights_csv(const std::vector<double>& weights, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "beta\n";
    char buf[64];
    for (double w : weights) {
        std::snprintf(buf, sizeof(buf), "%.17g", w);
        out << buf << "\n";
    }
}

} // namespace shiftmmd
