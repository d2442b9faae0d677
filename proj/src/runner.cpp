#include "shiftmmd/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

#include <json.hpp>

#include "shiftmmd/errors.hpp"
#include "shiftmmd/kmm.hpp"

namespace shiftmmd {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << content;
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read back " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ordered_json mlp_to_json(const Mlp& net) {
    ordered_json layers = ordered_json::array();
    for (int l = 0; l < net.layer_count(); ++l) {
        const Matrix& w = net.layer_weight(l);
        const Matrix& b = net.layer_bias(l);
        ordered_json weight_rows = ordered_json::array();
        for (int i = 0; i < w.rows(); ++i) {
            ordered_json row = ordered_json::array();
            for (int j = 0; j < w.cols(); ++j) row.push_back(w(i, j));
            weight_rows.push_back(std::move(row));
        }
        ordered_json bias = ordered_json::array();
        for (int j = 0; j < b.cols(); ++j) bias.push_back(b(0, j));
        layers.push_back(ordered_json{{"weight", std::move(weight_rows)}, {"bias", std::move(bias)}});
    }
    return layers;
}

const char* tag_name(ShiftTag tag) {
    switch (tag) {
    case ShiftTag::missingness: return "missingness";
    case ShiftTag::distribution: return "distribution";
    case ShiftTag::none: break;
    }
    return "none";
}

std::string residual_csv(const ResidualBuckets& rb) {
    std::string out = "bucket_lo,bucket_hi,count,mean,sd,mean_abs,tag\n";
    for (std::size_t b = 0; b + 1 < rb.edges.size(); ++b) {
        out += fmt_double(rb.edges[b]) + "," + fmt_double(rb.edges[b + 1]) + "," +
               std::to_string(rb.counts[b]) + ",";
        out += rb.means[b] ? fmt_double(*rb.means[b]) : "";
        out += ",";
        out += rb.stddevs[b] ? fmt_double(*rb.stddevs[b]) : "";
        out += ",";
        out += rb.mean_abs[b] ? fmt_double(*rb.mean_abs[b]) : "";
        out += ",";
        out += tag_name(rb.tags[b]);
        out += "\n";
    }
    return out;
}

} // namespace

ExperimentRunner::ExperimentRunner(ExperimentConfig config) : cfg_(std::move(config)) {
    if (cfg_.dataset_kind == "csv") {
        TableSchema schema = load_schema(cfg_.schema_path);
        RawTable raw = load_csv(cfg_.csv_path, schema);
        RawTable train_raw = schema.date_column.empty()
                                 ? raw
                                 : filter_by_month_range(raw, schema, schema.train_range);
        RawTable test_raw = schema.date_column.empty()
                                ? raw
                                : filter_by_month_range(raw, schema, schema.test_range);
        PreprocessSpec spec = fit_preprocess(train_raw, schema);
        CellData cell;
        cell.train = transform(train_raw, spec);
        cell.test = transform(test_raw, spec);
        cell.synthetic = false;
        if (cfg_.standardize) {
            Standardizer s = fit_standardizer(cell.train);
            apply_standardizer(cell.train, s);
            apply_standardizer(cell.test, s);
        }
        csv_cell_ = std::move(cell);
    }
}

CellData ExperimentRunner::load_cell(std::uint64_t seed) const {
    if (csv_cell_) return *csv_cell_;
    SyntheticConfig synth = cfg_.synth;
    synth.seed = seed;
    SyntheticData data = generate_synthetic(synth);
    CellData cell;
    cell.train = std::move(data.train);
    cell.test = std::move(data.test);
    cell.golden = std::move(data.golden);
    cell.test_clean = std::move(data.test_clean_features);
    cell.synthetic = true;
    if (cfg_.standardize) {
        Standardizer s = fit_standardizer(cell.train);
        apply_standardizer(cell.train, s);
        apply_standardizer(cell.test, s);
    }
    return cell;
}

std::string ExperimentRunner::metric_name() const {
    if (cfg_.base.task == Task::binary_classification) return "auc";
    bool log_target = false;
    if (csv_cell_) log_target = csv_cell_->train.target_transform == TargetTransform::log1p;
    return log_target ? "rmse" : "mse";
}

TrainingConfig ExperimentRunner::cell_config(Method method, std::uint64_t seed) const {
    TrainingConfig cfg = cfg_.base;
    cfg.method = method;
    cfg.seed = seed;
    return cfg;
}

double ExperimentRunner::resolve_lambda(Method method, const CellData& data,
                                        std::uint64_t seed) const {
    auto it = cfg_.lambda_by_method.find(method_name(method));
    if (it != cfg_.lambda_by_method.end()) return it->second;
    if (cfg_.lambda_mode == LambdaMode::fixed) return cfg_.base.lambda;
    if (cfg_.lambda_mode == LambdaMode::automatic) {
        TrainingConfig cfg = cell_config(method, seed);
        return probe_lambda(data.train, data.test, cfg);
    }

    // Grid selection against a held-out validation split, refit on the full
    // training set with the winner.
    auto [sub_train, val] = split_train_val(data.train, cfg_.validation_ratio, seed);
    double best_lambda = cfg_.lambda_grid.front();
    double best_score = std::numeric_limits<double>::infinity();
    for (double lambda : cfg_.lambda_grid) {
        TrainingConfig cfg = cell_config(method, seed);
        cfg.lambda = lambda;
        TrainedModel candidate;
        switch (method) {
        case Method::dan: candidate = train_dan(sub_train, data.test, cfg); break;
        case Method::jan: candidate = train_jan(sub_train, data.test, cfg); break;
        case Method::mmd_hybrid: candidate = train_mmd_hybrid(sub_train, data.test, cfg); break;
        default: candidate = train_mmd_repr(sub_train, data.test, cfg); break;
        }
        std::vector<double> preds = candidate.predict(val);
        double score;
        if (cfg_.base.task == Task::binary_classification) {
            score = -auc(preds, val.target);
        } else {
            score = mse(preds, val.target);
        }
        if (score < best_score) {
            best_score = score;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

double ExperimentRunner::evaluate(const std::vector<double>& raw_predictions, const Dataset& test,
                                  std::vector<double>* out_predictions,
                                  std::vector<double>* out_truth) const {
    if (!test.has_target()) throw ArgumentError("test set has no targets to evaluate against");
    if (cfg_.base.task == Task::binary_classification) {
        std::vector<double> scores(raw_predictions.size());
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const double z = raw_predictions[i];
            scores[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        }
        if (out_predictions) *out_predictions = scores;
        if (out_truth) *out_truth = test.target;
        return auc(scores, test.target);
    }
    const std::vector<double> preds =
        invert_target_transform(raw_predictions, test.target_transform);
    const std::vector<double> truth = invert_target_transform(test.target, test.target_transform);
    if (out_predictions) *out_predictions = preds;
    if (out_truth) *out_truth = truth;
    return test.target_transform == TargetTransform::log1p ? rmse(preds, truth) : mse(preds, truth);
}

RunResult ExperimentRunner::run_cell(Method method, std::uint64_t seed,
                                     const CellData& data) const {
    RunResult result;
    result.method = method;
    result.seed = seed;
    result.metric_name = metric_name();
    try {
        TrainingConfig cfg = cell_config(method, seed);
        switch (method) {
        case Method::baseline: {
            result.model = train_baseline(data.train, cfg);
            break;
        }
        case Method::weighted_baseline: {
            KmmResult kmm = solve_kmm(model_inputs(data.train), model_inputs(data.test), cfg_.kmm);
            result.kmm_weights = kmm.beta;
            result.model = train_weighted(data.train, kmm.beta, cfg);
            break;
        }
        case Method::mmd_repr:
        case Method::dan:
        case Method::jan: {
            cfg.lambda = resolve_lambda(method, data, seed);
            result.lambda_used = cfg.lambda;
            if (method == Method::mmd_repr) result.model = train_mmd_repr(data.train, data.test, cfg);
            else if (method == Method::dan) result.model = train_dan(data.train, data.test, cfg);
            else result.model = train_jan(data.train, data.test, cfg);
            break;
        }
        case Method::mmd_mask: {
            MaskTrainResult masked = train_mmd_mask(data.train, data.test, cfg);
            result.masked_train = masked.masked;
            Dataset downstream =
                cfg.mask_multiplicity == 1 && !cfg.include_original_rows
                    ? Dataset{masked.masked.features_prime, masked.masked.indicator_hat,
                              data.train.target, data.train.meta, data.train.target_transform}
                    : build_masked_training_set(*masked.masker_model.bundle.masker, data.train,
                                                cfg.masker.tau_end, seed, cfg.mask_multiplicity,
                                                cfg.include_original_rows);
            result.model = train_baseline(downstream, cfg);
            result.model.bundle.masker = std::move(masked.masker_model.bundle.masker);
            result.mmd_trace = masked.masker_model.mmd_trace;
            break;
        }
        case Method::mmd_hybrid: {
            cfg.lambda = resolve_lambda(method, data, seed);
            result.lambda_used = cfg.lambda;
            result.model = train_mmd_hybrid(data.train, data.test, cfg);
            Rng mask_rng(Rng::derive(seed, 1789));
            result.masked_train =
                sample_hard_mask(*result.model.bundle.masker, data.train, cfg.masker.tau_end,
                                 mask_rng);
            break;
        }
        }
        result.loss_trace = result.model.loss_trace;
        result.task_trace = result.model.task_trace;
        if (result.mmd_trace.empty()) result.mmd_trace = result.model.mmd_trace;
        result.metric = evaluate(result.model.predict(data.test), data.test,
                                 &result.test_predictions, &result.test_truth);
    } catch (const std::exception& e) {
        result.error = e.what();
    }
    return result;
}

std::vector<RunResult> ExperimentRunner::run_all() const {
    struct Cell {
        Method method;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (Method m : cfg_.methods) {
        for (std::uint64_t s : cfg_.seeds) cells.push_back({m, s});
    }
    std::vector<RunResult> results(cells.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const CellData data = load_cell(cells[i].seed);
            results[i] = run_cell(cells[i].method, cells[i].seed, data);
            if (!cfg_.out_dir.empty() && !results[i].failed()) {
                write_run_artifacts(results[i], data);
            }
        }
    };
    const int n_workers = std::max(1, std::min<int>(cfg_.workers, static_cast<int>(cells.size())));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
}

CompareReport ExperimentRunner::make_report(const std::vector<RunResult>& results) const {
    CompareReport report;
    report.metric_name = metric_name();
    for (Method m : cfg_.methods) {
        CompareRow row;
        row.method = method_name(m);
        for (const RunResult& r : results) {
            if (r.method != m) continue;
            if (r.failed()) {
                ++row.failures;
            } else {
                row.per_seed.push_back(r.metric);
            }
        }
        row.n_seeds = static_cast<int>(row.per_seed.size());
        if (row.n_seeds > 0) {
            MetricReport agg = MetricReport::from(report.metric_name, row.per_seed);
            row.mean = agg.mean;
            row.stddev = agg.stddev;
        } else {
            row.mean = std::numeric_limits<double>::quiet_NaN();
            row.stddev = std::numeric_limits<double>::quiet_NaN();
        }
        report.rows.push_back(std::move(row));
    }

    // The golden reference row: the generator's exact mean function, never a
    // trained model. Synthetic experiments only.
    if (!csv_cell_ && cfg_.base.task == Task::regression) {
        CompareRow golden;
        golden.method = "golden";
        for (std::uint64_t seed : cfg_.seeds) {
            CellData data = load_cell(seed);
            golden.per_seed.push_back(mse(data.golden, data.test.target));
        }
        golden.n_seeds = static_cast<int>(golden.per_seed.size());
        MetricReport agg = MetricReport::from("mse", golden.per_seed);
        golden.mean = agg.mean;
        golden.stddev = agg.stddev;
        report.rows.push_back(std::move(golden));
    }
    return report;
}

void ExperimentRunner::write_report(const CompareReport& report) const {
    if (cfg_.out_dir.empty()) throw ConfigError("no output directory configured");
    fs::create_directories(cfg_.out_dir);

    std::string csv = "method,metric,mean,std,n_seeds,per_seed\n";
    for (const CompareRow& row : report.rows) {
        csv += row.method + "," + report.metric_name + ",";
        csv += row.n_seeds > 0 ? fmt_double(row.mean) : "";
        csv += ",";
        csv += row.n_seeds > 1 ? fmt_double(row.stddev) : "";
        csv += "," + std::to_string(row.n_seeds) + ",\"";
        for (std::size_t i = 0; i < row.per_seed.size(); ++i) {
            if (i) csv += ";";
            csv += fmt_double(row.per_seed[i]);
        }
        csv += "\"\n";
    }
    write_text_file(cfg_.out_dir + "/report.csv", csv);

    ordered_json j;
    j["metric"] = report.metric_name;
    j["config_hash"] = hex64(cfg_.config_hash);
    ordered_json methods = ordered_json::object();
    for (const CompareRow& row : report.rows) {
        ordered_json entry;
        entry["mean"] = row.n_seeds > 0 ? ordered_json(row.mean) : ordered_json(nullptr);
        entry["std"] = row.n_seeds > 1 ? ordered_json(row.stddev) : ordered_json(nullptr);
        entry["per_seed"] = row.per_seed;
        entry["failures"] = row.failures;
        methods[row.method] = std::move(entry);
    }
    j["methods"] = std::move(methods);
    write_text_file(cfg_.out_dir + "/report.json", j.dump(2) + "\n");
}

std::string ExperimentRunner::run_dir(Method method, std::uint64_t seed) const {
    return cfg_.out_dir + "/" + method_name(method) + "_seed" + std::to_string(seed);
}

void ExperimentRunner::write_run_artifacts(const RunResult& result, const CellData& data) const {
    const std::string dir = run_dir(result.method, result.seed);
    fs::create_directories(dir);
    std::vector<std::string> files;

    std::string trace = "epoch,total,task,mmd\n";
    for (std::size_t e = 0; e < result.loss_trace.size(); ++e) {
        trace += std::to_string(e) + "," + fmt_double(result.loss_trace[e]) + "," +
                 fmt_double(e < result.task_trace.size() ? result.task_trace[e] : 0.0) + "," +
                 fmt_double(e < result.mmd_trace.size() ? result.mmd_trace[e] : 0.0) + "\n";
    }
    write_text_file(dir + "/loss_trace.csv", trace);
    files.push_back("loss_trace.csv");

    ordered_json metrics;
    metrics["method"] = method_name(result.method);
    metrics["seed"] = result.seed;
    metrics["metric"] = result.metric_name;
    metrics["value"] = result.metric;
    metrics["lambda"] = result.lambda_used;
    metrics["config_hash"] = hex64(cfg_.config_hash);
    write_text_file(dir + "/metrics.json", metrics.dump(2) + "\n");
    files.push_back("metrics.json");

    ordered_json params;
    params["predictor"] = mlp_to_json(result.model.bundle.predictor);
    if (result.model.bundle.masker) {
        params["masker"] = mlp_to_json(*result.model.bundle.masker);
    }
    write_text_file(dir + "/params.json", params.dump() + "\n");
    files.push_back("params.json");

    if (result.masked_train) {
        write_mask_csv(data.train.feature_names(), result.masked_train->indicator_hat,
                       dir + "/masks.csv");
        files.push_back("masks.csv");
    }
    if (result.kmm_weights) {
        write_weights_csv(*result.kmm_weights, dir + "/weights.csv");
        files.push_back("weights.csv");
    }

    if (data.synthetic && cfg_.base.task == Task::regression && !result.test_predictions.empty()) {
        const std::vector<double> x1 = matrix_column(data.test_clean, 0);
        const std::vector<double> x2 = matrix_column(data.test_clean, 1);
        const std::vector<double> edges = equal_width_edges(-4.0, 4.0, 16);
        ResidualBuckets rb1 = residual_buckets(
            result.test_predictions, result.test_truth, x1, "X1", edges,
            ShiftRange{cfg_.synth.missing_lo, cfg_.synth.missing_hi},
            ShiftRange{cfg_.synth.shift_lo, cfg_.synth.shift_hi});
        write_text_file(dir + "/residuals_x1.csv", residual_csv(rb1));
        files.push_back("residuals_x1.csv");

        std::vector<double> x2_edges = equal_width_edges(-3.5, 3.5, 14);
        const auto [lo_it, hi_it] = std::minmax_element(x2.begin(), x2.end());
        if (*lo_it < -3.5 || *hi_it > 3.5) {
            x2_edges = equal_width_edges(std::floor(*lo_it), std::ceil(*hi_it), 14);
        }
        ResidualBuckets rb2 = residual_buckets(result.test_predictions, result.test_truth, x2,
                                               "X2", x2_edges, std::nullopt, std::nullopt);
        write_text_file(dir + "/residuals_x2.csv", residual_csv(rb2));
        files.push_back("residuals_x2.csv");

        if (result.masked_train) {
            HistogramComparison hist = mask_histogram(data.train, data.test, *result.masked_train, 0);
            std::string csv = "bin_lo,bin_hi,train,test,masked_train\n";
            for (std::size_t b = 0; b + 1 < hist.edges.size(); ++b) {
                csv += fmt_double(hist.edges[b]) + "," + fmt_double(hist.edges[b + 1]) + "," +
                       std::to_string(hist.train_counts[b]) + "," +
                       std::to_string(hist.test_counts[b]) + "," +
                       std::to_string(hist.masked_counts[b]) + "\n";
            }
            write_text_file(dir + "/mask_histogram_x1.csv", csv);
            files.push_back("mask_histogram_x1.csv");
        }
    }

    write_manifest(dir, cfg_, result.method, result.seed, files);
}

void write_manifest(const std::string& dir, const ExperimentConfig& cfg, Method method,
                    std::uint64_t seed, const std::vector<std::string>& artifact_files) {
    ordered_json manifest;
    manifest["config_hash"] = hex64(cfg.config_hash);
    manifest["method"] = method_name(method);
    manifest["seed"] = seed;
    ordered_json checks = ordered_json::object();
    for (const std::string& f : artifact_files) {
        checks[f] = hex64(fnv1a64(read_file_bytes(dir + "/" + f)));
    }
    manifest["artifacts"] = std::move(checks);
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

} // namespace shiftmmd
