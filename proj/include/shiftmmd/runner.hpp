#pragma once

#include <optional>
#include <string>
#include <vector>

#include "shiftmmd/config.hpp"
#include "shiftmmd/metrics.hpp"
#include "shiftmmd/train.hpp"

namespace shiftmmd {

// Per-seed data for one experiment cell.
struct CellData {
    Dataset train;
    Dataset test;
    std::vector<double> golden;   // synthetic only
    Matrix test_clean;            // synthetic only: pre-shift test features
    bool synthetic = false;
};

struct RunResult {
    Method method = Method::baseline;
    std::uint64_t seed = 0;
    std::string metric_name;
    double metric = 0.0;
    double lambda_used = 0.0;
    std::vector<double> loss_trace, task_trace, mmd_trace;
    std::vector<double> test_predictions;   // reporting scale
    std::vector<double> test_truth;         // reporting scale
    std::optional<MaskedDataset> masked_train;
    std::optional<std::vector<double>> kmm_weights;
    TrainedModel model;
    std::string error;                      // nonempty when the cell failed

    bool failed() const { return !error.empty(); }
};

struct CompareRow {
    std::string method;
    int n_seeds = 0;
    double mean = 0.0;
    double stddev = 0.0;                    // NaN when n_seeds < 2
    std::vector<double> per_seed;
    int failures = 0;
};

struct CompareReport {
    std::string metric_name;
    std::vector<CompareRow> rows;
};

class ExperimentRunner {
public:
    explicit ExperimentRunner(ExperimentConfig config);

    const ExperimentConfig& config() const { return cfg_; }

    CellData load_cell(std::uint64_t seed) const;
    // Trains one (method, seed) cell; exceptions are captured in .error.
    RunResult run_cell(Method method, std::uint64_t seed, const CellData& data) const;

    // All (method, seed) cells on a small worker pool; per-run artifacts are
    // written when an output directory is configured.
    std::vector<RunResult> run_all() const;

    CompareReport make_report(const std::vector<RunResult>& results) const;
    void write_report(const CompareReport& report) const;

    std::string run_dir(Method method, std::uint64_t seed) const;
    void write_run_artifacts(const RunResult& result, const CellData& data) const;

    // Name of the metric this experiment reports (mse, rmse, or auc).
    std::string metric_name() const;

private:
    double resolve_lambda(Method method, const CellData& data, std::uint64_t seed) const;
    TrainingConfig cell_config(Method method, std::uint64_t seed) const;
    double evaluate(const std::vector<double>& predictions_model_scale, const Dataset& test,
                    std::vector<double>* out_predictions, std::vector<double>* out_truth) const;

    ExperimentConfig cfg_;
    std::optional<CellData> csv_cell_;   // csv data is seed-independent
};

void write_manifest(const std::string& dir, const ExperimentConfig& cfg, Method method,
                    std::uint64_t seed, const std::vector<std::string>& artifact_files);

} // namespace shiftmmd
