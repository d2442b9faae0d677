// Experiment runner for shift-robust training with MMD losses: generates or
// ingests data, trains any configured method, evaluates, and exports masks,
// weights, and embeddings.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shiftmmd/config.hpp"
#include "shiftmmd/errors.hpp"
#include "shiftmmd/metrics.hpp"
#include "shiftmmd/runner.hpp"

using namespace shiftmmd;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::string method = "";
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string lambda;
};

ExperimentConfig build_config(const CommonArgs& args) {
    ConfigDoc doc = args.config_path.empty() ? ConfigDoc{} : ConfigDoc::parse_file(args.config_path);
    for (const std::string& kv : args.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + kv);
        doc.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!args.out_dir.empty()) doc.set("output.dir", args.out_dir);
    if (!args.lambda.empty()) doc.set("train.lambda", args.lambda);

    ExperimentConfig cfg = ExperimentConfig::from_doc(doc);
    if (cfg.out_dir.empty()) {
        const char* root = std::getenv("SHIFTMMD_OUT_ROOT");
        cfg.out_dir = root ? std::string(root) : "runs";
    }
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool method_option) {
    cmd->add_option("--config", args.config_path, "experiment config file");
    cmd->add_option("--set", args.overrides, "override a config key, e.g. --set train.epochs=100")
        ->take_all();
    cmd->add_option("--out", args.out_dir, "output directory (overrides output.dir)");
    cmd->add_option("--lambda", args.lambda, "lambda value, 'auto', or 'grid'");
    if (method_option) {
        cmd->add_option("--method", args.method, "method name");
        cmd->add_option("--seed", args.seed, "seed")->each([&](const std::string&) {
            args.seed_given = true;
        });
    }
}

int cmd_synth(const CommonArgs& args) {
    ExperimentConfig cfg = build_config(args);
    if (cfg.dataset_kind != "synthetic") throw ConfigError("synth requires dataset.kind = synthetic");
    SyntheticConfig synth = cfg.synth;
    if (args.seed_given) synth.seed = args.seed;
    synth.validate();

    std::filesystem::create_directories(cfg.out_dir);
    SyntheticData data = generate_synthetic(synth);
    write_dataset_csv(data.train, cfg.out_dir + "/train.csv");
    write_dataset_csv(data.test, cfg.out_dir + "/test.csv");
    {
        std::string golden = "golden\n";
        char buf[64];
        for (double g : data.golden) {
            std::snprintf(buf, sizeof(buf), "%.17g\n", g);
            golden += buf;
        }
        std::ofstream out(cfg.out_dir + "/golden.csv");
        out << golden;
    }

    int masked = 0, shifted = 0;
    for (int i = 0; i < data.test.n(); ++i) {
        if (data.test.indicators(i, 0) == 1.0) {
            ++masked;
        } else if (data.test_clean_features(i, 0) > synth.shift_lo &&
                   data.test_clean_features(i, 0) <= synth.shift_hi) {
            ++shifted;
        }
    }
    std::printf("train rows: %d\n", data.train.n());
    std::printf("test rows: %d\n", data.test.n());
    std::printf("test fraction with X1 masked: %.4f\n", double(masked) / data.test.n());
    std::printf("test fraction with X1 shifted: %.4f\n", double(shifted) / data.test.n());
    std::printf("wrote %s/{train,test,golden}.csv\n", cfg.out_dir.c_str());
    return 0;
}

RunResult run_one(const ExperimentRunner& runner, const CommonArgs& args, CellData* data_out) {
    if (args.method.empty()) throw ConfigError("--method is required");
    const Method method = parse_method(args.method);
    const std::uint64_t seed = args.seed_given ? args.seed : runner.config().seeds.front();
    CellData data = runner.load_cell(seed);
    RunResult result = runner.run_cell(method, seed, data);
    if (result.failed()) throw Error("run failed: " + result.error);
    if (!runner.config().out_dir.empty()) runner.write_run_artifacts(result, data);
    if (data_out) *data_out = std::move(data);
    return result;
}

int cmd_train(const CommonArgs& args) {
    ExperimentRunner runner(build_config(args));
    CellData data;
    RunResult result = run_one(runner, args, &data);
    std::printf("%s seed %llu: %s = %.6f\n", method_name(result.method).c_str(),
                static_cast<unsigned long long>(result.seed), result.metric_name.c_str(),
                result.metric);
    std::printf("artifacts: %s\n", runner.run_dir(result.method, result.seed).c_str());
    return 0;
}

int cmd_compare(const CommonArgs& args) {
    ExperimentConfig cfg = build_config(args);
    ExperimentRunner runner(cfg);
    std::vector<RunResult> results = runner.run_all();
    CompareReport report = runner.make_report(results);
    runner.write_report(report);

    std::printf("%-12s %10s %10s %8s\n", "method", "mean", "std", "seeds");
    for (const CompareRow& row : report.rows) {
        if (row.n_seeds > 1) {
            std::printf("%-12s %10.4f %10.4f %8d", row.method.c_str(), row.mean, row.stddev,
                        row.n_seeds);
        } else if (row.n_seeds == 1) {
            std::printf("%-12s %10.4f %10s %8d", row.method.c_str(), row.mean, "", row.n_seeds);
        } else {
            std::printf("%-12s %10s %10s %8d", row.method.c_str(), "failed", "", row.n_seeds);
        }
        if (row.failures > 0) std::printf("   (%d failed)", row.failures);
        std::printf("\n");
    }
    bool any_failed = false;
    for (const RunResult& r : results) {
        if (r.failed()) {
            std::fprintf(stderr, "cell %s seed %llu failed: %s\n", method_name(r.method).c_str(),
                         static_cast<unsigned long long>(r.seed), r.error.c_str());
            any_failed = true;
        }
    }
    std::printf("report: %s/report.csv\n", cfg.out_dir.c_str());
    return any_failed ? 1 : 0;
}

int cmd_kmm(const CommonArgs& args) {
    ExperimentConfig cfg = build_config(args);
    ExperimentRunner runner(cfg);
    const std::uint64_t seed = args.seed_given ? args.seed : cfg.seeds.front();
    CellData data = runner.load_cell(seed);
    KmmResult res = solve_kmm(model_inputs(data.train), model_inputs(data.test), cfg.kmm);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string path = cfg.out_dir + "/weights.csv";
    write_weights_csv(res.beta, path);
    std::printf("n = %zu, objective = %.8f (uniform %.8f), iterations = %d\n", res.beta.size(),
                res.objective, res.uniform_objective, res.iterations);
    std::printf("sum(beta) = %.6f, box violation = %.3g, slab violation = %.3g\n", res.sum,
                res.box_violation, res.slab_violation);
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

int cmd_export_masks(const CommonArgs& args) {
    ExperimentRunner runner(build_config(args));
    CellData data;
    RunResult result = run_one(runner, args, &data);
    if (!result.masked_train) {
        throw ConfigError("export-masks requires --method mmd_mask or mmd_hybrid");
    }
    std::filesystem::create_directories(runner.config().out_dir);
    const std::string path = runner.config().out_dir + "/masks.csv";
    write_mask_csv(data.train.feature_names(), result.masked_train->indicator_hat, path);
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

int cmd_export_embeddings(const CommonArgs& args) {
    ExperimentRunner runner(build_config(args));
    CellData data;
    RunResult result = run_one(runner, args, &data);
    std::filesystem::create_directories(runner.config().out_dir);
    const std::string path = runner.config().out_dir + "/embeddings.csv";
    export_embeddings(result.model.bundle.predictor, data.train, data.test, path);
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"shiftmmd: shift-robust training with MMD losses"};
    app.require_subcommand(1);

    CommonArgs synth_args, train_args, compare_args, kmm_args, masks_args, emb_args;
    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic shifted dataset");
    add_common(synth, synth_args, true);
    CLI::App* train = app.add_subcommand("train", "train one method on one seed");
    add_common(train, train_args, true);
    CLI::App* compare = app.add_subcommand("compare", "run the full method x seed comparison");
    add_common(compare, compare_args, false);
    CLI::App* kmm = app.add_subcommand("kmm", "compute kernel-mean-matching weights");
    add_common(kmm, kmm_args, true);
    CLI::App* masks = app.add_subcommand("export-masks", "train a masker and export hard masks");
    add_common(masks, masks_args, true);
    CLI::App* embeddings =
        app.add_subcommand("export-embeddings", "train a model and export its embeddings");
    add_common(embeddings, emb_args, true);

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(synth_args);
        if (train->parsed()) return cmd_train(train_args);
        if (compare->parsed()) return cmd_compare(compare_args);
        if (kmm->parsed()) return cmd_kmm(kmm_args);
        if (masks->parsed()) return cmd_export_masks(masks_args);
        if (embeddings->parsed()) return cmd_export_embeddings(emb_args);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const SchemaError& e) {
        std::fprintf(stderr, "schema error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
