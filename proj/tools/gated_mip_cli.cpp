// gated-mip: generate data, train, evaluate, sweep, inspect gates and check bounds.

#include "gated_mip/bounds_report.hpp"
#include "gated_mip/checkpoint.hpp"
#include "gated_mip/errors.hpp"
#include "gated_mip/evaluation.hpp"
#include "gated_mip/experiment_config.hpp"
#include "gated_mip/sweep.hpp"
#include "gated_mip/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gmip;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kNumericError = 2 };

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
};

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// `--key=value` and `--key value` pairs left over after option parsing.
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& extras) {
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& arg = extras[i];
        if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'", arg);
        const std::string body = arg.substr(2);
        const auto eq = body.find('=');
        if (eq != std::string::npos) {
            config.set(body.substr(0, eq), body.substr(eq + 1));
        } else {
            if (i + 1 >= extras.size()) throw ConfigError("missing value for --" + body, body);
            config.set(body, extras[++i]);
        }
    }
}

ExperimentConfig build_config(const CommonOptions& common, const std::vector<std::string>& extras) {
    ExperimentConfig config;
    if (!common.config_path.empty()) config.merge_file(common.config_path);
    apply_overrides(config, extras);
    if (common.seed) config.seed = *common.seed;
    config.validate();
    return config;
}

fs::path run_directory(const CommonOptions& common, const ExperimentConfig& config) {
    return common.out.empty() ? fs::path(config.out_dir) / config.run_name : fs::path(common.out);
}

ExperimentConfig load_run_config(const fs::path& run, const std::vector<std::string>& extras) {
    ExperimentConfig config;
    config.merge_file(run / "config.txt");
    apply_overrides(config, extras);
    config.validate();
    return config;
}

ContrastiveModel load_model(const fs::path& run, const ExperimentConfig& config) {
    ContrastiveModel model(config.model_config(), config.train_config().seed);
    load_checkpoint(model.parameters(), run / "checkpoint.bin");
    return model;
}

std::string report_json(const RetrievalReport& r) {
    nlohmann::ordered_json j = {{"method", r.method},
                                {"p", r.p},
                                {"top1", r.top1_accuracy},
                                {"correct", r.correct},
                                {"num_queries", r.num_queries},
                                {"candidate_pool_size", r.candidate_pool_size},
                                {"seed", r.seed}};
    return j.dump(2) + "\n";
}

int cmd_generate(const CommonOptions& common, const std::string& format, const std::vector<std::string>& extras) {
    const ExperimentConfig config = build_config(common, extras);
    const fs::path out = common.out.empty() ? fs::path(config.out_dir) / "xnor.bin" : fs::path(common.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    const XnorDataset data = generate(config.data_config());
    if (format == "csv") save_csv(data, out);
    else save_binary(data, out);
    std::size_t misaligned = 0;
    for (const auto& s : data.samples) misaligned += s.misaligned != Misalignment::none ? 1 : 0;
    std::cout << "wrote " << data.size() << " samples (" << misaligned << " misaligned) to " << out.string() << '\n';
    return kOk;
}

int cmd_train(const CommonOptions& common, const std::vector<std::string>& extras) {
    const ExperimentConfig config = build_config(common, extras);
    const fs::path dir = run_directory(common, config);
    fs::create_directories(dir);
    write_file_atomic(dir / "config.txt", config.to_text());

    const auto start = std::chrono::steady_clock::now();
    const DatasetSplits splits = make_splits(config);
    std::string metrics = "step,epoch,train_loss,val_top1\n";
    const TrainResult result =
        train(config.model_config(), splits.train, splits.val, config.train_config(), config.eval,
              [&](const MetricsRecord& m) {
                  metrics += std::to_string(m.step) + ',' + std::to_string(m.epoch) + ',' + fmt(m.train_loss) + ',' +
                             fmt(m.val_top1) + '\n';
                  std::fprintf(stderr, "epoch %zu step %zu loss %.4f val_top1 %.4f\n", m.epoch, m.step, m.train_loss,
                               m.val_top1);
              });
    write_file_atomic(dir / "metrics.csv", metrics);
    save_checkpoint(result.model.parameters(), dir / "checkpoint.bin");
    RetrievalReport report = top1_retrieval(result.model, splits.test, config.eval);
    report.seed = config.seed;
    write_file_atomic(dir / "test_report.json", report_json(report));
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("best val top1 %.4f at step %zu; test top1 %.4f (%zu queries, pool %zu); %.1f s; outputs in %s\n",
                result.best_val_top1, result.best_step, report.top1_accuracy, report.num_queries,
                report.candidate_pool_size, elapsed, dir.string().c_str());
    return kOk;
}

int cmd_evaluate(const std::string& run, const std::string& out, const std::vector<std::string>& extras) {
    const ExperimentConfig config = load_run_config(run, extras);
    const ContrastiveModel model = load_model(run, config);
    const DatasetSplits splits = make_splits(config);
    RetrievalReport report = top1_retrieval(model, splits.test, config.eval);
    report.seed = config.seed;
    const fs::path path = out.empty() ? fs::path(run) / "eval.csv" : fs::path(out);
    write_file_atomic(path, "method,p,seed,top1,correct,num_queries,pool\n" + report.method + ',' + fmt(report.p) + ',' +
                                std::to_string(report.seed) + ',' + fmt(report.top1_accuracy) + ',' +
                                std::to_string(report.correct) + ',' + std::to_string(report.num_queries) + ',' +
                                std::to_string(report.candidate_pool_size) + '\n');
    std::printf("test top1 %.4f (%zu/%zu, pool %zu) -> %s\n", report.top1_accuracy, report.correct, report.num_queries,
                report.candidate_pool_size, path.string().c_str());
    return kOk;
}

int cmd_diagnostics(const std::string& run, const std::string& out, const std::vector<std::string>& extras) {
    const ExperimentConfig config = load_run_config(run, extras);
    const ContrastiveModel model = load_model(run, config);
    const DatasetSplits splits = make_splits(config);
    const GateDiagnostics d = gate_diagnostics(model, splits.test);
    const fs::path path = out.empty() ? fs::path(run) / "diagnostics.csv" : fs::path(out);
    write_diagnostics_csv(d, path);
    const char* names[] = {"A", "B", "C"};
    for (std::size_t m = 0; m < d.mean_w.size(); ++m) {
        if (m == d.target) continue;
        std::printf("%s: mean w %.4f  cos(eG,e) %.4f  cos(eG,n) %.4f\n", m < 3 ? names[m] : "?", d.mean_w[m].mean,
                    d.cos_original[m].mean, d.cos_neutral[m].mean);
    }
    std::printf("w_B - w_C | B swapped: %.4f (se %.4f, n=%zu)\n", d.weight_delta_given_B.mean,
                d.weight_delta_given_B.standard_error, d.weight_delta_given_B.count);
    std::printf("w_B - w_C | C swapped: %.4f (se %.4f, n=%zu)\n", d.weight_delta_given_C.mean,
                d.weight_delta_given_C.standard_error, d.weight_delta_given_C.count);
    std::printf("mean p_null %.4f, alpha %.4f -> %s\n", d.p_null.mean, d.alpha, path.string().c_str());
    return kOk;
}

int cmd_sweep(const CommonOptions& common, const std::string& kind, bool resume, std::size_t threads,
              const std::vector<std::string>& extras) {
    const ExperimentConfig config = build_config(common, extras);
    const fs::path dir = common.out.empty() ? fs::path(config.out_dir) / ("sweep_" + kind) : fs::path(common.out);
    fs::create_directories(dir);
    write_file_atomic(dir / "config.txt", config.to_text());

    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < config.sweep.num_seeds; ++i) seeds.push_back(config.seed + i);
    std::vector<Variant> methods;
    for (const auto& name : config.sweep.methods) methods.push_back(make_variant(name));

    SweepOptions options;
    options.threads = threads;
    options.cell_dir = dir / "cells";
    options.resume = resume;
    options.log = [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };

    std::vector<SweepRow> rows;
    if (kind == "misalignment") {
        rows = sweep_misalignment(methods, config.sweep.p_grid, seeds, config, options);
    } else if (kind == "scaling") {
        rows = sweep_scaling(methods, config.sweep.batch_grid, config.sweep.k_mode, config.sweep.p_grid, seeds, config,
                             options);
    } else if (kind == "ablation") {
        rows = sweep_ablation(config.sweep.p_grid, seeds, config, options);
    } else {
        throw ConfigError("unknown sweep kind '" + kind + "'", "--kind");
    }
    write_file_atomic(dir / "results.csv", results_csv(rows));
    write_file_atomic(dir / "results.json", results_json(rows));
    std::size_t failed = 0;
    for (const auto& r : rows) failed += r.ok() ? 0 : 1;
    if (failed) write_file_atomic(dir / "failures.csv", failures_csv(rows));
    std::printf("%zu cells, %zu failed -> %s\n", rows.size(), failed, dir.string().c_str());
    return failed ? kNumericError : kOk;
}

int cmd_verify_bounds(std::size_t trials, std::uint64_t seed, const std::string& out) {
    BoundsConfig config;
    config.trials = trials;
    config.seed = seed;
    const BoundsReport report = verify_bounds(config);
    std::cout << format_report(report);
    if (!out.empty()) write_file_atomic(out, report_csv(report));
    return report.passed() ? kOk : kNumericError;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gated Symile experiments on Synthetic-XNOR"};
    app.require_subcommand(1);

    CommonOptions common;
    const auto add_common = [&common](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "key = value configuration file");
        sub->add_option("--seed", common.seed, "root seed");
        sub->add_option("--out", common.out, "output path");
        sub->allow_extras();
    };

    auto* generate_cmd = app.add_subcommand("generate", "generate a Synthetic-XNOR dataset file");
    add_common(generate_cmd);
    std::string format = "binary";
    generate_cmd->add_option("--format", format, "binary or csv")->check(CLI::IsMember({"binary", "csv"}));

    auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint, metrics and test report");
    add_common(train_cmd);

    std::string run_dir, eval_out;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "top-1 retrieval of a trained run on its test split");
    evaluate_cmd->add_option("--run", run_dir, "run directory written by train")->required();
    evaluate_cmd->add_option("--out", eval_out, "output CSV");
    evaluate_cmd->allow_extras();

    auto* diagnostics_cmd = app.add_subcommand("diagnostics", "gate statistics of a trained gated run");
    diagnostics_cmd->add_option("--run", run_dir, "run directory written by train")->required();
    diagnostics_cmd->add_option("--out", eval_out, "output CSV");
    diagnostics_cmd->allow_extras();

    auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate a grid of runs");
    add_common(sweep_cmd);
    std::string kind = "misalignment";
    bool resume = false;
    std::size_t threads = 1;
    sweep_cmd->add_option("--kind", kind, "misalignment, scaling or ablation")
        ->check(CLI::IsMember({"misalignment", "scaling", "ablation"}));
    sweep_cmd->add_flag("--resume", resume, "skip cells that already finished");
    sweep_cmd->add_option("--threads", threads, "worker threads (capped by GATED_MIP_THREADS)");

    std::size_t trials = 1000;
    std::uint64_t bounds_seed = 0;
    std::string bounds_out;
    auto* bounds_cmd = app.add_subcommand("verify-bounds", "Monte-Carlo check of the perturbation bounds");
    bounds_cmd->add_option("--trials", trials, "number of random tuples");
    bounds_cmd->add_option("--seed", bounds_seed, "seed");
    bounds_cmd->add_option("--out", bounds_out, "optional CSV report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*generate_cmd) return cmd_generate(common, format, generate_cmd->remaining());
        if (*train_cmd) return cmd_train(common, train_cmd->remaining());
        if (*evaluate_cmd) return cmd_evaluate(run_dir, eval_out, evaluate_cmd->remaining());
        if (*diagnostics_cmd) return cmd_diagnostics(run_dir, eval_out, diagnostics_cmd->remaining());
        if (*sweep_cmd) return cmd_sweep(common, kind, resume, threads, sweep_cmd->remaining());
        if (*bounds_cmd) return cmd_verify_bounds(trials, bounds_seed, bounds_out);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error";
        if (!e.key().empty()) std::cerr << " [" << e.key() << "]";
        std::cerr << ": " << e.what() << '\n';
        return kConfigError;
    } catch (const TrainingError& e) {
        std::cerr << "training failed at step " << e.step() << ": " << e.what() << '\n';
        return kNumericError;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumericError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kOk;
}
