#include "gated_mip/sweep.hpp"

#include "gated_mip/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

namespace gmip {

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string row_line(const SweepRow& r) {
    return r.method + ',' + fmt(r.p) + ',' + std::to_string(r.batch_size) + ',' + std::to_string(r.num_negatives) + ',' +
           std::to_string(r.seed) + ',' + fmt(r.top1) + ',' + r.pool + ',' + fmt(r.runtime_s);
}

constexpr const char* kHeader = "method,p,B,K,seed,top1,pool,runtime_s\n";

// A cell file holds the header and a single row; errors go in a trailing comment.
std::string cell_file(const SweepRow& r) {
    std::string out = kHeader + row_line(r) + "\n";
    if (!r.ok()) out += "# error: " + r.error + "\n";
    return out;
}

std::optional<SweepRow> read_cell_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::string header, line, comment;
    if (!std::getline(in, header) || !std::getline(in, line)) return std::nullopt;
    std::getline(in, comment);
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 8) return std::nullopt;
    SweepRow r;
    r.method = f[0];
    r.p = std::stod(f[1]);
    r.batch_size = std::stoull(f[2]);
    r.num_negatives = std::stoull(f[3]);
    r.seed = std::stoull(f[4]);
    r.top1 = std::stod(f[5]);
    r.pool = f[6];
    r.runtime_s = std::stod(f[7]);
    if (comment.rfind("# error: ", 0) == 0) r.error = comment.substr(9);
    return r;
}

std::vector<SweepCell> grid(const std::vector<Variant>& methods, const std::vector<double>& p_grid,
                            const std::vector<std::uint64_t>& seeds,
                            const std::vector<std::pair<std::size_t, std::size_t>>& bk) {
    std::vector<SweepCell> cells;
    for (const auto& v : methods) {
        for (const auto& [b, k] : bk) {
            for (double p : p_grid) {
                for (std::uint64_t s : seeds) cells.push_back({v, p, b, k, s});
            }
        }
    }
    return cells;
}

} // namespace

Variant make_variant(const std::string& name) {
    using C = ExperimentConfig;
    if (name == "clip") return {name, [](C& c) { c.objective.method = Method::clip; }};
    if (name == "symile") {
        return {name, [](C& c) {
                    c.objective.method = Method::symile;
                    c.objective.sampling = Sampling::pair;
                }};
    }
    if (name == "gated_symile" || name == "full") {
        return {name, [](C& c) {
                    c.objective.method = Method::gated_symile;
                    if (c.gate.gate_mode == GateMode::none) c.gate.gate_mode = GateMode::attention;
                }};
    }
    const auto gated = [](C& c) {
        c.objective.method = Method::gated_symile;
        c.objective.sampling = Sampling::pair;
        c.gate.gate_mode = GateMode::attention;
    };
    if (name == "neutral_ones") return {name, [gated](C& c) { gated(c); c.gate.neutral_type = NeutralType::ones; }};
    if (name == "no_null") return {name, [gated](C& c) { gated(c); c.gate.use_null = false; }};
    if (name == "frozen_neutral") return {name, [gated](C& c) { gated(c); c.gate.neutral_type = NeutralType::random_frozen; }};
    if (name == "softmax") return {name, [gated](C& c) { gated(c); c.gate.gate_type = GateType::softmax; }};
    if (name == "no_renorm") return {name, [gated](C& c) { gated(c); c.gate.renormalize = false; }};
    if (name == "matrix") return {name, [gated](C& c) { gated(c); c.gate.gate_mode = GateMode::matrix; }};
    if (name == "no_neutral_no_renorm") {
        return {name, [gated](C& c) {
                    gated(c);
                    c.gate.neutral_type = NeutralType::none;
                    c.gate.renormalize = false;
                }};
    }
    if (name == "ungated_pair") {
        return {name, [](C& c) {
                    c.objective.method = Method::symile;
                    c.objective.sampling = Sampling::pair;
                }};
    }
    if (name == "ungated_n") {
        return {name, [](C& c) {
                    c.objective.method = Method::symile;
                    c.objective.sampling = Sampling::n;
                }};
    }
    throw ConfigError("unknown method or ablation '" + name + "'", "sweep.methods");
}

std::vector<Variant> ablation_variants() {
    std::vector<Variant> out;
    for (const char* name : {"full", "neutral_ones", "no_null", "frozen_neutral", "softmax", "no_renorm", "ungated_pair",
                             "matrix", "ungated_n", "no_neutral_no_renorm"}) {
        out.push_back(make_variant(name));
    }
    return out;
}

std::string SweepCell::id() const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", p);
    return variant.name + "_p" + buf + "_B" + std::to_string(batch_size) + "_K" + std::to_string(num_negatives) + "_s" +
           std::to_string(seed);
}

std::size_t sweep_threads(std::size_t requested) {
    std::size_t n = std::max<std::size_t>(1, requested);
    if (const char* env = std::getenv("GATED_MIP_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
    }
    return n;
}

SweepRow run_cell(const ExperimentConfig& base, const SweepCell& cell) {
    SweepRow row;
    row.method = cell.variant.name;
    row.p = cell.p;
    row.batch_size = cell.batch_size;
    row.num_negatives = cell.num_negatives;
    row.seed = cell.seed;
    row.top1 = std::nan("");
    const auto start = std::chrono::steady_clock::now();
    try {
        ExperimentConfig c = base;
        cell.variant.apply(c);
        c.seed = cell.seed;
        c.data.misalignment_prob = cell.p;
        c.train.batch_size = cell.batch_size;
        c.objective.num_negatives = cell.num_negatives;
        c.validate();
        row.pool = to_string(c.eval.pool_mode) + (c.eval.pool_mode == PoolMode::sampled
                                                      ? ":" + std::to_string(c.eval.num_negatives + 1)
                                                      : std::string());
        const DatasetSplits splits = make_splits(c);
        const TrainResult trained = train(c.model_config(), splits.train, splits.val, c.train_config(), c.eval);
        row.top1 = top1_retrieval(trained.model, splits.test, c.eval).top1_accuracy;
    } catch (const TrainingError& e) {
        row.error = std::string("training failed at step ") + std::to_string(e.step()) + ": " + e.what();
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return row;
}

std::vector<SweepRow> run_cells(const ExperimentConfig& base, const std::vector<SweepCell>& cells,
                                const SweepOptions& options) {
    std::vector<SweepRow> rows(cells.size());
    std::vector<bool> done(cells.size(), false);
    if (!options.cell_dir.empty()) std::filesystem::create_directories(options.cell_dir);
    if (options.resume && !options.cell_dir.empty()) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (auto r = read_cell_file(options.cell_dir / (cells[i].id() + ".csv")); r && r->ok()) {
                rows[i] = *r;
                done[i] = true;
                if (options.log) options.log("skip " + cells[i].id() + " (finished)");
            }
        }
    }

    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    const auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            if (done[i]) continue;
            rows[i] = run_cell(base, cells[i]);
            if (!options.cell_dir.empty()) write_file_atomic(options.cell_dir / (cells[i].id() + ".csv"), cell_file(rows[i]));
            if (options.log) {
                std::lock_guard lock(log_mutex);
                options.log(cells[i].id() + (rows[i].ok() ? " top1=" + fmt(rows[i].top1) : " FAILED: " + rows[i].error));
            }
        }
    };
    const std::size_t n_threads = std::min(sweep_threads(options.threads), std::max<std::size_t>(1, cells.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return rows;
}

std::vector<SweepRow> sweep_misalignment(const std::vector<Variant>& methods, const std::vector<double>& p_grid,
                                         const std::vector<std::uint64_t>& seeds, const ExperimentConfig& base,
                                         const SweepOptions& options) {
    return run_cells(base, grid(methods, p_grid, seeds, {{base.train.batch_size, base.objective.num_negatives}}), options);
}

std::vector<SweepRow> sweep_scaling(const std::vector<Variant>& methods, const std::vector<std::size_t>& batch_grid,
                                    KMode mode, const std::vector<double>& p_grid,
                                    const std::vector<std::uint64_t>& seeds, const ExperimentConfig& base,
                                    const SweepOptions& options) {
    std::vector<std::pair<std::size_t, std::size_t>> bk;
    for (std::size_t b : batch_grid) bk.emplace_back(b, mode == KMode::joint ? b : base.objective.num_negatives);
    return run_cells(base, grid(methods, p_grid, seeds, bk), options);
}

std::vector<SweepRow> sweep_ablation(const std::vector<double>& p_grid, const std::vector<std::uint64_t>& seeds,
                                     const ExperimentConfig& base, const SweepOptions& options) {
    return run_cells(base,
                     grid(ablation_variants(), p_grid, seeds, {{base.train.batch_size, base.objective.num_negatives}}),
                     options);
}

std::string results_csv(const std::vector<SweepRow>& rows) {
    std::string out = kHeader;
    for (const auto& r : rows) {
        if (r.ok()) out += row_line(r) + "\n";
    }
    return out;
}

std::string results_json(const std::vector<SweepRow>& rows) {
    nlohmann::ordered_json root = nlohmann::ordered_json::object();
    for (const auto& r : rows) {
        if (!r.ok()) continue;
        root[r.method].push_back({{"p", r.p},
                                  {"B", r.batch_size},
                                  {"K", r.num_negatives},
                                  {"seed", r.seed},
                                  {"top1", r.top1},
                                  {"pool", r.pool},
                                  {"runtime_s", r.runtime_s}});
    }
    return root.dump(2) + "\n";
}

std::string failures_csv(const std::vector<SweepRow>& rows) {
    std::string out = "method,p,B,K,seed,error\n";
    for (const auto& r : rows) {
        if (r.ok()) continue;
        std::string msg = r.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        out += r.method + ',' + fmt(r.p) + ',' + std::to_string(r.batch_size) + ',' + std::to_string(r.num_negatives) +
               ',' + std::to_string(r.seed) + ',' + msg + "\n";
    }
    return out;
}

} // namespace gmip
