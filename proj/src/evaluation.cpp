#include "gated_mip/evaluation.hpp"

#include "gated_mip/errors.hpp"
#include "gated_mip/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gmip {

namespace {

Tensor row_slice(const Tensor& t, std::size_t begin, std::size_t end) {
    const std::size_t d = t.dim(1);
    const auto src = t.data();
    return Tensor::from_data({end - begin, d}, std::vector<double>(src.begin() + static_cast<std::ptrdiff_t>(begin * d),
                                                                   src.begin() + static_cast<std::ptrdiff_t>(end * d)));
}

double dot_rows(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(dot_rows(a, a)), nb = std::sqrt(dot_rows(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot_rows(a, b) / (na * nb), -1.0, 1.0);
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

} // namespace

std::string to_string(PoolMode mode) { return mode == PoolMode::full ? "full" : "sampled"; }

PoolMode parse_pool_mode(const std::string& text) {
    if (text == "full") return PoolMode::full;
    if (text == "sampled") return PoolMode::sampled;
    throw ConfigError("unknown pool mode '" + text + "'", "eval.pool_mode");
}

std::size_t count_top1(const Tensor& scores, std::span<const std::size_t> positive_positions) {
    if (scores.rank() != 2 || scores.dim(0) != positive_positions.size()) {
        throw DimensionError("count_top1: one positive position per score row is required");
    }
    const std::size_t cols = scores.dim(1);
    const auto s = scores.data();
    std::size_t correct = 0;
    for (std::size_t r = 0; r < positive_positions.size(); ++r) {
        const std::size_t p = positive_positions[r];
        if (p >= cols) throw IndexError("positive position out of range");
        const double* row = s.data() + r * cols;
        bool best = std::isfinite(row[p]);
        for (std::size_t c = 0; c < cols && best; ++c) {
            if (c != p && !(row[c] < row[p])) best = false;
        }
        correct += best ? 1 : 0;
    }
    return correct;
}

std::vector<Tensor> embed_dataset(const ContrastiveModel& model, const XnorDataset& dataset, std::size_t chunk_rows) {
    NoGradGuard no_grad;
    const std::size_t n = dataset.size();
    const std::size_t d = model.config().encoder.embedding_dim;
    std::vector<Tensor> out;
    for (std::size_t m = 0; m < model.config().num_modalities; ++m) {
        std::vector<double> values;
        values.reserve(n * d);
        for (std::size_t begin = 0; begin < n; begin += chunk_rows) {
            const std::size_t end = std::min(n, begin + chunk_rows);
            std::vector<std::size_t> rows(end - begin);
            std::iota(rows.begin(), rows.end(), begin);
            const Tensor e = model.encode(m, dataset.modality(m, rows), false).values;
            values.insert(values.end(), e.data().begin(), e.data().end());
        }
        out.push_back(Tensor::from_data({n, d}, std::move(values)));
    }
    return out;
}

RetrievalReport top1_retrieval(const ContrastiveModel& model, const XnorDataset& dataset, const EvalConfig& config) {
    if (dataset.empty()) throw ConfigError("evaluation set is empty", "eval.pool_mode");
    RetrievalReport report = top1_retrieval(model, embed_dataset(model, dataset), config);
    report.p = dataset.config.misalignment_prob;
    return report;
}

RetrievalReport top1_retrieval(const ContrastiveModel& model, const std::vector<Tensor>& embeddings,
                               const EvalConfig& config) {
    NoGradGuard no_grad;
    const std::size_t t = model.target();
    const std::size_t n = embeddings.at(t).dim(0);
    if (n == 0) throw ConfigError("candidate pool is empty", "eval.pool_mode");
    const std::size_t queries = config.max_queries ? std::min(n, config.max_queries) : n;

    std::vector<CandidateSet> sets;
    std::size_t cols = n;
    if (config.pool_mode == PoolMode::sampled) {
        if (config.num_negatives > n - 1) {
            throw ConfigError("evaluation pool of " + std::to_string(n) + " cannot supply " +
                                  std::to_string(config.num_negatives) + " negatives",
                              "eval.num_negatives");
        }
        std::vector<std::size_t> positives(queries);
        std::iota(positives.begin(), positives.end(), std::size_t{0});
        auto rng = make_rng(substream_seed(config.seed, "eval-pool"));
        sets = sample_pair_candidates(positives, n, config.num_negatives, rng);
        cols = config.num_negatives + 1;
    }

    const std::size_t block = std::max<std::size_t>(1, config.pair_budget / cols);
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < queries; begin += block) {
        const std::size_t end = std::min(queries, begin + block);
        std::vector<Tensor> anchors(embeddings.size());
        for (std::size_t m = 0; m < embeddings.size(); ++m) {
            if (m != t) anchors[m] = row_slice(embeddings[m], begin, end);
        }
        PairIndex idx{end - begin, cols, std::vector<std::size_t>((end - begin) * cols)};
        std::vector<std::size_t> positives(end - begin);
        for (std::size_t r = begin; r < end; ++r) {
            const std::size_t local = r - begin;
            if (config.pool_mode == PoolMode::sampled) {
                std::copy(sets[r].candidate_indices.begin(), sets[r].candidate_indices.end(),
                          idx.index.begin() + static_cast<std::ptrdiff_t>(local * cols));
                positives[local] = sets[r].positive_position;
            } else {
                std::iota(idx.index.begin() + static_cast<std::ptrdiff_t>(local * cols),
                          idx.index.begin() + static_cast<std::ptrdiff_t>((local + 1) * cols), std::size_t{0});
                positives[local] = r;
            }
        }
        correct += count_top1(model.pair_scores(anchors, embeddings[t], idx), positives);
    }

    RetrievalReport report;
    report.correct = correct;
    report.num_queries = queries;
    report.top1_accuracy = static_cast<double>(correct) / static_cast<double>(queries);
    report.candidate_pool_size = cols;
    report.method = to_string(model.config().objective.method);
    report.seed = config.seed;
    return report;
}

MeanStat MeanStat::of(std::span<const double> values) {
    MeanStat s;
    s.count = values.size();
    if (values.empty()) return s;
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return s;
}

GateDiagnostics gate_diagnostics(const ContrastiveModel& model, const XnorDataset& dataset) {
    if (!model.gated()) throw ConfigError("gate diagnostics need a gated model", "gate.gate_mode");
    if (dataset.empty()) throw ConfigError("diagnostics dataset is empty");
    NoGradGuard no_grad;
    const auto embeddings = embed_dataset(model, dataset);
    const std::size_t n = dataset.size(), mods = embeddings.size(), d = embeddings.front().dim(1);
    std::vector<EmbeddingBatch> batches;
    for (std::size_t m = 0; m < mods; ++m) batches.push_back({embeddings[m], m, true});
    const GateOutput gate = model.gate_tuples(batches);
    const auto& gate_config = model.config().gate;
    const bool has_neutral = gate_config.neutral_type != NeutralType::none;

    GateDiagnostics out;
    out.target = model.target();
    out.alpha = gate.alpha.item();
    const auto w = gate.weights.data();
    for (std::size_t m = 0; m < mods; ++m) {
        std::vector<double> weights(n), cos_e(n), cos_n;
        const auto ge = gate.gated[m].values.data();
        const auto e = embeddings[m].data();
        std::vector<double> neutral;
        if (has_neutral) {
            const Tensor nd = model.gate().neutral_direction(m);
            neutral.assign(nd.data().begin(), nd.data().end());
            cos_n.resize(n);
        }
        for (std::size_t i = 0; i < n; ++i) {
            weights[i] = w[i * mods + m];
            const std::span<const double> gi(ge.data() + i * d, d), ei(e.data() + i * d, d);
            cos_e[i] = cosine(gi, ei);
            if (has_neutral) cos_n[i] = cosine(gi, neutral);
        }
        out.mean_w.push_back(MeanStat::of(weights));
        out.cos_original.push_back(MeanStat::of(cos_e));
        out.cos_neutral.push_back(MeanStat::of(cos_n));
    }

    if (mods >= 3) {
        std::vector<double> given_b, given_c;
        for (std::size_t i = 0; i < n; ++i) {
            const double delta = w[i * mods + 1] - w[i * mods + 2];
            if (dataset.samples[i].misaligned == Misalignment::B) given_b.push_back(delta);
            if (dataset.samples[i].misaligned == Misalignment::C) given_c.push_back(delta);
        }
        out.weight_delta_given_B = MeanStat::of(given_b);
        out.weight_delta_given_C = MeanStat::of(given_c);
    }
    const auto p = gate.p_null.data();
    out.p_null = MeanStat::of(std::vector<double>(p.begin(), p.end()));
    return out;
}

void write_diagnostics_csv(const GateDiagnostics& diagnostics, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "modality,statistic,value,standard_error,count\n";
    const auto row = [&out](const std::string& modality, const std::string& statistic, const MeanStat& s) {
        out << modality << ',' << statistic << ',' << fmt(s.mean) << ',' << fmt(s.standard_error) << ',' << s.count << '\n';
    };
    const char* names[] = {"A", "B", "C"};
    for (std::size_t m = 0; m < diagnostics.mean_w.size(); ++m) {
        const std::string name = m < 3 ? names[m] : std::to_string(m);
        row(name, "mean_w", diagnostics.mean_w[m]);
        row(name, "cos_original", diagnostics.cos_original[m]);
        row(name, "cos_neutral", diagnostics.cos_neutral[m]);
    }
    row("all", "weight_delta_given_B", diagnostics.weight_delta_given_B);
    row("all", "weight_delta_given_C", diagnostics.weight_delta_given_C);
    row("all", "p_null", diagnostics.p_null);
    out << "all,alpha," << fmt(diagnostics.alpha) << ",nan,1\n";
    write_file_atomic(path, out.str());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace gmip
