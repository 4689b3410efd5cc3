#include "gated_mip/errors.hpp"
#include "gated_mip/experiment_config.hpp"
#include "gated_mip/rng.hpp"
#include "gated_mip/sweep.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

using namespace gmip;

namespace {

ExperimentConfig tiny_experiment() {
    ExperimentConfig c;
    c.merge_text(R"(
data.num_samples = 400
model.hidden_dims = 16
model.hidden_dropouts = 0
model.emb_dim = 16
gate.gate_d_k = 8
objective.num_negatives = 8
eval.num_negatives = 8
train.max_epochs = 1
train.batch_size = 32
)");
    return c;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("gmip_sweep_" + std::to_string(::getpid()) + "_" + name);
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST(Rng, SubstreamsAreDistinctAndStable) {
    EXPECT_EQ(substream_seed(1, "data"), substream_seed(1, "data"));
    EXPECT_NE(substream_seed(1, "data"), substream_seed(1, "split"));
    EXPECT_NE(substream_seed(1, "data"), substream_seed(2, "data"));
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(counter_seed(7, i));
    EXPECT_EQ(seen.size(), 1000u);
}

TEST(Rng, UniformIndexIsUnbiased) {
    auto rng = make_rng(3);
    std::vector<double> counts(7, 0.0);
    for (int i = 0; i < 70000; ++i) counts[uniform_index(rng, 7)] += 1;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - 10000) * (c - 10000) / 10000;
    EXPECT_LT(chi2, 24.1); // 6 degrees of freedom, p = 0.0005
    EXPECT_THROW(uniform_index(rng, 0), DomainError);
}

TEST(Config, DefaultsAndCanonicalRoundTrip) {
    ExperimentConfig c;
    EXPECT_EQ(c.get("data.p"), "0");
    EXPECT_EQ(c.get("objective.method"), "gated_symile");
    EXPECT_EQ(c.get("gate.gate_temp"), "0.5");
    c.set("data.p", "0.75");
    c.set("model.hidden_dims", "[64, 32]");
    c.set("sweep.methods", "symile, gated_symile");
    ExperimentConfig d;
    d.merge_text(c.to_text());
    EXPECT_EQ(d.to_text(), c.to_text());
    EXPECT_EQ(d.encoder.hidden_dims, (std::vector<std::size_t>{64, 32}));
    EXPECT_EQ(d.sweep.methods.size(), 2u);
}

TEST(Config, AliasesResolveToCanonicalKeys) {
    ExperimentConfig c;
    c.merge_text(R"(
# alternate spellings
modelname.gate_temp: 0.25
modelname.use_null = false
modelname.negative_sampling = n
optimizer.lr = 0.002
encoders.mlp.hidden_dims = 8,8
p = 1.0
method = symile
)");
    EXPECT_DOUBLE_EQ(c.gate.gate_temp, 0.25);
    EXPECT_FALSE(c.gate.use_null);
    EXPECT_EQ(c.objective.sampling, Sampling::n);
    EXPECT_DOUBLE_EQ(c.train.lr, 0.002);
    EXPECT_EQ(c.encoder.hidden_dims, (std::vector<std::size_t>{8, 8}));
    EXPECT_DOUBLE_EQ(c.data.misalignment_prob, 1.0);
    EXPECT_EQ(c.objective.method, Method::symile);
    c.set("modelname.use_gate", "false");
    EXPECT_EQ(c.gate.gate_mode, GateMode::none);
    c.set("gate.use_gate", "true");
    EXPECT_EQ(c.gate.gate_mode, GateMode::attention);
}

TEST(Config, ErrorsNameTheKey) {
    ExperimentConfig c;
    const auto key_of = [&](const std::string& key, const std::string& value) {
        try {
            c.set(key, value);
        } catch (const ConfigError& e) {
            return e.key();
        }
        return std::string("<no error>");
    };
    EXPECT_EQ(key_of("train.lr", "fast"), "train.lr");
    EXPECT_EQ(key_of("gate.gate_type", "relu"), "gate.gate_type");
    EXPECT_EQ(key_of("modelname.gate_type", "relu"), "modelname.gate_type");
    EXPECT_EQ(key_of("train.batch_size", "-3"), "train.batch_size");
    EXPECT_EQ(key_of("gate.use_null", "maybe"), "gate.use_null");
    EXPECT_EQ(key_of("bogus.key", "1"), "bogus.key");
    EXPECT_THROW(c.merge_text("no separator here"), ConfigError);
    EXPECT_THROW(c.merge_file("/nonexistent/config.txt"), ConfigError);
}

TEST(Config, ValidationCatchesInconsistentSettings) {
    ExperimentConfig c;
    c.set("data.p", "1.5");
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.set("data.train_fraction", "0.9");
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.set("model.hidden_dims", "8");
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.set("gate.gate_temp", "0");
    EXPECT_THROW(c.validate(), ConfigError);
    c.set("gate.gate_mode", "none");
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, DerivedSeedsAndModel) {
    ExperimentConfig c;
    c.seed = 11;
    EXPECT_EQ(c.data_config().seed, substream_seed(11, "data"));
    EXPECT_EQ(c.split_seed(), substream_seed(11, "split"));
    EXPECT_EQ(c.train_config().seed, substream_seed(11, "train"));
    c.set("data.input_dim", "96");
    EXPECT_EQ(c.model_config().encoder.input_dim, 96u);
    EXPECT_EQ(c.model_config().num_modalities, 3u);
}

TEST(Config, FileLoading) {
    const auto dir = temp_dir("cfg");
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "c.txt") << "seed = 5\ndata.p = 0.5  # trailing comment\n";
    const ExperimentConfig c = load_experiment_config(dir / "c.txt");
    EXPECT_EQ(c.seed, 5u);
    EXPECT_DOUBLE_EQ(c.data.misalignment_prob, 0.5);
    std::filesystem::remove_all(dir);
}

TEST(Sweep, VariantsApplyTheirModifications) {
    EXPECT_EQ(ablation_variants().size(), 10u);
    ExperimentConfig c;
    make_variant("matrix").apply(c);
    EXPECT_EQ(c.gate.gate_mode, GateMode::matrix);
    make_variant("ungated_n").apply(c);
    EXPECT_EQ(c.objective.method, Method::symile);
    EXPECT_EQ(c.objective.sampling, Sampling::n);
    c = {};
    make_variant("no_neutral_no_renorm").apply(c);
    EXPECT_EQ(c.gate.neutral_type, NeutralType::none);
    EXPECT_FALSE(c.gate.renormalize);
    c = {};
    make_variant("clip").apply(c);
    EXPECT_EQ(c.objective.method, Method::clip);
    EXPECT_THROW(make_variant("nope"), ConfigError);
}

TEST(Sweep, CellIdsAreUnique) {
    std::set<std::string> ids;
    for (const auto& v : ablation_variants()) {
        for (double p : {0.0, 0.5}) ids.insert(SweepCell{v, p, 128, 128, 0}.id());
    }
    EXPECT_EQ(ids.size(), 20u);
}

TEST(Sweep, ThreadCapFromEnvironment) {
    ::setenv("GATED_MIP_THREADS", "2", 1);
    EXPECT_EQ(sweep_threads(8), 2u);
    ::unsetenv("GATED_MIP_THREADS");
    EXPECT_EQ(sweep_threads(0), 1u);
    EXPECT_EQ(sweep_threads(3), 3u);
}

TEST(Sweep, RunCellsPersistsResumesAndReportsFailures) {
    const ExperimentConfig base = tiny_experiment();
    const auto dir = temp_dir("cells");
    SweepOptions options;
    options.cell_dir = dir;
    const std::vector<std::uint64_t> seeds{1};
    auto rows = sweep_misalignment({make_variant("symile"), make_variant("gated_symile")}, {0.0}, seeds, base, options);
    ASSERT_EQ(rows.size(), 2u);
    for (const auto& r : rows) {
        EXPECT_TRUE(r.ok()) << r.error;
        EXPECT_GE(r.top1, 0.0);
        EXPECT_LE(r.top1, 1.0);
        EXPECT_EQ(r.pool, "sampled:9");
    }

    std::vector<std::string> logs;
    options.resume = true;
    options.log = [&](const std::string& line) { logs.push_back(line); };
    const auto again = sweep_misalignment({make_variant("symile"), make_variant("gated_symile")}, {0.0}, seeds, base,
                                          options);
    ASSERT_EQ(logs.size(), 2u);
    EXPECT_EQ(logs[0].rfind("skip ", 0), 0u);
    EXPECT_EQ(again[1].top1, rows[1].top1);
    EXPECT_EQ(again[1].runtime_s, rows[1].runtime_s);

    ExperimentConfig broken = base;
    broken.eval.num_negatives = 10000;
    const auto failed = sweep_misalignment({make_variant("symile")}, {0.5}, seeds, broken, {});
    ASSERT_EQ(failed.size(), 1u);
    EXPECT_FALSE(failed[0].ok());
    EXPECT_EQ(results_csv(failed), "method,p,B,K,seed,top1,pool,runtime_s\n");
    EXPECT_NE(failures_csv(failed).find("symile,0.5,32,8,1,"), std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST(Sweep, ScalingJointModeTiesNegativesToBatch) {
    ExperimentConfig base = tiny_experiment();
    base.data.num_samples = 300;
    const std::vector<std::uint64_t> seeds{2};
    const auto rows = sweep_scaling({make_variant("symile")}, {16, 32}, KMode::joint, {0.0}, seeds, base, {});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].num_negatives, 16u);
    EXPECT_EQ(rows[1].num_negatives, 32u);
    const auto fixed = sweep_scaling({make_variant("symile")}, {16}, KMode::fixed, {0.0}, seeds, base, {});
    EXPECT_EQ(fixed[0].num_negatives, 8u);
}

TEST(Sweep, ResultFormats) {
    SweepRow r{"gated_symile", 0.5, 128, 128, 3, 0.875, "sampled:129", 1.5, ""};
    const std::string csv = results_csv({r});
    EXPECT_EQ(csv, "method,p,B,K,seed,top1,pool,runtime_s\ngated_symile,0.5,128,128,3,0.875,sampled:129,1.5\n");
    const std::string json = results_json({r});
    EXPECT_NE(json.find("\"gated_symile\""), std::string::npos);
    EXPECT_NE(json.find("\"top1\": 0.875"), std::string::npos);
}
