#include "gated_mip/experiment_config.hpp"

#include "gated_mip/errors.hpp"
#include "gated_mip/rng.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace gmip {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

double to_double(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    char* end = nullptr;
    const double x = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size()) throw ConfigError("expected a number for " + key + ", got '" + v + "'", key);
    return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    std::uint64_t x = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
        throw ConfigError("expected a non-negative integer for " + key + ", got '" + v + "'", key);
    }
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    std::string t = trim(v);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("expected a boolean for " + key + ", got '" + v + "'", key);
}

std::vector<std::string> to_list(const std::string& v) {
    std::string t = trim(v);
    if (!t.empty() && t.front() == '[' && t.back() == ']') t = t.substr(1, t.size() - 2);
    std::vector<std::string> out;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.size() >= 2 && (item.front() == '"' || item.front() == '\'') && item.back() == item.front()) {
            item = item.substr(1, item.size() - 2);
        }
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& format) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ',';
        out += format(items[i]);
    }
    return out;
}

// Wraps enum parsers to report errors against the given key.
template <typename F>
auto keyed(const std::string& key, F&& parse) {
    try {
        return parse();
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), key);
    }
}

struct Field {
    std::string key;
    std::function<void(ExperimentConfig&, const std::string& key, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

std::string str_u(std::uint64_t x) { return std::to_string(x); }
std::string str_b(bool b) { return b ? "true" : "false"; }

#define GMIP_DOUBLE(KEY, MEMBER)                                                                                      \
    Field{KEY, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_double(k, v); },   \
          [](const ExperimentConfig& c) { return fmt_double(c.MEMBER); }}
#define GMIP_SIZE(KEY, MEMBER)                                                                                        \
    Field{KEY, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_u64(k, v); },      \
          [](const ExperimentConfig& c) { return str_u(c.MEMBER); }}
#define GMIP_BOOL(KEY, MEMBER)                                                                                        \
    Field{KEY, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_bool(k, v); },     \
          [](const ExperimentConfig& c) { return str_b(c.MEMBER); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        GMIP_SIZE("seed", seed),
        Field{"run_name", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.run_name = trim(v); },
              [](const ExperimentConfig& c) { return c.run_name; }},
        Field{"out_dir", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = trim(v); },
              [](const ExperimentConfig& c) { return c.out_dir; }},

        GMIP_SIZE("data.bit_length", data.bit_length),
        GMIP_DOUBLE("data.signal_amplitude", data.signal_amplitude),
        GMIP_DOUBLE("data.distractor_sigma", data.distractor_sigma),
        GMIP_SIZE("data.input_dim", data.input_dim),
        GMIP_DOUBLE("data.p", data.misalignment_prob),
        GMIP_SIZE("data.num_samples", data.num_samples),
        GMIP_DOUBLE("data.train_fraction", split.train),
        GMIP_DOUBLE("data.val_fraction", split.val),
        GMIP_DOUBLE("data.test_fraction", split.test),

        Field{"model.hidden_dims",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.encoder.hidden_dims.clear();
                  for (const auto& item : to_list(v)) c.encoder.hidden_dims.push_back(to_u64(k, item));
              },
              [](const ExperimentConfig& c) { return join(c.encoder.hidden_dims, [](std::size_t x) { return str_u(x); }); }},
        Field{"model.hidden_dropouts",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.encoder.hidden_dropouts.clear();
                  for (const auto& item : to_list(v)) c.encoder.hidden_dropouts.push_back(to_double(k, item));
              },
              [](const ExperimentConfig& c) { return join(c.encoder.hidden_dropouts, fmt_double); }},
        GMIP_SIZE("model.emb_dim", encoder.embedding_dim),
        GMIP_BOOL("model.embedding_norm", encoder.normalize_output),

        Field{"objective.method",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.objective.method = keyed(k, [&] { return parse_method(trim(v)); });
              },
              [](const ExperimentConfig& c) { return to_string(c.objective.method); }},
        Field{"objective.sampling",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.objective.sampling = keyed(k, [&] { return parse_sampling(trim(v)); });
              },
              [](const ExperimentConfig& c) { return to_string(c.objective.sampling); }},
        GMIP_SIZE("objective.num_negatives", objective.num_negatives),
        GMIP_DOUBLE("objective.logit_scale_init", objective.logit_scale_init),
        GMIP_SIZE("objective.target_modality", objective.target_modality),

        Field{"gate.gate_mode",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.gate.gate_mode = keyed(k, [&] { return parse_gate_mode(trim(v)); });
              },
              [](const ExperimentConfig& c) { return to_string(c.gate.gate_mode); }},
        Field{"gate.gate_type",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.gate.gate_type = keyed(k, [&] { return parse_gate_type(trim(v)); });
              },
              [](const ExperimentConfig& c) { return to_string(c.gate.gate_type); }},
        Field{"gate.neutral_type",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.gate.neutral_type = keyed(k, [&] { return parse_neutral_type(trim(v)); });
              },
              [](const ExperimentConfig& c) { return to_string(c.gate.neutral_type); }},
        GMIP_BOOL("gate.use_null", gate.use_null),
        GMIP_BOOL("gate.renormalize", gate.renormalize),
        GMIP_DOUBLE("gate.gate_temp", gate.gate_temp),
        GMIP_DOUBLE("gate.gate_strength_init", gate.gate_strength_init),
        GMIP_SIZE("gate.gate_d_k", gate.gate_d_k),

        GMIP_DOUBLE("train.lr", train.lr),
        GMIP_SIZE("train.warmup_steps", train.warmup_steps),
        GMIP_DOUBLE("train.weight_decay", train.weight_decay),
        GMIP_DOUBLE("train.lr_gate_mul", train.lr_gate_mul),
        GMIP_SIZE("train.max_epochs", train.max_epochs),
        GMIP_SIZE("train.batch_size", train.batch_size),
        GMIP_DOUBLE("train.grad_clip_norm", train.grad_clip_norm),
        GMIP_SIZE("train.eval_every", train.eval_every),
        GMIP_SIZE("train.patience", train.patience),

        Field{"eval.pool_mode",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.eval.pool_mode = keyed(k, [&] { return parse_pool_mode(trim(v)); });
              },
              [](const ExperimentConfig& c) { return to_string(c.eval.pool_mode); }},
        GMIP_SIZE("eval.num_negatives", eval.num_negatives),
        GMIP_SIZE("eval.seed", eval.seed),
        GMIP_SIZE("eval.max_queries", eval.max_queries),

        Field{"sweep.p_grid",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.sweep.p_grid.clear();
                  for (const auto& item : to_list(v)) c.sweep.p_grid.push_back(to_double(k, item));
              },
              [](const ExperimentConfig& c) { return join(c.sweep.p_grid, fmt_double); }},
        GMIP_SIZE("sweep.seeds", sweep.num_seeds),
        Field{"sweep.methods",
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.sweep.methods = to_list(v); },
              [](const ExperimentConfig& c) { return join(c.sweep.methods, [](const std::string& s) { return s; }); }},
        Field{"sweep.batch_grid",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  c.sweep.batch_grid.clear();
                  for (const auto& item : to_list(v)) c.sweep.batch_grid.push_back(to_u64(k, item));
              },
              [](const ExperimentConfig& c) { return join(c.sweep.batch_grid, [](std::size_t x) { return str_u(x); }); }},
        Field{"sweep.k_mode",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  const std::string t = trim(v);
                  if (t == "joint") c.sweep.k_mode = KMode::joint;
                  else if (t == "fixed") c.sweep.k_mode = KMode::fixed;
                  else throw ConfigError("sweep.k_mode must be joint or fixed, got '" + t + "'", k);
              },
              [](const ExperimentConfig& c) { return std::string(c.sweep.k_mode == KMode::joint ? "joint" : "fixed"); }},
    };
    return table;
}

const std::map<std::string, std::string>& aliases() {
    static const std::map<std::string, std::string> table = {
        {"method", "objective.method"},
        {"p", "data.p"},
        {"data.misalignment_prob", "data.p"},
        {"modelname.emb_dim", "model.emb_dim"},
        {"modelname.embedding_norm", "model.embedding_norm"},
        {"encoders.mlp.hidden_dims", "model.hidden_dims"},
        {"encoders.mlp.hidden_dropouts", "model.hidden_dropouts"},
        {"modelname.logit_scale_init", "objective.logit_scale_init"},
        {"modelname.negative_sampling", "objective.sampling"},
        {"modelname.gate_mode", "gate.gate_mode"},
        {"modelname.gate_type", "gate.gate_type"},
        {"modelname.neutral_type", "gate.neutral_type"},
        {"modelname.use_null", "gate.use_null"},
        {"modelname.renormalize", "gate.renormalize"},
        {"modelname.gate_temp", "gate.gate_temp"},
        {"modelname.gate_strength_init", "gate.gate_strength_init"},
        {"modelname.gate_d_k", "gate.gate_d_k"},
        {"optimizer.lr", "train.lr"},
        {"optimizer.warmup_steps", "train.warmup_steps"},
        {"optimizer.weight_decay", "train.weight_decay"},
        {"optimizer.lr_gate_mul", "train.lr_gate_mul"},
    };
    return table;
}

const Field* find_field(const std::string& key) {
    const auto alias = aliases().find(key);
    const std::string& canonical = alias == aliases().end() ? key : alias->second;
    for (const auto& f : fields()) {
        if (f.key == canonical) return &f;
    }
    return nullptr;
}

} // namespace

ExperimentConfig::ExperimentConfig() { encoder.input_dim = data.input_dim; }

void ExperimentConfig::set(const std::string& raw_key, const std::string& value) {
    const std::string key = trim(raw_key);
    if (key == "modelname.use_gate" || key == "gate.use_gate") {
        const bool use = to_bool(key, value);
        if (!use) gate.gate_mode = GateMode::none;
        else if (gate.gate_mode == GateMode::none) gate.gate_mode = GateMode::attention;
        return;
    }
    const Field* f = find_field(key);
    if (!f) throw ConfigError("unknown configuration key '" + key + "'", key);
    f->set(*this, key, value);
}

std::string ExperimentConfig::get(const std::string& key) const {
    const Field* f = find_field(trim(key));
    if (!f) throw ConfigError("unknown configuration key '" + key + "'", key);
    return f->get(*this);
}

std::vector<std::string> ExperimentConfig::keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
}

void ExperimentConfig::merge_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const auto colon = line.find(':');
        const auto sep = eq != std::string::npos ? eq : colon;
        if (sep == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + " is not 'key = value': " + line, trim(line));
        }
        set(line.substr(0, sep), line.substr(sep + 1));
    }
}

void ExperimentConfig::merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string(), "--config");
    std::stringstream buffer;
    buffer << in.rdbuf();
    merge_text(buffer.str());
}

std::string ExperimentConfig::to_text() const {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
    return out;
}

void ExperimentConfig::validate() const {
    data_config().validate();
    model_config().validate();
    train_config().validate();
    if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1", "data.train_fraction");
    }
    if (eval.pool_mode == PoolMode::sampled && eval.num_negatives == 0) {
        throw ConfigError("sampled evaluation needs at least one negative", "eval.num_negatives");
    }
    for (double p : sweep.p_grid) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sweep p values must lie in [0, 1]", "sweep.p_grid");
    }
    if (sweep.num_seeds == 0) throw ConfigError("at least one sweep seed is required", "sweep.seeds");
    if (run_name.empty() || run_name.find('/') != std::string::npos) throw ConfigError("run_name must be a plain name", "run_name");
}

XnorConfig ExperimentConfig::data_config() const {
    XnorConfig c = data;
    c.seed = substream_seed(seed, "data");
    return c;
}

std::uint64_t ExperimentConfig::split_seed() const { return substream_seed(seed, "split"); }

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig c = train;
    c.seed = substream_seed(seed, "train");
    return c;
}

ModelConfig ExperimentConfig::model_config() const {
    ModelConfig m;
    m.encoder = encoder;
    m.encoder.input_dim = data.input_dim;
    m.num_modalities = kXnorModalities;
    m.objective = objective;
    m.gate = gate;
    m.gate_lr_multiplier = train.lr_gate_mul;
    return m;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    ExperimentConfig c;
    c.merge_file(path);
    return c;
}

DatasetSplits make_splits(const ExperimentConfig& config) {
    return split(generate(config.data_config()), config.split, config.split_seed());
}

} // namespace gmip
