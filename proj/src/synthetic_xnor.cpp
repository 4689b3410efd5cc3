#include "gated_mip/synthetic_xnor.hpp"

#include "gated_mip/errors.hpp"
#include "gated_mip/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gmip {

namespace {

constexpr char kMagic[8] = {'G', 'M', 'I', 'P', 'X', 'N', 'R', '1'};

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("dataset file truncated");
    return value;
}

std::vector<double> clean_vector(const std::vector<double>& signal, std::size_t input_dim, double sigma,
                                 std::mt19937_64& rng) {
    std::vector<double> out(input_dim);
    std::copy(signal.begin(), signal.end(), out.begin());
    for (std::size_t j = signal.size(); j < input_dim; ++j) out[j] = sigma * standard_normal(rng);
    return out;
}

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

XnorDataset subset(const XnorDataset& dataset, std::span<const std::size_t> order) {
    XnorDataset out;
    out.config = dataset.config;
    out.samples.reserve(order.size());
    for (std::size_t i : order) out.samples.push_back(dataset.samples[i]);
    out.config.num_samples = out.samples.size();
    return out;
}

void check_consistent(const XnorDataset& dataset) {
    for (const auto& s : dataset.samples) {
        if (s.a.size() != dataset.config.input_dim || s.b.size() != dataset.config.input_dim ||
            s.c.size() != dataset.config.input_dim) {
            throw DimensionError("sample vector length differs from input_dim");
        }
    }
}

} // namespace

std::string to_string(Misalignment m) {
    switch (m) {
    case Misalignment::none: return "none";
    case Misalignment::B: return "B";
    case Misalignment::C: return "C";
    }
    return "?";
}

Misalignment parse_misalignment(const std::string& text) {
    if (text == "none") return Misalignment::none;
    if (text == "B") return Misalignment::B;
    if (text == "C") return Misalignment::C;
    throw ConfigError("unknown misalignment label '" + text + "'");
}

void XnorConfig::validate() const {
    if (bit_length == 0) throw ConfigError("bit_length must be positive", "data.bit_length");
    if (input_dim < signal_length()) throw ConfigError("input_dim must be at least 3 * bit_length", "data.input_dim");
    if (!(signal_amplitude > 0.0)) throw ConfigError("signal amplitude must be positive", "data.signal_amplitude");
    if (!(distractor_sigma >= 0.0)) throw ConfigError("distractor sigma must be non-negative", "data.distractor_sigma");
    if (!(misalignment_prob >= 0.0 && misalignment_prob <= 1.0)) {
        throw ConfigError("misalignment probability must lie in [0, 1]", "data.p");
    }
    if (misalignment_prob > 0.0 && num_samples < 2) {
        throw ConfigError("swapping needs at least two samples", "data.num_samples");
    }
}

const std::vector<double>& SyntheticSample::modality(std::size_t m) const {
    switch (m) {
    case 0: return a;
    case 1: return b;
    case 2: return c;
    default: throw IndexError("modality index " + std::to_string(m) + " out of range");
    }
}

Tensor XnorDataset::modality(std::size_t m, std::span<const std::size_t> indices) const {
    const std::size_t d = config.input_dim;
    std::vector<double> data(indices.size() * d);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= samples.size()) throw IndexError("sample index out of range");
        const auto& v = samples[indices[r]].modality(m);
        std::copy(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    return Tensor::from_data({indices.size(), d}, std::move(data));
}

Tensor XnorDataset::modality(std::size_t m) const {
    std::vector<std::size_t> all(samples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return modality(m, all);
}

std::vector<std::uint8_t> xnor(std::span<const std::uint8_t> u, std::span<const std::uint8_t> v) {
    if (u.size() != v.size()) throw DimensionError("xnor operands differ in length");
    std::vector<std::uint8_t> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = (u[i] != 0) == (v[i] != 0) ? 1 : 0;
    return out;
}

XnorDataset generate(const XnorConfig& config) {
    config.validate();
    const std::size_t n = config.num_samples, k = config.bit_length;
    const double s = config.signal_amplitude;
    const auto pm = [s](std::uint8_t bit) { return bit ? s : -s; };

    const std::uint64_t sample_stream = substream_seed(config.seed, "samples");
    const std::uint64_t swap_stream = substream_seed(config.seed, "swap");

    XnorDataset out;
    out.config = config;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto rng = make_rng(counter_seed(sample_stream, i));
        std::vector<std::uint8_t> u(k), v(k);
        for (auto& bit : u) bit = uniform01(rng) < 0.5 ? 1 : 0;
        for (auto& bit : v) bit = uniform01(rng) < 0.5 ? 1 : 0;
        const auto uv = xnor(u, v);

        std::vector<double> sa(3 * k), sb(3 * k), sc(3 * k);
        for (std::size_t j = 0; j < k; ++j) {
            sa[j] = pm(u[j]);
            sa[k + j] = pm(v[j]);
            sa[2 * k + j] = pm(uv[j]);
            sb[j] = pm(u[j]);
            sb[k + j] = s;
            sb[2 * k + j] = pm(u[j]);
            sc[j] = s;
            sc[k + j] = pm(v[j]);
            sc[2 * k + j] = pm(v[j]);
        }
        auto& sample = out.samples[i];
        sample.sample_id = i;
        sample.a = clean_vector(sa, config.input_dim, config.distractor_sigma, rng);
        sample.b = clean_vector(sb, config.input_dim, config.distractor_sigma, rng);
        sample.c = clean_vector(sc, config.input_dim, config.distractor_sigma, rng);
    }

    if (config.misalignment_prob > 0.0) {
        // Donors come from the clean pool.
        std::vector<std::vector<double>> clean_b(n), clean_c(n);
        for (std::size_t i = 0; i < n; ++i) {
            clean_b[i] = out.samples[i].b;
            clean_c[i] = out.samples[i].c;
        }
        for (std::size_t i = 0; i < n; ++i) {
            auto rng = make_rng(counter_seed(swap_stream, i));
            if (!(uniform01(rng) < config.misalignment_prob)) continue;
            const bool swap_b = uniform01(rng) < 0.5;
            std::size_t donor = uniform_index(rng, n - 1);
            if (donor >= i) ++donor;
            auto& sample = out.samples[i];
            if (swap_b) {
                sample.b = clean_b[donor];
                sample.misaligned = Misalignment::B;
            } else {
                sample.c = clean_c[donor];
                sample.misaligned = Misalignment::C;
            }
        }
    }
    return out;
}

DatasetSplits split(const XnorDataset& dataset, const SplitFractions& fractions, std::uint64_t seed) {
    const double total = fractions.train + fractions.val + fractions.test;
    if (fractions.train < 0 || fractions.val < 0 || fractions.test < 0 || std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be non-negative and sum to 1", "data.train_fraction");
    }
    const std::size_t n = dataset.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(substream_seed(seed, "split"));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions.val * static_cast<double>(n))));
    const std::span<const std::size_t> all(order);
    DatasetSplits out;
    out.train = subset(dataset, all.subspan(0, n_train));
    out.val = subset(dataset, all.subspan(n_train, n_val));
    out.test = subset(dataset, all.subspan(n_train + n_val));
    return out;
}

void save_binary(const XnorDataset& dataset, const std::filesystem::path& path) {
    check_consistent(dataset);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const auto& c = dataset.config;
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint64_t>(out, c.bit_length);
    write_pod<double>(out, c.signal_amplitude);
    write_pod<double>(out, c.distractor_sigma);
    write_pod<std::uint64_t>(out, c.input_dim);
    write_pod<double>(out, c.misalignment_prob);
    write_pod<std::uint64_t>(out, c.num_samples);
    write_pod<std::uint64_t>(out, c.seed);
    write_pod<std::uint64_t>(out, dataset.size());
    for (const auto& s : dataset.samples) {
        write_pod<std::uint64_t>(out, s.sample_id);
        write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(s.misaligned));
        for (const auto* v : {&s.a, &s.b, &s.c}) {
            out.write(reinterpret_cast<const char*>(v->data()), static_cast<std::streamsize>(v->size() * sizeof(double)));
        }
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

XnorDataset load_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw std::runtime_error(path.string() + " is not a dataset file");
    XnorDataset out;
    auto& c = out.config;
    c.bit_length = read_pod<std::uint64_t>(in);
    c.signal_amplitude = read_pod<double>(in);
    c.distractor_sigma = read_pod<double>(in);
    c.input_dim = read_pod<std::uint64_t>(in);
    c.misalignment_prob = read_pod<double>(in);
    c.num_samples = read_pod<std::uint64_t>(in);
    c.seed = read_pod<std::uint64_t>(in);
    const auto count = read_pod<std::uint64_t>(in);
    out.samples.resize(count);
    for (auto& s : out.samples) {
        s.sample_id = read_pod<std::uint64_t>(in);
        const auto label = read_pod<std::uint8_t>(in);
        if (label > 2) throw std::runtime_error("corrupt misalignment label in " + path.string());
        s.misaligned = static_cast<Misalignment>(label);
        for (auto* v : {&s.a, &s.b, &s.c}) {
            v->resize(c.input_dim);
            in.read(reinterpret_cast<char*>(v->data()), static_cast<std::streamsize>(v->size() * sizeof(double)));
            if (!in) throw std::runtime_error("dataset file truncated");
        }
    }
    return out;
}

void save_csv(const XnorDataset& dataset, const std::filesystem::path& path) {
    check_consistent(dataset);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const auto& c = dataset.config;
    out << "# bit_length=" << c.bit_length << '\n'
        << "# signal_amplitude=" << format_double(c.signal_amplitude) << '\n'
        << "# distractor_sigma=" << format_double(c.distractor_sigma) << '\n'
        << "# input_dim=" << c.input_dim << '\n'
        << "# p=" << format_double(c.misalignment_prob) << '\n'
        << "# num_samples=" << c.num_samples << '\n'
        << "# seed=" << c.seed << '\n';
    out << "sample_id,misaligned";
    for (const char prefix : {'a', 'b', 'c'}) {
        for (std::size_t j = 0; j < c.input_dim; ++j) out << ',' << prefix << j;
    }
    out << '\n';
    for (const auto& s : dataset.samples) {
        out << s.sample_id << ',' << to_string(s.misaligned);
        for (const auto* v : {&s.a, &s.b, &s.c}) {
            for (double x : *v) out << ',' << format_double(x);
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

XnorDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    XnorDataset out;
    auto& c = out.config;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(2, eq - 2), value = line.substr(eq + 1);
            if (key == "bit_length") c.bit_length = std::stoull(value);
            else if (key == "signal_amplitude") c.signal_amplitude = std::stod(value);
            else if (key == "distractor_sigma") c.distractor_sigma = std::stod(value);
            else if (key == "input_dim") c.input_dim = std::stoull(value);
            else if (key == "p") c.misalignment_prob = std::stod(value);
            else if (key == "num_samples") c.num_samples = std::stoull(value);
            else if (key == "seed") c.seed = std::stoull(value);
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::istringstream row(line);
        std::string field;
        SyntheticSample s;
        std::getline(row, field, ',');
        s.sample_id = std::stoull(field);
        std::getline(row, field, ',');
        s.misaligned = parse_misalignment(field);
        for (auto* v : {&s.a, &s.b, &s.c}) {
            v->resize(c.input_dim);
            for (double& x : *v) {
                if (!std::getline(row, field, ',')) throw std::runtime_error("short row in " + path.string());
                x = std::strtod(field.c_str(), nullptr);
            }
        }
        out.samples.push_back(std::move(s));
    }
    return out;
}

} // namespace gmip
