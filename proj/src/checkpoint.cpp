#include "gated_mip/checkpoint.hpp"

#include "gated_mip/errors.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace gmip {

namespace {

constexpr char kMagic[8] = {'G', 'M', 'I', 'P', 'C', 'K', 'P', '1'};

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }

std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("checkpoint truncated");
    return v;
}

} // namespace

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
    std::ostringstream out(std::ios::binary);
    out.write(kMagic, sizeof(kMagic));
    put_u64(out, params.size());
    for (const auto& p : params.items()) {
        put_u64(out, p.name.size());
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put_u64(out, p.tensor.rank());
        for (std::size_t d : p.tensor.shape()) put_u64(out, d);
        const auto values = p.tensor.data();
        out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
        if (!file) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        const std::string bytes = out.str();
        file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!file) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw std::runtime_error(path.string() + " is not a checkpoint");
    const std::uint64_t count = get_u64(in);
    std::vector<CheckpointEntry> entries(count);
    for (auto& e : entries) {
        e.name.resize(get_u64(in));
        in.read(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        e.shape.resize(get_u64(in));
        for (auto& d : e.shape) d = get_u64(in);
        e.values.resize(shape_numel(e.shape));
        in.read(reinterpret_cast<char*>(e.values.data()), static_cast<std::streamsize>(e.values.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint truncated");
    }
    return entries;
}

void load_checkpoint(ParameterSet& params, const std::filesystem::path& path) {
    const auto entries = read_checkpoint(path);
    if (entries.size() != params.size()) {
        throw ConfigError("checkpoint holds " + std::to_string(entries.size()) + " parameters, model has " +
                          std::to_string(params.size()));
    }
    for (const auto& e : entries) {
        if (!params.contains(e.name)) throw ConfigError("checkpoint parameter '" + e.name + "' is not in the model", e.name);
        auto& p = params.get(e.name);
        if (p.tensor.shape() != e.shape) {
            throw DimensionError("checkpoint shape " + shape_to_string(e.shape) + " for '" + e.name + "' differs from " +
                                 shape_to_string(p.tensor.shape()));
        }
        auto dst = p.tensor.mutable_data();
        std::copy(e.values.begin(), e.values.end(), dst.begin());
    }
}

} // namespace gmip
