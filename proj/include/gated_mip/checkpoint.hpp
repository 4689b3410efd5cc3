#pragma once

// Binary named-parameter table: magic, count, then per entry name, shape and
// 64-bit values. Loading matches entries to parameters by name.

#include "gated_mip/parameter.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace gmip {

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);
/// Every parameter must be present with a matching shape; extra entries are errors too.
void load_checkpoint(ParameterSet& params, const std::filesystem::path& path);

} // namespace gmip
