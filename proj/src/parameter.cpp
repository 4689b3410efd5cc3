#include "gated_mip/parameter.hpp"

#include "gated_mip/errors.hpp"

#include <algorithm>

namespace gmip {

Parameter& ParameterSet::add(Parameter parameter) {
    if (contains(parameter.name)) throw ConfigError("duplicate parameter name '" + parameter.name + "'", parameter.name);
    if (!(parameter.learning_rate_multiplier > 0.0)) {
        throw ConfigError("learning rate multiplier must be positive for '" + parameter.name + "'", parameter.name);
    }
    parameter.tensor.set_requires_grad(parameter.trainable);
    m_params.push_back(std::move(parameter));
    return m_params.back();
}

bool ParameterSet::contains(const std::string& name) const {
    return std::any_of(m_params.begin(), m_params.end(), [&](const Parameter& p) { return p.name == name; });
}

Parameter& ParameterSet::get(const std::string& name) {
    for (auto& p : m_params) {
        if (p.name == name) return p;
    }
    throw IndexError("no parameter named '" + name + "'");
}

const Parameter& ParameterSet::get(const std::string& name) const {
    return const_cast<ParameterSet*>(this)->get(name);
}

void ParameterSet::zero_grad() {
    for (auto& p : m_params) p.tensor.zero_grad();
}

std::size_t ParameterSet::total_elements() const {
    std::size_t n = 0;
    for (const auto& p : m_params) n += p.tensor.numel();
    return n;
}

std::vector<std::vector<double>> ParameterSet::snapshot() const {
    std::vector<std::vector<double>> out;
    out.reserve(m_params.size());
    for (const auto& p : m_params) {
        const auto d = p.tensor.data();
        out.emplace_back(d.begin(), d.end());
    }
    return out;
}

void ParameterSet::restore(const std::vector<std::vector<double>>& values) {
    if (values.size() != m_params.size()) throw DimensionError("restore: parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto dst = m_params[i].tensor.mutable_data();
        if (dst.size() != values[i].size()) throw DimensionError("restore: size mismatch for '" + m_params[i].name + "'");
        std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
}

} // namespace gmip
