#pragma once

#include "gated_mip/tensor.hpp"

#include <string>
#include <vector>

namespace gmip {

struct Parameter {
    Tensor tensor;
    std::string name;
    double learning_rate_multiplier = 1.0;
    /// Frozen parameters receive no optimizer updates.
    bool trainable = true;
    /// Excluded from decoupled weight decay when false (biases, scales).
    bool decay = true;
};

/// Ordered collection of named parameters; names are unique.
class ParameterSet {
public:
    Parameter& add(Parameter parameter);

    std::size_t size() const noexcept { return m_params.size(); }
    bool contains(const std::string& name) const;
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;

    std::vector<Parameter>& items() noexcept { return m_params; }
    const std::vector<Parameter>& items() const noexcept { return m_params; }

    void zero_grad();
    std::size_t total_elements() const;

    /// Copy of all parameter values, in order.
    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& values);

private:
    std::vector<Parameter> m_params;
};

} // namespace gmip
