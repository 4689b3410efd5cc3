#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gmip {

/// Operand shapes are incompatible with the requested operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An index (target class, modality, flat position) is out of range.
class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Invalid or inconsistent configuration. `key()` names the offending
/// setting when one is known.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& message, std::string key = {})
        : std::invalid_argument(message), m_key(std::move(key)) {}

    const std::string& key() const noexcept { return m_key; }

private:
    std::string m_key;
};

/// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training diverged; carries the optimizer step at which it was detected.
class TrainingError : public NumericError {
public:
    TrainingError(const std::string& message, std::size_t step)
        : NumericError(message + " (step " + std::to_string(step) + ")"), m_step(step) {}

    std::size_t step() const noexcept { return m_step; }

private:
    std::size_t m_step;
};

} // namespace gmip
