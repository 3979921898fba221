#pragma once

#include <stdexcept>
#include <string>

namespace dscg {

/// Shape or arity mismatch between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A caller violated an operation's precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// NaN/Inf produced or supplied where finite values are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or document.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Semantically invalid value (scene dims, completeness, bin edges, ...).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid model/training configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Synthetic scene generation or partial extraction could not satisfy its constraints.
class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dscg
