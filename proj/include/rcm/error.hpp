#pragma once

#include <stdexcept>
#include <string>

namespace rcm {

/// Invalid user-facing configuration (bad spec, out-of-range parameter).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A ball or window does not fit in the periodic box.
class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace rcm
