#pragma once

#include <stdexcept>
#include <string>

namespace polyfilt {

/// Operand shapes disagree (variable counts, vector lengths, matrix sides).
class DimensionError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// A scenario or configuration file could not be interpreted.
class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Fails if `ok` is false. Used for shape checks at API boundaries.
inline void require_dims(bool ok, const std::string& what)
{
    if (!ok)
    {
        throw DimensionError(what);
    }
}

}  // namespace polyfilt
