#pragma once

#include <stdexcept>
#include <string>

namespace chillerlab {

// Configuration problems: syntax errors (with line/column where available),
// unresolved references, invariant violations. The message names the
// offending field or identifier.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Expression evaluation failures (division by zero, unbound identifier).
class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// I/O and schema problems on CSV / checkpoint files.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace chillerlab
