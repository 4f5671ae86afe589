#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Error taxonomy, mapped onto CLI exit codes:
//   ConfigError   -> 1  (bad configuration, bad arguments, invariant-violating setups)
//   DataError     -> 2  (I/O failures, malformed files, out-of-range inputs)
//   InternalError -> 3  (broken internal invariants; indicates a bug, not user error)
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InternalError : std::runtime_error {
    explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fedsim
