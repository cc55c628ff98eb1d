#pragma once

#include <stdexcept>
#include <string>

namespace coda {

struct CodaError : std::runtime_error {
    explicit CodaError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated preconditions and broken internal contracts.
struct ContractViolation : CodaError {
    explicit ContractViolation(const std::string& msg) : CodaError("contract violation: " + msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

}  // namespace coda
