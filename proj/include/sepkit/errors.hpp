#pragma once

#include <stdexcept>
#include <string>

namespace sepkit {

/// An exact computation would exceed its enumeration or state-space budget.
class BudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A verification routine found a counterexample to the identity it checks.
class VerificationFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sepkit
