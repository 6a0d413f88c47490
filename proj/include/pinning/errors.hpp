#pragma once

#include <stdexcept>
#include <string>

namespace pinning {

// Thrown when a computation would exceed its configured work or memory budget.
class BudgetExceeded : public std::runtime_error {
public:
    explicit BudgetExceeded(const std::string& what) : std::runtime_error(what) {}
};

// Thrown by iterative solvers that fail to converge or bracket a root.
class NumericalFailure : public std::runtime_error {
public:
    explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pinning
