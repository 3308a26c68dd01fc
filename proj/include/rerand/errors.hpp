#ifndef RERAND_ERRORS_HPP
#define RERAND_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rerand {

/// Invalid user input: malformed files, out-of-range parameters.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// CSV parse failure carrying the offending source location (1-based).
class ParseError : public InputError {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : InputError(what + " (line " + std::to_string(line) + ", column " +
                     std::to_string(column) + ")"),
          line_(line),
          column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

/// Numerical failure: singular covariance, quantile inversion breakdown,
/// degenerate soft group sizes.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A sampler exhausted its iteration budget before finding a balanced
/// assignment. Carries the best balance value seen for diagnostics.
class BudgetError : public std::runtime_error {
public:
    BudgetError(const std::string& what, double best_m, long iterations)
        : std::runtime_error(what + " (best M so far: " + std::to_string(best_m) +
                             " after " + std::to_string(iterations) + " iterations)"),
          best_m_(best_m),
          iterations_(iterations) {}

    double best_m() const noexcept { return best_m_; }
    long iterations() const noexcept { return iterations_; }

private:
    double best_m_;
    long iterations_;
};

/// Latent scores left the finite range during Langevin updates.
class DivergedError : public NumericalError {
public:
    DivergedError(const std::string& what, long iteration)
        : NumericalError(what + " (iteration " + std::to_string(iteration) + ")"),
          iteration_(iteration) {}

    long iteration() const noexcept { return iteration_; }

private:
    long iteration_;
};

}  // namespace rerand

#endif  // RERAND_ERRORS_HPP
