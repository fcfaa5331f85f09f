#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pgmoe {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PartitionError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double best_residual)
        : Error(what), best_residual_(best_residual) {}
    double best_residual() const noexcept { return best_residual_; }

private:
    double best_residual_;
};

class DegenerateGroundStateError : public Error {
public:
    DegenerateGroundStateError(const std::string& what, double gap)
        : Error(what), gap_(gap) {}
    double gap() const noexcept { return gap_; }

private:
    double gap_;
};

// Raised when a predicted wavefunction collapses to (near) zero norm.
class NumericalDegeneracyError : public Error {
public:
    NumericalDegeneracyError(const std::string& what, std::size_t batch_index)
        : Error(what), batch_index_(batch_index) {}
    std::size_t batch_index() const noexcept { return batch_index_; }

private:
    std::size_t batch_index_;
};

}  // namespace pgmoe
