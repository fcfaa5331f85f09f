#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "pgmoe/ising_hamiltonian.hpp"

namespace pgmoe {

// Real coefficients in canonical basis order (ascending configuration index).
using Wavefunction = Eigen::VectorXd;

struct EigenPair {
    double energy = 0.0;
    Wavefunction state;   // unit norm, gauge fixed
    double residual = 0.0;  // ||H psi - E psi||_2
};

struct LanczosOptions {
    double tol = 1e-10;
    int max_krylov = 0;  // 0 selects min(2^N, 300)
    std::uint64_t seed = 0;
    // Runs a second, deflated Lanczos pass to detect a degenerate ground space.
    bool check_degeneracy = true;
};

int default_max_krylov(int n_spins);

EigenPair lanczos_ground_state(const HamiltonianOperator& h, const LanczosOptions& options = {});

// Cyclic Jacobi diagonalization of a dense symmetric matrix, returning the
// lowest eigenpair. Sweeps stop once the off-diagonal Frobenius norm is <= tol.
EigenPair dense_ground_state(const Eigen::MatrixXd& m, double tol = 1e-12);

// Full spectrum from the same Jacobi routine, ascending.
Eigen::VectorXd dense_spectrum(const Eigen::MatrixXd& m, double tol = 1e-12);

// Flips the overall sign so the largest-magnitude entry (lowest index on
// ties) is positive.
Wavefunction gauge_fix(const Wavefunction& psi);

// Lowest eigenpair of the symmetric tridiagonal matrix with diagonal `alpha`
// and off-diagonal `beta` (size alpha.size()-1). Bisection on the Sturm
// sequence, then inverse iteration for the vector.
struct TridiagonalLowest {
    double value = 0.0;
    Eigen::VectorXd vector;
    int count_within = 0;  // eigenvalues <= value + window
};
TridiagonalLowest tridiagonal_lowest(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, double window = 0.0);

}  // namespace pgmoe
