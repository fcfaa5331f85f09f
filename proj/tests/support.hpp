#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library under test.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

#include <Eigen/Core>

namespace oracle {

// Direct substitution of s_i = +-1 into the chain Hamiltonian, one matrix
// element at a time, periodic boundary with i running over all N bonds.
inline Eigen::MatrixXd ising_matrix(int n, double j, double bx, double bz) {
    const int dim = 1 << n;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    for (int b = 0; b < dim; ++b) {
        double zz = 0.0, z = 0.0;
        for (int i = 0; i < n; ++i) {
            const int si = ((b >> i) & 1) ? 1 : -1;
            const int sj = ((b >> ((i + 1) % n)) & 1) ? 1 : -1;
            zz += si * sj;
            z += si;
        }
        h(b, b) = -(j / n) * zz - (bz / n) * z;
        for (int i = 0; i < n; ++i) h(b ^ (1 << i), b) += -bx / n;
    }
    return h;
}

inline double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
    return v;
}

// Relative error with a floor so that near-zero gradients compare absolutely.
inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of f along coordinate `x[i]`.
inline double central_diff(const std::function<double()>& f, double& x, double h = 1e-5) {
    const double keep = x;
    x = keep + h;
    const double up = f();
    x = keep - h;
    const double down = f();
    x = keep;
    return (up - down) / (2.0 * h);
}

}  // namespace oracle
