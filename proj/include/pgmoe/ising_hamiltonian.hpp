#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace pgmoe {

struct SystemParams {
    int n_spins = 10;
    double j_coupling = 1.0;
    double b_x = 0.0;
    double b_z = 0.0;
};

void validate(const SystemParams& params);

// Periodic transverse-field Ising chain
//   H = -(J/N) sum_i sz_i sz_{i+1} - (1/N) sum_i (B_z sz_i + B_x sx_i),  s_{N+1} = s_1.
// Only the diagonal and the uniform single-flip element are stored; the
// off-diagonal structure is implied by bit flips.
class HamiltonianOperator {
public:
    explicit HamiltonianOperator(const SystemParams& params);

    const SystemParams& params() const { return params_; }
    int n_spins() const { return params_.n_spins; }
    Eigen::Index dimension() const { return diagonal_.size(); }
    const Eigen::VectorXd& diagonal() const { return diagonal_; }
    // -B_x / N
    double flip_coupling() const { return flip_coupling_; }

    void apply(const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Ref<Eigen::VectorXd> out) const;

private:
    SystemParams params_;
    Eigen::VectorXd diagonal_;
    double flip_coupling_ = 0.0;
};

HamiltonianOperator build_hamiltonian(const SystemParams& params);

double diagonal_energy(std::uint32_t index, const SystemParams& params);

Eigen::VectorXd matvec(const HamiltonianOperator& h, const Eigen::VectorXd& v);

inline constexpr int kDenseMaxSpins = 8;

// Test/oracle support only; refuses chains longer than kDenseMaxSpins.
Eigen::MatrixXd dense_matrix(const HamiltonianOperator& h);

}  // namespace pgmoe
