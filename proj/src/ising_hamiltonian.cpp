#include "pgmoe/ising_hamiltonian.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pgmoe/spin_basis.hpp"

namespace pgmoe {

void validate(const SystemParams& params) {
    check_spin_count(params.n_spins);
    if (params.n_spins < 2) {
        throw std::invalid_argument("the chain needs at least 2 spins");
    }
    if (!std::isfinite(params.j_coupling) || !std::isfinite(params.b_x) || !std::isfinite(params.b_z)) {
        throw std::invalid_argument("Hamiltonian parameters must be finite");
    }
    if (params.b_x < 0.0) {
        throw std::invalid_argument("transverse field must be non-negative");
    }
}

double diagonal_energy(std::uint32_t index, const SystemParams& params) {
    const int n = params.n_spins;
    int bond_sum = 0;
    int field_sum = 0;
    for (int i = 0; i < n; ++i) {
        const int si = ((index >> i) & 1u) ? 1 : -1;
        const int next = (i + 1) % n;
        const int sj = ((index >> next) & 1u) ? 1 : -1;
        bond_sum += si * sj;
        field_sum += si;
    }
    return -(params.j_coupling / n) * bond_sum - (params.b_z / n) * field_sum;
}

HamiltonianOperator::HamiltonianOperator(const SystemParams& params) : params_(params) {
    validate(params_);
    const auto dim = Eigen::Index{1} << params_.n_spins;
    diagonal_.resize(dim);
    for (Eigen::Index b = 0; b < dim; ++b) {
        diagonal_[b] = diagonal_energy(static_cast<std::uint32_t>(b), params_);
    }
    flip_coupling_ = -params_.b_x / params_.n_spins;
}

void HamiltonianOperator::apply(const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Ref<Eigen::VectorXd> out) const {
    const Eigen::Index dim = dimension();
    if (v.size() != dim || out.size() != dim) {
        throw std::invalid_argument("matvec: expected vectors of length " + std::to_string(dim));
    }
    const int n = params_.n_spins;
    for (Eigen::Index b = 0; b < dim; ++b) {
        double flips = 0.0;
        for (int i = 0; i < n; ++i) {
            flips += v[b ^ (Eigen::Index{1} << i)];
        }
        out[b] = diagonal_[b] * v[b] + flip_coupling_ * flips;
    }
}

HamiltonianOperator build_hamiltonian(const SystemParams& params) { return HamiltonianOperator(params); }

Eigen::VectorXd matvec(const HamiltonianOperator& h, const Eigen::VectorXd& v) {
    if (v.size() != h.dimension()) {
        throw std::invalid_argument("matvec: vector length " + std::to_string(v.size()) + " but operator dimension " +
                                    std::to_string(h.dimension()));
    }
    Eigen::VectorXd out(v.size());
    h.apply(v, out);
    return out;
}

Eigen::MatrixXd dense_matrix(const HamiltonianOperator& h) {
    if (h.n_spins() > kDenseMaxSpins) {
        throw std::invalid_argument("dense_matrix is limited to " + std::to_string(kDenseMaxSpins) + " spins");
    }
    const Eigen::Index dim = h.dimension();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index b = 0; b < dim; ++b) {
        m(b, b) = h.diagonal()[b];
        if (h.flip_coupling() != 0.0) {
            for (int i = 0; i < h.n_spins(); ++i) {
                m(b, b ^ (Eigen::Index{1} << i)) = h.flip_coupling();
            }
        }
    }
    return m;
}

}  // namespace pgmoe
