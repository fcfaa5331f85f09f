#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pgmoe/eigensolver.hpp"
#include "pgmoe/ising_hamiltonian.hpp"

namespace pgmoe {

// Predicted wavefunctions below this norm are rejected rather than renormalized.
inline constexpr double kMinPredictedNorm = 1e-12;

struct LossWeights {
    double lambda_cs = 1.0;
    double lambda_pg = 0.0;
};

// Batch loss value and its gradient with respect to every predicted vector.
struct LossValue {
    double value = 0.0;
    std::vector<Wavefunction> gradient;
};

// Signed cosine of the angle between two vectors.
double cosine_similarity(const Wavefunction& a, const Wavefunction& b);

// Mean Rayleigh quotient <psi,H psi>/<psi,psi> of one vector.
double rayleigh_quotient(const HamiltonianOperator& h, const Wavefunction& psi);

// (1/M) sum (1 - cos(theta_i))
LossValue cosine_loss(std::span<const Wavefunction> predicted, std::span<const Wavefunction> truth);

// (1/M) sum <psi_i|H_i|psi_i> / <psi_i|psi_i>; needs no labels.
LossValue pg_loss(std::span<const Wavefunction> predicted, std::span<const HamiltonianOperator* const> hamiltonians);

enum class LossPhase { warmup, full };

// One prediction's context. `truth` is null for unlabeled points.
struct LossItem {
    const Wavefunction* truth = nullptr;
    const HamiltonianOperator* hamiltonian = nullptr;
};

struct LossReport {
    double cs_value = 0.0;
    double pg_value = 0.0;
    double combined = 0.0;
    std::size_t batch_size = 0;        // items contributing to the batch mean
    std::size_t labeled = 0;
    std::size_t skipped_unlabeled = 0;  // unlabeled items that had no active term
    std::vector<Wavefunction> gradient; // one per predicted item (zero for skipped ones)
};

// warmup: lambda_cs * L_CS over labeled items only.
// full:   labeled items get lambda_cs * L_CS + lambda_pg * L_PG, unlabeled items
//         lambda_pg * L_PG. Both means divide by the number of contributing items.
LossReport combined_loss(std::span<const Wavefunction> predicted, std::span<const LossItem> items,
                         const LossWeights& weights, LossPhase phase);

}  // namespace pgmoe
