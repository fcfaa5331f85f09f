#include "pgmoe/losses.hpp"

#include <sstream>
#include <stdexcept>

#include "pgmoe/errors.hpp"

namespace pgmoe {

namespace {

double checked_norm(const Wavefunction& psi, std::size_t index, const char* what) {
    const double n = psi.norm();
    if (!(n >= kMinPredictedNorm)) {
        std::ostringstream msg;
        msg << what << ": vector " << index << " has norm " << n << " (below " << kMinPredictedNorm << ")";
        throw NumericalDegeneracyError(msg.str(), index);
    }
    return n;
}

// d/d(pred) of (1 - cos) for a single pair; also returns cos.
double cosine_term(const Wavefunction& pred, const Wavefunction& truth, double scale, Wavefunction* grad,
                   std::size_t index) {
    const double np = checked_norm(pred, index, "cosine_loss");
    const double nt = checked_norm(truth, index, "cosine_loss (truth)");
    const double c = truth.dot(pred) / (nt * np);
    if (grad) {
        *grad += -scale * (truth / (nt * np) - (c / (np * np)) * pred);
    }
    return c;
}

double pg_term(const Wavefunction& pred, const HamiltonianOperator& h, double scale, Wavefunction* grad,
               std::size_t index) {
    const double n = checked_norm(pred, index, "pg_loss");
    const double nn = n * n;
    const Wavefunction hp = matvec(h, pred);
    const double r = pred.dot(hp) / nn;
    if (grad) {
        *grad += (2.0 * scale / nn) * (hp - r * pred);
    }
    return r;
}

}  // namespace

double cosine_similarity(const Wavefunction& a, const Wavefunction& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: length mismatch");
    }
    return a.dot(b) / (checked_norm(a, 0, "cosine_similarity") * checked_norm(b, 0, "cosine_similarity"));
}

double rayleigh_quotient(const HamiltonianOperator& h, const Wavefunction& psi) {
    return pg_term(psi, h, 0.0, nullptr, 0);
}

LossValue cosine_loss(std::span<const Wavefunction> predicted, std::span<const Wavefunction> truth) {
    if (predicted.size() != truth.size() || predicted.empty()) {
        throw std::invalid_argument("cosine_loss: batch sizes differ or are empty");
    }
    const double m = static_cast<double>(predicted.size());
    LossValue out;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i].size() != truth[i].size()) {
            throw std::invalid_argument("cosine_loss: length mismatch at item " + std::to_string(i));
        }
        out.gradient.push_back(Wavefunction::Zero(predicted[i].size()));
        out.value += 1.0 - cosine_term(predicted[i], truth[i], 1.0 / m, &out.gradient.back(), i);
    }
    out.value /= m;
    return out;
}

LossValue pg_loss(std::span<const Wavefunction> predicted, std::span<const HamiltonianOperator* const> hamiltonians) {
    if (predicted.size() != hamiltonians.size() || predicted.empty()) {
        throw std::invalid_argument("pg_loss: batch sizes differ or are empty");
    }
    const double m = static_cast<double>(predicted.size());
    LossValue out;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        out.gradient.push_back(Wavefunction::Zero(predicted[i].size()));
        out.value += pg_term(predicted[i], *hamiltonians[i], 1.0 / m, &out.gradient.back(), i);
    }
    out.value /= m;
    return out;
}

LossReport combined_loss(std::span<const Wavefunction> predicted, std::span<const LossItem> items,
                         const LossWeights& weights, LossPhase phase) {
    if (predicted.size() != items.size()) {
        throw std::invalid_argument("combined_loss: predictions and items differ in count");
    }
    const bool pg_active = phase == LossPhase::full && weights.lambda_pg != 0.0;
    LossReport report;
    for (const auto& item : items) {
        if (item.truth) {
            ++report.labeled;
            ++report.batch_size;
        } else if (pg_active) {
            ++report.batch_size;
        } else {
            ++report.skipped_unlabeled;
        }
    }
    for (const auto& p : predicted) report.gradient.push_back(Wavefunction::Zero(p.size()));
    if (report.batch_size == 0) {
        return report;
    }
    const double m = static_cast<double>(report.batch_size);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        if (item.truth) {
            if (item.truth->size() != predicted[i].size()) {
                throw std::invalid_argument("combined_loss: label length mismatch at item " + std::to_string(i));
            }
            report.cs_value +=
                1.0 - cosine_term(predicted[i], *item.truth, weights.lambda_cs / m, &report.gradient[i], i);
        }
        if (pg_active) {
            if (!item.hamiltonian) {
                throw std::invalid_argument("combined_loss: item " + std::to_string(i) + " has no Hamiltonian");
            }
            report.pg_value += pg_term(predicted[i], *item.hamiltonian, weights.lambda_pg / m, &report.gradient[i], i);
        }
    }
    report.cs_value /= m;
    report.pg_value /= m;
    report.combined = weights.lambda_cs * report.cs_value + (pg_active ? weights.lambda_pg * report.pg_value : 0.0);
    return report;
}

}  // namespace pgmoe
