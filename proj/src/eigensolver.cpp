#include "pgmoe/eigensolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "pgmoe/errors.hpp"

namespace pgmoe {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Number of eigenvalues of the tridiagonal matrix strictly below x.
int sturm_count(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, double x, double pivmin) {
    int count = 0;
    double d = alpha[0] - x;
    if (std::abs(d) < pivmin) d = -pivmin;
    if (d < 0.0) ++count;
    for (Eigen::Index i = 1; i < alpha.size(); ++i) {
        d = alpha[i] - x - beta[i - 1] * beta[i - 1] / d;
        if (std::abs(d) < pivmin) d = -pivmin;
        if (d < 0.0) ++count;
    }
    return count;
}

// Solves (T - shift) y = rhs in place with partially pivoted tridiagonal LU.
void tridiagonal_shifted_solve(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, double shift, double tiny,
                               Eigen::VectorXd& rhs) {
    const Eigen::Index n = alpha.size();
    Eigen::VectorXd d = alpha.array() - shift;
    Eigen::VectorXd dl = beta;
    Eigen::VectorXd du = beta;
    Eigen::VectorXd du2 = Eigen::VectorXd::Zero(std::max<Eigen::Index>(n - 2, 0));
    std::vector<bool> swapped(static_cast<std::size_t>(std::max<Eigen::Index>(n - 1, 0)), false);

    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        if (std::abs(d[i]) >= std::abs(dl[i])) {
            if (d[i] == 0.0) d[i] = tiny;
            const double fact = dl[i] / d[i];
            dl[i] = fact;
            d[i + 1] -= fact * du[i];
        } else {
            const double fact = d[i] / dl[i];
            d[i] = dl[i];
            dl[i] = fact;
            const double temp = du[i];
            du[i] = d[i + 1];
            d[i + 1] = temp - fact * d[i + 1];
            if (i + 2 < n) {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du[i + 1];
            }
            swapped[static_cast<std::size_t>(i)] = true;
        }
    }
    if (d[n - 1] == 0.0) d[n - 1] = tiny;

    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        if (swapped[static_cast<std::size_t>(i)]) std::swap(rhs[i], rhs[i + 1]);
        rhs[i + 1] -= dl[i] * rhs[i];
    }
    rhs[n - 1] /= d[n - 1];
    if (n > 1) rhs[n - 2] = (rhs[n - 2] - du[n - 2] * rhs[n - 1]) / d[n - 2];
    for (Eigen::Index i = n - 3; i >= 0; --i) {
        rhs[i] = (rhs[i] - du[i] * rhs[i + 1] - du2[i] * rhs[i + 2]) / d[i];
    }
}

struct LanczosRun {
    double energy = 0.0;
    Eigen::VectorXd state;
    double residual = 0.0;
    int ritz_within_window = 0;
};

void project_out(Eigen::VectorXd& w, std::span<const Eigen::VectorXd> deflate) {
    for (const auto& x : deflate) {
        w -= x.dot(w) * x;
    }
}

// Lowest eigenpair of P H P, P the projector onto the complement of `deflate`.
LanczosRun lanczos_lowest(const HamiltonianOperator& h, double tol, int max_krylov, std::uint64_t seed,
                          std::span<const Eigen::VectorXd> deflate, double window) {
    const Eigen::Index dim = h.dimension();
    const Eigen::Index available = dim - static_cast<Eigen::Index>(deflate.size());
    const Eigen::Index m = std::min<Eigen::Index>(max_krylov, available);
    if (m < 1) {
        throw std::invalid_argument("lanczos: empty Krylov space");
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    Eigen::VectorXd start(dim);
    for (Eigen::Index i = 0; i < dim; ++i) start[i] = uniform(rng);
    project_out(start, deflate);
    start.normalize();

    Eigen::MatrixXd basis(dim, m + 1);
    basis.col(0) = start;
    Eigen::VectorXd alpha(m);
    Eigen::VectorXd beta(m);
    Eigen::VectorXd w(dim);
    Eigen::VectorXd hx(dim);
    const double op_scale = h.diagonal().cwiseAbs().maxCoeff() + h.n_spins() * std::abs(h.flip_coupling()) + 1.0;

    double best_residual = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
        h.apply(basis.col(j), w);
        project_out(w, deflate);
        alpha[j] = basis.col(j).dot(w);
        w -= alpha[j] * basis.col(j);
        if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
        // Full reorthogonalization, two passes.
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd overlaps = basis.leftCols(j + 1).transpose() * w;
            w -= basis.leftCols(j + 1) * overlaps;
            project_out(w, deflate);
        }
        beta[j] = w.norm();

        const Eigen::Index k = j + 1;
        const auto ritz = tridiagonal_lowest(alpha.head(k), beta.head(std::max<Eigen::Index>(k - 1, 0)), window);
        const double estimate = beta[j] * std::abs(ritz.vector[k - 1]);
        const bool breakdown = beta[j] <= 1e-13 * op_scale;
        const bool last = k == m;

        if (estimate <= 0.5 * tol || breakdown || last) {
            LanczosRun run;
            run.energy = ritz.value;
            run.ritz_within_window = ritz.count_within;
            run.state = basis.leftCols(k) * ritz.vector;
            run.state.normalize();
            h.apply(run.state, hx);
            project_out(hx, deflate);
            run.residual = (hx - run.energy * run.state).norm();
            best_residual = std::min(best_residual, run.residual);
            if (run.residual <= tol) {
                return run;
            }
            if (breakdown || last) {
                std::ostringstream msg;
                msg << "Lanczos did not converge within " << m << " Krylov vectors (best residual " << best_residual
                    << ", tol " << tol << ")";
                throw ConvergenceError(msg.str(), best_residual);
            }
        }

        basis.col(k) = w / beta[j];
        const double drift = (basis.leftCols(k).transpose() * basis.col(k)).cwiseAbs().maxCoeff();
        if (drift > 1e-10) {
            throw std::logic_error("Lanczos basis lost orthogonality: " + std::to_string(drift));
        }
    }
    throw ConvergenceError("Lanczos exhausted the Krylov space", best_residual);
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> jacobi_diagonalize(const Eigen::MatrixXd& m, double tol) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        throw std::invalid_argument("dense eigensolver needs a non-empty square matrix");
    }
    if (m.rows() > 256) {
        throw std::invalid_argument("dense eigensolver is limited to dimension 256");
    }
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw std::invalid_argument("dense eigensolver requires a symmetric matrix");
    }
    const Eigen::Index n = m.rows();
    Eigen::MatrixXd a = m;
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    constexpr int kMaxSweeps = 100;

    auto off_norm = [&] {
        double s = 0.0;
        for (Eigen::Index q = 0; q < n; ++q)
            for (Eigen::Index p = 0; p < n; ++p)
                if (p != q) s += a(p, q) * a(p, q);
        return std::sqrt(s);
    };

    int sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
        if (off_norm() <= tol) break;
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (sweep == kMaxSweeps && off_norm() > tol) {
        throw ConvergenceError("Jacobi sweeps did not converge", off_norm());
    }
    return {a.diagonal(), v};
}

}  // namespace

int default_max_krylov(int n_spins) {
    const long dim = 1L << n_spins;
    return static_cast<int>(std::min<long>(dim, 300));
}

TridiagonalLowest tridiagonal_lowest(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, double window) {
    const Eigen::Index n = alpha.size();
    if (n == 0 || beta.size() != std::max<Eigen::Index>(n - 1, 0)) {
        throw std::invalid_argument("tridiagonal_lowest: inconsistent sizes");
    }
    TridiagonalLowest out;
    if (n == 1) {
        out.value = alpha[0];
        out.vector = Eigen::VectorXd::Ones(1);
        out.count_within = 1;
        return out;
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double norm = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double radius = (i > 0 ? std::abs(beta[i - 1]) : 0.0) + (i + 1 < n ? std::abs(beta[i]) : 0.0);
        lo = std::min(lo, alpha[i] - radius);
        hi = std::max(hi, alpha[i] + radius);
        norm = std::max(norm, std::abs(alpha[i]) + radius);
    }
    const double pivmin = std::max(std::numeric_limits<double>::min(), kEps * kEps * std::max(norm, 1.0));
    hi += kEps * norm + pivmin;
    lo -= kEps * norm + pivmin;
    for (int it = 0; it < 200 && hi - lo > 2.0 * kEps * std::max(std::abs(lo), std::abs(hi)) + pivmin; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (sturm_count(alpha, beta, mid, pivmin) >= 1) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    out.value = 0.5 * (lo + hi);
    out.count_within = sturm_count(alpha, beta, out.value + window + 4.0 * kEps * norm, pivmin);

    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = 1.0 + 0.1 * std::sin(static_cast<double>(i + 1));
    y.normalize();
    const double tiny = kEps * std::max(norm, 1.0);
    for (int it = 0; it < 3; ++it) {
        tridiagonal_shifted_solve(alpha, beta, out.value, tiny, y);
        y.normalize();
    }
    out.vector = y;
    return out;
}

EigenPair lanczos_ground_state(const HamiltonianOperator& h, const LanczosOptions& options) {
    if (!(options.tol > 0.0)) {
        throw std::invalid_argument("lanczos: tol must be positive");
    }
    const int max_krylov = options.max_krylov == 0 ? default_max_krylov(h.n_spins()) : options.max_krylov;
    if (max_krylov < 2) {
        throw std::invalid_argument("lanczos: max_krylov must be at least 2");
    }
    const double window = 100.0 * options.tol;
    LanczosRun run = lanczos_lowest(h, options.tol, max_krylov, options.seed, {}, window);

    if (options.check_degeneracy && h.dimension() > 1) {
        if (run.ritz_within_window >= 2) {
            throw DegenerateGroundStateError("degenerate ground state: two Ritz values within 100*tol", 0.0);
        }
        const Eigen::VectorXd found = run.state;
        const LanczosRun next = lanczos_lowest(h, options.tol, max_krylov, options.seed + 1,
                                               std::span<const Eigen::VectorXd>(&found, 1), window);
        const double gap = next.energy - run.energy;
        if (gap <= window) {
            std::ostringstream msg;
            msg << "degenerate ground state (gap " << gap << " <= " << window << ") at B_x=" << h.params().b_x
                << ", B_z=" << h.params().b_z;
            throw DegenerateGroundStateError(msg.str(), gap);
        }
    }
    return EigenPair{run.energy, gauge_fix(run.state), run.residual};
}

EigenPair dense_ground_state(const Eigen::MatrixXd& m, double tol) {
    const auto [values, vectors] = jacobi_diagonalize(m, tol);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i) {
        if (values[i] < values[best]) best = i;
    }
    EigenPair pair;
    pair.energy = values[best];
    pair.state = gauge_fix(vectors.col(best).normalized());
    pair.residual = (m * pair.state - pair.energy * pair.state).norm();
    return pair;
}

Eigen::VectorXd dense_spectrum(const Eigen::MatrixXd& m, double tol) {
    Eigen::VectorXd values = jacobi_diagonalize(m, tol).first;
    std::sort(values.data(), values.data() + values.size());
    return values;
}

Wavefunction gauge_fix(const Wavefunction& psi) {
    if (psi.size() == 0) {
        throw std::invalid_argument("gauge_fix: empty vector");
    }
    Eigen::Index best = 0;
    double best_abs = std::abs(psi[0]);
    for (Eigen::Index i = 1; i < psi.size(); ++i) {
        const double a = std::abs(psi[i]);
        if (a > best_abs) {
            best = i;
            best_abs = a;
        }
    }
    if (best_abs == 0.0) {
        throw std::invalid_argument("gauge_fix: zero vector has no sign");
    }
    return psi[best] < 0.0 ? Wavefunction(-psi) : psi;
}

}  // namespace pgmoe
