#include <doctest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "pgmoe/eigensolver.hpp"
#include "pgmoe/errors.hpp"
#include "../support.hpp"

using namespace pgmoe;

TEST_CASE("diagonal Hamiltonian ground state is a basis vector") {
    auto h = build_hamiltonian({4, 1.0, 0.0, 0.5});
    Eigen::Index arg;
    const double emin = h.diagonal().minCoeff(&arg);
    const auto gs = lanczos_ground_state(h);
    CHECK(std::abs(gs.energy - emin) < 1e-12);
    CHECK(gs.state[arg] == doctest::Approx(1.0).epsilon(1e-12));

    const auto two = lanczos_ground_state(build_hamiltonian({2, 1.0, 0.0, 0.5}));
    CHECK(two.energy == doctest::Approx(-1.5).epsilon(1e-12));
    CHECK(two.state[3] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Lanczos agrees with the Jacobi oracle") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> ux(0.0, 2.0), uz(0.06, 2.0);
    for (int n : {2, 4, 6, 8}) {
        for (int t = 0; t < 5; ++t) {
            auto h = build_hamiltonian({n, 1.0, ux(rng), uz(rng)});
            const auto lz = lanczos_ground_state(h);
            const auto dn = dense_ground_state(dense_matrix(h));
            CHECK(std::abs(lz.energy - dn.energy) < 1e-8);
            CHECK(std::abs(lz.state.dot(dn.state)) >= 1.0 - 1e-9);
            CHECK(std::abs(lz.state.norm() - 1.0) < 1e-12);
            CHECK(lz.residual <= 1e-10);
            CHECK((matvec(h, lz.state) - lz.energy * lz.state).norm() <= 1e-10);
            CHECK(gauge_fix(lz.state) == lz.state);
        }
    }
}

TEST_CASE("Jacobi against Eigen's self-adjoint solver") {
    std::mt19937_64 rng(4);
    for (int dim : {1, 2, 5, 17, 64}) {
        Eigen::MatrixXd a(dim, dim);
        for (int i = 0; i < dim; ++i) a.col(i) = oracle::random_vector(rng, dim);
        a = (a + a.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
        CHECK((dense_spectrum(a) - es.eigenvalues()).cwiseAbs().maxCoeff() < 1e-10);
        const auto gs = dense_ground_state(a);
        CHECK(std::abs(gs.state.dot(es.eigenvectors().col(0))) == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("dense_ground_state small cases") {
    const auto id = dense_ground_state(Eigen::MatrixXd::Identity(3, 3));
    CHECK(id.energy == doctest::Approx(1.0));
    CHECK(id.state.maxCoeff() == doctest::Approx(1.0));
    Eigen::Matrix2d x;
    x << 0, 1, 1, 0;
    const auto gs = dense_ground_state(x);
    CHECK(gs.energy == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(gs.state[0] == doctest::Approx(std::sqrt(0.5)));
    CHECK(gs.state[1] == doctest::Approx(-std::sqrt(0.5)));
    Eigen::Matrix2d skew;
    skew << 0, 1, 0.5, 0;
    CHECK_THROWS_AS(dense_ground_state(skew), std::invalid_argument);
    CHECK_THROWS_AS(dense_ground_state(Eigen::MatrixXd::Identity(257, 257)), std::invalid_argument);
}

TEST_CASE("gauge_fix") {
    CHECK(gauge_fix(Eigen::Vector2d(0, -1)) == Eigen::VectorXd(Eigen::Vector2d(0, 1)));
    CHECK(gauge_fix(Eigen::Vector2d(0.6, 0.8)) == Eigen::VectorXd(Eigen::Vector2d(0.6, 0.8)));
    CHECK(gauge_fix(Eigen::Vector3d(-0.5, 0.5, 0.1)) == Eigen::VectorXd(Eigen::Vector3d(0.5, -0.5, -0.1)));
    std::mt19937_64 rng(1);
    const Eigen::VectorXd v = oracle::random_vector(rng, 10);
    CHECK(gauge_fix(-v) == gauge_fix(v));
    CHECK_THROWS_AS(gauge_fix(Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("determinism and options") {
    auto h = build_hamiltonian({8, 1.0, 0.7, 0.3});
    const auto a = lanczos_ground_state(h, {1e-10, 0, 3});
    const auto b = lanczos_ground_state(h, {1e-10, 0, 3});
    CHECK(a.energy == b.energy);
    CHECK(a.state == b.state);
    CHECK_THROWS_AS(lanczos_ground_state(h, {0.0, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(lanczos_ground_state(h, {1e-10, 1, 0}), std::invalid_argument);
    CHECK(default_max_krylov(4) == 16);
    CHECK(default_max_krylov(10) == 300);
}

TEST_CASE("non-convergence carries the best residual") {
    auto h = build_hamiltonian({8, 1.0, 1.0, 0.1});
    try {
        lanczos_ground_state(h, {1e-14, 3, 0, false});
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.best_residual() > 1e-14);
    }
}

TEST_CASE("degenerate ground space is rejected") {
    // B_z = 0, B_x = 0: all-up and all-down are degenerate.
    CHECK_THROWS_AS(lanczos_ground_state(build_hamiltonian({6, 1.0, 0.0, 0.0})), DegenerateGroundStateError);
    // Small transverse field, no longitudinal field: splitting far below 100*tol.
    CHECK_THROWS_AS(lanczos_ground_state(build_hamiltonian({8, 1.0, 0.05, 0.0})), DegenerateGroundStateError);
}

TEST_CASE("tridiagonal_lowest") {
    Eigen::VectorXd alpha(4), beta(3);
    alpha << 2, 2, 2, 2;
    beta << -1, -1, -1;
    const auto t = tridiagonal_lowest(alpha, beta);
    // eigenvalues 2 - 2 cos(k pi / 5)
    CHECK(t.value == doctest::Approx(2.0 - 2.0 * std::cos(M_PI / 5)).epsilon(1e-14));
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, 4);
    m.diagonal() = alpha;
    for (int i = 0; i < 3; ++i) m(i, i + 1) = m(i + 1, i) = beta[i];
    CHECK((m * t.vector - t.value * t.vector).norm() < 1e-12);
}
