#include <catch_amalgamated.hpp>

#include "support/oracles.hpp"

using namespace pne;
using oracle::field;

namespace {

const Domain kUnit{0.0, 1.0};

EigenResult solve(const ProblemSetup& s, bool snapshots = true) { return solve_floquet(s, snapshots).result; }

}  // namespace

TEST_CASE("constant growth gives lambda = -a0", "[eigen]") {
    for (double a0 : {1.0, -0.4, 2.5})
        REQUIRE(std::abs(solve(oracle::rig(constant_field(kUnit, a0), 256)).lambda_p + a0) < 1e-8);
}

TEST_CASE("time-only growth gives minus its mean", "[eigen]") {
    const auto r = solve(oracle::rig(field({Term{0.5}, Term{1.0, XOne{}, TSin2Pi{1}}})));
    REQUIRE(std::abs(r.lambda_p + 0.5) < 1e-6);
}

TEST_CASE("power iteration agrees with a dense eigendecomposition", "[eigen]") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 4; ++trial) {
        ProblemSetup s = oracle::rig(oracle::random_smooth_field(kUnit, rng), 64, 16);
        s.tau = trial % 2 ? 0.5 : 1.0;
        for (Scheme scheme : {Scheme::Exponential, Scheme::BackwardEuler}) {
            s.scheme = scheme;
            const double lam = solve(s, false).lambda_p;
            const Matrix phi = monodromy_dense(s.monodromy());
            REQUIRE(std::abs(lam + s.tau * std::log(oracle::spectral_radius(phi))) < 1e-8);
        }
    }
}

TEST_CASE("Perron root is simple and the eigenfunctions are positive", "[eigen]") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 3; ++trial) {
        const ProblemSetup s = oracle::rig(oracle::random_smooth_field(kUnit, rng), 64, 16);
        const auto mods = oracle::moduli(monodromy_dense(s.monodromy()));
        REQUIRE(mods[0] > (1.0 + 1e-6) * mods[1]);
        const auto r = solve(s);
        REQUIRE(r.phi.values.minCoeff() > 0.0);
        REQUIRE(r.psi.values.minCoeff() > 0.0);
        REQUIRE(std::abs(r.adjoint_log_rho - r.log_rho) < 1e-9);
    }
}

TEST_CASE("time-independent principal eigenvalue", "[eigen]") {
    SECTION("Neumann with constant field") {
        const auto cfg = make_operator(kUnit, 64, Epanechnikov{}, 0.25, Neumann{}, 1, 1, 0, constant_field(kUnit, 0.0));
        REQUIRE(std::abs(static_principal(cfg, Vector::Constant(64, 0.6)).lambda_p + 0.6) < 1e-10);
    }
    SECTION("Dirichlet without growth matches the dense spectrum") {
        const auto cfg = make_operator(kUnit, 64, Epanechnikov{}, 0.25, Dirichlet{}, 1, 1, 0, constant_field(kUnit, 0.0));
        const double lam = static_principal(cfg, Vector::Zero(64)).lambda_p;
        const double rho_k = Eigen::SelfAdjointEigenSolver<Matrix>(cfg.kmat->entries).eigenvalues().maxCoeff();
        REQUIRE(lam > 0.0);
        REQUIRE(lam < 1.0);
        REQUIRE(std::abs(lam - (1.0 - rho_k)) < 1e-10);
    }
    SECTION("upper bound by the pointwise minimum") {
        std::mt19937_64 rng(4);
        for (int m = 0; m < 3; ++m) {
            const auto cfg = make_operator(kUnit, 64, Epanechnikov{}, 0.25, m % 2 ? BoundaryChoice{Dirichlet{}} : BoundaryChoice{Neumann{}},
                                           1, 0.7, m, constant_field(kUnit, 0.0));
            const Vector f = oracle::random_positive(64, rng, -1.0, 1.0);
            REQUIRE(static_principal(cfg, f).lambda_p <= lambda_upper_bound(cfg, f) + 1e-10);
        }
    }
}

TEST_CASE("certificates bracket lambda_p", "[eigen]") {
    SECTION("constant coefficients") {
        const ProblemSetup s = oracle::rig(constant_field(kUnit, 0.9), 128, 32);
        const Propagator prop(s.monodromy());
        const auto r = principal_floquet(prop);
        const auto c = certify(prop, r, 1e-6);
        REQUIRE(c.sup_ok);
        REQUIRE(c.inf_ok);
    }
    SECTION("margin is sharp on a generic field") {
        std::mt19937_64 rng(31);
        const ProblemSetup s = oracle::rig(oracle::random_smooth_field(kUnit, rng), 64, 16);
        const Propagator prop(s.monodromy());
        const auto r = principal_floquet(prop);
        REQUIRE(r.residual > 0.0);
        const auto wide = certify(prop, r, 10 * r.residual);
        REQUIRE(wide.sup_ok);
        REQUIRE(wide.inf_ok);
        const auto narrow = certify(prop, r, r.residual / 100);
        REQUIRE_FALSE((narrow.sup_ok && narrow.inf_ok));
    }
    SECTION("static problem") {
        const auto cfg = make_operator(kUnit, 64, Epanechnikov{}, 0.25, Dirichlet{}, 1, 1, 0, constant_field(kUnit, 0.0));
        const Vector f = sample_field(field({Term{1.0, XGauss{0.5, 0.2}}}), cfg.grid, 0.0);
        const auto r = static_principal(cfg, f);
        const auto wide = certify_static(cfg, f, r, 10 * std::max(r.residual, 1e-15));
        REQUIRE(wide.sup_ok);
        REQUIRE(wide.inf_ok);
    }
    SECTION("non-converged input is refused") {
        const ProblemSetup s = oracle::rig(constant_field(kUnit, 0.9), 64, 16);
        const Propagator prop(s.monodromy());
        EigenResult r = principal_floquet(prop);
        r.converged = false;
        REQUIRE_THROWS_AS(certify(prop, r, 1e-6), Error);
    }
}

TEST_CASE("tau derivative", "[eigen]") {
    SECTION("separable field has zero derivative") {
        const ProblemSetup s = oracle::rig(oracle::separable());
        REQUIRE(std::abs(dlambda_dtau(s.monodromy())) < 1e-6);
    }
    SECTION("non-separable field matches central differences") {
        for (double tau : {1.0}) {
            ProblemSetup s = oracle::rig(oracle::nonseparable());
            s.tau = tau;
            const double d = dlambda_dtau(s.monodromy());
            const double fd = oracle::central_difference(
                [&](double t) {
                    ProblemSetup q = s;
                    q.tau = t;
                    return solve(q, false).lambda_p;
                },
                tau, 1e-3 * tau);
            REQUIRE(d > 0.0);
            REQUIRE(std::abs(d - fd) <= 1e-4 * std::abs(fd));
        }
    }
    SECTION("never negative") {
        std::mt19937_64 rng(8);
        for (int trial = 0; trial < 3; ++trial) {
            ProblemSetup s = oracle::rig(oracle::random_smooth_field(kUnit, rng), 256, 32);
            s.tau = 0.3 + trial;
            REQUIRE(dlambda_dtau(s.monodromy()) >= -1e-8);
        }
    }
    SECTION("every scheme") {
        for (Scheme scheme : {Scheme::BackwardEuler, Scheme::BERichardson}) {
            ProblemSetup s = oracle::rig(oracle::nonseparable(), 256, 16);
            s.scheme = scheme;
            const double d = dlambda_dtau(s.monodromy());
            const double fd = oracle::central_difference(
                [&](double t) {
                    ProblemSetup q = s;
                    q.tau = t;
                    return solve(q, false).lambda_p;
                },
                1.0, 1e-3);
            REQUIRE(std::abs(d - fd) <= 1e-4 * std::abs(fd));
        }
    }
}

TEST_CASE("K functional", "[eigen]") {
    const ProblemSetup s = oracle::rig(oracle::nonseparable(), 512, 32);
    const Propagator prop(s.monodromy());
    const auto r = principal_floquet(prop);
    const double k_phi = k_functional(prop, r, r.phi);
    REQUIRE(std::abs(k_phi + r.lambda_p) <= 5 * r.residual + 1e-15);

    Snapshots scaled = r.phi;
    scaled.values *= 4.0;
    REQUIRE(k_functional(prop, r, scaled) == k_phi);

    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int trial = 0; trial < 10; ++trial) {
        const double c1 = u(rng), c2 = u(rng), c3 = u(rng);
        Snapshots z{Matrix(32, 513), Vector::Zero(513)};
        for (long k = 0; k <= 512; ++k)
            for (long i = 0; i < 32; ++i) {
                const double x = prop.cfg().grid.nodes[static_cast<std::size_t>(i)], t = k / 512.0;
                z.values(i, k) = std::exp(c1 * std::cos(std::numbers::pi * x) + c2 * std::sin(2 * std::numbers::pi * t) +
                                          c3 * x * std::cos(2 * std::numbers::pi * t));
            }
        REQUIRE(k_functional(prop, r, z) >= k_phi - 1e-8);
    }
    Snapshots bad = r.phi;
    bad.values(3, 7) = 0.0;
    REQUIRE_THROWS_AS(k_functional(prop, r, bad), Error);
}

TEST_CASE("growth shift moves lambda_p by the shift", "[eigen]") {
    const ProblemSetup s = oracle::rig(oracle::nonseparable(), 256, 32);
    const double base = solve(s, false).lambda_p;
    for (double c : {-1.0, 0.37, 2.0}) {
        ProblemSetup q = s;
        q.a = shifted(s.a, c);
        REQUIRE(std::abs(solve(q, false).lambda_p - (base - c)) < 1e-10);
    }
}

TEST_CASE("lambda_p converges in n_t", "[eigen]") {
    std::vector<double> lam;
    for (int n_t : {64, 128, 256, 512}) lam.push_back(solve(oracle::rig(oracle::nonseparable(), n_t, 32), false).lambda_p);
    const double d1 = std::abs(lam[0] - lam[1]), d2 = std::abs(lam[1] - lam[2]), d3 = std::abs(lam[2] - lam[3]);
    const double order = std::log2(d1 / d2);
    REQUIRE(order > 1.5);
    // Richardson estimate of the error at the middle level predicts the next change.
    const double est = d2 / (std::pow(2.0, order) - 1.0);
    REQUIRE(d3 < 2.0 * est);
}

TEST_CASE("starting vector does not change lambda_p", "[eigen]") {
    const ProblemSetup s = oracle::rig(oracle::nonseparable(), 256, 32);
    const Propagator prop(s.monodromy());
    EigenOptions o = s.options();
    o.snapshots = false;
    o.adjoint = false;
    const double base = principal_floquet(prop, o).lambda_p;
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 3; ++trial) {
        o.initial = oracle::random_positive(32, rng, 0.01, 10.0);
        REQUIRE(std::abs(principal_floquet(prop, o).lambda_p - base) < s.tol);
    }
}

TEST_CASE("iteration cap reports non-convergence", "[eigen]") {
    ProblemSetup s = oracle::rig(oracle::nonseparable(), 64, 300);
    s.sigma = 0.25;
    s.max_iters = 1;
    try {
        solve(s, false);
        FAIL("expected non-convergence");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::NonConvergence);
        REQUIRE(exit_code(e.kind()) == 2);
    }
}
