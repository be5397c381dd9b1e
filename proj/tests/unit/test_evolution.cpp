#include <catch_amalgamated.hpp>

#include "support/oracles.hpp"

using namespace pne;
using oracle::field;

namespace {

const Domain kUnit{0.0, 1.0};

OperatorConfig op(PeriodicField a, long n = 16, double sigma = 0.25, BoundaryChoice bc = Neumann{}, double tau = 1.0,
                  double mu = 1.0) {
    return make_operator(kUnit, n, Epanechnikov{}, sigma, bc, tau, mu, 0.0, std::move(a));
}

// Dispersal switched off. The operator refuses mu = 0, so the rate is set
// after construction; every path below multiplies by it.
OperatorConfig no_dispersal(PeriodicField a, long n = 16, double tau = 1.0) {
    OperatorConfig cfg = op(std::move(a), n, 0.25, Neumann{}, tau);
    cfg.mu = 1e-300;
    return cfg;
}

double rel_max(const Vector& a, const Vector& b) { return ((a - b).array() / b.array().abs()).abs().maxCoeff(); }

}  // namespace

TEST_CASE("Neumann generator annihilates constants", "[evolution]") {
    const auto cfg = op(constant_field(kUnit, 0.0), 64);
    for (double t : {0.0, 0.3, 0.75})
        REQUIRE(apply_generator(cfg, t, Vector::Constant(64, 3.7)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("generator without dispersal is multiplication by a", "[evolution]") {
    OperatorConfig cfg = op(constant_field(kUnit, 0.8));
    cfg.mu = 0.0;
    std::mt19937_64 rng(1);
    const Vector v = oracle::random_positive(16, rng);
    REQUIRE(apply_generator(cfg, 0.4, v) == 0.8 * v);
}

TEST_CASE("generator matches an independently assembled matrix", "[evolution]") {
    const PeriodicField a = oracle::nonseparable();
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (bool neumann : {true, false}) {
        for (double m : {0.0, 1.5}) {
            auto cfg = make_operator(kUnit, 8, Triangle{}, 0.5, neumann ? BoundaryChoice{Neumann{}} : BoundaryChoice{Dirichlet{}},
                                     1.0, 2.0, m, a);
            const double rate = 2.0 / std::pow(0.5, m);
            const double t = 0.3;
            const Matrix brute = oracle::brute_generator(kUnit, 8, Triangle{}, 0.5, neumann, rate,
                                                         [&](double x, double s) { return eval_field(a, x, s); }, t);
            Vector v(8);
            for (long i = 0; i < 8; ++i) v(i) = nd(rng);
            REQUIRE((apply_generator(cfg, t, v) - brute * v).cwiseAbs().maxCoeff() < 1e-13);
        }
    }
}

TEST_CASE("backward Euler step", "[evolution]") {
    SECTION("scalar formula without dispersal") {
        OperatorConfig cfg = op(constant_field(kUnit, 0.7), 16, 0.25, Neumann{}, 2.0);
        cfg.mu = 0.0;
        std::mt19937_64 rng(3);
        const Vector v = oracle::random_positive(16, rng);
        const Vector w = step_backward_euler(cfg, v, 0.1, 0.05);
        REQUIRE(rel_max(w, v / (1.0 - 0.05 * 0.7 / 2.0)) < 1e-14);
    }
    SECTION("positive in, positive out") {
        const auto cfg = op(oracle::nonseparable(), 64);
        Vector v = Vector::Ones(64);
        for (int k = 0; k < 64; ++k) {
            v = step_backward_euler(cfg, v, k / 64.0, 1.0 / 64);
            REQUIRE(v.minCoeff() > 0.0);
        }
    }
    SECTION("step bound violation suggests a smaller dt") {
        const auto cfg = op(constant_field(kUnit, 4.0), 16, 0.25, Neumann{}, 0.1);
        try {
            step_backward_euler(cfg, Vector::Ones(16), 0.0, 0.1);
            FAIL("expected step-failure");
        } catch (const Error& e) {
            REQUIRE(e.kind() == ErrorKind::StepFailure);
            REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("dt <"));
        }
    }
}

TEST_CASE("first-order and second-order convergence of the implicit schemes", "[evolution]") {
    const auto cfg = op(oracle::nonseparable(), 16);
    const Vector v0 = Vector::LinSpaced(16, 0.5, 1.5);
    auto end_state = [&](int n_t, Scheme s) { return monodromy_apply(MonodromySpec{cfg, n_t, s, true}, v0); };
    const Vector ref = end_state(8192, Scheme::Exponential);

    std::vector<double> ns{256, 512, 1024}, be, be2;
    for (double n : ns) {
        be.push_back((end_state(static_cast<int>(n), Scheme::BackwardEuler) - ref).cwiseAbs().maxCoeff());
        be2.push_back((end_state(static_cast<int>(n) / 4, Scheme::BERichardson) - ref).cwiseAbs().maxCoeff());
    }
    REQUIRE(-oracle::loglog_slope(ns, be) == Catch::Approx(1.0).margin(0.15));
    REQUIRE(-oracle::loglog_slope(ns, be2) == Catch::Approx(2.0).margin(0.15));

    // Backward Euler's own reference agrees with the exponential one.
    const Vector be_ref = end_state(8192, Scheme::BackwardEuler);
    REQUIRE((be_ref - ref).cwiseAbs().maxCoeff() < be.back());
}

TEST_CASE("period map without dispersal is the exponential of a / tau", "[evolution]") {
    const PeriodicField a = field({Term{1.0, XPow{1}}, Term{-0.3}});
    for (double tau : {0.5, 1.0}) {
        const auto cfg = no_dispersal(a, 16, tau);
        Vector expect(16);
        for (long i = 0; i < 16; ++i) expect(i) = std::exp((cfg.grid.nodes[static_cast<std::size_t>(i)] - 0.3) / tau);
        const Vector ones = Vector::Ones(16);
        REQUIRE(rel_max(monodromy_apply(MonodromySpec{cfg, 2048, Scheme::BackwardEuler, true}, ones), expect) < 5e-3);
        REQUIRE(rel_max(monodromy_apply(MonodromySpec{cfg, 2048, Scheme::BERichardson, true}, ones), expect) < 1e-5);
        REQUIRE(rel_max(monodromy_apply(MonodromySpec{cfg, 2048, Scheme::Exponential, true}, ones), expect) < 1e-12);
        const Matrix dense = monodromy_dense(MonodromySpec{cfg, 256, Scheme::Exponential, true});
        REQUIRE(rel_max(dense.diagonal(), expect) < 1e-12);
        REQUIRE((dense - Matrix(dense.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-250);
    }
}

TEST_CASE("time-only field without dispersal scales by exp of its mean", "[evolution]") {
    const PeriodicField g = field({Term{0.5}, Term{1.0, XOne{}, TSin2Pi{1}}});
    const auto cfg = no_dispersal(g, 16, 0.8);
    const Vector out = monodromy_apply(MonodromySpec{cfg, 512, Scheme::Exponential, true}, Vector::Ones(16));
    REQUIRE(rel_max(out, Vector::Constant(16, std::exp(0.5 / 0.8))) < 1e-10);
}

TEST_CASE("period map is linear and its dense form superposes", "[evolution]") {
    const auto cfg = op(oracle::nonseparable());
    std::mt19937_64 rng(11);
    for (Scheme s : {Scheme::Exponential, Scheme::BackwardEuler, Scheme::BERichardson}) {
        const MonodromySpec spec{cfg, 128, s, false};
        const Vector u = oracle::random_positive(16, rng), v = oracle::random_positive(16, rng);
        const Vector lhs = monodromy_apply(spec, 0.3 * u + 1.7 * v);
        const Vector rhs = 0.3 * monodromy_apply(spec, u) + 1.7 * monodromy_apply(spec, v);
        REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * lhs.cwiseAbs().maxCoeff());

        const Matrix phi = monodromy_dense(spec);
        REQUIRE(phi.minCoeff() >= 0.0);
        REQUIRE((phi * u - monodromy_apply(spec, u)).cwiseAbs().maxCoeff() <= 1e-12 * phi.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("dense period map is refused for large n", "[evolution]") {
    const auto cfg = op(constant_field(kUnit, 0.0), 300);
    try {
        monodromy_dense(MonodromySpec{cfg, 64, Scheme::Exponential, true});
        FAIL("expected refusal");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::InvalidInput);
        REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("matrix-free"));
    }
}

TEST_CASE("adjoint period map is the transpose", "[evolution]") {
    std::mt19937_64 rng(5);
    for (Scheme s : {Scheme::Exponential, Scheme::BackwardEuler, Scheme::BERichardson}) {
        const MonodromySpec spec{op(oracle::nonseparable()), 128, s, true};
        const Matrix phi = monodromy_dense(spec);
        for (int r = 0; r < 20; ++r) {
            const Vector u = oracle::random_positive(16, rng), w = oracle::random_positive(16, rng);
            const double lhs = monodromy_apply(spec, u).dot(w);
            const Vector adj = adjoint_monodromy_apply(spec, w);
            REQUIRE(std::abs(lhs - u.dot(adj)) < 1e-10 * std::max(1.0, std::abs(lhs)));
            REQUIRE((adj - phi.transpose() * w).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, adj.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("autonomous period map is self-adjoint", "[evolution]") {
    const MonodromySpec spec{op(field({Term{1.0, XCosPi{1}}})), 128, Scheme::Exponential, true};
    std::mt19937_64 rng(9);
    for (int r = 0; r < 5; ++r) {
        const Vector w = oracle::random_positive(16, rng);
        REQUIRE((adjoint_monodromy_apply(spec, w) - monodromy_apply(spec, w)).cwiseAbs().maxCoeff() < 1e-10);
    }
    const MonodromySpec diag{no_dispersal(oracle::nonseparable()), 128, Scheme::BackwardEuler, true};
    const Vector w = oracle::random_positive(16, rng);
    REQUIRE((adjoint_monodromy_apply(diag, w) - monodromy_apply(diag, w)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Neumann dispersal conserves mass", "[evolution]") {
    std::mt19937_64 rng(13);
    const Vector v = oracle::random_positive(64, rng);
    for (Scheme s : {Scheme::BackwardEuler, Scheme::BERichardson, Scheme::Exponential}) {
        const MonodromySpec spec{op(constant_field(kUnit, 0.0), 64), 256, s, true};
        Vector u = v;
        for (int p = 0; p < 3; ++p) {
            const Vector next = monodromy_apply(spec, u);
            REQUIRE(std::abs(next.sum() - u.sum()) <= 1e-10 * u.sum());
            u = next;
        }
    }
}

TEST_CASE("every step keeps the state positive", "[evolution]") {
    for (Scheme s : {Scheme::BackwardEuler, Scheme::BERichardson, Scheme::Exponential}) {
        const Propagator prop(MonodromySpec{op(oracle::nonseparable(), 64), 512, s, true});
        Vector x = Vector::Ones(64);
        for (int k = 1; k <= prop.steps(); ++k) {
            prop.forward(k, x);
            REQUIRE(x.minCoeff() > 0.0);
        }
    }
}

TEST_CASE("period map preserves order", "[evolution]") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> gap(0.0, 1.0);
    for (Scheme s : {Scheme::Exponential, Scheme::BackwardEuler}) {
        const MonodromySpec spec{op(oracle::nonseparable()), 64, s, true};
        const Matrix phi = monodromy_dense(spec);
        for (int r = 0; r < 100; ++r) {
            const Vector u = oracle::random_positive(16, rng, 0.0, 1.0);
            Vector v = u;
            for (long i = 0; i < 16; ++i) v(i) += gap(rng) * (r % 3 == 0 && i % 2 ? 0.0 : 1.0);
            REQUIRE(((phi * v) - (phi * u)).minCoeff() >= -1e-13);
            REQUIRE((monodromy_apply(spec, v) - monodromy_apply(spec, u)).minCoeff() >= -1e-13);
        }
    }
}
