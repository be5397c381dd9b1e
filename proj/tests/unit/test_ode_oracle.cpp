#include <catch_amalgamated.hpp>

#include "support/oracles.hpp"

using namespace pne;

namespace {

ScalarPeriodicODE sinusoid(double tau = 1.0) {
    return ScalarPeriodicODE{[](double t) { return 1.0 + 0.5 * std::sin(2 * std::numbers::pi * t); }, [](double) { return 1.0; }, tau};
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double e = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) e = std::max(e, std::abs(a[k] - b[k]));
    return e;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InternalError;
}

}  // namespace

TEST_CASE("autonomous logistic orbit is the carrying capacity", "[oracle]") {
    for (double a0 : {0.3, 1.0, 2.5}) {
        const ScalarPeriodicODE ode{[a0](double) { return a0; }, [](double) { return 1.0; }, 1.0};
        const auto cf = logistic_periodic_closed_form(ode, 256);
        for (double v : cf.v) REQUIRE(std::abs(v - a0) < 1e-12);
        const auto sh = shooting_periodic(ode, 256);
        REQUIRE(sh.iterations <= 8);
        for (double v : sh.v) REQUIRE(std::abs(v - a0) < 1e-10);
    }
}

TEST_CASE("closed form and shooting agree", "[oracle]") {
    for (int n_t : {256, 2048}) {
        for (double tau : {0.5, 1.0, 3.0}) {
            const auto ode = sinusoid(tau);
            const auto cf = logistic_periodic_closed_form(ode, n_t);
            const auto sh = shooting_periodic(ode, n_t);
            REQUIRE(sup_diff(cf.v, sh.v) <= 1e-10);
            REQUIRE(cf.residual <= 1e-8);
            REQUIRE(rk4_restep_residual(ode, sh.v) <= 1e-8);
            REQUIRE(*std::min_element(cf.v.begin(), cf.v.end()) > 0.0);
            REQUIRE(std::abs(cf.v.front() - cf.v.back()) <= 1e-12);
        }
    }
}

TEST_CASE("fast oscillation averages the orbit", "[oracle]") {
    // int a / int b = 1; the deviation from 1 shrinks like 1 / tau.
    std::vector<double> dev;
    for (double tau : {8.0, 16.0, 32.0}) {
        const auto cf = logistic_periodic_closed_form(sinusoid(tau), 1024);
        double d = 0.0;
        for (double v : cf.v) d = std::max(d, std::abs(v - 1.0));
        dev.push_back(d);
    }
    REQUIRE(dev[0] / dev[1] == Catch::Approx(2.0).margin(0.2));
    REQUIRE(dev[1] / dev[2] == Catch::Approx(2.0).margin(0.2));
}

TEST_CASE("no positive orbit for non-positive mean growth", "[oracle]") {
    const ScalarPeriodicODE ode{[](double t) { return -0.1 + std::sin(2 * std::numbers::pi * t); }, [](double) { return 1.0; }, 1.0};
    REQUIRE(kind_of([&] { logistic_periodic_closed_form(ode, 256); }) == ErrorKind::NoPositiveOrbit);
    REQUIRE(kind_of([&] { shooting_periodic(ode, 256); }) == ErrorKind::NoPositiveOrbit);
}

TEST_CASE("overflow guard refuses extreme exponents", "[oracle]") {
    try {
        logistic_periodic_closed_form(sinusoid(1e-3), 256);
        FAIL("expected refusal");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::InvalidInput);
        REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("rescale"));
    }
}

TEST_CASE("spatially averaged logistic orbit", "[oracle]") {
    const Domain d{0.0, 1.0};
    const Grid g = build_grid(d, 32);
    SECTION("constant coefficients reduce to the scalar orbit") {
        const KppNonlinearity f{oracle::field({Term{1.0}, Term{0.5, XOne{}, TSin2Pi{1}}}), constant_field(d, 1.0)};
        REQUIRE(averaged_logistic(f, g, 1.0, 512).v == logistic_periodic_closed_form(sinusoid(), 512).v);
    }
    SECTION("non-positive mean is refused") {
        const KppNonlinearity f{oracle::field({Term{1.0, XPow{1}}, Term{-0.6}}), constant_field(d, 1.0)};
        REQUIRE(kind_of([&] { averaged_logistic(f, g, 1.0, 256); }) == ErrorKind::NoPositiveOrbit);
    }
    SECTION("x (1 + sin 2 pi t) averages to (1 + sin 2 pi t) / 2") {
        const KppNonlinearity f{PeriodicField{d, Product{oracle::terms({Term{1.0, XPow{1}}}), oracle::terms({Term{1.0}, Term{1.0, XOne{}, TSin2Pi{1}}})}, 0.0},
                                constant_field(d, 1.0)};
        const auto ode = averaged_ode(f, g, 1.0);
        for (double t : {0.0, 0.1, 0.25, 0.6})
            REQUIRE(std::abs(ode.a(t) - 0.5 * (1.0 + std::sin(2 * std::numbers::pi * t))) < 1e-14);
        const ScalarPeriodicODE direct{[](double t) { return 0.5 * (1.0 + std::sin(2 * std::numbers::pi * t)); }, [](double) { return 1.0; }, 1.0};
        REQUIRE(sup_diff(averaged_logistic(f, g, 1.0, 1024).v, shooting_periodic(direct, 1024).v) < 1e-8);
    }
}

TEST_CASE("per-node orbits", "[oracle]") {
    const Domain d{0.0, 1.0};
    const Grid g = build_grid(d, 8);
    const KppNonlinearity f{oracle::field({Term{0.5}, Term{1.0, XPow{1}}, Term{0.3, XOne{}, TCos2Pi{1}}}), oracle::field({Term{1.0}, Term{1.0, XPow{2}}})};
    const Matrix m = node_logistic(f, g, 1.0, 256);
    REQUIRE(m.rows() == 8);
    REQUIRE(m.cols() == 257);
    for (long i = 0; i < 8; ++i) {
        const auto sh = shooting_periodic(node_ode(f, g.nodes[static_cast<std::size_t>(i)], 1.0), 256);
        for (long k = 0; k <= 256; ++k) REQUIRE(std::abs(m(i, k) - sh.v[static_cast<std::size_t>(k)]) < 1e-10);
    }
}
