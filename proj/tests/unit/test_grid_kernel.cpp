#include <catch_amalgamated.hpp>

#include "support/oracles.hpp"

using namespace pne;
using Catch::Matchers::ContainsSubstring;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InternalError;
}

double midpoint_integral(const KernelShape& k, int m) {
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += eval_kernel(k, -1.0 + (j + 0.5) * 2.0 / m) * 2.0 / m;
    return s;
}

}  // namespace

TEST_CASE("midpoint grid nodes and weights", "[grid]") {
    const Grid g = build_grid(Domain{0.0, 1.0}, 4);
    REQUIRE(g.nodes == std::vector<double>{0.125, 0.375, 0.625, 0.875});
    for (double w : g.weights) REQUIRE(w == 0.25);

    const Grid g2 = build_grid(Domain{-1.0, 1.0}, 2);
    REQUIRE(g2.nodes == std::vector<double>{-0.5, 0.5});
    REQUIRE(g2.weights == std::vector<double>{1.0, 1.0});
}

TEST_CASE("grid weights sum to the domain length", "[grid]") {
    for (long n : {2L, 4L, 8L, 64L, 1024L}) {
        const Grid g = build_grid(Domain{0.0, 1.0}, n);
        REQUIRE(std::accumulate(g.weights.begin(), g.weights.end(), 0.0) == 1.0);
    }
    for (long n : {3L, 7L, 100L, 999L}) {
        const Grid g = build_grid(Domain{-0.3, 2.2}, n);
        REQUIRE(std::accumulate(g.weights.begin(), g.weights.end(), 0.0) == Catch::Approx(2.5).epsilon(1e-14));
    }
}

TEST_CASE("grid with fewer than two nodes is refused", "[grid]") {
    REQUIRE(kind_of([] { build_grid(Domain{0.0, 1.0}, 1); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("kernel values at the centre and the support edge", "[kernel]") {
    REQUIRE(eval_kernel(Epanechnikov{}, 0.0) == 0.75);
    REQUIRE(eval_kernel(Triangle{}, 1.0) == 0.0);
    REQUIRE(eval_kernel(CosineBump{}, 1.5) == 0.0);
    REQUIRE(eval_kernel(Epanechnikov{}, -1.2) == 0.0);
}

TEST_CASE("built-in kernels have unit mass", "[kernel]") {
    REQUIRE(std::abs(midpoint_integral(CosineBump{}, 10000) - 1.0) < 1e-8);
    REQUIRE(std::abs(midpoint_integral(Epanechnikov{}, 10000) - 1.0) < 1e-8);
    REQUIRE(std::abs(midpoint_integral(Triangle{}, 10000) - 1.0) < 1e-8);
}

TEST_CASE("tabulated kernel checks its samples", "[kernel]") {
    TabulatedKernel tk{{0.0, 1.0, 2.0, 1.0, 0.0}, 0.0};
    tk.normalization = TabulatedKernel::exact_integral(tk.samples);
    REQUIRE(std::abs(midpoint_integral(tk, 20000) - 1.0) < 1e-8);

    REQUIRE(kind_of([] { eval_kernel(TabulatedKernel{{-0.1, 1.0, -0.1}, 1.0}, 0.0); }) == ErrorKind::InvalidKernel);
    REQUIRE(kind_of([] { validate(KernelShape{TabulatedKernel{{0.0, 1.0, 0.5}, 1.0}}); }) == ErrorKind::InvalidKernel);
    REQUIRE(kind_of([] { validate(KernelShape{TabulatedKernel{{1.0, 0.0, 1.0}, 1.0}}); }) == ErrorKind::InvalidKernel);
}

TEST_CASE("interior rowsums approximate one", "[kernel]") {
    const Grid g = build_grid(Domain{0.0, 1.0}, 64);
    const auto k = assemble_kernel_matrix(g, Epanechnikov{}, 0.25);
    int checked = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.nodes[i] < 0.25 || g.nodes[i] > 0.75) continue;
        REQUIRE(std::abs(k.rowsums(static_cast<long>(i)) - 1.0) <= 1e-3);
        ++checked;
    }
    REQUIRE(checked > 0);
}

TEST_CASE("kernel matrix is symmetric, nonnegative and locally connected", "[kernel]") {
    for (const KernelShape& shape : std::vector<KernelShape>{Epanechnikov{}, Triangle{}, CosineBump{}}) {
        const Grid g = build_grid(Domain{0.0, 1.0}, 48);
        const auto k = assemble_kernel_matrix(g, shape, 0.2);
        const long n = static_cast<long>(g.size());
        for (long i = 0; i < n; ++i) {
            REQUIRE(k.entries(i, i) > 0.0);
            if (i + 1 < n) REQUIRE(k.entries(i, i + 1) > 0.0);
            for (long j = 0; j < n; ++j) {
                REQUIRE(k.entries(i, j) == k.entries(j, i));
                REQUIRE(k.entries(i, j) >= 0.0);
            }
        }
    }
}

TEST_CASE("kernel matrix matches direct summation", "[kernel]") {
    const Domain d{0.0, 1.0};
    const auto cfg = make_operator(d, 24, CosineBump{}, 0.3, Dirichlet{}, 1.0, 1.0, 0.0, constant_field(d, 0.0));
    const Matrix brute = oracle::brute_generator(d, 24, CosineBump{}, 0.3, false, 1.0, [](double, double) { return 0.0; }, 0.0) +
                         Matrix::Identity(24, 24);
    REQUIRE((cfg.kmat->entries - brute).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("wide kernel on a coarse grid gives equal rowsums", "[kernel]") {
    // Flat top: every pairwise distance on [0, 1] lands in |z| <= 0.1 when sigma = 10.
    const TabulatedKernel flat{{0.0, 1.0, 1.0, 1.0, 0.0}, TabulatedKernel::exact_integral({0.0, 1.0, 1.0, 1.0, 0.0})};
    const Grid g = build_grid(Domain{0.0, 1.0}, 4);
    const auto k = assemble_kernel_matrix(g, flat, 10.0);
    for (long i = 0; i < 4; ++i) {
        double direct = 0.0;
        for (long j = 0; j < 4; ++j)
            direct += g.weights[static_cast<std::size_t>(j)] / 10.0 *
                      eval_kernel(flat, (g.nodes[static_cast<std::size_t>(i)] - g.nodes[static_cast<std::size_t>(j)]) / 10.0);
        REQUIRE(std::abs(k.rowsums(i) - direct) < 1e-15);
        REQUIRE(std::abs(k.rowsums(i) - k.rowsums(0)) < 1e-12);
    }
}

TEST_CASE("under-resolved kernel names the smallest valid n", "[kernel]") {
    const Grid g = build_grid(Domain{0.0, 1.0}, 8);
    try {
        assemble_kernel_matrix(g, Epanechnikov{}, 0.25);
        FAIL("expected under-resolved-kernel");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::UnderResolvedKernel);
        REQUIRE_THAT(e.what(), ContainsSubstring("n >= 16"));
    }
    REQUIRE(kind_of([&] { assemble_kernel_matrix(g, Epanechnikov{}, 0.0); }) == ErrorKind::InvalidConfig);
    REQUIRE(kind_of([&] { assemble_kernel_matrix(g, Epanechnikov{}, -1.0); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("boundary vectors", "[kernel]") {
    const Grid g = build_grid(Domain{0.0, 1.0}, 64);
    const auto k = assemble_kernel_matrix(g, Epanechnikov{}, 0.25);
    REQUIRE(h_sigma(k, Dirichlet{}) == Vector::Ones(64));
    const Vector hn = h_sigma(k, Neumann{});
    REQUIRE(hn == k.rowsums);
    REQUIRE(hn.minCoeff() >= 0.0);
    REQUIRE(hn.maxCoeff() <= 1.0 + 1e-8);

    CustomBoundary c{std::vector<double>(64, 0.5), 1.0, 0.0};
    REQUIRE(h_sigma(k, c) == Vector::Constant(64, 0.5));
    c.values[3] = 2.0;
    REQUIRE(kind_of([&] { h_sigma(k, c); }) == ErrorKind::InvalidConfig);
    c.values.resize(10);
    REQUIRE(kind_of([&] { h_sigma(k, c); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("Neumann absorption vanishes as sigma grows", "[kernel]") {
    const Grid g = build_grid(Domain{0.0, 1.0}, 16);
    double prev = INFINITY;
    for (double sigma : {10.0, 100.0, 1000.0}) {
        const Vector h = h_sigma(assemble_kernel_matrix(g, Epanechnikov{}, sigma), Neumann{});
        REQUIRE(h.maxCoeff() < 2.0 / sigma * 0.75 * 1.0);
        REQUIRE(h.maxCoeff() < prev);
        prev = h.maxCoeff();
    }
}
