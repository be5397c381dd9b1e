#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "pne/constants.hpp"
#include "pne/error.hpp"

namespace pne {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Domain {
    double lo = 0.0;
    double hi = 1.0;

    double length() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
};

inline void validate(const Domain& d) {
    require(std::isfinite(d.lo) && std::isfinite(d.hi) && d.hi > d.lo, ErrorKind::InvalidConfig,
            "domain requires hi > lo (got [" + std::to_string(d.lo) + ", " + std::to_string(d.hi) + "])");
}

/// Composite midpoint grid. All weights equal the spacing, which keeps the
/// kernel matrix exactly symmetric.
struct Grid {
    Domain domain;
    std::vector<double> nodes;
    std::vector<double> weights;
    double spacing = 0.0;

    std::size_t size() const { return nodes.size(); }
};

inline Grid build_grid(const Domain& domain, long n) {
    validate(domain);
    require(n >= 2, ErrorKind::InvalidConfig, "grid needs n >= 2 (got " + std::to_string(n) + ")");
    Grid g;
    g.domain = domain;
    g.spacing = domain.length() / static_cast<double>(n);
    g.nodes.resize(static_cast<std::size_t>(n));
    g.weights.assign(static_cast<std::size_t>(n), g.spacing);
    for (long i = 0; i < n; ++i) g.nodes[static_cast<std::size_t>(i)] = domain.lo + (static_cast<double>(i) + 0.5) * g.spacing;
    return g;
}

/// Smallest node count satisfying the resolution guard h <= sigma/4.
inline long min_nodes_for(const Domain& domain, double sigma) {
    return static_cast<long>(std::ceil(constants::kResolutionRatio * domain.length() / sigma - 1e-12));
}

// ---------------------------------------------------------------------------
// Kernel shapes. All are even, nonnegative, supported on [-1, 1], J(0) > 0 and
// normalised analytically.

struct Epanechnikov {};
struct Triangle {};
struct CosineBump {};

/// Piecewise-linear kernel through equally spaced samples on [-1, 1].
/// `normalization` is the exact integral of that interpolant (see
/// TabulatedKernel::exact_integral) or any positive constant the caller
/// vouches for.
struct TabulatedKernel {
    std::vector<double> samples;
    double normalization = 1.0;

    static double exact_integral(const std::vector<double>& s) {
        if (s.size() < 2) return 0.0;
        const double dz = 2.0 / static_cast<double>(s.size() - 1);
        double sum = 0.0;
        for (std::size_t j = 0; j + 1 < s.size(); ++j) sum += 0.5 * (s[j] + s[j + 1]) * dz;
        return sum;
    }
};

using KernelShape = std::variant<Epanechnikov, Triangle, CosineBump, TabulatedKernel>;

inline void validate(const KernelShape& shape) {
    if (const auto* tab = std::get_if<TabulatedKernel>(&shape)) {
        const auto& s = tab->samples;
        require(s.size() >= 3 && s.size() % 2 == 1, ErrorKind::InvalidKernel,
                "tabulated kernel needs an odd number (>= 3) of samples so z = 0 is a node");
        for (std::size_t j = 0; j < s.size(); ++j) {
            require(std::isfinite(s[j]) && s[j] >= 0.0, ErrorKind::InvalidKernel,
                    "tabulated kernel sample " + std::to_string(j) + " is negative");
            require(s[j] == s[s.size() - 1 - j], ErrorKind::InvalidKernel, "tabulated kernel is not symmetric");
        }
        require(s[s.size() / 2] > 0.0, ErrorKind::InvalidKernel, "tabulated kernel needs J(0) > 0");
        require(tab->normalization > 0.0, ErrorKind::InvalidKernel, "tabulated kernel normalization must be positive");
    }
}

inline double eval_kernel(const KernelShape& shape, double z) {
    const double r = std::abs(z);
    if (r > 1.0) return 0.0;
    return std::visit(
        [r](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, Epanechnikov>) {
                return 0.75 * (1.0 - r * r);
            } else if constexpr (std::is_same_v<K, Triangle>) {
                return 1.0 - r;
            } else if constexpr (std::is_same_v<K, CosineBump>) {
                return 0.25 * std::numbers::pi * std::cos(0.5 * std::numbers::pi * r);
            } else {
                const auto& s = k.samples;
                for (double v : s)
                    if (v < 0.0) fail(ErrorKind::InvalidKernel, "tabulated kernel has a negative sample");
                const double pos = (r + 1.0) * 0.5 * static_cast<double>(s.size() - 1);
                const auto j = std::min(static_cast<std::size_t>(pos), s.size() - 2);
                const double frac = pos - static_cast<double>(j);
                return ((1.0 - frac) * s[j] + frac * s[j + 1]) / k.normalization;
            }
        },
        shape);
}

inline std::string kernel_name(const KernelShape& shape) {
    switch (shape.index()) {
    case 0: return "epanechnikov";
    case 1: return "triangle";
    case 2: return "cosine";
    default: return "tabulated";
    }
}

// ---------------------------------------------------------------------------

/// Dense discretisation of v -> int_Omega J_sigma(x - y) v(y) dy.
struct KernelMatrix {
    Matrix entries;
    double sigma = 1.0;
    Vector rowsums;
    long bandwidth = 0;  // max |i - j| with a nonzero entry

    std::size_t size() const { return static_cast<std::size_t>(entries.rows()); }
};

inline KernelMatrix assemble_kernel_matrix(const Grid& grid, const KernelShape& shape, double sigma) {
    require(std::isfinite(sigma) && sigma > 0.0, ErrorKind::InvalidConfig, "sigma must be positive");
    validate(shape);
    const long n = static_cast<long>(grid.size());
    if (grid.spacing > sigma / constants::kResolutionRatio * (1.0 + 1e-12)) {
        fail(ErrorKind::UnderResolvedKernel,
             "grid spacing " + std::to_string(grid.spacing) + " exceeds sigma/4 = " +
                 std::to_string(sigma / constants::kResolutionRatio) + "; use n >= " +
                 std::to_string(min_nodes_for(grid.domain, sigma)));
    }
    KernelMatrix k;
    k.sigma = sigma;
    k.entries = Matrix::Zero(n, n);
    const double inv_sigma = 1.0 / sigma;
    for (long i = 0; i < n; ++i) {
        for (long j = i; j < n; ++j) {
            const double z = (grid.nodes[static_cast<std::size_t>(j)] - grid.nodes[static_cast<std::size_t>(i)]) * inv_sigma;
            const double jv = eval_kernel(shape, z) * inv_sigma;
            if (jv == 0.0) continue;
            k.entries(i, j) = grid.weights[static_cast<std::size_t>(j)] * jv;
            k.entries(j, i) = grid.weights[static_cast<std::size_t>(i)] * jv;
            k.bandwidth = std::max(k.bandwidth, j - i);
        }
    }
    k.rowsums = Vector::Zero(n);
    for (long i = 0; i < n; ++i) {
        double s = 0.0;
        for (long j = 0; j < n; ++j) s += k.entries(i, j);
        k.rowsums(i) = s;
    }
    return k;
}

// ---------------------------------------------------------------------------
// Boundary vector h^sigma.

struct Dirichlet {};
struct Neumann {};
struct CustomBoundary {
    std::vector<double> values;
    double bound = 1.0;  // declared M with ||h||_inf <= M
    double limit_constant = 0.0;  // caller-asserted lim_{sigma->inf} h^sigma, if used
};

using BoundaryChoice = std::variant<Dirichlet, Neumann, CustomBoundary>;

inline std::string boundary_name(const BoundaryChoice& bc) {
    switch (bc.index()) {
    case 0: return "dirichlet";
    case 1: return "neumann";
    default: return "custom";
    }
}

inline Vector h_sigma(const KernelMatrix& kmat, const BoundaryChoice& bc) {
    const auto n = static_cast<long>(kmat.size());
    return std::visit(
        [&](const auto& b) -> Vector {
            using B = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<B, Dirichlet>) {
                return Vector::Ones(n);
            } else if constexpr (std::is_same_v<B, Neumann>) {
                return kmat.rowsums;
            } else {
                require(static_cast<long>(b.values.size()) == n, ErrorKind::InvalidConfig,
                        "custom boundary vector has length " + std::to_string(b.values.size()) + ", expected " +
                            std::to_string(n));
                Vector h(n);
                for (long i = 0; i < n; ++i) {
                    const double v = b.values[static_cast<std::size_t>(i)];
                    require(std::isfinite(v) && std::abs(v) <= b.bound, ErrorKind::InvalidConfig,
                            "custom boundary entry " + std::to_string(i) + " exceeds declared bound M = " +
                                std::to_string(b.bound));
                    h(i) = v;
                }
                return h;
            }
        },
        bc);
}

}  // namespace pne
