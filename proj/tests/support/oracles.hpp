#pragma once

// Reference computations for tests, written without the library's matrix code.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "pne/pne.hpp"

namespace oracle {

using pne::Matrix;
using pne::Vector;

/// A(t) = rate (K - diag h) + diag a(., t), K_ij = (h / sigma) J((x_i - x_j) / sigma),
/// built entry by entry.
inline Matrix brute_generator(const pne::Domain& d, long n, const pne::KernelShape& shape, double sigma, bool neumann,
                              double rate, const std::function<double(double, double)>& a, double t) {
    const double h = d.length() / static_cast<double>(n);
    std::vector<double> x(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = d.lo + (static_cast<double>(i) + 0.5) * h;
    Matrix k(n, n);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j)
            k(i, j) = h / sigma * pne::eval_kernel(shape, (x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)]) / sigma);
    Matrix out = rate * k;
    for (long i = 0; i < n; ++i) {
        const double hb = neumann ? k.row(i).sum() : 1.0;
        out(i, i) += -rate * hb + a(x[static_cast<std::size_t>(i)], t);
    }
    return out;
}

inline double spectral_radius(const Matrix& m) {
    return Eigen::EigenSolver<Matrix>(m, false).eigenvalues().cwiseAbs().maxCoeff();
}

/// Moduli sorted in decreasing order.
inline std::vector<double> moduli(const Matrix& m) {
    const Eigen::VectorXd mods = Eigen::EigenSolver<Matrix>(m, false).eigenvalues().cwiseAbs();
    std::vector<double> v(mods.data(), mods.data() + mods.size());
    std::sort(v.rbegin(), v.rend());
    return v;
}

inline double central_difference(const std::function<double(double)>& f, double x, double step) {
    return (f(x + step) - f(x - step)) / (2.0 * step);
}

/// Least-squares slope of log(err) against log(n).
inline double loglog_slope(const std::vector<double>& n, const std::vector<double>& err) {
    const std::size_t m = n.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double lx = std::log(n[i]), ly = std::log(err[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

/// Random smooth field: low cos/sin modes in x times low harmonics in t.
inline pne::PeriodicField random_smooth_field(const pne::Domain& d, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    pne::Expression e;
    e.terms.push_back(pne::Term{scale * u(rng)});
    for (int kx = 0; kx <= 2; ++kx)
        for (int kt = 1; kt <= 2; ++kt) {
            e.terms.push_back(pne::Term{0.5 * scale * u(rng), pne::XCosPi{static_cast<double>(kx)}, pne::TSin2Pi{kt}});
            e.terms.push_back(pne::Term{0.5 * scale * u(rng), pne::XCosPi{static_cast<double>(kx)}, pne::TCos2Pi{kt}});
        }
    e.terms.push_back(pne::Term{scale * u(rng), pne::XPow{1}});
    return pne::PeriodicField{d, e, 0.0};
}

/// Random positive vector in [lo, hi].
inline Vector random_positive(long n, std::mt19937_64& rng, double lo = 0.1, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Vector v(n);
    for (long i = 0; i < n; ++i) v(i) = u(rng);
    return v;
}

inline pne::Expression terms(std::initializer_list<pne::Term> t) { return pne::Expression{std::vector<pne::Term>(t)}; }

inline pne::PeriodicField field(std::initializer_list<pne::Term> t, pne::Domain d = {0.0, 1.0}) {
    return pne::PeriodicField{d, oracle::terms(t), 0.0};
}

/// Fields used across tests.
inline pne::PeriodicField nonseparable(pne::Domain d = {0.0, 1.0}) {  // sin(2 pi t) cos(pi x) + x
    return field({pne::Term{1.0, pne::XCosPi{1}, pne::TSin2Pi{1}}, pne::Term{1.0, pne::XPow{1}}}, d);
}
inline pne::PeriodicField separable(pne::Domain d = {0.0, 1.0}) {  // x^2 + 0.5 + sin(2 pi t)
    return pne::PeriodicField{d, pne::Separable{terms({pne::Term{1.0, pne::XPow{2}}}),
                                                terms({pne::Term{0.5}, pne::Term{1.0, pne::XOne{}, pne::TSin2Pi{1}}})},
                              0.0};
}

inline pne::ProblemSetup rig(pne::PeriodicField a, int n_t = 2048, long n = 64) {
    pne::ProblemSetup s;
    s.domain = a.domain;
    s.a = std::move(a);
    s.n_t = n_t;
    s.n = n;
    return s;
}

}  // namespace oracle
