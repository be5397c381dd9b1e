#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pne/coefficients.hpp"
#include "pne/constants.hpp"
#include "pne/error.hpp"

namespace pne {

/// tau v' = v (a(t) - b(t) v) with 1-periodic a, b.
struct ScalarPeriodicODE {
    std::function<double(double)> a;
    std::function<double(double)> b;
    double tau = 1.0;
};

struct OracleSolution {
    std::vector<double> t;  // k / n_t, k = 0..n_t
    std::vector<double> v;
    std::string method;
    double residual = 0.0;
    int iterations = 0;  // Newton steps (shooting only)
};

namespace detail {

/// Internal steps per output sample; samples stay on the caller's grid.
inline int oracle_substeps(int n_t) { return std::max(1, (constants::kOracleMinSteps + n_t - 1) / n_t); }

inline double logistic_rhs(const ScalarPeriodicODE& ode, double t, double v) {
    return v * (ode.a(t) - ode.b(t) * v) / ode.tau;
}

inline double rk4_step(const ScalarPeriodicODE& ode, double t, double v, double dt) {
    const double k1 = logistic_rhs(ode, t, v);
    const double k2 = logistic_rhs(ode, t + 0.5 * dt, v + 0.5 * dt * k1);
    const double k3 = logistic_rhs(ode, t + 0.5 * dt, v + 0.5 * dt * k2);
    const double k4 = logistic_rhs(ode, t + dt, v + dt * k3);
    return v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// One RK4 period of the state and its variational derivative dv(1)/dv(0).
inline std::pair<double, double> rk4_period_with_derivative(const ScalarPeriodicODE& ode, double v0, int n_t,
                                                            std::vector<double>* samples = nullptr) {
    const int sub = oracle_substeps(n_t);
    const double dt = 1.0 / (static_cast<double>(n_t) * sub);
    auto f = [&](double t, double v, double y) {
        const double a = ode.a(t), b = ode.b(t);
        return std::pair{v * (a - b * v) / ode.tau, (a - 2.0 * b * v) * y / ode.tau};
    };
    double v = v0, y = 1.0;
    if (samples) samples->assign(1, v0);
    for (int k = 0; k < n_t * sub; ++k) {
        const double t = k * dt;
        const auto [k1v, k1y] = f(t, v, y);
        const auto [k2v, k2y] = f(t + 0.5 * dt, v + 0.5 * dt * k1v, y + 0.5 * dt * k1y);
        const auto [k3v, k3y] = f(t + 0.5 * dt, v + 0.5 * dt * k2v, y + 0.5 * dt * k2y);
        const auto [k4v, k4y] = f(t + dt, v + dt * k3v, y + dt * k3y);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        if (samples && (k + 1) % sub == 0) samples->push_back(v);
    }
    return {v, y};
}

}  // namespace detail

/// Max deviation between the samples and an RK4 re-integration of one period
/// started from v(0).
inline double rk4_restep_residual(const ScalarPeriodicODE& ode, const std::vector<double>& v) {
    const int n_t = static_cast<int>(v.size()) - 1;
    const int sub = detail::oracle_substeps(n_t);
    const double dt = 1.0 / (static_cast<double>(n_t) * sub);
    double cur = v.front(), worst = 0.0;
    for (int k = 0; k < n_t; ++k) {
        for (int q = 0; q < sub; ++q) cur = detail::rk4_step(ode, (k * sub + q) * dt, cur, dt);
        worst = std::max(worst, std::abs(cur - v[static_cast<std::size_t>(k) + 1]));
    }
    return worst;
}

/// Periodic solution through w = 1/v, which turns the logistic equation into
/// the linear tau w' = -a w + b. With A(t) = int_0^t a,
///   w(t) = e^{-A(t)/tau} w(0) + (1/tau) int_0^t b(s) e^{(A(s) - A(t))/tau} ds,
/// and periodicity fixes w(0). Integrals are Simpson on a refined grid that
/// contains the output grid, accumulated in the scaled form above so nothing
/// overflows along the way.
inline OracleSolution logistic_periodic_closed_form(const ScalarPeriodicODE& ode, int n_t) {
    require(n_t >= 2, ErrorKind::InvalidConfig, "n_t must be >= 2");
    require(ode.tau > 0.0, ErrorKind::InvalidConfig, "tau must be positive");
    const int sub = detail::oracle_substeps(n_t);
    const int n_f = n_t * sub;
    const double dt = 1.0 / n_f;
    auto simpson = [](double f0, double fm, double f1, double h) { return h / 6.0 * (f0 + 4.0 * fm + f1); };
    std::vector<double> big_a(static_cast<std::size_t>(n_f) + 1, 0.0), big_a_mid(static_cast<std::size_t>(n_f), 0.0);
    for (int k = 0; k < n_f; ++k) {
        const double t0 = k * dt;
        const double a0 = ode.a(t0), aq1 = ode.a(t0 + 0.25 * dt), am = ode.a(t0 + 0.5 * dt),
                     aq3 = ode.a(t0 + 0.75 * dt), a1 = ode.a(t0 + dt);
        big_a_mid[static_cast<std::size_t>(k)] = big_a[static_cast<std::size_t>(k)] + simpson(a0, aq1, am, 0.5 * dt);
        big_a[static_cast<std::size_t>(k) + 1] =
            big_a_mid[static_cast<std::size_t>(k)] + simpson(am, aq3, a1, 0.5 * dt);
    }
    const double a_total = big_a.back();
    if (!(a_total > 0.0))
        fail(ErrorKind::NoPositiveOrbit, "int_0^1 a dt = " + std::to_string(a_total) + " <= 0: no positive periodic orbit");
    if (a_total / ode.tau > constants::kExpOverflowGuard)
        fail(ErrorKind::InvalidInput, "exponent int a / tau = " + std::to_string(a_total / ode.tau) +
                                          " exceeds the overflow guard; rescale time (larger tau) or shrink a");
    // j_k = int_0^{t_k} b e^{(A(s) - A(t_k))/tau} ds
    std::vector<double> j(static_cast<std::size_t>(n_f) + 1, 0.0);
    for (int k = 0; k < n_f; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const double a1 = big_a[kk + 1];
        const double inc = simpson(ode.b(k * dt) * std::exp((big_a[kk] - a1) / ode.tau),
                                   ode.b((k + 0.5) * dt) * std::exp((big_a_mid[kk] - a1) / ode.tau),
                                   ode.b((k + 1) * dt), dt);
        j[kk + 1] = j[kk] * std::exp((big_a[kk] - a1) / ode.tau) + inc;
    }
    const double w0 = (j.back() / ode.tau) / -std::expm1(-a_total / ode.tau);
    OracleSolution sol;
    sol.method = "closed_form";
    for (int k = 0; k <= n_t; ++k) {
        const auto kk = static_cast<std::size_t>(k) * static_cast<std::size_t>(sub);
        const double w = std::exp(-big_a[kk] / ode.tau) * w0 + j[kk] / ode.tau;
        sol.t.push_back(static_cast<double>(k) / n_t);
        sol.v.push_back(1.0 / w);
    }
    sol.residual = rk4_restep_residual(ode, sol.v);
    return sol;
}

/// Newton on G(s) = ln P(e^s) - s, P the RK4 period map, derivative from the
/// variational equation.
inline OracleSolution shooting_periodic(const ScalarPeriodicODE& ode, int n_t, double tol = constants::kShootingTol,
                                        double v_start = 0.1) {
    require(tol > 0.0, ErrorKind::InvalidConfig, "tol must be positive");
    require(n_t >= 2, ErrorKind::InvalidConfig, "n_t must be >= 2");
    double s = std::log(v_start);
    OracleSolution sol;
    sol.method = "shooting";
    for (int it = 0; it < constants::kNewtonMaxIters; ++it) {
        const double v0 = std::exp(s);
        const auto [p, dp] = detail::rk4_period_with_derivative(ode, v0, n_t);
        if (!(p > 0.0) || !std::isfinite(p) || s < -400.0)
            fail(ErrorKind::NoPositiveOrbit, "shooting collapsed toward zero: no positive periodic orbit");
        const double g = std::log(p) - s;
        const double dg = dp * v0 / p - 1.0;
        if (std::abs(g) < tol) {
            std::vector<double> samples;
            detail::rk4_period_with_derivative(ode, v0, n_t, &samples);
            for (int k = 0; k <= n_t; ++k) sol.t.push_back(static_cast<double>(k) / n_t);
            sol.v = std::move(samples);
            sol.residual = std::abs(sol.v.back() - sol.v.front());
            sol.iterations = it;
            return sol;
        }
        if (!(std::abs(dg) > 1e-14))
            fail(ErrorKind::NoPositiveOrbit, "shooting map is flat near zero: no positive periodic orbit");
        s -= std::clamp(g / dg, -2.0, 2.0);
    }
    fail(ErrorKind::NonConvergence, "shooting Newton did not converge in " + std::to_string(constants::kNewtonMaxIters) +
                                        " iterations");
}

/// Scalar ODE from a field frozen at node x.
inline ScalarPeriodicODE node_ode(const KppNonlinearity& f, double x, double tau) {
    return ScalarPeriodicODE{[a = f.a, x](double t) { return eval_field_unchecked(a, x, t); },
                             [b = f.b, x](double t) { return eval_field_unchecked(b, x, t); }, tau};
}

/// Scalar ODE with spatial quadrature means of a and b. Fields without x
/// dependence are evaluated directly, so the mean is exact.
inline ScalarPeriodicODE averaged_ode(const KppNonlinearity& f, const Grid& grid, double tau) {
    auto mean = [grid](const PeriodicField& g) -> std::function<double(double)> {
        if (g.space_independent()) return [g, x = grid.nodes.front()](double t) { return eval_field_unchecked(g, x, t); };
        return [g, grid](double t) {
            double s = 0.0;
            for (std::size_t i = 0; i < grid.size(); ++i) s += grid.weights[i] * eval_field_unchecked(g, grid.nodes[i], t);
            return s / grid.domain.length();
        };
    };
    return ScalarPeriodicODE{mean(f.a), mean(f.b), tau};
}

inline OracleSolution averaged_logistic(const KppNonlinearity& f, const Grid& grid, double tau, int n_t) {
    return logistic_periodic_closed_form(averaged_ode(f, grid, tau), n_t);
}

/// Per-node closed-form orbits v*(x_i, t_k), n x (n_t + 1).
inline Matrix node_logistic(const KppNonlinearity& f, const Grid& grid, double tau, int n_t) {
    Matrix out(static_cast<long>(grid.size()), n_t + 1);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto sol = logistic_periodic_closed_form(node_ode(f, grid.nodes[i], tau), n_t);
        for (int k = 0; k <= n_t; ++k) out(static_cast<long>(i), k) = sol.v[static_cast<std::size_t>(k)];
    }
    return out;
}

}  // namespace pne
