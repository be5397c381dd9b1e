#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "pne/evolution.hpp"

namespace pne {

/// Time-indexed snapshots stored column-wise as values(:, k) * exp(log_scale(k)),
/// each column normalised to max 1. Keeps exp(lambda t / tau) factors of
/// extreme tau out of floating point range.
struct Snapshots {
    Matrix values;
    Vector log_scale;

    long cols() const { return values.cols(); }
    double value(long i, long k) const { return values(i, k) * std::exp(log_scale(k)); }
    /// u(i, k2) / u(i, k1) without forming either value.
    double ratio(long i, long k2, long k1) const {
        return values(i, k2) / values(i, k1) * std::exp(log_scale(k2) - log_scale(k1));
    }
};

struct EigenResult {
    double lambda_p = 0.0;
    double log_rho = 0.0;
    double rho = 0.0;        // exp(log_rho); may be inf/0 at extreme tau, use log_rho
    double tau = 1.0;
    int n_t = 0;             // 0 for time-independent problems
    Snapshots phi;           // n x (n_t + 1), column n_t closes the period
    Snapshots psi;           // adjoint, same layout
    bool has_adjoint = false;
    double adjoint_log_rho = 0.0;
    double residual = 0.0;        // max |relative eigen-defect| over snapshot points
    double power_residual = 0.0;  // ||P v - rho v||_inf / (rho ||v||_inf) of the final iterate
    long skipped_points = 0;      // snapshot points too small to test (underflow)
    int iterations = 0;
    bool converged = false;
};

struct EigenOptions {
    double tol = constants::kDefaultTol;
    int max_iters = constants::kDefaultMaxIters;
    bool adjoint = true;
    bool snapshots = true;
    std::optional<Vector> initial;
};

// ---------------------------------------------------------------------------
// Perron iteration on an explicit nonnegative matrix.

struct PerronVector {
    Vector v;  // max entry 1
    double rho = 0.0;
    double power_residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline void require_nonnegative(const Vector& v, const char* where) {
    for (long i = 0; i < v.size(); ++i)
        if (!(v(i) >= 0.0)) fail(ErrorKind::InternalError, std::string("negative or NaN iterate in ") + where);
}

/// Repeated squaring to approach the Perron direction, then plain power
/// iteration on p until the two Rayleigh-type estimates agree and the power
/// residual is below tol.
inline PerronVector perron_dense(const Matrix& p, Vector v0, double tol, int max_iters) {
    PerronVector out;
    require_nonnegative(v0, "initial vector");
    v0 /= v0.maxCoeff();
    Vector v = v0;
    Matrix q = p / std::max(p.maxCoeff(), std::numeric_limits<double>::min());
    for (int j = 0; j < constants::kMaxSquarings; ++j) {
        q = (q * q).eval();
        const double m = q.maxCoeff();
        if (!(m > 0.0) || !std::isfinite(m)) break;
        q /= m;
        Vector next = q * v0;
        const double nm = next.maxCoeff();
        if (!(nm > 0.0)) break;
        next /= nm;
        ++out.iterations;
        const double change = (next - v).cwiseAbs().maxCoeff();
        v = std::move(next);
        if (change <= 1e-15) break;
    }
    for (int it = 0; it < max_iters; ++it) {
        const Vector w = p * v;
        require_nonnegative(w, "power iteration");
        const double est_sup = w.maxCoeff();  // ||v||_inf = 1
        const double est_ray = w.dot(v) / v.squaredNorm();
        out.rho = est_sup;
        out.power_residual = (w - est_sup * v).cwiseAbs().maxCoeff() / est_sup;
        ++out.iterations;
        v = w / est_sup;
        if (std::abs(est_sup - est_ray) <= tol * est_sup && out.power_residual <= tol) {
            out.converged = true;
            break;
        }
    }
    out.v = v;
    return out;
}

/// Matrix-free power iteration over whole periods.
inline PerronVector perron_matrix_free(const Propagator& prop, Vector v0, double tol, int max_iters, bool transpose,
                                       double& log_shift) {
    PerronVector out;
    require_nonnegative(v0, "initial vector");
    Vector v = v0 / v0.maxCoeff();
    log_shift = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        ScaledVector s{v, 0.0};
        s = propagate_period(prop, s, transpose);
        // bring back to a common scale: w = values * exp(log_scale - log_shift)
        if (it == 0) log_shift = s.log_scale;
        const Vector w = s.values * std::exp(s.log_scale - log_shift);
        require_nonnegative(w, "power iteration");
        const double est_sup = w.maxCoeff();
        const double est_ray = w.dot(v) / v.squaredNorm();
        out.rho = est_sup;
        out.power_residual = (w - est_sup * v).cwiseAbs().maxCoeff() / est_sup;
        ++out.iterations;
        v = w / est_sup;
        if (std::abs(est_sup - est_ray) <= tol * est_sup && out.power_residual <= tol) {
            out.converged = true;
            break;
        }
    }
    out.v = v;
    return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline double log_sum_exp(const std::vector<double>& xs) {
    double m = -INFINITY;
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

/// Forward snapshots phi_k = rho^{-k/n_t} S_k ... S_1 phi_0.
inline Snapshots forward_snapshots(const Propagator& prop, const Vector& phi0, double log_rho) {
    const int n_t = prop.steps();
    Snapshots s{Matrix(prop.size(), n_t + 1), Vector(n_t + 1)};
    ScaledVector cur{phi0, 0.0};
    normalize_max(cur);
    s.values.col(0) = cur.values;
    s.log_scale(0) = cur.log_scale;
    for (int k = 1; k <= n_t; ++k) {
        cur.log_scale += prop.forward(k, cur.values);
        normalize_max(cur);
        s.values.col(k) = cur.values;
        s.log_scale(k) = cur.log_scale - log_rho * k / n_t;
    }
    return s;
}

/// Adjoint snapshots psi_k = rho^{k/n_t - 1} (S_{k+1} ... S_{n_t})^T psi_0.
inline Snapshots adjoint_snapshots(const Propagator& prop, const Vector& psi0, double log_rho) {
    const int n_t = prop.steps();
    Snapshots s{Matrix(prop.size(), n_t + 1), Vector(n_t + 1)};
    ScaledVector cur{psi0, 0.0};
    normalize_max(cur);
    s.values.col(n_t) = cur.values;
    s.log_scale(n_t) = cur.log_scale;
    for (int k = n_t; k >= 1; --k) {
        cur.log_scale += prop.adjoint(k, cur.values);
        normalize_max(cur);
        s.values.col(k - 1) = cur.values;
        s.log_scale(k - 1) = cur.log_scale - log_rho * (n_t - k + 1) / n_t;
    }
    return s;
}

/// Per-slice weights w_i phi psi / sum, the density of the phi-psi measure at
/// each time slice (its slice total is t-invariant for an exact eigenpair).
inline Matrix slice_density(const Snapshots& phi, const Snapshots& psi, const Grid& grid, long n_t) {
    Matrix d(phi.values.rows(), n_t);
    for (long k = 0; k < n_t; ++k) {
        double total = 0.0;
        for (long i = 0; i < d.rows(); ++i) {
            d(i, k) = grid.weights[static_cast<std::size_t>(i)] * phi.values(i, k) * psi.values(i, k);
            total += d(i, k);
        }
        if (!(total > 0.0)) fail(ErrorKind::InternalError, "degenerate phi-psi normalisation");
        d.col(k) /= total;
    }
    return d;
}

/// (M[u] / u)(i, k) = -tau u_t / u + (D u)_i / u_i + a_i(t_k), centred periodic
/// differences in t. NaN where u(i, k) is zero.
inline Matrix generator_ratio(const Propagator& prop, const Snapshots& u) {
    const long n = prop.size();
    const int n_t = prop.steps();
    const double tau = prop.cfg().tau;
    const double dt = prop.dt();
    Matrix out(n, n_t);
    for (int k = 0; k < n_t; ++k) {
        const int kp = (k + 1) % n_t;
        const int km = (k + n_t - 1) % n_t;
        const Vector du = prop.dispersal() * u.values.col(k);
        const Vector& a = prop.field_at_step(k);
        for (long i = 0; i < n; ++i) {
            const double ui = u.values(i, k);
            if (!(ui > 0.0) || !std::isfinite(u.ratio(i, kp, k)) || !std::isfinite(u.ratio(i, km, k))) {
                out(i, k) = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            const double dlog = (u.ratio(i, kp, k) - u.ratio(i, km, k)) / (2.0 * dt);
            out(i, k) = -tau * dlog + du(i) / ui + a(i);
        }
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Relative eigen-defect r / phi with r = -tau phi_t + (D + diag a) phi + lambda phi.
inline Matrix eigen_defect(const Propagator& prop, const EigenResult& res) {
    Matrix r = detail::generator_ratio(prop, res.phi);
    r.array() += res.lambda_p;
    return r;
}

inline void fill_residual(const Propagator& prop, EigenResult& res) {
    const Matrix r = eigen_defect(prop, res);
    res.residual = 0.0;
    res.skipped_points = 0;
    for (long k = 0; k < r.cols(); ++k)
        for (long i = 0; i < r.rows(); ++i) {
            const double v = r(i, k);
            if (std::isnan(v) || res.phi.values(i, k) < 1e-280) {
                ++res.skipped_points;
                continue;
            }
            res.residual = std::max(res.residual, std::abs(v));
        }
}

inline void normalize_pair(EigenResult& res, const Grid& grid) {
    // max phi = 1 over all (x, t)
    const double top = res.phi.log_scale.maxCoeff();
    res.phi.log_scale.array() -= top;
    if (!res.has_adjoint) return;
    // dt * sum_k sum_i w_i phi psi = 1
    std::vector<double> logs;
    const long n_t = res.n_t;
    for (long k = 0; k < n_t; ++k) {
        double s = 0.0;
        for (long i = 0; i < res.phi.values.rows(); ++i)
            s += grid.weights[static_cast<std::size_t>(i)] * res.phi.values(i, k) * res.psi.values(i, k);
        logs.push_back(std::log(s) + res.phi.log_scale(k) + res.psi.log_scale(k) - std::log(static_cast<double>(n_t)));
    }
    const double total = detail::log_sum_exp(logs);
    if (!(std::exp(total) >= constants::kDegenerateNormalization) && !std::isfinite(total))
        fail(ErrorKind::InternalError, "degenerate phi-psi normalisation");
    res.psi.log_scale.array() -= total;
}

inline EigenResult principal_floquet(const Propagator& prop, const EigenOptions& opts = {}) {
    require(opts.tol > 0.0, ErrorKind::InvalidConfig, "tol must be positive");
    require(opts.max_iters > 0, ErrorKind::InvalidConfig, "max_iters must be positive");
    const long n = prop.size();
    EigenResult res;
    res.tau = prop.cfg().tau;
    res.n_t = prop.steps();
    const Vector start = opts.initial ? *opts.initial : Vector::Ones(n);
    require(start.size() == n, ErrorKind::InvalidInput, "initial vector has wrong length");

    PerronVector fwd, adj;
    double fwd_shift = 0.0, adj_shift = 0.0;
    if (n <= static_cast<long>(constants::kDenseMonodromyLimit)) {
        const ScaledMatrix phi_mat = monodromy_dense_scaled(prop);
        fwd = perron_dense(phi_mat.values, start, opts.tol, opts.max_iters);
        fwd_shift = phi_mat.log_scale;
        if (opts.adjoint) {
            adj = perron_dense(phi_mat.values.transpose(), start, opts.tol, opts.max_iters);
            adj_shift = phi_mat.log_scale;
        }
    } else {
        fwd = perron_matrix_free(prop, start, opts.tol, opts.max_iters, false, fwd_shift);
        if (opts.adjoint) adj = perron_matrix_free(prop, start, opts.tol, opts.max_iters, true, adj_shift);
    }
    res.iterations = fwd.iterations + adj.iterations;
    if (!fwd.converged || (opts.adjoint && !adj.converged))
        fail(ErrorKind::NonConvergence, "power iteration did not converge in " + std::to_string(opts.max_iters) +
                                            " iterations (power residual " + std::to_string(fwd.power_residual) +
                                            ")");
    res.converged = true;
    res.log_rho = std::log(fwd.rho) + fwd_shift;
    res.rho = std::exp(res.log_rho);
    res.lambda_p = -res.tau * res.log_rho;
    res.power_residual = fwd.power_residual;
    if (opts.adjoint) {
        res.has_adjoint = true;
        res.adjoint_log_rho = std::log(adj.rho) + adj_shift;
    }
    if (opts.snapshots) {
        res.phi = detail::forward_snapshots(prop, fwd.v, res.log_rho);
        if (opts.adjoint) res.psi = detail::adjoint_snapshots(prop, adj.v, res.log_rho);
        normalize_pair(res, prop.cfg().grid);
        fill_residual(prop, res);
    } else {
        res.phi = Snapshots{fwd.v, Vector::Zero(1)};
        if (opts.adjoint) res.psi = Snapshots{adj.v, Vector::Zero(1)};
    }
    return res;
}

inline EigenResult principal_floquet(const MonodromySpec& spec, double tol = constants::kDefaultTol,
                                     int max_iters = constants::kDefaultMaxIters) {
    const Propagator prop(spec);
    EigenOptions opts;
    opts.tol = tol;
    opts.max_iters = max_iters;
    return principal_floquet(prop, opts);
}

// ---------------------------------------------------------------------------
// Time-independent operator N = D + diag(field).

inline EigenResult static_principal(const Grid& grid, const KernelMatrix& kmat, const Vector& h, const Vector& field,
                                    double mu, double sigma, double m, double tol = constants::kDefaultTol,
                                    int max_iters = constants::kDefaultMaxIters) {
    const long n = static_cast<long>(grid.size());
    require(field.size() == n && h.size() == n, ErrorKind::InvalidInput, "field or h has wrong length");
    require(tol > 0.0, ErrorKind::InvalidConfig, "tol must be positive");
    const double rate = mu / std::pow(sigma, m);
    const double shift = rate * h.cwiseAbs().maxCoeff() + field.cwiseAbs().maxCoeff() + 1.0;
    Matrix b = rate * kmat.entries;
    b.diagonal() += -rate * h + field + Vector::Constant(n, shift);
    PerronVector pv;
    if (n <= static_cast<long>(constants::kDenseMonodromyLimit)) {
        pv = perron_dense(b, Vector::Ones(n), tol, max_iters);
    } else {
        // matrix-free only: no squaring at this size
        pv.v = Vector::Ones(n);
        for (int it = 0; it < max_iters; ++it) {
            const Vector w = b * pv.v;
            const double est_sup = w.maxCoeff();
            const double est_ray = w.dot(pv.v) / pv.v.squaredNorm();
            pv.rho = est_sup;
            pv.power_residual = (w - est_sup * pv.v).cwiseAbs().maxCoeff() / est_sup;
            ++pv.iterations;
            pv.v = w / est_sup;
            if (std::abs(est_sup - est_ray) <= tol * est_sup && pv.power_residual <= tol) {
                pv.converged = true;
                break;
            }
        }
    }
    if (!pv.converged) fail(ErrorKind::NonConvergence, "static power iteration did not converge");
    // Rayleigh quotient is the sharper estimate for the symmetric case.
    const double nu = pv.v.dot(b * pv.v) / pv.v.squaredNorm() - shift;
    EigenResult res;
    res.lambda_p = -nu;
    res.log_rho = nu;
    res.rho = std::exp(nu);
    res.n_t = 0;
    res.iterations = pv.iterations;
    res.converged = true;
    res.power_residual = pv.power_residual;
    res.phi = Snapshots{pv.v, Vector::Zero(1)};
    res.psi = res.phi;
    res.has_adjoint = true;
    const Vector r = (b * pv.v - (nu + shift) * pv.v).cwiseQuotient(pv.v);
    res.residual = r.cwiseAbs().maxCoeff();
    return res;
}

inline EigenResult static_principal(const OperatorConfig& cfg, const Vector& field, double tol = constants::kDefaultTol,
                                    int max_iters = constants::kDefaultMaxIters) {
    return static_principal(cfg.grid, *cfg.kmat, cfg.h, field, cfg.mu, cfg.sigma, cfg.m, tol, max_iters);
}

/// min_i (mu / sigma^m) h_i - field_i, an upper bound on lambda_p.
inline double lambda_upper_bound(const OperatorConfig& cfg, const Vector& ahat) {
    return (cfg.dispersal_rate() * cfg.h - ahat).minCoeff();
}

// ---------------------------------------------------------------------------

struct Certificate {
    double lambda = 0.0;
    double epsilon = 0.0;
    bool sup_ok = false;  // (L + lambda - eps) phi <= 0 everywhere
    bool inf_ok = false;  // (L + lambda + eps) phi >= 0 everywhere
    double max_defect = 0.0;
    double min_defect = 0.0;
    long skipped_points = 0;
};

inline Certificate certify_defect(const Matrix& defect, const Matrix& phi_values, double lambda, double epsilon) {
    require(epsilon > 0.0, ErrorKind::InvalidInput, "epsilon must be positive");
    Certificate c;
    c.lambda = lambda;
    c.epsilon = epsilon;
    c.max_defect = -INFINITY;
    c.min_defect = INFINITY;
    for (long k = 0; k < defect.cols(); ++k)
        for (long i = 0; i < defect.rows(); ++i) {
            const double v = defect(i, k);
            if (std::isnan(v) || phi_values(i, k) < 1e-280) {
                ++c.skipped_points;
                continue;
            }
            c.max_defect = std::max(c.max_defect, v);
            c.min_defect = std::min(c.min_defect, v);
        }
    c.sup_ok = c.max_defect - epsilon <= 0.0;
    c.inf_ok = c.min_defect + epsilon >= 0.0;
    return c;
}

inline Certificate certify(const Propagator& prop, const EigenResult& res, double epsilon) {
    require(res.converged, ErrorKind::InvalidInput, "certify needs a converged eigen result");
    require(res.n_t == prop.steps() && res.phi.cols() == res.n_t + 1, ErrorKind::InvalidInput,
            "certify needs eigenfunction snapshots on the propagator's time grid");
    return certify_defect(eigen_defect(prop, res), res.phi.values, res.lambda_p, epsilon);
}

inline Certificate certify(const OperatorConfig& cfg, int n_t, Scheme scheme, const EigenResult& res,
                           double epsilon) {
    return certify(Propagator(MonodromySpec{cfg, n_t, scheme, true}), res, epsilon);
}

/// Certificate for the time-independent operator D + diag(field).
inline Certificate certify_static(const OperatorConfig& cfg, const Vector& field, const EigenResult& res,
                                  double epsilon) {
    require(res.converged, ErrorKind::InvalidInput, "certify needs a converged eigen result");
    const Vector phi = res.phi.values.col(0);
    const Vector r = (dispersal_matrix(cfg) * phi + field.cwiseProduct(phi)).cwiseQuotient(phi).array() + res.lambda_p;
    return certify_defect(r, res.phi.values, res.lambda_p, epsilon);
}

// ---------------------------------------------------------------------------

/// Exact derivative of the discrete lambda_p = -tau ln rho(Phi) with respect
/// to tau, from the forward and adjoint snapshots:
///   dlambda/dtau = lambda / tau - tau * sum_k psi_k^T S_k' phi_{k-1} / psi_k^T S_k phi_{k-1}
inline double dlambda_dtau(const Propagator& prop, const EigenResult& res) {
    require(res.converged && res.has_adjoint && res.n_t == prop.steps() && res.psi.cols() == res.n_t + 1,
            ErrorKind::InvalidInput, "dlambda_dtau needs converged forward and adjoint snapshots");
    const double tau = prop.cfg().tau;
    double sum = 0.0;
    for (int k = 1; k <= prop.steps(); ++k) {
        const Vector prev = res.phi.values.col(k - 1);
        const Vector psi = res.psi.values.col(k);
        Vector image = prev;
        prop.forward(k, image);
        double log_factor = 0.0;
        const Vector deriv = prop.tau_derivative(k, prev, log_factor);
        const double denom = psi.dot(image);
        if (!(std::abs(denom) > 0.0)) fail(ErrorKind::InternalError, "degenerate adjoint pairing");
        sum += psi.dot(deriv) / denom;
    }
    return res.lambda_p / tau - tau * sum;
}

inline double dlambda_dtau(const MonodromySpec& spec) {
    const Propagator prop(spec);
    return dlambda_dtau(prop, principal_floquet(prop));
}

/// Quadrature of int int psi d_t phi under int int phi psi = 1 (centred
/// differences). Converges to the exact derivative as n_t grows.
inline double dlambda_dtau_quadrature(const Propagator& prop, const EigenResult& res) {
    require(res.has_adjoint && res.psi.cols() == res.n_t + 1, ErrorKind::InvalidInput, "needs adjoint snapshots");
    const int n_t = res.n_t;
    const Matrix dens = detail::slice_density(res.phi, res.psi, prop.cfg().grid, n_t);
    double s = 0.0;
    for (int k = 0; k < n_t; ++k) {
        const int kp = (k + 1) % n_t, km = (k + n_t - 1) % n_t;
        for (long i = 0; i < dens.rows(); ++i)
            s += dens(i, k) * (res.phi.ratio(i, kp, k) - res.phi.ratio(i, km, k)) / 2.0;
    }
    return s;
}

/// K(zeta) = int int phi psi M[zeta] / zeta with the phi-psi measure
/// normalised to total mass 1.
inline double k_functional(const Propagator& prop, const EigenResult& res, const Snapshots& zeta) {
    require(res.has_adjoint && res.psi.cols() == res.n_t + 1 && res.n_t == prop.steps(), ErrorKind::InvalidInput,
            "k_functional needs forward and adjoint snapshots");
    require(zeta.values.rows() == prop.size() && zeta.cols() >= res.n_t, ErrorKind::InvalidInput,
            "zeta has the wrong shape");
    for (long k = 0; k < res.n_t; ++k)
        for (long i = 0; i < zeta.values.rows(); ++i)
            if (!(zeta.values(i, k) > 0.0)) fail(ErrorKind::InvalidInput, "zeta must be positive");
    const Matrix dens = detail::slice_density(res.phi, res.psi, prop.cfg().grid, res.n_t);
    const Matrix ratio = detail::generator_ratio(prop, zeta);
    double s = 0.0;
    for (long k = 0; k < res.n_t; ++k) s += dens.col(k).dot(ratio.col(k));
    return s / res.n_t;
}

}  // namespace pne
