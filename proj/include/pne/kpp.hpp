#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/SparseLU>

#include "pne/asymptotics.hpp"
#include "pne/ode_oracle.hpp"

namespace pne {

/// tau u_t = (mu / sigma^m)(K u - h u) + u (a - b u) with Neumann h.
struct KppProblem {
    OperatorConfig linear;
    KppNonlinearity f;  // f.a is a copy of linear.a
    int n_t = 2048;
};

inline KppProblem make_kpp_problem(const ProblemSetup& s, PeriodicField crowding) {
    require(std::holds_alternative<Neumann>(s.boundary), ErrorKind::InvalidConfig,
            "KPP problems use the Neumann form of the dispersal term");
    KppProblem p;
    p.linear = s.operator_config();
    crowding.domain = s.domain;
    p.f = KppNonlinearity{p.linear.a, std::move(crowding)};
    p.n_t = s.n_t;
    return p;
}

/// Implicit dispersal solve (I - gamma D)^{-1}, sparse when D is.
class DispersalSolver {
public:
    DispersalSolver(const Matrix& d, double gamma) {
        Matrix m = -gamma * d;
        m.diagonal().array() += 1.0;
        const long nnz = (m.array() != 0.0).count();
        sparse_ = static_cast<double>(nnz) < 0.25 * static_cast<double>(m.size());
        if (sparse_) {
            Eigen::SparseMatrix<double> sm = m.sparseView();
            sm.makeCompressed();
            sp_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
            sp_->compute(sm);
            require(sp_->info() == Eigen::Success, ErrorKind::StepFailure, "sparse dispersal factorisation failed");
        } else {
            dense_ = m.partialPivLu();
        }
    }
    Vector solve(const Vector& v) const { return sparse_ ? Vector(sp_->solve(v)) : Vector(dense_.solve(v)); }

private:
    bool sparse_ = false;
    Eigen::PartialPivLU<Matrix> dense_;
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> sp_;
};

struct EvolveResult {
    Vector end;
    std::vector<Matrix> snapshots;  // per period, n x (n_t + 1), when logged
    double max_value = 0.0;
    double min_value = 0.0;
    int substeps = 0;  // IMEX steps per snapshot interval
};

namespace detail {

/// Precomputed sampling of a, b and the implicit solver for one substep count.
class KppStepper {
public:
    KppStepper(const KppProblem& p, int substeps) : p_(p), substeps_(substeps) {
        const int total = p.n_t * substeps;
        dt_ = 1.0 / total;
        gamma_ = dt_ / p.linear.tau;
        solver_ = std::make_unique<DispersalSolver>(dispersal_matrix(p.linear), gamma_);
        a_.reserve(static_cast<std::size_t>(total));
        b_.reserve(static_cast<std::size_t>(total));
        for (int j = 0; j < total; ++j) {
            a_.push_back(sample_field(p.f.a, p.linear.grid, j * dt_));
            b_.push_back(sample_field(p.f.b, p.linear.grid, j * dt_));
        }
    }
    int total() const { return static_cast<int>(a_.size()); }
    int substeps() const { return substeps_; }

    /// u <- one IMEX step from time index j. False if a negative value appears.
    bool step(int j, Vector& u) const {
        const auto jj = static_cast<std::size_t>(j);
        Vector rhs = u + gamma_ * u.cwiseProduct(a_[jj] - b_[jj].cwiseProduct(u));
        u = solver_->solve(rhs);
        return (u.array() >= 0.0).all() && u.allFinite();
    }

private:
    const KppProblem& p_;
    int substeps_;
    double dt_ = 0.0, gamma_ = 0.0;
    std::unique_ptr<DispersalSolver> solver_;
    std::vector<Vector> a_, b_;
};

inline int required_substeps(const KppProblem& p, double sup_u0) {
    const auto& grid = p.linear.grid;
    const int samples = std::max(p.n_t, 64);
    double amax = 0.0, bmax = 0.0;
    for (int k = 0; k < samples; ++k) {
        const double t = static_cast<double>(k) / samples;
        amax = std::max(amax, sample_field(p.f.a, grid, t).cwiseAbs().maxCoeff());
        bmax = std::max(bmax, sample_field(p.f.b, grid, t).cwiseAbs().maxCoeff());
    }
    const double mf = validate_kpp(p.f, grid, 8).m_f;
    const double bound_m = std::max(sup_u0, mf);
    // dt <= tau / (2 (max|a| + 2 max b M))
    const double max_dt = p.linear.tau / (2.0 * (amax + 2.0 * bmax * bound_m));
    return std::max(1, static_cast<int>(std::ceil((1.0 / p.n_t) / max_dt)));
}

}  // namespace detail

/// Runs whole periods from u0 with retries at halved dt if positivity fails.
class KppIntegrator {
public:
    KppIntegrator(const KppProblem& p, double sup_bound) : p_(p) {
        validate(p.linear);
        require(p.n_t >= 1, ErrorKind::InvalidConfig, "n_t must be positive");
        require(std::holds_alternative<Neumann>(p.linear.boundary), ErrorKind::InvalidConfig,
                "KPP problems use the Neumann form of the dispersal term");
        base_substeps_ = detail::required_substeps(p, sup_bound);
        stepper_ = std::make_unique<detail::KppStepper>(p, base_substeps_);
    }

    /// One period; logs n_t + 1 snapshots if requested.
    Vector period(Vector u, Matrix* log = nullptr) {
        for (int attempt = 0;; ++attempt) {
            Vector trial = u;
            if (log) {
                log->resize(trial.size(), p_.n_t + 1);
                log->col(0) = trial;
            }
            bool ok = true;
            for (int j = 0; j < stepper_->total() && ok; ++j) {
                ok = stepper_->step(j, trial);
                if (log && (j + 1) % stepper_->substeps() == 0) log->col((j + 1) / stepper_->substeps()) = trial;
            }
            if (ok) return trial;
            if (attempt >= constants::kStepRetries)
                fail(ErrorKind::StepFailure, "KPP step produced a negative value after " +
                                                 std::to_string(constants::kStepRetries) + " dt halvings");
            stepper_ = std::make_unique<detail::KppStepper>(p_, stepper_->substeps() * 2);
        }
    }

    int substeps() const { return stepper_->substeps(); }

private:
    const KppProblem& p_;
    int base_substeps_ = 1;
    std::unique_ptr<detail::KppStepper> stepper_;
};

inline void require_initial(const Vector& u0, long n) {
    require(u0.size() == n, ErrorKind::InvalidInput, "initial datum has wrong length");
    require((u0.array() >= 0.0).all() && u0.allFinite(), ErrorKind::InvalidInput, "initial datum must be >= 0");
    require(u0.maxCoeff() > 0.0, ErrorKind::InvalidInput, "initial datum must not vanish identically");
}

inline EvolveResult evolve(const KppProblem& p, const Vector& u0, int periods, bool log_snapshots = false) {
    require_initial(u0, p.linear.size());
    require(periods >= 0, ErrorKind::InvalidInput, "periods must be >= 0");
    KppIntegrator integ(p, u0.maxCoeff());
    EvolveResult out;
    out.end = u0;
    out.max_value = u0.maxCoeff();
    out.min_value = u0.minCoeff();
    for (int k = 0; k < periods; ++k) {
        Matrix log;
        out.end = integ.period(out.end, log_snapshots ? &log : nullptr);
        if (log_snapshots) {
            out.max_value = std::max(out.max_value, log.maxCoeff());
            out.min_value = std::min(out.min_value, log.minCoeff());
            out.snapshots.push_back(std::move(log));
        } else {
            out.max_value = std::max(out.max_value, out.end.maxCoeff());
            out.min_value = std::min(out.min_value, out.end.minCoeff());
        }
    }
    out.substeps = integ.substeps();
    return out;
}

// ---------------------------------------------------------------------------

struct PeriodicOrbit {
    Matrix snapshots;  // n x (n_t + 1), t_k = k / n_t
    double poincare_residual = 0.0;
    double min_value = 0.0;
    double max_value = 0.0;
    int periods = 0;
};

struct Extinction {
    double final_sup = 0.0;
    int periods = 0;
};

struct Undecided {
    double last_residual = 0.0;
    double final_sup = 0.0;
    int periods = 0;
};

using PoincareOutcome = std::variant<PeriodicOrbit, Extinction, Undecided>;

inline std::string outcome_name(const PoincareOutcome& o) {
    switch (o.index()) {
    case 0: return "persistence";
    case 1: return "extinction";
    default: return "undecided";
    }
}

inline PoincareOutcome poincare_fixed_point(const KppProblem& p, const Vector& u0,
                                            double tol = constants::kPoincareTol,
                                            int max_periods = constants::kMaxPeriods) {
    require_initial(u0, p.linear.size());
    require((u0.array() > 0.0).all(), ErrorKind::InvalidInput, "Poincare iteration needs u0 > 0");
    KppIntegrator integ(p, u0.maxCoeff());
    Vector u = u0;
    double res = INFINITY;
    for (int k = 1; k <= max_periods; ++k) {
        Vector next = integ.period(u);
        res = (next - u).cwiseAbs().maxCoeff();
        u = std::move(next);
        if (u.maxCoeff() < constants::kExtinctionThreshold) return Extinction{u.maxCoeff(), k};
        if (res < tol) {
            PeriodicOrbit orbit;
            const Vector last = integ.period(u, &orbit.snapshots);
            orbit.poincare_residual = (last - u).cwiseAbs().maxCoeff();
            orbit.min_value = orbit.snapshots.minCoeff();
            orbit.max_value = orbit.snapshots.maxCoeff();
            orbit.periods = k + 1;
            return orbit;
        }
    }
    return Undecided{res, u.maxCoeff(), max_periods};
}

// ---------------------------------------------------------------------------

struct Classification {
    PoincareOutcome outcome;
    double lambda_p = 0.0;
    double margin = 0.0;
    bool consistent = false;
};

inline double classification_start(const KppProblem& p) {
    const double mf = validate_kpp(p.f, p.linear.grid, std::max(p.n_t, 8)).m_f;
    return mf > 0.0 ? std::min(constants::kInitialScale * mf, constants::kInitialScale) : constants::kInitialScale;
}

/// Poincare run from the fixed initial datum, checked against the sign of
/// lambda_p with margin 10 x eigen residual.
inline Classification classify(const KppProblem& p, const EigenResult& eigen, double tol = constants::kPoincareTol,
                               int max_periods = constants::kMaxPeriods) {
    Classification c;
    c.lambda_p = eigen.lambda_p;
    c.margin = constants::kMarginFactor * eigen.residual;
    const Vector u0 = Vector::Constant(p.linear.size(), classification_start(p));
    c.outcome = poincare_fixed_point(p, u0, tol, max_periods);
    const bool persists = std::holds_alternative<PeriodicOrbit>(c.outcome);
    const bool dies = std::holds_alternative<Extinction>(c.outcome);
    c.consistent = (!(c.lambda_p < -c.margin) || persists) && (!(c.lambda_p > c.margin) || dies);
    return c;
}

/// Eigen-solve for the linearisation at zero then classify.
inline Classification classify(const KppProblem& p, Scheme scheme = Scheme::Exponential) {
    const Propagator prop(MonodromySpec{p.linear, p.n_t, scheme, true});
    return classify(p, principal_floquet(prop));
}

// ---------------------------------------------------------------------------

struct TauStar {
    double lo = 0.0;  // lambda_p(lo) < 0
    double hi = 0.0;  // lambda_p(hi) > 0
    double lambda_lo = 0.0;
    double lambda_hi = 0.0;
    int solves = 0;
};

/// Bisection on the sign of lambda_p(tau), which is non-decreasing in tau.
inline TauStar bracket_tau_star(const ProblemSetup& base, double lo, double hi, double width = 1e-3) {
    auto lam = [&](double tau) {
        ProblemSetup s = base;
        s.tau = tau;
        return solve_floquet(s, false).result.lambda_p;
    };
    TauStar ts{lo, hi, lam(lo), lam(hi), 2};
    require(ts.lambda_lo < 0.0 && ts.lambda_hi > 0.0, ErrorKind::InvalidInput,
            "tau bracket does not straddle a sign change of lambda_p");
    while (ts.hi - ts.lo > width) {
        const double mid = 0.5 * (ts.lo + ts.hi);
        const double v = lam(mid);
        ++ts.solves;
        if (v < 0.0) {
            ts.lo = mid;
            ts.lambda_lo = v;
        } else {
            ts.hi = mid;
            ts.lambda_hi = v;
        }
    }
    return ts;
}

// ---------------------------------------------------------------------------

struct LimitErrorRow {
    double parameter = 0.0;
    double sup_error = 0.0;
    long n = 0;
};

enum class KppLimit { ToZero, ToInfinity };

/// Orbit of a KPP problem from the classification start; refuses anything
/// but persistence.
inline PeriodicOrbit persistent_orbit(const KppProblem& p) {
    const Vector u0 = Vector::Constant(p.linear.size(), classification_start(p));
    auto out = poincare_fixed_point(p, u0);
    if (!std::holds_alternative<PeriodicOrbit>(out))
        fail(ErrorKind::NonConvergence, "expected a persistent orbit, got " + outcome_name(out));
    return std::get<PeriodicOrbit>(out);
}

inline double sup_distance(const Matrix& orbit, const Matrix& oracle) { return (orbit - oracle).cwiseAbs().maxCoeff(); }

inline Matrix broadcast_rows(const OracleSolution& sol, long n) {
    Matrix m(n, static_cast<long>(sol.v.size()));
    for (long k = 0; k < m.cols(); ++k) m.col(k).setConstant(sol.v[static_cast<std::size_t>(k)]);
    return m;
}

/// Orbits at each mu against the per-node logistic oracle (to zero) or the
/// spatially averaged one (to infinity).
inline std::vector<LimitErrorRow> compare_mu_limits(const ProblemSetup& base, const PeriodicField& crowding,
                                                    const std::vector<double>& mus, KppLimit dir) {
    const KppProblem p0 = make_kpp_problem(base, crowding);
    const Vector ahat = time_average(p0.linear.a, p0.linear.grid, even_at_least(base.n_t)).values;
    Matrix oracle;
    if (dir == KppLimit::ToZero) {
        if (!(ahat.minCoeff() > 0.0))
            fail(ErrorKind::InvalidInput, "small-mu comparison needs min ahat > 0 (got " + std::to_string(ahat.minCoeff()) + ")");
        oracle = node_logistic(p0.f, p0.linear.grid, base.tau, base.n_t);
    } else {
        const double mean = quadrature_mean(ahat, p0.linear.grid);
        if (!(mean > 0.0))
            fail(ErrorKind::InvalidInput, "large-mu comparison needs the mean of ahat > 0 (got " + std::to_string(mean) + ")");
        oracle = broadcast_rows(averaged_logistic(p0.f, p0.linear.grid, base.tau, base.n_t), p0.linear.size());
    }
    return parallel_map(mus.size(), [&](std::size_t i) {
        ProblemSetup s = base;
        s.mu = mus[i];
        const KppProblem p = make_kpp_problem(s, crowding);
        return LimitErrorRow{mus[i], sup_distance(persistent_orbit(p).snapshots, oracle), s.n};
    });
}

/// Orbits at each sigma against the per-node logistic oracle. Small sigma
/// refines the grid to keep h <= sigma / 4, capped at max_nodes.
inline std::vector<LimitErrorRow> compare_sigma_limits(const ProblemSetup& base, const PeriodicField& crowding,
                                                       const std::vector<double>& sigmas, KppLimit dir,
                                                       std::size_t max_nodes = constants::kMaxRefinedNodes) {
    if (dir == KppLimit::ToZero && base.m >= 2.0)
        fail(ErrorKind::OutOfScopeRegime, "the small-sigma limit for m >= 2 needs a local PDE solver; refused");
    return parallel_map(sigmas.size(), [&](std::size_t i) {
        const ProblemSetup s = with_parameter(base, SweepParameter::Sigma, sigmas[i], max_nodes);
        const KppProblem p = make_kpp_problem(s, crowding);
        const Vector ahat = time_average(p.linear.a, p.linear.grid, even_at_least(s.n_t)).values;
        if (!(ahat.minCoeff() > 0.0))
            fail(ErrorKind::InvalidInput, "sigma comparison needs min ahat > 0 (got " + std::to_string(ahat.minCoeff()) + ")");
        const Matrix oracle = node_logistic(p.f, p.linear.grid, s.tau, s.n_t);
        return LimitErrorRow{sigmas[i], sup_distance(persistent_orbit(p).snapshots, oracle), s.n};
    });
}

/// Smallest sigma the grid cap allows.
inline double minimal_feasible_sigma(const Domain& d, std::size_t max_nodes = constants::kMaxRefinedNodes) {
    return constants::kResolutionRatio * d.length() / static_cast<double>(max_nodes);
}

}  // namespace pne
