#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "pne/parallel.hpp"
#include "pne/setup.hpp"

namespace pne {

enum class SweepParameter { Tau, Mu, Sigma };

inline std::string parameter_name(SweepParameter p) {
    switch (p) {
    case SweepParameter::Tau: return "tau";
    case SweepParameter::Mu: return "mu";
    case SweepParameter::Sigma: return "sigma";
    }
    return "?";
}

struct SweepSpec {
    SweepParameter parameter = SweepParameter::Tau;
    std::vector<double> values;
    ProblemSetup base;
};

struct SweepRow {
    SweepParameter parameter = SweepParameter::Tau;
    double value = 0.0;
    double lambda_p = NAN;
    double residual = NAN;  // power residual, comparable to the solver tol
    double defect = NAN;    // eigen-defect; only filled when snapshots were taken
    int iterations = 0;
    double wall_ms = 0.0;
    long n = 0;
    double upper_bound = NAN;
    bool converged = false;
    std::string error;
};

/// Setup with the swept parameter replaced. Sigma values below the current
/// resolution refine the grid to the smallest admissible n, up to the hard cap.
inline ProblemSetup with_parameter(const ProblemSetup& base, SweepParameter p, double value,
                                   std::size_t max_nodes = constants::kMaxRefinedNodes) {
    ProblemSetup s = base;
    switch (p) {
    case SweepParameter::Tau: s.tau = value; break;
    case SweepParameter::Mu: s.mu = value; break;
    case SweepParameter::Sigma: {
        s.sigma = value;
        const long need = min_nodes_for(s.domain, value);
        if (need > s.n) {
            if (need > static_cast<long>(max_nodes))
                fail(ErrorKind::UnderResolvedKernel, "sigma = " + std::to_string(value) + " needs n = " +
                                                         std::to_string(need) + " > cap " + std::to_string(max_nodes));
            s.n = need;
        }
        break;
    }
    }
    return s;
}

inline void validate(const SweepSpec& spec) {
    require(!spec.values.empty(), ErrorKind::InvalidConfig, "sweep needs at least one value");
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        require(std::isfinite(spec.values[i]) && spec.values[i] > 0.0, ErrorKind::InvalidConfig,
                "sweep values must be positive");
        if (i > 0)
            require(spec.values[i] > spec.values[i - 1], ErrorKind::InvalidConfig, "sweep values must increase strictly");
    }
}

inline SweepRow sweep_point(const SweepSpec& spec, std::size_t i) {
    SweepRow row;
    row.parameter = spec.parameter;
    row.value = spec.values[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const ProblemSetup s = with_parameter(spec.base, spec.parameter, row.value);
        row.n = s.n;
        const auto out = solve_floquet(s, false);
        row.lambda_p = out.result.lambda_p;
        row.residual = out.result.power_residual;
        row.iterations = out.result.iterations;
        row.upper_bound = out.upper_bound;
        row.converged = true;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonConvergence && e.kind() != ErrorKind::StepFailure &&
            e.kind() != ErrorKind::UnderResolvedKernel)
            throw;
        row.error = e.what();
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

/// One solve per value; rows come back in input order whatever the thread count.
inline std::vector<SweepRow> sweep(const SweepSpec& spec, unsigned threads = thread_budget()) {
    validate(spec);
    return parallel_map(spec.values.size(), [&](std::size_t i) { return sweep_point(spec, i); }, threads);
}

/// Endpoints are returned exactly; interior points as lo * (hi/lo)^(i/(count-1)).
inline std::vector<double> log_spaced(double lo, double hi, int count) {
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        v[static_cast<std::size_t>(i)] = i == 0 ? lo : i == count - 1 ? hi : lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1));
    return v;
}

// ---------------------------------------------------------------------------

struct MonotoneReport {
    bool passes = false;
    double slack = 0.0;
    double max_drop = 0.0;      // largest lambda(k) - lambda(k+1), positive means a decrease
    double min_increase = 0.0;  // smallest lambda(k+1) - lambda(k)
    double spread = 0.0;        // max lambda - min lambda
};

inline MonotoneReport check_monotone_tau(const std::vector<SweepRow>& rows, double extra_slack = constants::kMonotoneSlack) {
    require(!rows.empty(), ErrorKind::InvalidInput, "no rows");
    double max_res = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].parameter == SweepParameter::Tau, ErrorKind::InvalidInput, "rows are not a tau sweep");
        require(rows[i].converged, ErrorKind::InvalidInput, "row " + std::to_string(i) + " did not converge");
        if (i > 0)
            require(rows[i].value > rows[i - 1].value, ErrorKind::InvalidInput, "rows are not sorted by tau");
        max_res = std::max(max_res, rows[i].residual * std::abs(rows[i].lambda_p));
    }
    MonotoneReport rep;
    rep.slack = extra_slack + 2.0 * max_res;
    rep.max_drop = -INFINITY;
    rep.min_increase = INFINITY;
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        lo = std::min(lo, rows[i].lambda_p);
        hi = std::max(hi, rows[i].lambda_p);
        if (i == 0) continue;
        const double inc = rows[i].lambda_p - rows[i - 1].lambda_p;
        rep.max_drop = std::max(rep.max_drop, -inc);
        rep.min_increase = std::min(rep.min_increase, inc);
    }
    if (rows.size() == 1) rep.max_drop = rep.min_increase = 0.0;
    rep.spread = hi - lo;
    rep.passes = rep.max_drop <= rep.slack;
    return rep;
}

// ---------------------------------------------------------------------------

struct LimitReport {
    std::string regime;
    double predicted = 0.0;
    double observed = 0.0;
    double gap = 0.0;
    double parameter = 0.0;  // the extreme parameter value used
    long n = 0;
};

inline LimitReport make_report(std::string regime, double predicted, double observed, double parameter, long n) {
    return LimitReport{std::move(regime), predicted, observed, std::abs(predicted - observed), parameter, n};
}

inline int even_at_least(int n_t) { return n_t % 2 ? n_t + 1 : n_t; }

/// Simpson integral over t of lambda_p of the frozen-time operators.
inline double integrated_frozen_lambda(const ProblemSetup& base, int n_t_outer) {
    require(n_t_outer >= 4 && n_t_outer % 2 == 0, ErrorKind::InvalidConfig, "n_t_outer must be even and >= 4");
    const OperatorConfig cfg = base.operator_config();
    const auto w = simpson_weights(n_t_outer);
    // periodic: the t = 1 point repeats t = 0
    const std::vector<double> lam = parallel_map(static_cast<std::size_t>(n_t_outer), [&](std::size_t k) {
        const Vector f = sample_field(cfg.a, cfg.grid, static_cast<double>(k) / n_t_outer);
        return static_principal(cfg, f, base.tol, base.max_iters).lambda_p;
    });
    double s = 0.0;
    for (int k = 0; k <= n_t_outer; ++k) s += w[static_cast<std::size_t>(k)] * lam[static_cast<std::size_t>(k % n_t_outer)];
    return s;
}

inline double averaged_static_lambda(const ProblemSetup& base) {
    const OperatorConfig cfg = base.operator_config();
    const Vector ahat = time_average(cfg.a, cfg.grid, even_at_least(base.n_t)).values;
    return static_principal(cfg, ahat, base.tol, base.max_iters).lambda_p;
}

inline LimitReport limit_tau_zero(const ProblemSetup& base, int n_t_outer = constants::kFrozenTimeSamples) {
    const double predicted = integrated_frozen_lambda(base, n_t_outer);
    ProblemSetup s = base;
    s.tau = constants::kTauSmall;
    return make_report("tau_zero", predicted, solve_floquet(s, false).result.lambda_p, s.tau, s.n);
}

inline LimitReport limit_tau_inf(const ProblemSetup& base) {
    const double predicted = averaged_static_lambda(base);
    ProblemSetup s = base;
    s.tau = constants::kTauLarge;
    return make_report("tau_inf", predicted, solve_floquet(s, false).result.lambda_p, s.tau, s.n);
}

/// The mu limits are stated for sigma = 1, m = 0; the setup is forced there.
inline ProblemSetup unit_sigma(const ProblemSetup& base) {
    ProblemSetup s = base;
    s.sigma = 1.0;
    s.m = 0.0;
    s.n = std::max(s.n, min_nodes_for(s.domain, 1.0));
    return s;
}

inline Vector averaged_field(const ProblemSetup& s) {
    const Grid g = build_grid(s.domain, s.n);
    PeriodicField a = s.a;
    a.domain = s.domain;
    return time_average(a, g, even_at_least(s.n_t)).values;
}

struct MuZeroReport {
    LimitReport report;
    std::vector<double> mus;   // approach sequence, decreasing
    std::vector<double> gaps;  // |lambda(mu) - predicted|
    bool approach_monotone = false;
};

inline MuZeroReport limit_mu_zero_approach(const ProblemSetup& base) {
    const ProblemSetup s0 = unit_sigma(base);
    const double predicted = -averaged_field(s0).maxCoeff();
    MuZeroReport out;
    out.mus = {constants::kMuSmall * 1e3, constants::kMuSmall * 1e2, constants::kMuSmall * 1e1, constants::kMuSmall};
    const auto lams = parallel_map(out.mus.size(), [&](std::size_t i) {
        ProblemSetup s = s0;
        s.mu = out.mus[i];
        return solve_floquet(s, false).result.lambda_p;
    });
    out.approach_monotone = true;
    for (std::size_t i = 0; i < lams.size(); ++i) {
        out.gaps.push_back(std::abs(lams[i] - predicted));
        if (i > 0 && out.gaps[i] > out.gaps[i - 1] + constants::kBoundSlack) out.approach_monotone = false;
    }
    out.report = make_report("mu_zero", predicted, lams.back(), constants::kMuSmall, s0.n);
    return out;
}

inline LimitReport limit_mu_zero(const ProblemSetup& base) {
    const ProblemSetup s0 = unit_sigma(base);
    ProblemSetup s = s0;
    s.mu = constants::kMuSmall;
    return make_report("mu_zero", -averaged_field(s0).maxCoeff(), solve_floquet(s, false).result.lambda_p, s.mu, s.n);
}

inline LimitReport limit_mu_inf_neumann(const ProblemSetup& base) {
    require(std::holds_alternative<Neumann>(base.boundary), ErrorKind::InvalidConfig,
            "the large-mu limit is only available for the Neumann boundary");
    const ProblemSetup s0 = unit_sigma(base);
    const Grid g = build_grid(s0.domain, s0.n);
    const double predicted = -quadrature_mean(averaged_field(s0), g);
    ProblemSetup s = s0;
    s.mu = constants::kMuLarge;
    return make_report("mu_inf_neumann", predicted, solve_floquet(s, false).result.lambda_p, s.mu, s.n);
}

enum class SigmaDirection { ToZero, ToInfinity };

/// c = lim h^sigma as sigma grows: 0 for Neumann, 1 for Dirichlet, caller-asserted for Custom.
inline double boundary_limit_constant(const BoundaryChoice& bc) {
    if (std::holds_alternative<Neumann>(bc)) return 0.0;
    if (std::holds_alternative<Dirichlet>(bc)) return 1.0;
    return std::get<CustomBoundary>(bc).limit_constant;
}

inline LimitReport limit_sigma(const ProblemSetup& base, SigmaDirection dir,
                               std::size_t max_nodes = constants::kMaxRefinedNodes) {
    const double max_ahat = averaged_field(base).maxCoeff();
    if (dir == SigmaDirection::ToInfinity) {
        ProblemSetup s = base;
        s.sigma = constants::kSigmaLarge;
        const double predicted =
            base.m > 0.0 ? -max_ahat : base.mu * boundary_limit_constant(base.boundary) - max_ahat;
        return make_report(base.m > 0.0 ? "sigma_inf" : "sigma_inf_" + boundary_name(base.boundary), predicted,
                           solve_floquet(s, false).result.lambda_p, s.sigma, s.n);
    }
    if (base.m >= 2.0)
        fail(ErrorKind::OutOfScopeRegime, "the small-sigma limit for m >= 2 needs a local PDE solver; refused");
    require(std::holds_alternative<Neumann>(base.boundary), ErrorKind::InvalidConfig,
            "the small-sigma limit is only available for the Neumann boundary");
    require(max_nodes >= 2 && max_nodes <= constants::kMaxRefinedNodes, ErrorKind::InvalidConfig,
            "max_nodes must lie in [2, " + std::to_string(constants::kMaxRefinedNodes) + "]");
    ProblemSetup s = base;
    s.n = static_cast<long>(max_nodes);
    s.sigma = constants::kResolutionRatio * s.domain.length() / static_cast<double>(max_nodes);
    const double predicted = -averaged_field(s).maxCoeff();
    return make_report("sigma_zero", predicted, solve_floquet(s, false).result.lambda_p, s.sigma, s.n);
}

}  // namespace pne
