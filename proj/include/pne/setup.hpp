#pragma once

#include "pne/eigensolver.hpp"

namespace pne {

/// Declarative description of one linear problem plus solver settings. Unlike
/// OperatorConfig it can be rebuilt at a different sigma or n, which sweeps
/// and limits need.
struct ProblemSetup {
    Domain domain;
    long n = 64;
    KernelShape shape = Epanechnikov{};
    double sigma = 0.25;
    BoundaryChoice boundary = Neumann{};
    double tau = 1.0;
    double mu = 1.0;
    double m = 0.0;
    PeriodicField a;
    int n_t = 2048;
    Scheme scheme = Scheme::Exponential;
    double tol = constants::kDefaultTol;
    int max_iters = constants::kDefaultMaxIters;

    OperatorConfig operator_config() const {
        return make_operator(domain, n, shape, sigma, boundary, tau, mu, m, a);
    }
    MonodromySpec monodromy() const { return MonodromySpec{operator_config(), n_t, scheme, true}; }
    EigenOptions options() const {
        EigenOptions o;
        o.tol = tol;
        o.max_iters = max_iters;
        return o;
    }
};

struct SolveOutcome {
    EigenResult result;
    Vector ahat;
    double upper_bound = 0.0;
};

/// Floquet solve plus the time average and the a-priori upper bound.
inline SolveOutcome solve_floquet(const ProblemSetup& s, bool snapshots = true) {
    const Propagator prop(s.monodromy());
    EigenOptions o = s.options();
    o.snapshots = snapshots;
    o.adjoint = snapshots;
    SolveOutcome out;
    out.result = principal_floquet(prop, o);
    out.ahat = time_average(prop.cfg().a, prop.cfg().grid, s.n_t % 2 ? s.n_t + 1 : s.n_t).values;
    out.upper_bound = lambda_upper_bound(prop.cfg(), out.ahat);
    return out;
}

}  // namespace pne
