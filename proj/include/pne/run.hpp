#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "pne/config.hpp"
#include "pne/io.hpp"
#include "pne/kpp.hpp"

#ifndef PNE_VERSION
#define PNE_VERSION "0.1.0"
#endif

namespace pne {

struct RunOptions {
    std::filesystem::path out_dir = "pne-out";
    bool timings = false;  // wall_ms column in sweep CSV (otherwise NA, keeping reruns identical)
    bool snapshots = false;
    int snapshot_stride = 1;
    std::optional<double> frozen_t;  // static-eig: freeze a(., t) instead of using the time average
    std::string scenario;
    std::optional<int> periods;
    std::optional<double> tol;
    std::size_t max_nodes = constants::kDefaultLimitNodes;
    int n_t_outer = constants::kFrozenTimeSamples;
    bool quiet = false;
};

// ---------------------------------------------------------------------------
// Named KPP scenarios on the default rig (Omega = [0, 1], n = 64, sigma = 0.25,
// n_t = 2048, tau = mu = 1, m = 0, Neumann). Together they cover negative and
// positive lambda_p, including sign changes driven by mu and by tau.

struct KppScenario {
    std::string name;
    std::string description;
    ProblemSetup setup;
    PeriodicField crowding;
};

inline Expression terms(std::initializer_list<Term> t) { return Expression{std::vector<Term>(t)}; }

inline std::vector<KppScenario> kpp_scenarios() {
    const Domain d{0.0, 1.0};
    auto base = [&](Expression a) {
        ProblemSetup s;
        s.domain = d;
        s.a = PeriodicField{d, std::move(a), 0.0};
        return s;
    };
    const PeriodicField unit = constant_field(d, 1.0);
    std::vector<KppScenario> out;
    out.push_back({"persistence", "a = 1 + 0.5 sin(2 pi t), b = 1",
                   base(terms({Term{1.0}, Term{0.5, XOne{}, TSin2Pi{1}}})), unit});
    out.push_back({"extinction", "a = -0.2, b = 1", base(terms({Term{-0.2}})), unit});
    out.push_back({"heterogeneous", "a = x - 0.2 + 0.5 cos(pi x) sin(2 pi t), b = 1 + 0.5 x",
                   base(terms({Term{1.0, XPow{1}}, Term{-0.2}, Term{0.5, XCosPi{1}, TSin2Pi{1}}})),
                   PeriodicField{d, terms({Term{1.0}, Term{0.5, XPow{1}}}), 0.0}});
    out.push_back({"local-peak", "a = -0.5 + 2 exp(-((x - 0.5)/0.1)^2), b = 1",
                   base(terms({Term{-0.5}, Term{2.0, XGauss{0.5, 0.1}}})), unit});
    {
        auto s = base(terms({Term{1.0, XPow{1}}, Term{-0.6}}));
        s.mu = 100.0;
        out.push_back({"strong-dispersal", "a = x - 0.6, mu = 100", s, unit});
    }
    {
        // Growth stays positive: with a sign change, nodes where a is near
        // zero contract by only about |a| per period.
        auto s = base(terms({Term{1.0, XPow{1}}, Term{0.2}}));
        s.mu = 1e-3;
        s.sigma = 1.0;
        out.push_back({"weak-dispersal", "a = x + 0.2, mu = 0.001, sigma = 1", s, unit});
    }
    const Expression travelling = terms({Term{-0.3}, Term{1.0, XCosPi{2}, TCos2Pi{1}}, Term{1.0, XSinPi{2}, TSin2Pi{1}}});
    {
        auto s = base(travelling);
        s.tau = 0.01;
        out.push_back({"slow-oscillation", "a = -0.3 + cos(2 pi (x - t)), tau = 0.01", s, unit});
    }
    {
        auto s = base(travelling);
        s.tau = 0.1;
        out.push_back({"fast-oscillation", "a = -0.3 + cos(2 pi (x - t)), tau = 0.1", s, unit});
    }
    return out;
}

inline KppScenario find_scenario(const std::string& name) {
    std::string known;
    for (auto& s : kpp_scenarios()) {
        if (s.name == name) return s;
        known += (known.empty() ? "" : ", ") + s.name;
    }
    fail(ErrorKind::InvalidConfig, "unknown scenario '" + name + "' (known: " + known + ")");
}

// ---------------------------------------------------------------------------

struct RunOutput {
    std::vector<std::pair<std::string, std::string>> files;  // name, content
    Manifest manifest;
    int status = 0;
};

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string eig_row_header() { return "tau,mu,sigma,m,boundary,lambda_p,rho,residual,iters"; }

inline std::string snapshot_csv(const Grid& grid, const EigenResult& r, int stride) {
    Csv csv({"t", "x", "phi", "psi"});
    const long cols = r.n_t == 0 ? 1 : r.n_t + 1;
    for (long k = 0; k < cols; k += stride)
        for (long i = 0; i < r.phi.values.rows(); ++i)
            csv.row(r.n_t == 0 ? 0.0 : static_cast<double>(k) / r.n_t, grid.nodes[static_cast<std::size_t>(i)],
                    r.phi.value(i, k), r.has_adjoint ? r.psi.value(i, k) : NAN);
    return csv.text();
}

inline void run_eig(const RunConfig& rc, const RunOptions& opt, RunOutput& out) {
    const auto t0 = std::chrono::steady_clock::now();
    ProblemSetup s = rc.setup;
    MonodromySpec spec = s.monodromy();
    spec.check_positivity = rc.check_positivity;
    const Propagator prop(spec);
    EigenOptions eo = s.options();
    const EigenResult r = principal_floquet(prop, eo);
    out.manifest.timing("eig", ms_since(t0));
    Csv csv({"tau", "mu", "sigma", "m", "boundary", "lambda_p", "rho", "residual", "iters"});
    csv.row(s.tau, s.mu, s.sigma, s.m, boundary_name(s.boundary), r.lambda_p, r.rho, r.power_residual, r.iterations);
    out.files.emplace_back("eig.csv", csv.text());
    out.manifest.extra("log_rho", fmt(r.log_rho));
    out.manifest.extra("eigen_defect", fmt(r.residual));
    out.manifest.extra("adjoint_log_rho", fmt(r.adjoint_log_rho));
    const Vector ahat = time_average(prop.cfg().a, prop.cfg().grid, s.n_t).values;
    out.manifest.extra("upper_bound", fmt(lambda_upper_bound(prop.cfg(), ahat)));
    if (opt.snapshots) out.files.emplace_back("eigenfunction.csv", snapshot_csv(prop.cfg().grid, r, opt.snapshot_stride));
}

inline void run_static(const RunConfig& rc, const RunOptions& opt, RunOutput& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const OperatorConfig cfg = rc.setup.operator_config();
    const Vector field = opt.frozen_t ? sample_field(cfg.a, cfg.grid, *opt.frozen_t)
                                      : time_average(cfg.a, cfg.grid, rc.setup.n_t).values;
    const EigenResult r = static_principal(cfg, field, rc.setup.tol, rc.setup.max_iters);
    out.manifest.timing("static-eig", ms_since(t0));
    out.manifest.extra("field", opt.frozen_t ? "a(., " + fmt(*opt.frozen_t) + ")" : "time average");
    out.manifest.extra("eigen_defect", fmt(r.residual));
    out.manifest.extra("upper_bound", fmt(lambda_upper_bound(cfg, field)));
    Csv csv({"tau", "mu", "sigma", "m", "boundary", "lambda_p", "rho", "residual", "iters"});
    csv.row("NA", rc.setup.mu, rc.setup.sigma, rc.setup.m, boundary_name(rc.setup.boundary), r.lambda_p, r.rho,
            r.power_residual, r.iterations);
    out.files.emplace_back("static_eig.csv", csv.text());
    if (opt.snapshots) out.files.emplace_back("eigenfunction.csv", snapshot_csv(cfg.grid, r, 1));
}

inline void run_sweep(const RunConfig& rc, const RunOptions& opt, RunOutput& out) {
    require(rc.sweep.present, ErrorKind::InvalidConfig, "sweep needs a [sweep] section");
    const auto t0 = std::chrono::steady_clock::now();
    SweepSpec spec{rc.sweep.parameter, rc.sweep.values, rc.setup};
    const auto rows = sweep(spec);
    out.manifest.timing("sweep", ms_since(t0));
    Csv csv({"param", "value", "lambda_p", "residual", "iters", "wall_ms"});
    for (const auto& r : rows) {
        csv.row(parameter_name(r.parameter), r.value, r.lambda_p, r.residual, r.converged ? r.iterations : -1,
                opt.timings ? fmt(r.wall_ms) : std::string("NA"));
        out.manifest.timing("sweep." + fmt(r.value), r.wall_ms);
        out.manifest.extra("n." + fmt(r.value), fmt(r.n));
        if (!r.converged) {
            out.manifest.extra("error." + fmt(r.value), r.error);
            out.status = 2;
        }
        if (r.converged && !(r.lambda_p <= r.upper_bound + constants::kBoundSlack))
            out.manifest.extra("bound_violation." + fmt(r.value), fmt(r.lambda_p - r.upper_bound));
    }
    out.files.emplace_back("sweep.csv", csv.text());
    if (rc.sweep.parameter == SweepParameter::Tau && out.status == 0) {
        const auto rep = check_monotone_tau(rows);
        out.manifest.extra("monotone_tau", rep.passes ? "pass" : "fail");
        out.manifest.extra("monotone_max_drop", fmt(rep.max_drop));
        out.manifest.extra("spread", fmt(rep.spread));
    }
}

inline void run_limits(const RunConfig& rc, const RunOptions& opt, RunOutput& out) {
    const ProblemSetup& s = rc.setup;
    Csv csv({"regime", "predicted", "observed", "gap"});
    auto add = [&](const std::string& label, const std::function<LimitReport()>& f) {
        const auto t0 = std::chrono::steady_clock::now();
        const LimitReport r = f();
        out.manifest.timing(label, ms_since(t0));
        out.manifest.extra(label + ".parameter", fmt(r.parameter));
        out.manifest.extra(label + ".n", fmt(r.n));
        csv.row(r.regime, r.predicted, r.observed, r.gap);
    };
    add("tau_zero", [&] { return limit_tau_zero(s, opt.n_t_outer); });
    add("tau_inf", [&] { return limit_tau_inf(s); });
    add("mu_zero", [&] { return limit_mu_zero(s); });
    if (std::holds_alternative<Neumann>(s.boundary)) add("mu_inf_neumann", [&] { return limit_mu_inf_neumann(s); });
    add("sigma_inf", [&] { return limit_sigma(s, SigmaDirection::ToInfinity); });
    if (std::holds_alternative<Neumann>(s.boundary) && s.m < 2.0)
        add("sigma_zero", [&] { return limit_sigma(s, SigmaDirection::ToZero, opt.max_nodes); });
    out.files.emplace_back("limits.csv", csv.text());
}

inline void run_kpp(const RunConfig& rc, const RunOptions& opt, RunOutput& out) {
    ProblemSetup s = rc.setup;
    PeriodicField crowding = rc.kpp.crowding;
    int periods = rc.kpp.periods;
    double tol = rc.kpp.tol;
    if (!opt.scenario.empty()) {
        const auto sc = find_scenario(opt.scenario);
        s = sc.setup;
        crowding = sc.crowding;
        out.manifest.extra("scenario", sc.name + ": " + sc.description);
    } else {
        require(rc.kpp.present, ErrorKind::InvalidConfig, "kpp needs a [kpp] section or --scenario");
    }
    if (opt.periods) periods = *opt.periods;
    if (opt.tol) tol = *opt.tol;
    require(periods >= 1, ErrorKind::InvalidConfig, "--periods must be >= 1");
    require(tol > 0.0, ErrorKind::InvalidConfig, "--tol must be positive");
    const auto t0 = std::chrono::steady_clock::now();
    const KppProblem p = make_kpp_problem(s, crowding);
    const auto val = validate_kpp(p.f, p.linear.grid, 64);
    require(val.passes(), ErrorKind::InvalidNonlinearity, "nonlinearity fails the KPP structure checks");
    const Propagator prop(MonodromySpec{p.linear, p.n_t, s.scheme, true});
    const EigenResult eig = principal_floquet(prop);
    const Classification c = classify(p, eig, tol, periods);
    out.manifest.timing("kpp", ms_since(t0));
    out.manifest.extra("consistent", c.consistent ? "true" : "false");
    out.manifest.extra("margin", fmt(c.margin));
    out.manifest.extra("m_f", fmt(val.m_f));
    Csv summary({"classification", "lambda_p", "poincare_residual", "min_u", "max_u"});
    std::visit(
        [&](const auto& o) {
            using O = std::decay_t<decltype(o)>;
            if constexpr (std::is_same_v<O, PeriodicOrbit>) {
                summary.row("persistence", c.lambda_p, o.poincare_residual, o.min_value, o.max_value);
                Csv snap({"t", "x", "value"});
                for (long k = 0; k < o.snapshots.cols(); k += opt.snapshot_stride)
                    for (long i = 0; i < o.snapshots.rows(); ++i)
                        snap.row(static_cast<double>(k) / p.n_t, p.linear.grid.nodes[static_cast<std::size_t>(i)],
                                 o.snapshots(i, k));
                out.files.emplace_back("orbit.csv", snap.text());
                out.manifest.extra("periods", fmt(o.periods));
            } else if constexpr (std::is_same_v<O, Extinction>) {
                summary.row("extinction", c.lambda_p, NAN, 0.0, o.final_sup);
                out.manifest.extra("periods", fmt(o.periods));
            } else {
                summary.row("undecided", c.lambda_p, o.last_residual, NAN, o.final_sup);
                out.manifest.extra("periods", fmt(o.periods));
            }
        },
        c.outcome);
    out.files.emplace_back("kpp_summary.csv", summary.text());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Self-test: quick independent-oracle checks, one line each.

struct SelfCheck {
    std::string name;
    double value = 0.0;
    double limit = 0.0;
    bool pass = false;
};

inline std::vector<SelfCheck> run_selftest() {
    std::vector<SelfCheck> out;
    auto check = [&](const std::string& name, const std::function<double()>& f, double limit) {
        SelfCheck c{name, NAN, limit, false};
        try {
            c.value = f();
            c.pass = c.value <= limit;
        } catch (const std::exception& e) {
            c.name += " (" + std::string(e.what()) + ")";
        }
        out.push_back(c);
    };
    const Domain unit{0.0, 1.0};
    check("grid midpoint nodes", [&] {
        const Grid g = build_grid(unit, 4);
        const double want[] = {0.125, 0.375, 0.625, 0.875};
        double e = 0.0;
        for (int i = 0; i < 4; ++i) e = std::max(e, std::abs(g.nodes[static_cast<std::size_t>(i)] - want[i]));
        return e;
    }, 0.0);
    check("cosine kernel normalisation", [&] {
        const int m = 10000;
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += eval_kernel(CosineBump{}, -1.0 + (j + 0.5) * 2.0 / m) * 2.0 / m;
        return std::abs(s - 1.0);
    }, 1e-8);
    check("interior rowsum", [&] {
        const Grid g = build_grid(unit, 64);
        const auto k = assemble_kernel_matrix(g, Epanechnikov{}, 0.25);
        double e = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (g.nodes[i] >= 0.25 && g.nodes[i] <= 0.75) e = std::max(e, std::abs(k.rowsums(static_cast<long>(i)) - 1.0));
        return e;
    }, 1e-3);
    check("neumann generator kills constants", [&] {
        const auto cfg = make_operator(unit, 64, Epanechnikov{}, 0.25, Neumann{}, 1, 1, 0, constant_field(unit, 0.0));
        return apply_generator(cfg, 0.3, Vector::Constant(64, 2.5)).cwiseAbs().maxCoeff();
    }, 1e-14);
    check("diagonal monodromy vs exp(a/tau)", [&] {
        PeriodicField a{unit, terms({Term{1.0, XPow{1}}}), 0.0};
        auto cfg = make_operator(unit, 16, Epanechnikov{}, 0.25, Neumann{}, 1.0, 1.0, 0.0, a);
        cfg.mu = 1e-300;  // effectively no dispersal
        const Matrix phi = monodromy_dense(MonodromySpec{cfg, 64, Scheme::Exponential, true});
        double e = 0.0;
        for (long i = 0; i < 16; ++i) e = std::max(e, std::abs(phi(i, i) / std::exp(cfg.grid.nodes[static_cast<std::size_t>(i)]) - 1.0));
        return e;
    }, 1e-12);
    check("adjoint duality", [&] {
        PeriodicField a{unit, terms({Term{1.0, XCosPi{1}, TSin2Pi{1}}, Term{1.0, XPow{1}}}), 0.0};
        const auto cfg = make_operator(unit, 16, Epanechnikov{}, 0.25, Neumann{}, 1.0, 1.0, 0.0, a);
        const MonodromySpec spec{cfg, 64, Scheme::BackwardEuler, true};
        const Vector u = Vector::LinSpaced(16, 0.1, 1.0), w = Vector::LinSpaced(16, 1.0, 2.0).cwiseSqrt();
        return std::abs(monodromy_apply(spec, u).dot(w) - u.dot(adjoint_monodromy_apply(spec, w)));
    }, 1e-10);
    check("constant field lambda = -a0", [&] {
        ProblemSetup s;
        s.a = constant_field(unit, 1.0);
        s.n_t = 64;
        return std::abs(solve_floquet(s).result.lambda_p + 1.0);
    }, 1e-8);
    check("dense Floquet oracle", [&] {
        PeriodicField a{unit, terms({Term{0.7, XCosPi{1}, TSin2Pi{1}}, Term{0.4, XPow{2}}, Term{0.3, XSinPi{2}, TCos2Pi{1}}}), 0.0};
        ProblemSetup s;
        s.n = 16;
        s.n_t = 64;
        s.a = a;
        const double lam = solve_floquet(s, false).result.lambda_p;
        const Matrix phi = monodromy_dense(s.monodromy());
        const double rho = Eigen::EigenSolver<Matrix>(phi, false).eigenvalues().cwiseAbs().maxCoeff();
        return std::abs(lam + s.tau * std::log(rho));
    }, 1e-8);
    check("static Dirichlet vs dense", [&] {
        const auto cfg = make_operator(unit, 64, Epanechnikov{}, 0.25, Dirichlet{}, 1, 1, 0, constant_field(unit, 0.0));
        const double lam = static_principal(cfg, Vector::Zero(64)).lambda_p;
        const Eigen::SelfAdjointEigenSolver<Matrix> es(cfg.kmat->entries);
        return std::abs(lam - (1.0 - es.eigenvalues().maxCoeff()));
    }, 1e-10);
    check("time average of cos^2", [&] {
        PeriodicField a{unit, Product{terms({Term{1.0, XPow{1}}}), terms({Term{0.5}, Term{0.5, XOne{}, TCos2Pi{2}}})}, 0.0};
        const Grid g = build_grid(unit, 8);
        const Vector avg = time_average(a, g, 64).values;
        double e = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) e = std::max(e, std::abs(avg(static_cast<long>(i)) - g.nodes[i] / 2));
        return e;
    }, 1e-10);
    check("closed form vs shooting", [&] {
        const ScalarPeriodicODE ode{[](double t) { return 1.0 + 0.5 * std::sin(2 * std::numbers::pi * t); },
                                    [](double) { return 1.0; }, 1.0};
        const auto a = logistic_periodic_closed_form(ode, 2048), b = shooting_periodic(ode, 2048);
        double e = 0.0;
        for (std::size_t k = 0; k < a.v.size(); ++k) e = std::max(e, std::abs(a.v[k] - b.v[k]));
        return e;
    }, 1e-10);
    check("certificate brackets lambda", [&] {
        ProblemSetup s;
        s.n = 16;
        s.n_t = 64;
        s.a = PeriodicField{unit, terms({Term{1.0, XCosPi{1}, TSin2Pi{1}}, Term{1.0, XPow{1}}}), 0.0};
        const Propagator prop(s.monodromy());
        const auto r = principal_floquet(prop);
        const auto wide = certify(prop, r, 10 * r.residual), narrow = certify(prop, r, r.residual / 100);
        return (wide.sup_ok && wide.inf_ok && !(narrow.sup_ok && narrow.inf_ok)) ? 0.0 : 1.0;
    }, 0.0);
    check("kpp equilibrium", [&] {
        ProblemSetup s;
        s.a = constant_field(unit, 0.7);
        s.n = 16;
        s.n_t = 256;
        const auto p = make_kpp_problem(s, constant_field(unit, 1.0));
        return (evolve(p, Vector::Constant(16, 0.7), 2).end.array() - 0.7).abs().maxCoeff();
    }, 1e-10);
    return out;
}

// ---------------------------------------------------------------------------

inline int run(const std::string& sub, const std::optional<RunConfig>& rc, const RunOptions& opt) {
    RunOutput out;
    out.manifest.set("tool", "pne");
    out.manifest.set("version", PNE_VERSION);
    out.manifest.set("subcommand", sub);
    if (rc) out.manifest.config(rc->echo);
    auto finish = [&](int status, const std::string& message) {
        out.manifest.set("status", status == 0 ? "ok" : "exit " + std::to_string(status));
        if (!message.empty()) out.manifest.set("message", message);
        for (const auto& [name, content] : out.files) {
            atomic_write(opt.out_dir / name, content);
            out.manifest.file(name, content);
        }
        atomic_write(opt.out_dir / "manifest.txt", out.manifest.text());
        return status;
    };
    try {
        if (sub == "selftest") {
            const auto t0 = std::chrono::steady_clock::now();
            const auto checks = run_selftest();
            out.manifest.timing("selftest", detail::ms_since(t0));
            Csv csv({"check", "status", "value", "limit"});
            bool all = true;
            for (const auto& c : checks) {
                csv.row(c.name, c.pass ? "pass" : "FAIL", c.value, c.limit);
                if (!opt.quiet) std::cout << (c.pass ? "pass  " : "FAIL  ") << c.name << "  (" << fmt(c.value) << " <= " << fmt(c.limit) << ")\n";
                all = all && c.pass;
            }
            out.files.emplace_back("selftest.csv", csv.text());
            return finish(all ? 0 : exit_code(ErrorKind::InternalError), all ? "" : "selftest failures");
        }
        require(rc.has_value() || sub == "kpp", ErrorKind::InvalidConfig, sub + " needs --config");
        const RunConfig cfg = rc ? *rc : parse_config("");
        if (sub == "eig") detail::run_eig(cfg, opt, out);
        else if (sub == "static-eig") detail::run_static(cfg, opt, out);
        else if (sub == "sweep") detail::run_sweep(cfg, opt, out);
        else if (sub == "limits") detail::run_limits(cfg, opt, out);
        else if (sub == "kpp") detail::run_kpp(cfg, opt, out);
        else fail(ErrorKind::InvalidConfig, "unknown subcommand '" + sub + "'");
        if (!opt.quiet)
            for (const auto& [name, content] : out.files)
                if (name != "eigenfunction.csv" && name != "orbit.csv") std::cout << content;
        return finish(out.status, "");
    } catch (const Error& e) {
        std::cerr << "pne: " << e.what() << "\n";
        out.files.clear();
        return finish(exit_code(e.kind()), e.what());
    } catch (const std::exception& e) {
        std::cerr << "pne: internal error: " << e.what() << "\n";
        out.files.clear();
        return finish(exit_code(ErrorKind::InternalError), e.what());
    }
}

}  // namespace pne
