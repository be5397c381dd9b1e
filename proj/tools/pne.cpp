// pne: principal Floquet eigenvalues of time-periodic nonlocal dispersal operators.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pne/run.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Principal Floquet eigenvalues for time-periodic nonlocal dispersal"};
    app.set_version_flag("--version", std::string(PNE_VERSION));
    app.require_subcommand(1, 1);

    std::string config_path;
    pne::RunOptions opt;
    std::string out_dir = opt.out_dir.string();

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("-c,--config", config_path, "config file ([section] / key = value)");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        else c->check(CLI::ExistingFile);
        sub->add_option("-o,--out", out_dir, "output directory")->capture_default_str();
        sub->add_flag("-q,--quiet", opt.quiet, "do not echo CSV results to stdout");
    };

    auto* eig = app.add_subcommand("eig", "principal Floquet eigenvalue of the periodic problem");
    common(eig, true);
    eig->add_flag("--snapshots", opt.snapshots, "write eigenfunction.csv (t,x,phi,psi)");
    eig->add_option("--stride", opt.snapshot_stride, "time stride for snapshot rows")->check(CLI::PositiveNumber);

    auto* st = app.add_subcommand("static-eig", "principal eigenvalue of the time-averaged (or frozen) operator");
    common(st, true);
    st->add_flag("--snapshots", opt.snapshots, "write eigenfunction.csv");
    double at = 0.0;
    auto* at_opt = st->add_option("--at", at, "freeze a(., t) at this t instead of time-averaging");

    auto* sw = app.add_subcommand("sweep", "lambda_p along a [sweep] parameter list");
    common(sw, true);
    sw->add_flag("--timings", opt.timings, "fill the wall_ms column (breaks byte-identical reruns)");

    auto* lim = app.add_subcommand("limits", "compare lambda_p with its asymptotic predictions");
    common(lim, true);
    lim->add_option("--max-nodes", opt.max_nodes, "node cap for the small-sigma run")->capture_default_str();
    lim->add_option("--outer-samples", opt.n_t_outer, "time samples for the frozen-time integral")->capture_default_str();

    auto* kpp = app.add_subcommand("kpp", "persistence/extinction via Poincare iteration");
    common(kpp, false);
    kpp->add_option("--scenario", opt.scenario, "built-in scenario name instead of a config");
    int periods = 0;
    double tol = 0.0;
    auto* per_opt = kpp->add_option("--periods", periods, "maximum Poincare periods");
    auto* tol_opt = kpp->add_option("--tol", tol, "Poincare tolerance");
    kpp->add_option("--stride", opt.snapshot_stride, "time stride for orbit rows")->check(CLI::PositiveNumber);
    bool list = false;
    kpp->add_flag("--list", list, "list built-in scenarios and exit");

    auto* self = app.add_subcommand("selftest", "quick oracle checks");
    self->add_option("-o,--out", out_dir, "output directory")->capture_default_str();
    self->add_flag("-q,--quiet", opt.quiet, "only report through the exit code");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    if (list) {
        for (const auto& s : pne::kpp_scenarios()) std::cout << s.name << "  " << s.description << "\n";
        return 0;
    }
    const std::string sub = app.get_subcommands().front()->get_name();
    opt.out_dir = out_dir;
    if (*at_opt) opt.frozen_t = at;
    if (*per_opt) opt.periods = periods;
    if (*tol_opt) opt.tol = tol;

    std::optional<pne::RunConfig> rc;
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            rc = pne::parse_config(ss.str());
        } catch (const pne::Error& e) {
            std::cerr << "pne: " << config_path << ": " << e.what() << "\n";
            return pne::exit_code(e.kind());
        } catch (const std::exception& e) {
            std::cerr << "pne: internal error: " << e.what() << "\n";
            return 3;
        }
    }
    try {
        return pne::run(sub, rc, opt);
    } catch (const std::exception& e) {
        std::cerr << "pne: internal error: " << e.what() << "\n";
        return 3;
    }
}
