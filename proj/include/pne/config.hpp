#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pne/asymptotics.hpp"

namespace pne {

// ---------------------------------------------------------------------------
// Line-based "[section]" / "key = value" format. '#' starts a comment.

struct ConfigEntry {
    std::string value;
    int line = 0;
};

struct RawConfig {
    // section -> key -> entry; order of appearance kept separately for echoing
    std::map<std::string, std::map<std::string, ConfigEntry>> sections;
    std::vector<std::pair<std::string, std::string>> order;

    const ConfigEntry* find(const std::string& section, const std::string& key) const {
        auto s = sections.find(section);
        if (s == sections.end()) return nullptr;
        auto k = s->second.find(key);
        return k == s->second.end() ? nullptr : &k->second;
    }
    bool has_section(const std::string& section) const { return sections.count(section) > 0; }
};

inline const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"domain", {"lo", "hi", "n"}},
        {"kernel", {"shape", "sigma", "samples", "normalization"}},
        {"operator", {"tau", "mu", "m", "boundary", "h", "h_bound", "h_limit"}},
        {"coefficient", {"form", "terms", "profile", "signal", "x", "t_samples", "values"}},
        {"solver", {"n_t", "scheme", "tol", "max_iters", "check_positivity"}},
        {"kpp", {"growth", "crowding", "periods", "tol"}},
        {"sweep", {"parameter", "values", "from", "to", "count"}},
    };
    return keys;
}

[[noreturn]] inline void config_error(int line, const std::string& msg) {
    fail(ErrorKind::InvalidConfig, (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + msg);
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline RawConfig parse_raw_config(const std::string& text) {
    RawConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') config_error(line_no, "malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            if (!known_keys().count(section)) config_error(line_no, "unknown section [" + section + "]");
            cfg.sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) config_error(line_no, "expected 'key = value', got '" + line + "'");
        if (section.empty()) config_error(line_no, "key outside of any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!known_keys().at(section).count(key))
            config_error(line_no, "unknown key '" + key + "' in [" + section + "]");
        if (value.empty()) config_error(line_no, "empty value for '" + key + "'");
        auto& sec = cfg.sections[section];
        if (sec.count(key)) config_error(line_no, "duplicate key '" + key + "' in [" + section + "]");
        sec[key] = ConfigEntry{value, line_no};
        cfg.order.emplace_back(section, key);
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Typed access.

inline double parse_double(const std::string& s, const std::string& key, int line) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
        config_error(line, "'" + key + "' expects a real number, got '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s, const std::string& key, int line) {
    long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        config_error(line, "'" + key + "' expects an integer, got '" + s + "'");
    return v;
}

inline std::vector<double> parse_list(const std::string& s, const std::string& key, int line) {
    std::vector<double> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) config_error(line, "empty item in list '" + key + "'");
        out.push_back(parse_double(t, key, line));
    }
    if (out.empty()) config_error(line, "'" + key + "' expects a comma-separated list");
    return out;
}

class SectionReader {
public:
    SectionReader(const RawConfig& raw, std::string section) : raw_(raw), section_(std::move(section)) {}

    const ConfigEntry* entry(const std::string& key) const { return raw_.find(section_, key); }
    int line(const std::string& key) const {
        const auto* e = entry(key);
        return e ? e->line : 0;
    }
    std::string str(const std::string& key, const std::string& def) const {
        const auto* e = entry(key);
        return e ? e->value : def;
    }
    double real(const std::string& key, double def) const {
        const auto* e = entry(key);
        return e ? parse_double(e->value, key, e->line) : def;
    }
    double positive(const std::string& key, double def) const {
        const double v = real(key, def);
        if (!(v > 0.0)) config_error(line(key), "'" + key + "' must be > 0, got " + str(key, std::to_string(def)));
        return v;
    }
    long integer(const std::string& key, long def) const {
        const auto* e = entry(key);
        return e ? parse_long(e->value, key, e->line) : def;
    }
    std::vector<double> list(const std::string& key) const {
        const auto* e = entry(key);
        if (!e) config_error(0, "missing '" + key + "' in [" + section_ + "]");
        return parse_list(e->value, key, e->line);
    }
    bool boolean(const std::string& key, bool def) const {
        const auto* e = entry(key);
        if (!e) return def;
        if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
        if (e->value == "false" || e->value == "0" || e->value == "no") return false;
        config_error(e->line, "'" + key + "' expects true or false, got '" + e->value + "'");
    }

private:
    const RawConfig& raw_;
    std::string section_;
};

// ---------------------------------------------------------------------------
// Closed-form field terms: "coef*xbasis*tbasis; ..." where any factor may be
// omitted. x-bases: x, x^p, cospi(k), sinpi(k), gauss(c,w). t-bases:
// sin2pi(k), cos2pi(k).

inline Term parse_term(const std::string& text, int line) {
    Term term;
    bool have_x = false, have_t = false;
    std::string factor;
    std::istringstream in(text);
    auto arg_of = [&](const std::string& f, const std::string& name) -> std::optional<std::string> {
        if (f.rfind(name + "(", 0) != 0 || f.back() != ')') return std::nullopt;
        return f.substr(name.size() + 1, f.size() - name.size() - 2);
    };
    while (std::getline(in, factor, '*')) {
        const std::string f = trim(factor);
        if (f.empty()) config_error(line, "empty factor in term '" + text + "'");
        auto set_x = [&](XBasis b) {
            if (have_x) config_error(line, "term '" + text + "' has two x factors");
            term.x = b;
            have_x = true;
        };
        auto set_t = [&](TBasis b) {
            if (have_t) config_error(line, "term '" + text + "' has two t factors");
            term.t = b;
            have_t = true;
        };
        if (f == "one") continue;
        if (f == "x") set_x(XPow{1});
        else if (f.rfind("x^", 0) == 0) set_x(XPow{static_cast<int>(parse_long(f.substr(2), "x^p", line))});
        else if (auto a = arg_of(f, "cospi")) set_x(XCosPi{parse_double(trim(*a), "cospi", line)});
        else if (auto a2 = arg_of(f, "sinpi")) set_x(XSinPi{parse_double(trim(*a2), "sinpi", line)});
        else if (auto a3 = arg_of(f, "gauss")) {
            const auto args = parse_list(*a3, "gauss", line);
            if (args.size() != 2 || !(args[1] > 0.0)) config_error(line, "gauss(c, w) needs two arguments, w > 0");
            set_x(XGauss{args[0], args[1]});
        } else if (auto a4 = arg_of(f, "sin2pi")) set_t(TSin2Pi{static_cast<int>(parse_long(trim(*a4), "sin2pi", line))});
        else if (auto a5 = arg_of(f, "cos2pi")) set_t(TCos2Pi{static_cast<int>(parse_long(trim(*a5), "cos2pi", line))});
        else term.coef *= parse_double(f, "coefficient", line);
    }
    return term;
}

inline Expression parse_terms(const std::string& text, int line) {
    Expression e;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ';')) {
        const std::string t = trim(item);
        if (t.empty()) config_error(line, "empty term in '" + text + "'");
        e.terms.push_back(parse_term(t, line));
    }
    if (e.terms.empty()) config_error(line, "no terms in '" + text + "'");
    return e;
}

inline PeriodicField parse_field(const RawConfig& raw, const Domain& domain) {
    const SectionReader r(raw, "coefficient");
    const std::string form = r.str("form", "expression");
    PeriodicField f;
    f.domain = domain;
    auto need = [&](const std::string& key) {
        if (!r.entry(key)) config_error(r.line("form"), "form = " + form + " needs '" + key + "'");
        return *r.entry(key);
    };
    auto only_for = [&](std::initializer_list<const char*> allowed) {
        for (const auto& [key, e] : raw.sections.count("coefficient") ? raw.sections.at("coefficient")
                                                                       : std::map<std::string, ConfigEntry>{}) {
            if (key == "form") continue;
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
                config_error(e.line, "key '" + key + "' is not used by form = " + form);
        }
    };
    if (form == "expression") {
        only_for({"terms"});
        const auto* e = r.entry("terms");
        f.form = e ? parse_terms(e->value, e->line) : Expression{{Term{0.0, XOne{}, TOne{}}}};
    } else if (form == "separable" || form == "product") {
        only_for({"profile", "signal"});
        const auto p = need("profile");
        const auto s = need("signal");
        Expression profile = parse_terms(p.value, p.line), signal = parse_terms(s.value, s.line);
        if (profile.depends_on_t()) config_error(p.line, "profile must not depend on t");
        if (signal.depends_on_x()) config_error(s.line, "signal must not depend on x");
        if (form == "separable") f.form = Separable{profile, signal};
        else f.form = Product{profile, signal};
    } else if (form == "tabulated") {
        only_for({"x", "t_samples", "values"});
        Tabulated tab;
        const auto xe = need("x");
        tab.xs = parse_list(xe.value, "x", xe.line);
        const auto te = need("t_samples");
        tab.n_t = static_cast<int>(parse_long(te.value, "t_samples", te.line));
        if (tab.n_t < 1) config_error(te.line, "t_samples must be >= 1");
        const auto ve = need("values");
        tab.values = parse_list(ve.value, "values", ve.line);
        for (std::size_t i = 1; i < tab.xs.size(); ++i)
            if (!(tab.xs[i] > tab.xs[i - 1])) config_error(xe.line, "tabulated x nodes must increase");
        if (tab.values.size() != tab.xs.size() * static_cast<std::size_t>(tab.n_t))
            config_error(ve.line, "tabulated field needs len(x) * t_samples = " +
                                      std::to_string(tab.xs.size() * static_cast<std::size_t>(tab.n_t)) + " values, got " +
                                      std::to_string(tab.values.size()));
        f.form = std::move(tab);
    } else {
        config_error(r.line("form"), "form must be separable|product|tabulated|expression, got '" + form + "'");
    }
    return f;
}

// ---------------------------------------------------------------------------

struct KppSection {
    bool present = false;
    std::optional<PeriodicField> growth;  // replaces [coefficient] when given
    PeriodicField crowding;
    int periods = constants::kMaxPeriods;
    double tol = constants::kPoincareTol;
};

struct SweepSection {
    bool present = false;
    SweepParameter parameter = SweepParameter::Tau;
    std::vector<double> values;
};

struct RunConfig {
    ProblemSetup setup;
    bool check_positivity = true;
    KppSection kpp;
    SweepSection sweep;
    std::vector<std::pair<std::string, std::string>> echo;  // "section.key", value in file order
};

inline RunConfig parse_config(const std::string& text) {
    const RawConfig raw = parse_raw_config(text);
    RunConfig rc;
    ProblemSetup& s = rc.setup;
    for (const auto& [sec, key] : raw.order) rc.echo.emplace_back(sec + "." + key, raw.find(sec, key)->value);

    const SectionReader dom(raw, "domain");
    s.domain = Domain{dom.real("lo", 0.0), dom.real("hi", 1.0)};
    if (!(s.domain.hi > s.domain.lo)) config_error(dom.line("hi"), "domain needs hi > lo");
    s.n = dom.integer("n", 64);
    if (s.n < 2) config_error(dom.line("n"), "'n' must be >= 2, got " + std::to_string(s.n));

    const SectionReader ker(raw, "kernel");
    const std::string shape = ker.str("shape", "epanechnikov");
    if (shape == "epanechnikov") s.shape = Epanechnikov{};
    else if (shape == "triangle") s.shape = Triangle{};
    else if (shape == "cosine") s.shape = CosineBump{};
    else if (shape == "tabulated") {
        TabulatedKernel tk;
        tk.samples = ker.list("samples");
        tk.normalization = ker.entry("normalization") ? ker.positive("normalization", 1.0)
                                                      : TabulatedKernel::exact_integral(tk.samples);
        try {
            validate(KernelShape{tk});
        } catch (const Error& e) {
            config_error(ker.line("samples"), e.what());
        }
        s.shape = std::move(tk);
    } else {
        config_error(ker.line("shape"), "shape must be epanechnikov|triangle|cosine|tabulated, got '" + shape + "'");
    }
    if (shape != "tabulated" && (ker.entry("samples") || ker.entry("normalization")))
        config_error(std::max(ker.line("samples"), ker.line("normalization")), "samples/normalization only apply to shape = tabulated");
    s.sigma = ker.positive("sigma", 0.25);

    const SectionReader op(raw, "operator");
    s.tau = op.positive("tau", 1.0);
    s.mu = op.positive("mu", 1.0);
    s.m = op.real("m", 0.0);
    if (s.m < 0.0) config_error(op.line("m"), "'m' must be >= 0");
    const std::string bc = op.str("boundary", "neumann");
    if (bc == "neumann") s.boundary = Neumann{};
    else if (bc == "dirichlet") s.boundary = Dirichlet{};
    else if (bc == "custom") {
        CustomBoundary cb;
        cb.values = op.list("h");
        cb.bound = op.positive("h_bound", 1.0);
        cb.limit_constant = op.real("h_limit", 0.0);
        if (static_cast<long>(cb.values.size()) != s.n)
            config_error(op.line("h"), "custom h has " + std::to_string(cb.values.size()) + " entries, n = " + std::to_string(s.n));
        for (double v : cb.values)
            if (std::abs(v) > cb.bound) config_error(op.line("h"), "custom h exceeds h_bound = " + std::to_string(cb.bound));
        s.boundary = std::move(cb);
    } else {
        config_error(op.line("boundary"), "boundary must be neumann|dirichlet|custom, got '" + bc + "'");
    }
    if (bc != "custom" && (op.entry("h") || op.entry("h_bound") || op.entry("h_limit")))
        config_error(std::max({op.line("h"), op.line("h_bound"), op.line("h_limit")}), "h, h_bound, h_limit only apply to boundary = custom");

    s.a = parse_field(raw, s.domain);
    try {
        validate(s.a);
    } catch (const Error& e) {
        config_error(raw.find("coefficient", "form") ? raw.find("coefficient", "form")->line : 0, e.what());
    }

    const SectionReader sol(raw, "solver");
    const long n_t = sol.integer("n_t", 2048);
    if (n_t < constants::kMinStepsPerPeriod)
        config_error(sol.line("n_t"), "'n_t' must be >= " + std::to_string(constants::kMinStepsPerPeriod) + ", got " + std::to_string(n_t));
    if (n_t % 2) config_error(sol.line("n_t"), "'n_t' must be even (Simpson time averages)");
    s.n_t = static_cast<int>(n_t);
    const std::string scheme = sol.str("scheme", "expm");
    if (scheme == "expm") s.scheme = Scheme::Exponential;
    else if (scheme == "be") s.scheme = Scheme::BackwardEuler;
    else if (scheme == "be2") s.scheme = Scheme::BERichardson;
    else config_error(sol.line("scheme"), "scheme must be expm|be|be2, got '" + scheme + "'");
    s.tol = sol.positive("tol", constants::kDefaultTol);
    s.max_iters = static_cast<int>(sol.integer("max_iters", constants::kDefaultMaxIters));
    if (s.max_iters < 1) config_error(sol.line("max_iters"), "'max_iters' must be >= 1");
    rc.check_positivity = sol.boolean("check_positivity", true);

    // Resolution guard, reported against the line that set n (or sigma).
    if (s.domain.length() / static_cast<double>(s.n) > s.sigma / constants::kResolutionRatio * (1.0 + 1e-12)) {
        const int line = dom.entry("n") ? dom.line("n") : ker.line("sigma");
        config_error(line, "grid spacing " + std::to_string(s.domain.length() / s.n) + " exceeds sigma/4 = " +
                               std::to_string(s.sigma / constants::kResolutionRatio) + "; smallest valid n is " +
                               std::to_string(min_nodes_for(s.domain, s.sigma)));
    }

    if (raw.has_section("kpp")) {
        const SectionReader k(raw, "kpp");
        rc.kpp.present = true;
        if (const auto* g = k.entry("growth")) rc.kpp.growth = PeriodicField{s.domain, parse_terms(g->value, g->line), 0.0};
        const auto* c = k.entry("crowding");
        rc.kpp.crowding = c ? PeriodicField{s.domain, parse_terms(c->value, c->line), 0.0} : constant_field(s.domain, 1.0);
        rc.kpp.periods = static_cast<int>(k.integer("periods", constants::kMaxPeriods));
        if (rc.kpp.periods < 1) config_error(k.line("periods"), "'periods' must be >= 1");
        rc.kpp.tol = k.positive("tol", constants::kPoincareTol);
        if (rc.kpp.growth) s.a = *rc.kpp.growth;
    }

    if (raw.has_section("sweep")) {
        const SectionReader w(raw, "sweep");
        rc.sweep.present = true;
        const std::string p = w.str("parameter", "tau");
        if (p == "tau") rc.sweep.parameter = SweepParameter::Tau;
        else if (p == "mu") rc.sweep.parameter = SweepParameter::Mu;
        else if (p == "sigma") rc.sweep.parameter = SweepParameter::Sigma;
        else config_error(w.line("parameter"), "parameter must be tau|mu|sigma, got '" + p + "'");
        if (w.entry("values")) {
            if (w.entry("from") || w.entry("to") || w.entry("count"))
                config_error(w.line("values"), "give either 'values' or 'from'/'to'/'count', not both");
            rc.sweep.values = w.list("values");
        } else {
            const double lo = w.positive("from", 0.01), hi = w.positive("to", 100.0);
            const long count = w.integer("count", 20);
            if (count < 1) config_error(w.line("count"), "'count' must be >= 1");
            if (!(hi > lo) && count > 1) config_error(w.line("to"), "'to' must exceed 'from'");
            rc.sweep.values = log_spaced(lo, hi, static_cast<int>(count));
        }
        for (std::size_t i = 0; i < rc.sweep.values.size(); ++i) {
            if (!(rc.sweep.values[i] > 0.0)) config_error(w.line("values"), "sweep values must be > 0");
            if (i > 0 && !(rc.sweep.values[i] > rc.sweep.values[i - 1]))
                config_error(w.line("values"), "sweep values must increase strictly");
        }
    }
    return rc;
}

}  // namespace pne
