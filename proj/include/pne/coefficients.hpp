#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pne/grid_kernel.hpp"

namespace pne {

// ---------------------------------------------------------------------------
// Basis functions for closed-form fields. x-bases act on the raw coordinate,
// t-bases are 1-periodic.

struct XOne {};
struct XPow { int p = 1; };
struct XCosPi { double k = 1; };  // cos(k pi x)
struct XSinPi { double k = 1; };  // sin(k pi x)
struct XGauss { double center = 0; double width = 1; };  // exp(-((x-c)/w)^2)
using XBasis = std::variant<XOne, XPow, XCosPi, XSinPi, XGauss>;

struct TOne {};
struct TSin2Pi { int k = 1; };  // sin(2 pi k t)
struct TCos2Pi { int k = 1; };  // cos(2 pi k t)
using TBasis = std::variant<TOne, TSin2Pi, TCos2Pi>;

inline double eval_basis(const XBasis& b, double x) {
    return std::visit(
        [x](const auto& f) -> double {
            using F = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<F, XOne>) return 1.0;
            else if constexpr (std::is_same_v<F, XPow>) return std::pow(x, f.p);
            else if constexpr (std::is_same_v<F, XCosPi>) return std::cos(f.k * std::numbers::pi * x);
            else if constexpr (std::is_same_v<F, XSinPi>) return std::sin(f.k * std::numbers::pi * x);
            else {
                const double z = (x - f.center) / f.width;
                return std::exp(-z * z);
            }
        },
        b);
}

inline double eval_basis(const TBasis& b, double t) {
    return std::visit(
        [t](const auto& f) -> double {
            using F = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<F, TOne>) return 1.0;
            else if constexpr (std::is_same_v<F, TSin2Pi>) return std::sin(2.0 * std::numbers::pi * f.k * t);
            else return std::cos(2.0 * std::numbers::pi * f.k * t);
        },
        b);
}

struct Term {
    double coef = 1.0;
    XBasis x = XOne{};
    TBasis t = TOne{};
};

/// Sum of coef * X(x) * T(t) terms.
struct Expression {
    std::vector<Term> terms;

    double operator()(double x, double t) const {
        double s = 0.0;
        for (const auto& term : terms) s += term.coef * eval_basis(term.x, x) * eval_basis(term.t, t);
        return s;
    }
    bool depends_on_t() const {
        return std::any_of(terms.begin(), terms.end(), [](const Term& term) { return term.t.index() != 0; });
    }
    bool depends_on_x() const {
        return std::any_of(terms.begin(), terms.end(), [](const Term& term) { return term.x.index() != 0; });
    }
};

struct Separable {
    Expression profile;  // x only
    Expression signal;   // t only
};

struct Product {
    Expression profile;  // x only
    Expression signal;   // t only
};

/// Samples on x-nodes (increasing) times t_k = k/n_t, k < n_t. Linear
/// interpolation in both directions, periodic in t, clamped in x.
struct Tabulated {
    std::vector<double> xs;
    int n_t = 0;
    std::vector<double> values;  // values[i * n_t + k]

    double at(std::size_t i, int k) const { return values[i * static_cast<std::size_t>(n_t) + static_cast<std::size_t>(k)]; }
};

using FieldForm = std::variant<Separable, Product, Tabulated, Expression>;

inline double reduce_period(double t) { return t - std::floor(t); }

struct PeriodicField {
    Domain domain;
    FieldForm form = Expression{};
    double offset = 0.0;  // constant added after evaluation

    bool time_independent() const {
        return std::visit(
            [](const auto& f) -> bool {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, Expression>) return !f.depends_on_t();
                else if constexpr (std::is_same_v<F, Tabulated>) {
                    for (std::size_t i = 0; i < f.xs.size(); ++i)
                        for (int k = 1; k < f.n_t; ++k)
                            if (f.at(i, k) != f.at(i, 0)) return false;
                    return true;
                } else return !f.signal.depends_on_t();
            },
            form);
    }

    bool space_independent() const {
        return std::visit(
            [](const auto& f) -> bool {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, Expression>) return !f.depends_on_x();
                else if constexpr (std::is_same_v<F, Tabulated>) {
                    for (std::size_t i = 1; i < f.xs.size(); ++i)
                        for (int k = 0; k < f.n_t; ++k)
                            if (f.at(i, k) != f.at(0, k)) return false;
                    return true;
                } else return !f.profile.depends_on_x();
            },
            form);
    }
};

inline PeriodicField shifted(PeriodicField f, double c) {
    f.offset += c;
    return f;
}

inline PeriodicField constant_field(const Domain& d, double c) {
    return PeriodicField{d, Expression{{Term{c, XOne{}, TOne{}}}}, 0.0};
}

inline void validate(const PeriodicField& f) {
    validate(f.domain);
    std::visit(
        [](const auto& g) {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Separable> || std::is_same_v<F, Product>) {
                require(!g.profile.depends_on_t(), ErrorKind::InvalidConfig, "field profile must not depend on t");
                require(!g.signal.depends_on_x(), ErrorKind::InvalidConfig, "field signal must not depend on x");
            } else if constexpr (std::is_same_v<F, Tabulated>) {
                require(!g.xs.empty() && g.n_t >= 1, ErrorKind::InvalidConfig, "tabulated field is empty");
                require(g.values.size() == g.xs.size() * static_cast<std::size_t>(g.n_t), ErrorKind::InvalidConfig,
                        "tabulated field needs len(x) * n_t values");
                for (std::size_t i = 1; i < g.xs.size(); ++i)
                    require(g.xs[i] > g.xs[i - 1], ErrorKind::InvalidConfig, "tabulated x nodes must increase");
                for (double v : g.values) require(std::isfinite(v), ErrorKind::InvalidConfig, "tabulated value not finite");
            }
        },
        f.form);
}

inline double eval_tabulated(const Tabulated& tab, double x, double t) {
    const double pos = t * tab.n_t;
    int k0 = static_cast<int>(std::floor(pos));
    const double ft = pos - k0;
    k0 %= tab.n_t;
    const int k1 = (k0 + 1) % tab.n_t;
    auto in_t = [&](std::size_t i) { return ft == 0.0 ? tab.at(i, k0) : (1.0 - ft) * tab.at(i, k0) + ft * tab.at(i, k1); };
    const auto& xs = tab.xs;
    if (xs.size() == 1 || x <= xs.front()) return in_t(0);
    if (x >= xs.back()) return in_t(xs.size() - 1);
    const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
    const std::size_t lo = hi - 1;
    const double fx = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return fx == 0.0 ? in_t(lo) : (1.0 - fx) * in_t(lo) + fx * in_t(hi);
}

/// a(x, t mod 1). No domain check; callers on grid nodes use this directly.
inline double eval_field_unchecked(const PeriodicField& f, double x, double t) {
    const double s = reduce_period(t);
    const double v = std::visit(
        [x, s](const auto& g) -> double {
            using F = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<F, Separable>) return g.profile(x, 0.0) + g.signal(0.0, s);
            else if constexpr (std::is_same_v<F, Product>) return g.profile(x, 0.0) * g.signal(0.0, s);
            else if constexpr (std::is_same_v<F, Tabulated>) return eval_tabulated(g, x, s);
            else return g(x, s);
        },
        f.form);
    return f.offset == 0.0 ? v : v + f.offset;
}

inline double eval_field(const PeriodicField& f, double x, double t) {
    if (!f.domain.contains(x))
        fail(ErrorKind::DomainError, "x = " + std::to_string(x) + " outside [" + std::to_string(f.domain.lo) + ", " +
                                         std::to_string(f.domain.hi) + "]");
    return eval_field_unchecked(f, x, t);
}

inline Vector sample_field(const PeriodicField& f, const Grid& grid, double t) {
    Vector v(static_cast<long>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) v(static_cast<long>(i)) = eval_field_unchecked(f, grid.nodes[i], t);
    return v;
}

/// Tabulate an arbitrary field on grid nodes times k/n_t.
inline Tabulated tabulate(const PeriodicField& f, const Grid& grid, int n_t) {
    Tabulated tab;
    tab.xs = grid.nodes;
    tab.n_t = n_t;
    tab.values.resize(grid.size() * static_cast<std::size_t>(n_t));
    for (std::size_t i = 0; i < grid.size(); ++i)
        for (int k = 0; k < n_t; ++k)
            tab.values[i * static_cast<std::size_t>(n_t) + static_cast<std::size_t>(k)] =
                eval_field_unchecked(f, grid.nodes[i], static_cast<double>(k) / n_t);
    return tab;
}

// ---------------------------------------------------------------------------

/// Composite Simpson weights on n+1 uniform points over [0, 1]; n even.
inline std::vector<double> simpson_weights(int n) {
    require(n >= 2 && n % 2 == 0, ErrorKind::InvalidConfig, "Simpson rule needs an even number of intervals");
    std::vector<double> w(static_cast<std::size_t>(n) + 1);
    const double h = 1.0 / n;
    for (int k = 0; k <= n; ++k) w[static_cast<std::size_t>(k)] = h / 3.0 * ((k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0));
    return w;
}

struct TimeAverage {
    Vector values;
    int n_t = 0;
};

/// Simpson average of a(x_i, .). Computed as a(x_i, 0) plus the average of the
/// deviation, so t-independent fields come back bit-exact.
inline TimeAverage time_average(const PeriodicField& field, const Grid& grid, int n_t) {
    require(n_t >= 4 && n_t % 2 == 0, ErrorKind::InvalidConfig,
            "time_average needs even n_t >= 4 (got " + std::to_string(n_t) + ")");
    const auto w = simpson_weights(n_t);
    const Vector base = sample_field(field, grid, 0.0);
    Vector dev = Vector::Zero(base.size());
    for (int k = 1; k <= n_t; ++k) dev += w[static_cast<std::size_t>(k)] * (sample_field(field, grid, static_cast<double>(k) / n_t) - base);
    return TimeAverage{base + dev, n_t};
}

inline double quadrature_mean(const Vector& v, const Grid& grid) {
    double s = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) s += grid.weights[i] * v(static_cast<long>(i));
    return s / grid.domain.length();
}

// ---------------------------------------------------------------------------
// Logistic KPP nonlinearity f(x,t,u) = u (a - b u).

struct KppNonlinearity {
    PeriodicField a;  // growth, equals f_u(x,t,0)
    PeriodicField b;  // crowding
};

inline double eval_kpp(const KppNonlinearity& f, double x, double t, double u) {
    return u * (eval_field(f.a, x, t) - eval_field(f.b, x, t) * u);
}

struct KppValidation {
    double min_b = 0.0;
    double max_a = 0.0;
    double m_f = 0.0;  // max(max a, 0) / min b
    bool zero_at_origin = true;
    bool ratio_decreasing = true;
    bool nonpositive_above_mf = true;

    bool passes() const { return min_b > 0.0 && zero_at_origin && ratio_decreasing && nonpositive_above_mf; }
};

inline KppValidation validate_kpp(const KppNonlinearity& f, const Grid& grid, int n_t) {
    require(n_t >= 1, ErrorKind::InvalidConfig, "validate_kpp needs n_t >= 1");
    KppValidation rep;
    rep.min_b = INFINITY;
    rep.max_a = -INFINITY;
    for (int k = 0; k < n_t; ++k) {
        const double t = static_cast<double>(k) / n_t;
        for (double x : grid.nodes) {
            const double bv = eval_field(f.b, x, t);
            if (!(bv > 0.0)) {
                std::ostringstream os;
                os << "crowding b = " << bv << " <= 0 at x = " << x << ", t = " << t;
                fail(ErrorKind::InvalidNonlinearity, os.str());
            }
            rep.min_b = std::min(rep.min_b, bv);
            rep.max_a = std::max(rep.max_a, eval_field(f.a, x, t));
        }
    }
    rep.m_f = std::max(rep.max_a, 0.0) / rep.min_b;
    // Structural checks sampled on the same points.
    const double probes[] = {0.25, 0.5, 1.0, 2.0, 4.0};
    for (int k = 0; k < n_t; ++k) {
        const double t = static_cast<double>(k) / n_t;
        for (double x : grid.nodes) {
            if (eval_kpp(f, x, t, 0.0) != 0.0) rep.zero_at_origin = false;
            double prev = INFINITY;
            for (double s : probes) {
                const double u = s * std::max(rep.m_f, 1.0);
                const double ratio = eval_kpp(f, x, t, u) / u;
                if (!(ratio < prev)) rep.ratio_decreasing = false;
                prev = ratio;
                if (u >= rep.m_f && eval_kpp(f, x, t, u) > 0.0) rep.nonpositive_above_mf = false;
            }
        }
    }
    return rep;
}

}  // namespace pne
