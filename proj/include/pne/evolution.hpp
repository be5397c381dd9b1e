#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "pne/coefficients.hpp"
#include "pne/constants.hpp"
#include "pne/grid_kernel.hpp"

namespace pne {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Everything that defines tau v_t = A(t) v with
/// A(t) = (mu / sigma^m)(K - diag h) + diag a(., t).
struct OperatorConfig {
    double tau = 1.0;
    double mu = 1.0;
    double sigma = 1.0;
    double m = 0.0;
    std::shared_ptr<const KernelMatrix> kmat;
    Vector h;
    BoundaryChoice boundary = Neumann{};
    PeriodicField a;
    Grid grid;

    double dispersal_rate() const { return mu / std::pow(sigma, m); }
    long size() const { return static_cast<long>(grid.size()); }
};

inline void validate(const OperatorConfig& cfg) {
    require(std::isfinite(cfg.tau) && cfg.tau > 0.0, ErrorKind::InvalidConfig, "tau must be positive");
    require(std::isfinite(cfg.mu) && cfg.mu > 0.0, ErrorKind::InvalidConfig, "mu must be positive");
    require(std::isfinite(cfg.sigma) && cfg.sigma > 0.0, ErrorKind::InvalidConfig, "sigma must be positive");
    require(std::isfinite(cfg.m) && cfg.m >= 0.0, ErrorKind::InvalidConfig, "m must be >= 0");
    require(cfg.kmat != nullptr, ErrorKind::InvalidConfig, "operator has no kernel matrix");
    require(static_cast<long>(cfg.kmat->size()) == cfg.size() && cfg.h.size() == cfg.size(), ErrorKind::InvalidConfig,
            "operator dimensions disagree");
    require(cfg.kmat->sigma == cfg.sigma, ErrorKind::InvalidConfig, "kernel matrix sigma differs from operator sigma");
}

/// Assemble grid, kernel matrix and boundary vector in one go.
inline OperatorConfig make_operator(const Domain& domain, long n, const KernelShape& shape, double sigma,
                                    const BoundaryChoice& boundary, double tau, double mu, double m,
                                    PeriodicField a) {
    OperatorConfig cfg;
    cfg.grid = build_grid(domain, n);
    auto k = std::make_shared<KernelMatrix>(assemble_kernel_matrix(cfg.grid, shape, sigma));
    cfg.h = h_sigma(*k, boundary);
    cfg.kmat = std::move(k);
    cfg.boundary = boundary;
    cfg.tau = tau;
    cfg.mu = mu;
    cfg.sigma = sigma;
    cfg.m = m;
    a.domain = domain;
    cfg.a = std::move(a);
    validate(cfg);
    return cfg;
}

/// D = (mu / sigma^m)(K - diag h), dense.
inline Matrix dispersal_matrix(const OperatorConfig& cfg) {
    Matrix d = cfg.dispersal_rate() * cfg.kmat->entries;
    d.diagonal() -= cfg.dispersal_rate() * cfg.h;
    return d;
}

/// (mu / sigma^m)(K v - h v) + a(., t) v
inline Vector apply_generator(const OperatorConfig& cfg, double t, const Vector& v) {
    require(v.size() == cfg.size(), ErrorKind::InvalidInput, "state dimension mismatch");
    const Vector kv = cfg.kmat->entries * v;
    const Vector a = sample_field(cfg.a, cfg.grid, t);
    return cfg.dispersal_rate() * (kv - cfg.h.cwiseProduct(v)) + a.cwiseProduct(v);
}

/// One backward Euler step: solves (I - (dt/tau) A(t + dt)) v' = v.
inline Vector step_backward_euler(const OperatorConfig& cfg, const Vector& v, double t, double dt) {
    require(v.size() == cfg.size(), ErrorKind::InvalidInput, "state dimension mismatch");
    const Vector a = sample_field(cfg.a, cfg.grid, t + dt);
    const double bound = dt * (cfg.dispersal_rate() * cfg.h.cwiseAbs().maxCoeff() + a.cwiseAbs().maxCoeff()) / cfg.tau;
    if (!(bound < 1.0))
        fail(ErrorKind::StepFailure, "backward Euler positivity bound violated (" + std::to_string(bound) +
                                         " >= 1); use dt < " + std::to_string(dt / bound));
    Matrix mat = -(dt / cfg.tau) * dispersal_matrix(cfg);
    mat.diagonal() += Vector::Ones(cfg.size()) - (dt / cfg.tau) * a;
    return mat.partialPivLu().solve(v);
}

// ---------------------------------------------------------------------------

enum class Scheme { BackwardEuler, BERichardson, Exponential };

inline std::string scheme_name(Scheme s) {
    switch (s) {
    case Scheme::BackwardEuler: return "be";
    case Scheme::BERichardson: return "be2";
    case Scheme::Exponential: return "expm";
    }
    return "?";
}

struct MonodromySpec {
    OperatorConfig cfg;
    int n_t = 2048;
    Scheme scheme = Scheme::Exponential;
    bool check_positivity = true;
};

/// Off-diagonal dispersal part, dense or CSR depending on fill.
class OffDiagonal {
public:
    OffDiagonal() = default;
    explicit OffDiagonal(const Matrix& d) {
        Matrix off = d;
        off.diagonal().setZero();
        const long nnz = (off.array() != 0.0).count();
        sparse_ = static_cast<double>(nnz) < 0.25 * static_cast<double>(off.size());
        rowsums_ = off.rowwise().sum();
        if (sparse_) {
            sp_ = off.sparseView();
            sp_.makeCompressed();
        } else {
            dense_ = std::move(off);
        }
    }

    template <class X>
    Matrix apply(const X& x) const {
        return sparse_ ? Matrix(sp_ * x) : Matrix(dense_ * x);
    }
    template <class X>
    Matrix apply_transpose(const X& x) const {
        return sparse_ ? Matrix(sp_.transpose() * x) : Matrix(dense_.transpose() * x);
    }
    const Vector& rowsums() const { return rowsums_; }
    bool sparse() const { return sparse_; }

private:
    bool sparse_ = false;
    Matrix dense_;
    SparseMatrix sp_;
    Vector rowsums_;
};

/// Per-step period map S_k (k = 1..n_t, from t_{k-1} to t_k) for a given
/// spec. Every apply returns the log of a scalar the caller must multiply in;
/// states are otherwise exact images. Immutable after construction.
class Propagator {
public:
    explicit Propagator(MonodromySpec spec) : spec_(std::move(spec)) {
        const auto& cfg = spec_.cfg;
        validate(cfg);
        require(spec_.n_t >= constants::kMinStepsPerPeriod, ErrorKind::InvalidConfig,
                "n_t must be >= " + std::to_string(constants::kMinStepsPerPeriod));
        n_ = cfg.size();
        dt_ = 1.0 / spec_.n_t;
        dmat_ = dispersal_matrix(cfg);
        off_ = OffDiagonal(dmat_);
        // a at half-step resolution: samples_[j] = a(., j dt / 2)
        samples_.resize(2 * static_cast<std::size_t>(spec_.n_t) + 1);
        for (int j = 0; j <= 2 * spec_.n_t; ++j)
            samples_[static_cast<std::size_t>(j)] = sample_field(cfg.a, cfg.grid, 0.5 * j * dt_);
        switch (spec_.scheme) {
        case Scheme::Exponential: build_exponential(); break;
        case Scheme::BackwardEuler:
        case Scheme::BERichardson: build_implicit(); break;
        }
    }

    const MonodromySpec& spec() const { return spec_; }
    const OperatorConfig& cfg() const { return spec_.cfg; }
    int steps() const { return spec_.n_t; }
    double dt() const { return dt_; }
    long size() const { return n_; }
    const Matrix& dispersal() const { return dmat_; }
    const OffDiagonal& off_diagonal() const { return off_; }

    /// a(., k dt)
    const Vector& field_at_step(int k) const { return samples_[2 * static_cast<std::size_t>(k % spec_.n_t)]; }

    /// x <- S_k x
    template <class X>
    double forward(int k, X& x) const {
        double log_factor = 0.0;
        switch (spec_.scheme) {
        case Scheme::Exponential: log_factor = taylor(k, x, false); break;
        case Scheme::BackwardEuler: x = solve(k, 0, x, false); break;
        case Scheme::BERichardson: x = richardson(k, x, false); break;
        }
        check(x, k);
        return log_factor;
    }

    /// x <- S_k^T x
    template <class X>
    double adjoint(int k, X& x) const {
        double log_factor = 0.0;
        switch (spec_.scheme) {
        case Scheme::Exponential: log_factor = taylor(k, x, true); break;
        case Scheme::BackwardEuler: x = solve(k, 0, x, true); break;
        case Scheme::BERichardson: x = richardson(k, x, true); break;
        }
        check(x, k);
        return log_factor;
    }

    /// (d S_k / d tau) x. Carries the same log factor as forward(k, x).
    Vector tau_derivative(int k, const Vector& x, double& log_factor) const {
        const double tau = cfg().tau;
        log_factor = 0.0;
        switch (spec_.scheme) {
        case Scheme::Exponential: {
            Vector y = x;
            log_factor = taylor(k, y, false);
            return -step_generator(k, y) / (tau * tau);
        }
        case Scheme::BackwardEuler: return implicit_derivative(k, 0, x, dt_);
        case Scheme::BERichardson: {
            // S = 2 Hb Ha - F
            const Vector ha = solve(k, 1, x, false);
            const Vector d_ha = implicit_derivative(k, 1, x, 0.5 * dt_);
            const Vector term1 = implicit_derivative(k, 2, ha, 0.5 * dt_);
            const Vector term2 = solve(k, 2, d_ha, false);
            return 2.0 * (term1 + term2) - implicit_derivative(k, 0, x, dt_);
        }
        }
        return x;
    }

    /// G_k x: the step's integrated generator (dt D + diag alpha_k) for the
    /// exponential scheme, dt A(t_k) for the implicit ones.
    Vector step_generator(int k, const Vector& x) const {
        const Vector& alpha = spec_.scheme == Scheme::Exponential ? alpha_[static_cast<std::size_t>(k - 1)] : step_alpha_be(k);
        return dt_ * (dmat_ * x) + alpha.cwiseProduct(x);
    }

private:
    struct TaylorStep {
        Vector diag;       // diagonal of the shifted substep matrix
        double coupling;   // multiplier on the off-diagonal part
        double shift;      // s' per substep
        int substeps;
        int terms;
    };

    Vector step_alpha_be(int k) const { return dt_ * field_at_step(k); }

    void build_exponential() {
        const double tau = cfg().tau;
        const Vector ddiag = dmat_.diagonal();
        const auto& off_rows = off_.rowsums();
        steps_.resize(static_cast<std::size_t>(spec_.n_t));
        alpha_.resize(static_cast<std::size_t>(spec_.n_t));
        for (int k = 1; k <= spec_.n_t; ++k) {
            const Vector& a0 = samples_[2 * static_cast<std::size_t>(k - 1)];
            const Vector& am = samples_[2 * static_cast<std::size_t>(k) - 1];
            const Vector& a1 = samples_[2 * static_cast<std::size_t>(k)];
            Vector alpha = dt_ * (a0 + (4.0 * (am - a0) + (a1 - a0)) / 6.0);
            const Vector gdiag = (dt_ * ddiag + alpha) / tau;
            const double shift = std::max(0.0, (-gdiag).maxCoeff());
            const double theta = ((dt_ / tau) * off_rows + gdiag).maxCoeff() + shift;
            const int q = std::max(1, static_cast<int>(std::ceil(theta / constants::kTaylorMaxNorm)));
            TaylorStep st;
            st.substeps = q;
            st.shift = shift / q;
            st.coupling = dt_ / (tau * q);
            st.diag = gdiag / q + Vector::Constant(n_, st.shift);
            st.terms = taylor_terms(theta / q);
            steps_[static_cast<std::size_t>(k - 1)] = std::move(st);
            alpha_[static_cast<std::size_t>(k - 1)] = std::move(alpha);
        }
    }

    static int taylor_terms(double theta) {
        // smallest J with e^theta theta^{J+1} / (J+1)! <= tol
        double log_term = theta;
        int j = 0;
        while (true) {
            log_term += std::log(std::max(theta, 1e-300)) - std::log(static_cast<double>(j + 1));
            if (log_term <= std::log(constants::kTaylorTailTol) || j > 400) return std::max(j, 1);
            ++j;
        }
    }

    template <class X>
    double taylor(int k, X& x, bool transpose) const {
        const auto& st = steps_[static_cast<std::size_t>(k - 1)];
        for (int r = 0; r < st.substeps; ++r) {
            Matrix term = x;
            Matrix sum = x;
            for (int j = 1; j <= st.terms; ++j) {
                Matrix next = st.coupling * (transpose ? off_.apply_transpose(term) : off_.apply(term));
                next += st.diag.asDiagonal() * term;
                term = next / static_cast<double>(j);
                sum += term;
            }
            x = sum;
        }
        return -st.shift * st.substeps;
    }

    // Implicit schemes. Variant 0: full step at t_k. Variant 1: half step at
    // t_k - dt/2. Variant 2: half step at t_k.
    Matrix implicit_matrix(int k, int variant) const {
        const double h = variant == 0 ? dt_ : 0.5 * dt_;
        const std::size_t idx = variant == 1 ? 2 * static_cast<std::size_t>(k) - 1 : 2 * static_cast<std::size_t>(k);
        Matrix mat = -(h / cfg().tau) * dmat_;
        mat.diagonal() += Vector::Ones(n_) - (h / cfg().tau) * samples_[idx];
        return mat;
    }

    Matrix generator_matrix(int k, int variant) const {
        const std::size_t idx = variant == 1 ? 2 * static_cast<std::size_t>(k) - 1 : 2 * static_cast<std::size_t>(k);
        Matrix a = dmat_;
        a.diagonal() += samples_[idx];
        return a;
    }

    void build_implicit() {
        const double hmax = cfg().h.cwiseAbs().maxCoeff();
        double amax = 0.0;
        for (const auto& s : samples_) amax = std::max(amax, s.cwiseAbs().maxCoeff());
        const double bound = dt_ * (cfg().dispersal_rate() * hmax + amax) / cfg().tau;
        if (!(bound < 1.0)) {
            const long need = static_cast<long>(std::ceil(spec_.n_t * bound)) + 1;
            fail(ErrorKind::StepFailure, "implicit step violates the positivity bound (" + std::to_string(bound) +
                                             " >= 1); increase n_t to at least " + std::to_string(need) +
                                             " or use scheme = expm");
        }
        variants_ = spec_.scheme == Scheme::BERichardson ? 3 : 1;
        const std::size_t per = static_cast<std::size_t>(n_ * n_) * sizeof(double);
        cached_ = per * static_cast<std::size_t>(spec_.n_t * variants_) <= constants::kLuCacheBytes;
        if (cached_) {
            lu_.reserve(static_cast<std::size_t>(spec_.n_t * variants_));
            for (int k = 1; k <= spec_.n_t; ++k)
                for (int v = 0; v < variants_; ++v) lu_.emplace_back(implicit_matrix(k, v));
        }
    }

    template <class X>
    Matrix solve(int k, int variant, const X& x, bool transpose) const {
        if (cached_) {
            const auto& lu = lu_[static_cast<std::size_t>((k - 1) * variants_ + variant)];
            return transpose ? Matrix(lu.transpose().solve(x)) : Matrix(lu.solve(x));
        }
        const Eigen::PartialPivLU<Matrix> lu(implicit_matrix(k, variant));
        return transpose ? Matrix(lu.transpose().solve(x)) : Matrix(lu.solve(x));
    }

    /// d/dtau of (I - (h/tau) A)^{-1} x = -(h/tau^2) M^{-1} A M^{-1} x
    Vector implicit_derivative(int k, int variant, const Vector& x, double h) const {
        const Vector y = solve(k, variant, x, false);
        const Vector ay = generator_matrix(k, variant) * y;
        return -(h / (cfg().tau * cfg().tau)) * Vector(solve(k, variant, ay, false));
    }

    template <class X>
    Matrix richardson(int k, const X& x, bool transpose) const {
        Matrix full = solve(k, 0, x, transpose);
        Matrix half = transpose ? solve(k, 1, solve(k, 2, x, true), true) : solve(k, 2, solve(k, 1, x, false), false);
        Matrix extrap = 2.0 * half - full;
        // Only strictly positive states are re-checked: the step matrix has
        // round-off sized negative entries, so unit vectors would trip the
        // fallback and the assembled period map would mix two schemes.
        if (spec_.check_positivity && (x.array() > 0.0).all() && (extrap.array() <= 0.0).any()) return half;
        return extrap;
    }

    template <class X>
    void check(const X& x, int k) const {
        if (!spec_.check_positivity) return;
        if (!x.allFinite())
            fail(ErrorKind::InternalError, "non-finite state at step " + std::to_string(k));
    }

    MonodromySpec spec_;
    long n_ = 0;
    double dt_ = 0.0;
    Matrix dmat_;
    OffDiagonal off_;
    std::vector<Vector> samples_;
    std::vector<TaylorStep> steps_;
    std::vector<Vector> alpha_;
    int variants_ = 1;
    bool cached_ = false;
    std::vector<Eigen::PartialPivLU<Matrix>> lu_;
};

// ---------------------------------------------------------------------------

/// A state stored as values * exp(log_scale).
struct ScaledVector {
    Vector values;
    double log_scale = 0.0;
};

inline void normalize_max(ScaledVector& s) {
    const double m = s.values.cwiseAbs().maxCoeff();
    if (m > 0.0 && std::isfinite(m)) {
        s.values /= m;
        s.log_scale += std::log(m);
    }
}

/// One full period from v0, renormalising each step.
inline ScaledVector propagate_period(const Propagator& prop, ScaledVector v, bool transpose = false) {
    const int n_t = prop.steps();
    for (int j = 1; j <= n_t; ++j) {
        const int k = transpose ? n_t + 1 - j : j;
        v.log_scale += transpose ? prop.adjoint(k, v.values) : prop.forward(k, v.values);
        normalize_max(v);
    }
    return v;
}

inline Vector monodromy_apply(const MonodromySpec& spec, const Vector& v0) {
    require(v0.size() == spec.cfg.size(), ErrorKind::InvalidInput, "state dimension mismatch");
    const Propagator prop(spec);
    Vector v = v0;
    double log_scale = 0.0;
    for (int k = 1; k <= spec.n_t; ++k) log_scale += prop.forward(k, v);
    return v * std::exp(log_scale);
}

inline Vector adjoint_monodromy_apply(const MonodromySpec& spec, const Vector& w0) {
    require(w0.size() == spec.cfg.size(), ErrorKind::InvalidInput, "state dimension mismatch");
    const Propagator prop(spec);
    Vector w = w0;
    double log_scale = 0.0;
    for (int k = spec.n_t; k >= 1; --k) log_scale += prop.adjoint(k, w);
    return w * std::exp(log_scale);
}

/// Monodromy matrix as P * exp(log_scale) with max |P_ij| = 1.
struct ScaledMatrix {
    Matrix values;
    double log_scale = 0.0;
};

inline void require_dense_size(long n) {
    if (n > static_cast<long>(constants::kDenseMonodromyLimit))
        fail(ErrorKind::InvalidInput, "dense monodromy refused for n = " + std::to_string(n) + " > " +
                                          std::to_string(constants::kDenseMonodromyLimit) +
                                          "; use monodromy_apply (matrix-free) instead");
}

inline ScaledMatrix monodromy_dense_scaled(const Propagator& prop, bool transpose = false) {
    require_dense_size(prop.size());
    ScaledMatrix out{Matrix::Identity(prop.size(), prop.size()), 0.0};
    const int n_t = prop.steps();
    for (int j = 1; j <= n_t; ++j) {
        const int k = transpose ? n_t + 1 - j : j;
        out.log_scale += transpose ? prop.adjoint(k, out.values) : prop.forward(k, out.values);
        const double m = out.values.cwiseAbs().maxCoeff();
        if (m > 0.0 && std::isfinite(m)) {
            out.values /= m;
            out.log_scale += std::log(m);
        }
    }
    return out;
}

inline Matrix monodromy_dense(const MonodromySpec& spec) {
    require_dense_size(spec.cfg.size());
    const Propagator prop(spec);
    const auto s = monodromy_dense_scaled(prop);
    return s.values * std::exp(s.log_scale);
}

}  // namespace pne
