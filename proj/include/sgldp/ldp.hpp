#pragma once

// Rate function machinery: control cost, the skeleton map, the discrete adjoint
// of the RK4 skeleton scheme, penalty-continuation minimization for endpoint
// events, and the minimum-energy (controllability Gramian) oracle for linear
// instances.

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "sgldp/basis.hpp"
#include "sgldp/errors.hpp"
#include "sgldp/fluid_ops.hpp"
#include "sgldp/integrators.hpp"

namespace sgldp {

inline constexpr double kInfiniteRate = std::numeric_limits<double>::infinity();

/// 1/2 int_0^T |hdot|^2 ds for a piecewise-constant control.
inline double control_cost(const ControlPath& h) { return 0.5 * h.energy(); }

/// The skeleton map h -> u^h.
inline Trajectory gamma0(const ControlPath& h, const ModelConfig& cfg, const TrilinearTensor& tensor, double dt,
                         int save_stride = 1) {
    return solve_skeleton(cfg, tensor, h, dt, save_stride);
}

// ---------------------------------------------------------------------------
// Adjoint gradient

/// (mu / 2) ||u(T) - target||_V^2
struct EndpointObjective {
    SpectralField target;
    double mu = 1.0;

    double value(const SpectralField& uT, const BasisSpec& b) const {
        const SpectralField d = uT - target;
        return 0.5 * mu * inner_v(d, d, b);
    }
    SpectralField gradient(const SpectralField& uT, const BasisSpec& b) const {
        return mu * (uT - target).cwiseProduct(b.w_v);
    }
};

struct ObjectiveEval {
    double value = 0.0;        ///< cost + endpoint penalty
    double cost = 0.0;
    double penalty = 0.0;
    SpectralField endpoint;
    Eigen::MatrixXd gradient;  ///< K x m, derivative w.r.t. hdot entries
};

/// Forward RK4 sweep storing every step, then the exact reverse sweep of the
/// discrete scheme. dt must subdivide the control cells.
inline ObjectiveEval adjoint_gradient(const ControlPath& h, const EndpointObjective& objective,
                                      const ModelConfig& cfg, const TrilinearTensor& tensor, double dt) {
    const auto plan = detail::plan_steps(cfg, &h, dt);
    const BasisSpec& b = cfg.basis;
    check_dims(objective.target, b, "target");

    std::vector<SpectralField> states;
    states.reserve(static_cast<std::size_t>(plan.steps + 1));
    states.push_back(cfg.u0);
    for (std::int64_t k = 0; k < plan.steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        const Eigen::VectorXd hd = h.at_cell(static_cast<int>(k / plan.steps_per_cell));
        states.push_back(step_rk4(states.back(), t, dt, hd, cfg, tensor));
    }

    ObjectiveEval out;
    out.endpoint = states.back();
    out.cost = control_cost(h);
    out.penalty = objective.value(out.endpoint, b);
    out.value = out.cost + out.penalty;
    out.gradient = h.hdot * h.cell_width();

    SpectralField ubar = objective.gradient(out.endpoint, b);
    for (std::int64_t k = plan.steps - 1; k >= 0; --k) {
        const double t = static_cast<double>(k) * dt;
        const int cell = static_cast<int>(k / plan.steps_per_cell);
        const Eigen::VectorXd hd = h.at_cell(cell);
        const Rk4Stages s = rk4_stages(states[static_cast<std::size_t>(k)], t, dt, hd, cfg, tensor);

        SpectralField k1bar = dt / 6.0 * ubar;
        SpectralField k2bar = dt / 3.0 * ubar;
        SpectralField k3bar = dt / 3.0 * ubar;
        const SpectralField k4bar = dt / 6.0 * ubar;
        Eigen::VectorXd hbar = Eigen::VectorXd::Zero(h.m());

        const SpectralField y4bar = drift_vjp_state(s.y4, t + dt, hd, k4bar, cfg, tensor);
        hbar += drift_vjp_control(s.y4, t + dt, k4bar, cfg);
        ubar += y4bar;
        k3bar += dt * y4bar;

        const SpectralField y3bar = drift_vjp_state(s.y3, t + 0.5 * dt, hd, k3bar, cfg, tensor);
        hbar += drift_vjp_control(s.y3, t + 0.5 * dt, k3bar, cfg);
        ubar += y3bar;
        k2bar += 0.5 * dt * y3bar;

        const SpectralField y2bar = drift_vjp_state(s.y2, t + 0.5 * dt, hd, k2bar, cfg, tensor);
        hbar += drift_vjp_control(s.y2, t + 0.5 * dt, k2bar, cfg);
        ubar += y2bar;
        k1bar += 0.5 * dt * y2bar;

        ubar += drift_vjp_state(s.y1, t, hd, k1bar, cfg, tensor);
        hbar += drift_vjp_control(s.y1, t, k1bar, cfg);

        if (hbar.size() > 0) out.gradient.row(cell) += hbar.transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// L-BFGS with backtracking line search

struct LbfgsOptions {
    int max_iter = 500;
    int memory = 12;
    double gtol = 1e-10;  ///< on |g|_inf
    double ftol = 1e-15;  ///< relative decrease below which iteration stops
    double armijo = 1e-4;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;  ///< objective after each accepted step
};

/// `fg(x, grad)` returns f(x) and fills grad; it may return +inf for infeasible points.
inline LbfgsResult minimize_lbfgs(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& fg,
                                  Eigen::VectorXd x, const LbfgsOptions& opt = {}) {
    LbfgsResult res;
    Eigen::VectorXd g(x.size());
    double f = fg(x, g);
    if (!std::isfinite(f)) throw std::runtime_error("lbfgs: non-finite objective at the starting point");
    res.history.push_back(f);
    std::deque<Eigen::VectorXd> S;
    std::deque<Eigen::VectorXd> Y;
    int small_steps = 0;

    for (int it = 0; it < opt.max_iter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= opt.gtol) {
            res.converged = true;
            break;
        }
        // two-loop recursion
        Eigen::VectorXd q = g;
        std::vector<double> a(S.size());
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            const auto ui = static_cast<std::size_t>(i);
            a[ui] = S[ui].dot(q) / Y[ui].dot(S[ui]);
            q -= a[ui] * Y[ui];
        }
        if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double beta = Y[i].dot(q) / Y[i].dot(S[i]);
            q += (a[i] - beta) * S[i];
        }
        Eigen::VectorXd dir = -q;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            S.clear();
            Y.clear();
            dir = -g;
            slope = -g.squaredNorm();
        }
        double step = S.empty() ? std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>()) : 1.0;

        Eigen::VectorXd xn;
        Eigen::VectorXd gn(x.size());
        double fn = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            xn = x + step * dir;
            fn = fg(xn, gn);
            if (std::isfinite(fn) && fn <= f + opt.armijo * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        const Eigen::VectorXd s = xn - x;
        const Eigen::VectorXd y = gn - g;
        if (s.dot(y) > 1e-16 * s.norm() * y.norm()) {
            S.push_back(s);
            Y.push_back(y);
            if (static_cast<int>(S.size()) > opt.memory) {
                S.pop_front();
                Y.pop_front();
            }
        }
        const double decrease = f - fn;
        x = xn;
        g = gn;
        f = fn;
        res.iterations = it + 1;
        res.history.push_back(f);
        small_steps = decrease <= opt.ftol * std::max(1.0, std::abs(f)) ? small_steps + 1 : 0;
        if (small_steps >= 3) {
            res.converged = true;
            break;
        }
    }
    if (g.lpNorm<Eigen::Infinity>() <= opt.gtol) res.converged = true;
    res.x = x;
    res.f = f;
    return res;
}

// ---------------------------------------------------------------------------
// Endpoint rate function

struct RateOptions {
    int cells = 64;              ///< control grid K
    int substeps = 4;            ///< RK4 steps per control cell
    double tol = 1e-4;           ///< endpoint gap in the V norm
    double mu_start = 10.0;
    double mu_factor = 10.0;
    double mu_max = 1e10;
    std::optional<double> n_bound;  ///< keep iterates in S_N: int |hdot|^2 <= N
    LbfgsOptions lbfgs;
    std::optional<ControlPath> initial;
};

struct RateEstimate {
    double value = kInfiniteRate;  ///< 1/2 int |hdot*|^2 of the best feasible iterate
    ControlPath control;
    double endpoint_gap = 0.0;
    int iterations = 0;
    bool converged = false;
    bool finite = false;           ///< false: no finite rate found (target looks unreachable)
    double mu_final = 0.0;
    std::vector<double> best_history;  ///< best penalized objective per continuation stage
    std::vector<double> gap_history;
};

/// Minimizes 1/2 int |hdot|^2 + mu/2 ||Gamma0(h)(T) - target||_V^2 with mu
/// continuation until the endpoint gap meets `tol`. The returned value is an
/// upper bound on the infimum over controls on the K-cell grid.
inline RateEstimate rate_endpoint(const SpectralField& target, const ModelConfig& cfg, const TrilinearTensor& tensor,
                                  const RateOptions& opt = {}) {
    check_dims(target, cfg.basis, "target");
    const int m = cfg.m();
    if (m == 0) throw ConfigError("diffusion", "rate function needs at least one noise direction");
    if (opt.cells < 1 || opt.substeps < 1) throw ConfigError("rate", "cells and substeps must be >= 1");
    const double dt = cfg.T / (static_cast<double>(opt.cells) * opt.substeps);
    const double width = cfg.T / opt.cells;
    const double scale = std::sqrt(width);  // z = sqrt(width) hdot makes the cost 1/2 |z|^2

    ControlPath h = opt.initial ? *opt.initial : ControlPath::zero(cfg.T, opt.cells, m);
    if (h.cells() != opt.cells || h.m() != m) throw DimensionError("initial control has the wrong shape");
    Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(h.hdot.data(), h.hdot.size()) * scale;
    if (opt.n_bound && !(*opt.n_bound >= 0.0)) throw ConfigError("N", "must be >= 0");
    // radial projection onto |z|^2 <= N (|z|^2 is the control energy)
    const double radius = opt.n_bound ? std::sqrt(*opt.n_bound) : kInfiniteRate;
    auto project = [&](const Eigen::VectorXd& zz) -> Eigen::VectorXd {
        const double nz = zz.norm();
        return nz > radius ? Eigen::VectorXd(zz * (radius / nz)) : zz;
    };

    RateEstimate est;
    double mu = opt.mu_start;
    int stalled = 0;
    double prev_gap = std::numeric_limits<double>::infinity();
    while (true) {
        EndpointObjective obj{target, mu};
        auto fg = [&](const Eigen::VectorXd& zz, Eigen::VectorXd& grad) -> double {
            const Eigen::VectorXd zp = project(zz);
            ControlPath hp(cfg.T, Eigen::Map<const Eigen::MatrixXd>(zp.data(), opt.cells, m) / scale);
            try {
                const ObjectiveEval ev = adjoint_gradient(hp, obj, cfg, tensor, dt);
                grad = Eigen::Map<const Eigen::VectorXd>(ev.gradient.data(), ev.gradient.size()) / scale;
                const double nz = zz.norm();
                if (nz > radius) {
                    // chain rule through the projection: (r/|z|)(I - zz^T/|z|^2)
                    const Eigen::VectorXd u = zz / nz;
                    grad = (radius / nz) * (grad - u * u.dot(grad));
                }
                return ev.value;
            } catch (const BlowUpError&) {
                grad.setZero();
                return std::numeric_limits<double>::infinity();
            }
        };
        const LbfgsResult r = minimize_lbfgs(fg, z, opt.lbfgs);
        z = project(r.x);
        est.iterations += r.iterations;
        est.best_history.push_back(r.f);

        h = ControlPath(cfg.T, Eigen::Map<const Eigen::MatrixXd>(z.data(), opt.cells, m) / scale, opt.n_bound);
        const Trajectory path = solve_skeleton(cfg, tensor, h, dt, opt.substeps * opt.cells);
        const double gap = norm_v(path.final_state() - target, cfg.basis);
        est.gap_history.push_back(gap);
        est.control = h;
        est.endpoint_gap = gap;
        est.mu_final = mu;
        est.value = control_cost(h);
        if (gap <= opt.tol) {
            est.converged = true;
            est.finite = true;
            break;
        }
        // an unreachable target leaves the gap flat while mu grows
        stalled = gap > 0.9 * prev_gap ? stalled + 1 : 0;
        prev_gap = gap;
        if (stalled >= 2 || mu * opt.mu_factor > opt.mu_max) {
            est.converged = false;
            est.finite = false;
            break;
        }
        mu *= opt.mu_factor;
    }
    if (!est.finite) est.value = kInfiniteRate;
    return est;
}

// ---------------------------------------------------------------------------
// Linear oracle

/// du = (A u + C hdot) dt, the linear instance of the skeleton equation.
struct LinearModelSpec {
    Eigen::MatrixXd A;
    Eigen::MatrixXd C;
    double T = 1.0;
    Eigen::VectorXd u0;

    void validate() const {
        if (A.rows() != A.cols() || C.rows() != A.rows() || u0.size() != A.rows()) {
            throw DimensionError("linear model: inconsistent dimensions");
        }
        if (!(T > 0.0)) throw ConfigError("T", "must be positive");
    }

    /// Builds the model from a configuration with the tensor switched off,
    /// time-independent linear forcing and additive noise.
    static LinearModelSpec from_config(const ModelConfig& cfg) {
        if (cfg.nonlinear) throw ConfigError("nonlinear", "linear oracle needs the nonlinear term disabled");
        if (cfg.forcing.forcing == ForcingFamily::Modulated) {
            throw ConfigError("forcing", "linear oracle needs a time-independent forcing");
        }
        if (cfg.forcing.diffusion == DiffusionFamily::Diagonal) {
            throw ConfigError("diffusion", "linear oracle needs additive noise");
        }
        const BasisSpec& b = cfg.basis;
        const double kappa = cfg.forcing.forcing == ForcingFamily::Linear ? cfg.forcing.kappa : 0.0;
        LinearModelSpec spec;
        spec.A = ((-cfg.nu * b.w_grad.array() + kappa) / b.w_v.array()).matrix().asDiagonal();
        const SpectralField zero = SpectralField::Zero(static_cast<Eigen::Index>(b.size()));
        spec.C = ghat(zero, 0.0, cfg.forcing, b);
        spec.T = cfg.T;
        spec.u0 = cfg.u0;
        return spec;
    }

    Eigen::VectorXd free_endpoint() const { return (A * T).exp() * u0; }
};

/// int_0^T e^{As} C C^T e^{A^T s} ds by composite 5-point Gauss-Legendre.
inline Eigen::MatrixXd controllability_gramian(const LinearModelSpec& spec, int panels = 64) {
    spec.validate();
    static constexpr double nodes[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                        0.9061798459386640};
    static constexpr double weights[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                          0.4786286704993665, 0.2369268850561891};
    const Eigen::MatrixXd CCt = spec.C * spec.C.transpose();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(spec.A.rows(), spec.A.cols());
    const double h = spec.T / panels;
    for (int p = 0; p < panels; ++p) {
        const double mid = (p + 0.5) * h;
        for (int q = 0; q < 5; ++q) {
            const double s = mid + 0.5 * h * nodes[q];
            const Eigen::MatrixXd E = (spec.A * s).exp();
            G += 0.5 * h * weights[q] * E * CCt * E.transpose();
        }
    }
    return 0.5 * (G + G.transpose());
}

namespace detail {

/// Eigenpairs of a PSD matrix restricted to its numerical range.
struct RangeDecomposition {
    Eigen::MatrixXd basis;   ///< columns span the range
    Eigen::VectorXd values;  ///< matching eigenvalues
};

inline RangeDecomposition range_of(const Eigen::MatrixXd& G) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        if (es.eigenvalues()[i] > 1e-12 * top) keep.push_back(i);
    }
    RangeDecomposition r;
    r.basis.resize(G.rows(), static_cast<Eigen::Index>(keep.size()));
    r.values.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
        r.basis.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]);
        r.values[static_cast<Eigen::Index>(c)] = es.eigenvalues()[keep[c]];
    }
    return r;
}

}  // namespace detail

/// Minimum control energy 1/2 r^T Gram(T)^+ r to reach `target`; infinite when
/// r = target - e^{AT} u0 has a component outside the reachable subspace.
inline double gramian_rate_linear(const LinearModelSpec& spec, const Eigen::VectorXd& target) {
    const Eigen::VectorXd r = target - spec.free_endpoint();
    const auto range = detail::range_of(controllability_gramian(spec));
    const Eigen::VectorXd coords = range.basis.transpose() * r;
    const double outside = (r - range.basis * coords).norm();
    if (outside > 1e-9 * (1.0 + r.norm())) return kInfiniteRate;
    return 0.5 * (coords.array().square() / range.values.array()).sum();
}

/// inf of the Gramian rate over the closed ball ||y - center||_V <= radius,
/// where the V metric is diag(w_v).
inline double gramian_rate_ball(const LinearModelSpec& spec, const Eigen::VectorXd& center, double radius,
                                const Eigen::VectorXd& w_v) {
    if (!(radius >= 0.0)) throw ConfigError("radius", "must be >= 0");
    // V-orthonormal coordinates y' = W^{1/2} y
    const Eigen::VectorXd sq = w_v.cwiseSqrt();
    const Eigen::MatrixXd Gp = sq.asDiagonal() * controllability_gramian(spec) * sq.asDiagonal();
    const auto range = detail::range_of(Gp);
    const Eigen::VectorXd d = sq.cwiseProduct(center - spec.free_endpoint());
    const Eigen::VectorXd dr = range.basis.transpose() * d;
    const double perp2 = (d - range.basis * dr).squaredNorm();
    const double rad2 = radius * radius - perp2;
    if (rad2 < 0.0) return kInfiniteRate;
    const double rad = std::sqrt(rad2);
    if (dr.norm() <= rad) return 0.0;
    // minimize 1/2 a^T diag(1/g) a over |a - dr| <= rad; a_i = eta g_i d_i / (1 + eta g_i)
    const Eigen::ArrayXd g = range.values.array();
    auto gap_at = [&](double eta) { return (dr.array() / (1.0 + eta * g)).matrix().norm(); };
    double lo = 0.0;
    double hi = 1.0;
    while (gap_at(hi) > rad) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (gap_at(mid) > rad ? lo : hi) = mid;
    }
    const Eigen::ArrayXd a = hi * g * dr.array() / (1.0 + hi * g);
    return 0.5 * (a.square() / g).sum();
}

}  // namespace sgldp
