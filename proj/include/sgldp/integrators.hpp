#pragma once

// Time stepping for the Galerkin system: Euler-Maruyama for the controlled SPDE
// and the classical four-stage Runge-Kutta method for the skeleton equation.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgldp/basis.hpp"
#include "sgldp/errors.hpp"
#include "sgldp/fluid_ops.hpp"
#include "sgldp/rng.hpp"

namespace sgldp {

/// Piecewise-constant control derivative on K uniform cells of [0, T].
struct ControlPath {
    double T = 1.0;
    Eigen::MatrixXd hdot;            ///< K x m
    std::optional<double> n_bound;   ///< radius N of S_N in the int |hdot|^2 sense

    ControlPath() = default;
    ControlPath(double horizon, Eigen::MatrixXd values, std::optional<double> bound = std::nullopt)
        : T(horizon), hdot(std::move(values)), n_bound(bound) {
        validate();
    }

    static ControlPath zero(double horizon, int cells, int m) {
        return ControlPath(horizon, Eigen::MatrixXd::Zero(cells, m));
    }

    int cells() const { return static_cast<int>(hdot.rows()); }
    int m() const { return static_cast<int>(hdot.cols()); }
    double cell_width() const { return T / cells(); }

    /// int_0^T |hdot|^2 ds
    double energy() const { return hdot.squaredNorm() * cell_width(); }

    Eigen::VectorXd at_cell(int k) const { return hdot.row(k).transpose(); }

    /// h(t) = int_0^t hdot, evaluated at the cell boundaries (K + 1 rows).
    Eigen::MatrixXd integrated() const {
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(cells() + 1, m());
        for (int k = 0; k < cells(); ++k) h.row(k + 1) = h.row(k) + cell_width() * hdot.row(k);
        return h;
    }

    void validate() const {
        if (!(T > 0.0)) throw ConfigError("control.T", "horizon must be positive");
        if (hdot.rows() < 1) throw ConfigError("control", "needs at least one cell");
        if (!hdot.allFinite()) throw ConfigError("control", "values must be finite");
        if (n_bound && energy() > *n_bound * (1.0 + 1e-12)) {
            throw ConfigError("control", "energy " + std::to_string(energy()) + " exceeds S_N bound " +
                                             std::to_string(*n_bound));
        }
    }
};

/// Saved states of one path plus running diagnostics.
struct Trajectory {
    std::vector<double> times;
    std::vector<SpectralField> states;
    std::vector<double> dissipation;  ///< 2 nu int_0^t ||u||^2 at each saved time

    double eps = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    double dt = 0.0;
    std::string config_hash;

    double sup_v = 0.0;  ///< over every step, not only saved ones
    double sup_w = 0.0;

    const SpectralField& final_state() const { return states.back(); }
    std::size_t size() const { return times.size(); }
};

/// Number of steps of size dt covering [0, T]; dt must divide T.
inline std::int64_t step_count(double T, double dt) {
    if (!(dt > 0.0)) throw ConfigError("dt", "must be positive");
    const double r = T / dt;
    const auto n = static_cast<std::int64_t>(std::llround(r));
    if (n < 1 || std::abs(r - static_cast<double>(n)) > 1e-9 * r) {
        throw ConfigError("dt", "must divide the horizon T into an integer number of steps");
    }
    return n;
}

inline void guard(const SpectralField& u, double t, const ModelConfig& cfg) {
    const double v = norm_v(u, cfg.basis);
    if (!u.allFinite() || !(v <= cfg.blowup_ceiling)) throw BlowUpError(t, v);
}

/// One Euler-Maruyama step: u + dt drift(u,t,h_dot) + sqrt(eps) G_hat(u,t) dW.
inline SpectralField step_em(const SpectralField& u, double t, double dt, const Eigen::VectorXd& dW,
                             const Eigen::VectorXd& h_dot, double eps, const ModelConfig& cfg,
                             const TrilinearTensor& tensor) {
    SpectralField next = u + dt * drift(u, t, h_dot, cfg, tensor);
    if (eps > 0.0 && cfg.m() > 0) next += std::sqrt(eps) * (ghat(u, t, cfg.forcing, cfg.basis) * dW);
    guard(next, t + dt, cfg);
    return next;
}

struct Rk4Stages {
    SpectralField y1, y2, y3, y4;  ///< stage inputs
    SpectralField k1, k2, k3, k4;
};

inline Rk4Stages rk4_stages(const SpectralField& u, double t, double dt, const Eigen::VectorXd& h_dot,
                            const ModelConfig& cfg, const TrilinearTensor& tensor) {
    Rk4Stages s;
    s.y1 = u;
    s.k1 = drift(s.y1, t, h_dot, cfg, tensor);
    s.y2 = u + 0.5 * dt * s.k1;
    s.k2 = drift(s.y2, t + 0.5 * dt, h_dot, cfg, tensor);
    s.y3 = u + 0.5 * dt * s.k2;
    s.k3 = drift(s.y3, t + 0.5 * dt, h_dot, cfg, tensor);
    s.y4 = u + dt * s.k3;
    s.k4 = drift(s.y4, t + dt, h_dot, cfg, tensor);
    return s;
}

inline SpectralField step_rk4(const SpectralField& u, double t, double dt, const Eigen::VectorXd& h_dot,
                              const ModelConfig& cfg, const TrilinearTensor& tensor) {
    const Rk4Stages s = rk4_stages(u, t, dt, h_dot, cfg, tensor);
    SpectralField next = u + dt / 6.0 * (s.k1 + 2.0 * s.k2 + 2.0 * s.k3 + s.k4);
    guard(next, t + dt, cfg);
    return next;
}

namespace detail {

inline double grad_sq(const SpectralField& u, const BasisSpec& b) {
    return (u.array().square() * b.w_grad.array()).sum();
}

struct StepPlan {
    std::int64_t steps = 0;
    std::int64_t steps_per_cell = 0;
};

inline StepPlan plan_steps(const ModelConfig& cfg, const ControlPath* control, double dt) {
    StepPlan p;
    p.steps = step_count(cfg.T, dt);
    if (control) {
        if (std::abs(control->T - cfg.T) > 1e-12 * cfg.T) throw ConfigError("control", "horizon differs from T");
        if (control->m() != cfg.m()) throw DimensionError("control dimension differs from noise dimension m");
        if (p.steps % control->cells() != 0) {
            throw ConfigError("dt", "must subdivide the control grid cell");
        }
        p.steps_per_cell = p.steps / control->cells();
    }
    return p;
}

/// Shared driver loop. `advance(u, t, k, h_dot, dissipation_increment)` returns
/// the state after step k.
template <class Advance>
Trajectory run_path(const ModelConfig& cfg, const ControlPath* control, double dt, int save_stride,
                    Advance&& advance) {
    if (save_stride < 1) throw ConfigError("save_stride", "must be >= 1");
    const StepPlan plan = plan_steps(cfg, control, dt);
    const Eigen::VectorXd no_control = Eigen::VectorXd::Zero(0);

    Trajectory traj;
    traj.dt = dt;
    SpectralField u = cfg.u0;
    double diss = 0.0;
    traj.times.push_back(0.0);
    traj.states.push_back(u);
    traj.dissipation.push_back(0.0);
    traj.sup_v = norm_v(u, cfg.basis);
    traj.sup_w = norm_w(u, cfg.basis);

    Eigen::VectorXd h_dot = no_control;
    for (std::int64_t k = 0; k < plan.steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        if (control) h_dot = control->at_cell(static_cast<int>(k / plan.steps_per_cell));
        double inc = 0.0;
        u = advance(u, t, k, h_dot, inc);
        diss += inc;
        traj.sup_v = std::max(traj.sup_v, norm_v(u, cfg.basis));
        traj.sup_w = std::max(traj.sup_w, norm_w(u, cfg.basis));
        if ((k + 1) % save_stride == 0 || k + 1 == plan.steps) {
            traj.times.push_back(static_cast<double>(k + 1) * dt);
            traj.states.push_back(u);
            traj.dissipation.push_back(diss);
        }
    }
    return traj;
}

}  // namespace detail

/// Euler-Maruyama path of the (optionally controlled) stochastic equation.
inline Trajectory solve_spde(const ModelConfig& cfg, const TrilinearTensor& tensor, double eps,
                             const ControlPath* control, const NoiseDriver& driver, double dt,
                             int save_stride = 1) {
    if (!(eps >= 0.0)) throw ConfigError("eps", "must be >= 0");
    if (cfg.m() > 0 && driver.m != cfg.m()) throw DimensionError("noise driver dimension differs from m");
    const double two_nu = 2.0 * cfg.nu;
    Trajectory traj = detail::run_path(
        cfg, control, dt, save_stride,
        [&](const SpectralField& u, double t, std::int64_t k, const Eigen::VectorXd& h_dot, double& inc) {
            inc = two_nu * detail::grad_sq(u, cfg.basis) * dt;
            if (eps > 0.0 && cfg.m() > 0) {
                return step_em(u, t, dt, driver.increment(static_cast<std::uint64_t>(k), dt), h_dot, eps, cfg,
                               tensor);
            }
            return step_em(u, t, dt, Eigen::VectorXd::Zero(cfg.m()), h_dot, 0.0, cfg, tensor);
        });
    traj.eps = eps;
    traj.seed = driver.seed;
    traj.stream = driver.stream;
    return traj;
}

/// Deterministic skeleton path u^g driven by the control derivative.
inline Trajectory solve_skeleton(const ModelConfig& cfg, const TrilinearTensor& tensor, const ControlPath& control,
                                 double dt, int save_stride = 1) {
    const double two_nu = 2.0 * cfg.nu;
    return detail::run_path(
        cfg, &control, dt, save_stride,
        [&](const SpectralField& u, double t, std::int64_t, const Eigen::VectorXd& h_dot, double& inc) {
            const Rk4Stages s = rk4_stages(u, t, dt, h_dot, cfg, tensor);
            const BasisSpec& b = cfg.basis;
            // same weights as the state update, so the augmented energy is integrated to fourth order
            inc = two_nu * dt / 6.0 *
                  (detail::grad_sq(s.y1, b) + 2.0 * detail::grad_sq(s.y2, b) + 2.0 * detail::grad_sq(s.y3, b) +
                   detail::grad_sq(s.y4, b));
            SpectralField next = u + dt / 6.0 * (s.k1 + 2.0 * s.k2 + 2.0 * s.k3 + s.k4);
            guard(next, t + dt, cfg);
            return next;
        });
}

/// Skeleton without control (h = 0); usable when m = 0.
inline Trajectory solve_deterministic(const ModelConfig& cfg, const TrilinearTensor& tensor, double dt,
                                      int save_stride = 1) {
    return solve_skeleton(cfg, tensor, ControlPath::zero(cfg.T, 1, cfg.m()), dt, save_stride);
}

/// sup over common saved times of ||a(t) - b(t)||_V.
inline double sup_distance_v(const Trajectory& a, const Trajectory& b, const BasisSpec& basis) {
    if (a.size() != b.size()) throw DimensionError("trajectories saved on different grids");
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, norm_v(a.states[i] - b.states[i], basis));
    return d;
}

}  // namespace sgldp
