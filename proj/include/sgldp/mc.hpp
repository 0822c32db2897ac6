#pragma once

// Plain Monte Carlo for small-noise probabilities and empirical checks of the
// weak-convergence criteria. Every sample is keyed by (seed, stream) so the
// results do not depend on the number of worker threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "sgldp/basis.hpp"
#include "sgldp/errors.hpp"
#include "sgldp/fluid_ops.hpp"
#include "sgldp/integrators.hpp"
#include "sgldp/ldp.hpp"
#include "sgldp/rng.hpp"

namespace sgldp {

/// Runs fn(i) for i in [0, n) on up to `threads` workers with static chunks.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w * n / workers; i < (w + 1) * n / workers; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

/// Closed V-ball at the terminal time.
struct Event {
    SpectralField center;
    double radius = 0.0;  ///< infinite radius means the whole space

    bool contains(const SpectralField& u, const BasisSpec& b) const {
        return std::isinf(radius) || norm_v(u - center, b) <= radius;
    }
};

struct WilsonInterval {
    double lo = 0.0;
    double hi = 1.0;
};

/// 95% Wilson score interval.
inline WilsonInterval wilson_interval(std::uint64_t hits, std::uint64_t n, double z = 1.959963984540054) {
    if (n == 0) return {0.0, 1.0};
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(hits) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double centre = (p + z2 / (2.0 * nn)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    return {hits == 0 ? 0.0 : std::max(0.0, centre - half), hits == n ? 1.0 : std::min(1.0, centre + half)};
}

struct ProbEstimate {
    double p_hat = 0.0;
    std::uint64_t n_samples = 0;
    std::uint64_t n_hits = 0;
    std::uint64_t n_blowups = 0;
    WilsonInterval interval;
    double eps = 0.0;
    Event event;

    bool zero_hits() const { return n_hits == 0; }
};

struct EnsembleOptions {
    double dt = 1e-2;
    int threads = 1;
    std::uint64_t group = 0;  ///< stream group; keeps different ensembles independent
};

inline ProbEstimate run_ensemble(const ModelConfig& cfg, const TrilinearTensor& tensor, double eps,
                                 std::uint64_t n, const Event& event, std::uint64_t seed,
                                 const EnsembleOptions& opt = {}) {
    if (n < 1) throw ConfigError("n", "must be >= 1");
    if (!(event.radius > 0.0)) throw ConfigError("event.radius", "must be positive");
    check_dims(event.center, cfg.basis, "event center");
    const auto steps = step_count(cfg.T, opt.dt);
    std::vector<std::uint8_t> outcome(n, 0);  // 0 miss, 1 hit, 2 blow-up
    parallel_for(n, opt.threads, [&](std::size_t i) {
        const NoiseDriver driver{seed, stream_id(opt.group, i), std::max(cfg.m(), 1), 1};
        try {
            const Trajectory tr = solve_spde(cfg, tensor, eps, nullptr, driver, opt.dt, static_cast<int>(steps));
            outcome[i] = event.contains(tr.final_state(), cfg.basis) ? 1 : 0;
        } catch (const BlowUpError&) {
            outcome[i] = 2;
        }
    });
    ProbEstimate est;
    est.n_samples = n;
    est.eps = eps;
    est.event = event;
    for (auto o : outcome) {
        est.n_hits += o == 1;
        est.n_blowups += o == 2;
    }
    est.p_hat = static_cast<double>(est.n_hits) / static_cast<double>(n);
    est.interval = wilson_interval(est.n_hits, n);
    return est;
}

// ---------------------------------------------------------------------------
// epsilon sweep

struct SweepRow {
    double eps = 0.0;
    std::uint64_t n = 0;
    std::uint64_t hits = 0;
    double p_hat = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double neg_eps_log_p = std::numeric_limits<double>::quiet_NaN();
    double neg_eps_log_lo = std::numeric_limits<double>::quiet_NaN();  ///< from the upper p bound
    double neg_eps_log_hi = std::numeric_limits<double>::quiet_NaN();  ///< from the lower p bound
    double I_ref = 0.0;
    bool censored = true;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    bool monotone = false;       ///< |-eps log p - I_ref| nonincreasing over uncensored rows
    int trend_violations = 0;
    double final_rel_gap = std::numeric_limits<double>::quiet_NaN();  ///< at the smallest uncensored eps
};

inline SweepResult ldp_sweep(const ModelConfig& cfg, const TrilinearTensor& tensor, const std::vector<double>& eps_list,
                             const Event& event, double I_ref, std::uint64_t n_per_eps, std::uint64_t seed,
                             const EnsembleOptions& opt = {}) {
    if (eps_list.empty()) throw ConfigError("eps", "list is empty");
    for (std::size_t i = 1; i < eps_list.size(); ++i) {
        if (!(eps_list[i] < eps_list[i - 1])) throw ConfigError("eps", "list must be strictly decreasing");
    }
    SweepResult res;
    for (std::size_t g = 0; g < eps_list.size(); ++g) {
        EnsembleOptions o = opt;
        o.group = opt.group + g;
        const ProbEstimate pe = run_ensemble(cfg, tensor, eps_list[g], n_per_eps, event, seed, o);
        SweepRow row;
        row.eps = pe.eps;
        row.n = pe.n_samples;
        row.hits = pe.n_hits;
        row.p_hat = pe.p_hat;
        row.lo = pe.interval.lo;
        row.hi = pe.interval.hi;
        row.I_ref = I_ref;
        row.censored = pe.n_hits == 0;
        if (!row.censored) {
            row.neg_eps_log_p = -row.eps * std::log(row.p_hat);
            row.neg_eps_log_lo = -row.eps * std::log(row.hi);
            row.neg_eps_log_hi = row.lo > 0.0 ? -row.eps * std::log(row.lo) : std::numeric_limits<double>::infinity();
        }
        res.rows.push_back(row);
    }
    std::vector<double> gaps;
    for (const auto& r : res.rows) {
        if (!r.censored) gaps.push_back(std::abs(r.neg_eps_log_p - I_ref));
    }
    for (std::size_t i = 1; i < gaps.size(); ++i) res.trend_violations += gaps[i] > gaps[i - 1];
    res.monotone = gaps.size() >= 2 && res.trend_violations == 0;
    for (auto it = res.rows.rbegin(); it != res.rows.rend(); ++it) {
        if (!it->censored) {
            res.final_rel_gap = I_ref > 0.0 ? std::abs(it->neg_eps_log_p - I_ref) / I_ref
                                            : std::abs(it->neg_eps_log_p);
            break;
        }
    }
    return res;
}

/// Upper bound on p for a convex event whose rate infimum is I: the event lies
/// in the supporting half-space at the minimizer, so p <= P(Z > sqrt(2 I / eps)).
inline double halfspace_probability_bound(double I, double eps) {
    return 0.5 * std::erfc(std::sqrt(2.0 * I / eps) / std::numbers::sqrt2);
}

// ---------------------------------------------------------------------------
// Least-squares helpers

struct OriginFit {
    double slope = 0.0;
    double r2 = 0.0;
};

/// y ~ c x through the origin; R^2 against the mean-centred total sum of squares.
inline OriginFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y) {
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += x[i] * y[i];
        sxx += x[i] * x[i];
    }
    OriginFit f;
    f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ss_res += std::pow(y[i] - f.slope * x[i], 2);
        ss_tot += std::pow(y[i] - mean, 2);
    }
    f.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
    return f;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Condition (a): controlled stochastic paths approach the skeleton

enum class PerturbationScheme { None, SqrtEps };

struct ConditionARow {
    double eps = 0.0;
    double mean_sup_dist = 0.0;  ///< E sup_t ||u^{h^eps} - Gamma0(h)||_V
    double mean_sup_dist2 = 0.0; ///< E sup_t ||.||_V^2
    // Gronwall-bound ingredients, averaged over replicas
    double noise_term = 0.0;     ///< sup_t |int sqrt(eps) (G_hat(X^eps), v)_V dW|
    double eps_energy = 0.0;     ///< eps int ||X^eps||_V^2
    double control_term = 0.0;   ///< N^{1/2} sup ||X||_V (int ||v||_V^2)^{1/2}
    double growth = 0.0;         ///< exp(int phi), phi = ||X||_W + 1 + |hdot^eps|
    double gronwall_bound = 0.0; ///< (noise + energy + control) * growth, compare with mean_sup_dist2
};

struct ConditionAReport {
    std::vector<ConditionARow> rows;
    OriginFit sqrt_fit;  ///< mean_sup_dist ~ C sqrt(eps)
    bool decreasing = false;
};

struct ConditionAOptions {
    PerturbationScheme scheme = PerturbationScheme::SqrtEps;
    std::optional<ControlPath> direction;  ///< perturbation direction; defaults to a smooth one
    double dt = 1e-3;
    int threads = 1;
    std::uint64_t seed = 1;
};

inline ConditionAReport condition_a_check(const ModelConfig& cfg, const TrilinearTensor& tensor, const ControlPath& h,
                                          const std::vector<double>& eps_list, int n_rep,
                                          const ConditionAOptions& opt = {}) {
    if (n_rep < 1) throw ConfigError("n_rep", "must be >= 1");
    const BasisSpec& b = cfg.basis;
    const Trajectory skeleton = solve_skeleton(cfg, tensor, h, opt.dt, 1);
    const double N = h.n_bound.value_or(h.energy());

    ControlPath dir = opt.direction.value_or(ControlPath());
    if (!opt.direction) {
        Eigen::MatrixXd d(h.cells(), h.m());
        for (int k = 0; k < h.cells(); ++k) {
            const double s = (k + 0.5) / h.cells();
            for (int j = 0; j < h.m(); ++j) d(k, j) = std::cos(2.0 * std::numbers::pi * (j + 1) * s);
        }
        dir = ControlPath(h.T, d);
    }

    // growth factor uses the skeleton path X
    double int_w = 0.0;
    double sup_xv = 0.0;
    for (std::size_t k = 0; k + 1 < skeleton.size(); ++k) int_w += norm_w(skeleton.states[k], b) * opt.dt;
    for (const auto& s : skeleton.states) sup_xv = std::max(sup_xv, norm_v(s, b));

    ConditionAReport rep;
    for (std::size_t g = 0; g < eps_list.size(); ++g) {
        const double eps = eps_list[g];
        Eigen::MatrixXd hd = h.hdot;
        if (opt.scheme == PerturbationScheme::SqrtEps) hd += std::sqrt(eps) * dir.hdot;
        const ControlPath heps(h.T, hd);
        double int_hdot = 0.0;
        for (int k = 0; k < heps.cells(); ++k) int_hdot += heps.hdot.row(k).norm() * heps.cell_width();
        const double growth = std::exp(int_w + h.T + int_hdot);

        std::vector<ConditionARow> per(static_cast<std::size_t>(n_rep));
        parallel_for(static_cast<std::size_t>(n_rep), opt.threads, [&](std::size_t r) {
            const NoiseDriver driver{opt.seed, stream_id(g, r), cfg.m(), 1};
            const Trajectory x = solve_spde(cfg, tensor, eps, &heps, driver, opt.dt, 1);
            ConditionARow row;
            double stoch = 0.0;
            double int_v2 = 0.0;
            for (std::size_t k = 0; k + 1 < x.size(); ++k) {
                const SpectralField v = x.states[k] - skeleton.states[k];
                const Eigen::VectorXd dw = driver.increment(k, opt.dt);
                const Eigen::MatrixXd G = ghat(x.states[k], x.times[k], cfg.forcing, b);
                for (int j = 0; j < G.cols(); ++j) stoch += std::sqrt(eps) * inner_v(G.col(j), v, b) * dw[j];
                row.noise_term = std::max(row.noise_term, std::abs(stoch));
                row.eps_energy += eps * std::pow(norm_v(x.states[k], b), 2) * opt.dt;
                int_v2 += std::pow(norm_v(v, b), 2) * opt.dt;
            }
            const double d = sup_distance_v(x, skeleton, b);
            row.mean_sup_dist = d;
            row.mean_sup_dist2 = d * d;
            row.control_term = std::sqrt(N) * sup_xv * std::sqrt(int_v2);
            per[r] = row;
        });
        ConditionARow agg;
        agg.eps = eps;
        for (const auto& p : per) {
            agg.mean_sup_dist += p.mean_sup_dist / n_rep;
            agg.mean_sup_dist2 += p.mean_sup_dist2 / n_rep;
            agg.noise_term += p.noise_term / n_rep;
            agg.eps_energy += p.eps_energy / n_rep;
            agg.control_term += p.control_term / n_rep;
        }
        agg.growth = growth;
        agg.gronwall_bound = 2.0 * (agg.noise_term + agg.eps_energy + agg.control_term) * growth;
        rep.rows.push_back(agg);
    }
    std::vector<double> xs;
    std::vector<double> ys;
    rep.decreasing = true;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        xs.push_back(std::sqrt(rep.rows[i].eps));
        ys.push_back(rep.rows[i].mean_sup_dist);
        if (i > 0 && rep.rows[i].eps < rep.rows[i - 1].eps && ys[i] > ys[i - 1]) rep.decreasing = false;
    }
    rep.sqrt_fit = fit_through_origin(xs, ys);
    return rep;
}

// ---------------------------------------------------------------------------
// Condition (b): the skeleton image of S_N is compact

/// Random control in S_N: Gaussian direction, energy uniform on [0, N].
inline ControlPath random_control_in_ball(double T, int cells, int m, double N, std::uint64_t seed,
                                          std::uint64_t index) {
    const NoiseDriver drv{seed, stream_id(0xB, index), cells * m + 2, 1};
    Eigen::MatrixXd d(cells, m);
    for (int k = 0; k < cells; ++k) {
        for (int j = 0; j < m; ++j) d(k, j) = drv.normal(0, k * m + j);
    }
    const double u = 0.5 * (1.0 + std::erf(drv.normal(0, cells * m) / std::numbers::sqrt2));
    const double width = T / cells;
    const double energy = d.squaredNorm() * width;
    d *= std::sqrt(N * u / energy);
    return ControlPath(T, d, N);
}

/// Greedy covering number of a point set at radius r under a distance matrix.
inline int covering_number(const Eigen::MatrixXd& dist, double r, std::size_t prefix) {
    std::vector<std::size_t> centres;
    for (std::size_t i = 0; i < prefix; ++i) {
        bool covered = false;
        for (auto c : centres) {
            if (dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) <= r) {
                covered = true;
                break;
            }
        }
        if (!covered) centres.push_back(i);
    }
    return static_cast<int>(centres.size());
}

struct ConditionBReport {
    double N = 0.0;
    int n_controls = 0;
    double lipschitz_max = 0.0;    ///< max image distance / control distance
    double lipschitz_fit = 0.0;    ///< least-squares slope through the origin
    double image_diameter = 0.0;
    double control_diameter = 0.0;
    double sup_image_norm = 0.0;   ///< max over controls of sup_t ||Gamma0(h)||_V
    std::vector<double> radii;     ///< fractions of the image diameter
    std::vector<int> covering;     ///< covering number of the full image set at each radius
    std::vector<int> sample_sizes;
    std::vector<int> covering_growth;  ///< at radius diameter/3 over growing prefixes
    std::vector<int> control_covering_growth;  ///< same for the controls at control_diameter/3
    double zero_distance_residual = 0.0;  ///< image distance of a control to itself
    bool saturated = false;
};

struct ConditionBOptions {
    int cells = 32;
    int substeps = 4;
    std::uint64_t seed = 7;
    int threads = 1;
};

inline ConditionBReport condition_b_check(const ModelConfig& cfg, const TrilinearTensor& tensor, double N,
                                          int n_controls, const ConditionBOptions& opt = {}) {
    if (n_controls < 2) throw ConfigError("n_controls", "must be >= 2");
    const int m = cfg.m();
    if (m == 0) throw ConfigError("diffusion", "condition (b) needs controls, i.e. m >= 1");
    const double dt = cfg.T / (opt.cells * opt.substeps);
    const auto n = static_cast<std::size_t>(n_controls);

    std::vector<ControlPath> controls;
    for (std::size_t i = 0; i < n; ++i) controls.push_back(random_control_in_ball(cfg.T, opt.cells, m, N, opt.seed, i));
    std::vector<Trajectory> images(n);
    parallel_for(n, opt.threads, [&](std::size_t i) { images[i] = solve_skeleton(cfg, tensor, controls[i], dt, 1); });

    ConditionBReport rep;
    rep.N = N;
    rep.n_controls = n_controls;
    const auto ni = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd dimg = Eigen::MatrixXd::Zero(ni, ni);
    Eigen::MatrixXd dctl = Eigen::MatrixXd::Zero(ni, ni);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& s : images[i].states) rep.sup_image_norm = std::max(rep.sup_image_norm, norm_v(s, cfg.basis));
        for (std::size_t j = i + 1; j < n; ++j) {
            const double di = sup_distance_v(images[i], images[j], cfg.basis);
            const double dc = std::sqrt((controls[i].hdot - controls[j].hdot).squaredNorm() * controls[i].cell_width());
            const auto a = static_cast<Eigen::Index>(i);
            const auto bb = static_cast<Eigen::Index>(j);
            dimg(a, bb) = dimg(bb, a) = di;
            dctl(a, bb) = dctl(bb, a) = dc;
            if (dc > 0.0) rep.lipschitz_max = std::max(rep.lipschitz_max, di / dc);
            sxy += di * dc;
            sxx += dc * dc;
        }
    }
    rep.lipschitz_fit = sxx > 0.0 ? sxy / sxx : 0.0;
    rep.image_diameter = dimg.maxCoeff();
    rep.control_diameter = dctl.maxCoeff();
    rep.zero_distance_residual =
        sup_distance_v(images[0], solve_skeleton(cfg, tensor, controls[0], dt, 1), cfg.basis);

    for (double f : {1.0, 0.5, 0.25, 0.125, 0.0625}) {
        rep.radii.push_back(f);
        rep.covering.push_back(covering_number(dimg, f * rep.image_diameter, n));
    }
    for (std::size_t k = 1; k <= 5; ++k) {
        const std::size_t prefix = std::max<std::size_t>(2, n * k / 5);
        rep.sample_sizes.push_back(static_cast<int>(prefix));
        rep.covering_growth.push_back(covering_number(dimg, rep.image_diameter / 3.0, prefix));
        rep.control_covering_growth.push_back(covering_number(dctl, rep.control_diameter / 3.0, prefix));
    }
    // total-boundedness proxy: the last 40% of the sample adds (almost) no new
    // balls, while the covering stays far below one ball per sample
    const int last = rep.covering_growth.back();
    const int mid = rep.covering_growth[2];
    rep.saturated = last - mid <= std::max(1, last / 10) && last <= n_controls / 2;
    return rep;
}

// ---------------------------------------------------------------------------
// Uniform-in-eps moment proxy

struct MomentRow {
    double eps = 0.0;
    double mean_sup_w4 = 0.0;  ///< E sup_t ||u^eps||_W^4
};

struct MomentReport {
    std::vector<MomentRow> rows;
    double ratio = 0.0;  ///< max / min over the eps list
};

inline MomentReport moment_study(const ModelConfig& cfg, const TrilinearTensor& tensor, const std::vector<double>& eps_list,
                                 int n, const ControlPath* control, double dt, std::uint64_t seed, int threads = 1) {
    MomentReport rep;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    const auto steps = step_count(cfg.T, dt);
    for (std::size_t g = 0; g < eps_list.size(); ++g) {
        std::vector<double> vals(static_cast<std::size_t>(n));
        parallel_for(vals.size(), threads, [&](std::size_t i) {
            const NoiseDriver drv{seed, stream_id(0x40 + g, i), std::max(cfg.m(), 1), 1};
            const Trajectory tr = solve_spde(cfg, tensor, eps_list[g], control, drv, dt, static_cast<int>(steps));
            vals[i] = std::pow(tr.sup_w, 4);
        });
        const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
        rep.rows.push_back({eps_list[g], mean});
        lo = std::min(lo, mean);
        hi = std::max(hi, mean);
    }
    rep.ratio = hi / lo;
    return rep;
}

}  // namespace sgldp
