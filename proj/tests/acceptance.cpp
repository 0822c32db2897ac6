// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
// Reference values are computed here from closed forms, not from the library.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "sgldp/sgldp.hpp"

using namespace sgldp;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail, double seconds) {
    std::printf("%s criterion %d: %s | %s | %.2fs\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Gaussian coefficients rescaled to unit V-norm.
SpectralField unit_field(std::mt19937_64& rng, const BasisSpec& b) {
    std::normal_distribution<double> nd;
    SpectralField u(static_cast<Eigen::Index>(b.size()));
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = nd(rng);
    return u / norm_v(u, b);
}

int threads() { return static_cast<int>(std::max(2u, std::thread::hardware_concurrency())); }

// Linear instances with additive noise on selected modes; sigma = sqrt(w_v)
// makes each mode a unit-variance OU in its V-coordinate.
ModelConfig additive_linear(int cutoff, double nu, std::vector<ModeKey> keys) {
    ModelConfig cfg;
    cfg.nu = nu;
    cfg.T = 1.0;
    cfg.basis = build_torus_basis(cutoff, 1.0);
    cfg.nonlinear = false;
    cfg.forcing.diffusion = DiffusionFamily::Additive;
    cfg.forcing.m = static_cast<int>(keys.size());
    for (const auto& k : keys) {
        const std::size_t i = cfg.basis.index_of(k);
        cfg.forcing.modes.push_back(i);
        cfg.forcing.sigma.push_back(std::sqrt(cfg.basis.w_v[static_cast<Eigen::Index>(i)]));
    }
    cfg.validate();
    return cfg;
}

// Minimum energy to move a unit-noise OU dy = -a y dt + dh from 0 to x in time T.
double ou_cost(double a, double x, double T) { return a * x * x / (1.0 - std::exp(-2.0 * a * T)); }

double decay_rate(const ModelConfig& cfg, std::size_t i) {
    const auto ii = static_cast<Eigen::Index>(i);
    return cfg.nu * cfg.basis.w_grad[ii] / cfg.basis.w_v[ii];
}

ModelConfig nonlinear_config(int cutoff, std::uint64_t seed, int m = 2, std::vector<double> sigma = {}) {
    ModelConfig cfg;
    cfg.nu = 0.5;
    cfg.T = 1.0;
    cfg.basis = build_torus_basis(cutoff, 1.0);
    cfg.forcing.forcing = ForcingFamily::Linear;
    cfg.forcing.kappa = 0.1;
    cfg.forcing.diffusion = DiffusionFamily::Diagonal;
    cfg.forcing.m = m;
    cfg.forcing.sigma = std::move(sigma);
    std::mt19937_64 rng(seed);
    cfg.u0 = 0.4 * unit_field(rng, cfg.basis);
    cfg.validate();
    return cfg;
}

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const BasisSpec b = build_torus_basis(4, 1.0);
    const TrilinearTensor t = assemble_trilinear(b);
    std::mt19937_64 rng(101);
    double diag = 0.0, skew = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const SpectralField u = unit_field(rng, b), v = unit_field(rng, b), w = unit_field(rng, b);
        diag = std::max(diag, std::abs(inner_v(bhat(u, v, t, b), v, b)));
        skew = std::max(skew, std::abs(inner_v(bhat(u, v, t, b), w, b) + inner_v(bhat(u, w, t, b), v, b)));
    }
    const double s = seconds_since(t0);
    report(1, diag <= 1e-12 && skew <= 1e-12 && s < 10.0, "trilinear identities, cutoff 4, 1000 triples",
           fmt("max|<B(u,v),v>| %.2e, max|antisym| %.2e", diag, skew), s);
}

void criterion_2() {
    const auto t0 = std::chrono::steady_clock::now();
    const BasisSpec b = build_torus_basis(4, 1.0);
    std::mt19937_64 rng(202);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const SpectralField f = unit_field(rng, b), g = unit_field(rng, b);
        const double rhs = inner_l2(f, g);
        const double lhs = inner_v(apply_inv_stokes(f, b), g, b);
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(rhs), f.norm() * g.norm() * 1e-3));
    }
    report(2, worst <= 1e-12, "resolvent duality, 100 pairs", fmt("max rel err %.2e", worst), seconds_since(t0));
}

void criterion_3() {
    const auto t0 = std::chrono::steady_clock::now();
    ModelConfig cfg;
    cfg.nu = 1.0;
    cfg.T = 1.0;
    cfg.basis = build_torus_basis(4, 1.0);
    cfg.forcing.diffusion = DiffusionFamily::None;
    cfg.forcing.m = 0;
    std::mt19937_64 rng(303);
    cfg.u0 = unit_field(rng, cfg.basis);
    cfg.validate();
    const TrilinearTensor t = assemble_trilinear(cfg.basis);
    const Trajectory tr = solve_deterministic(cfg, t, 1e-3, 1 << 30);
    const double e0 = std::pow(norm_v(cfg.u0, cfg.basis), 2);
    const double eT = std::pow(norm_v(tr.final_state(), cfg.basis), 2);
    const double rel = std::abs(eT + tr.dissipation.back() - e0) / e0;
    const double s = seconds_since(t0);
    report(3, rel <= 1e-6 && s < 30.0, "energy identity, RK4 dt 1e-3",
           fmt("rel defect %.2e (|u(T)|_V^2 %.4f, dissipation %.4f)", rel, eT, tr.dissipation.back()), s);
}

void criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    int violations = 0;
    double worst = 0.0;
    std::mt19937_64 rng(404);
    for (double alpha : {0.1, 1.0, 5.0}) {
        const BasisSpec b = build_torus_basis(4, alpha);
        for (int k = 0; k < 1000; ++k) {
            const SpectralField u = unit_field(rng, b);
            const Norms n = norms(u, b);
            const double v2 = n.v * n.v, g2 = n.grad * n.grad;
            const double lo = v2 / (1.0 + alpha) - g2;
            const double hi = g2 - v2 / alpha;
            worst = std::max({worst, lo, hi});
            violations += (lo > 1e-14 * v2) || (hi > 1e-14 * v2);
        }
    }
    report(4, violations == 0, "norm sandwich, 3000 fields over alpha in {0.1, 1, 5}",
           fmt("violations %.0f, worst excess %.2e", violations, worst), seconds_since(t0));
}

void criterion_5() {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelConfig cfg = nonlinear_config(3, 505, 3, {1.0, 0.6, 1.4});
    const TrilinearTensor t = assemble_trilinear(cfg.basis);
    std::mt19937_64 rng(506);
    std::normal_distribution<double> nd;
    const int K = 16;
    Eigen::MatrixXd hv(K, cfg.m());
    for (Eigen::Index i = 0; i < hv.size(); ++i) hv.data()[i] = 0.7 * nd(rng);
    const EndpointObjective obj{0.5 * unit_field(rng, cfg.basis), 10.0};
    const double dt = cfg.T / (K * 4);
    const ObjectiveEval ev = adjoint_gradient(ControlPath(cfg.T, hv), obj, cfg, t, dt);
    double worst = 0.0;
    for (int d = 0; d < 20; ++d) {
        Eigen::MatrixXd dir(K, cfg.m());
        for (Eigen::Index i = 0; i < dir.size(); ++i) dir.data()[i] = nd(rng);
        const double h = 1e-5;
        const double fp = adjoint_gradient(ControlPath(cfg.T, hv + h * dir), obj, cfg, t, dt).value;
        const double fm = adjoint_gradient(ControlPath(cfg.T, hv - h * dir), obj, cfg, t, dt).value;
        const double fd = (fp - fm) / (2 * h);
        const double an = (ev.gradient.array() * dir.array()).sum();
        worst = std::max(worst, std::abs(fd - an) / std::abs(an));
    }
    const double s = seconds_since(t0);
    report(5, worst <= 1e-5 && s < 60.0, "adjoint gradient vs central differences, 20 directions",
           fmt("max rel err %.2e", worst), s);
}

void criterion_6() {
    bool ok = true;
    std::string detail;
    double total = 0.0;
    {
        const auto t0 = std::chrono::steady_clock::now();
        const ModelConfig cfg = additive_linear(1, 2.0, {{0, 1, Channel::Cos}});
        const TrilinearTensor t = assemble_trilinear(cfg.basis);
        SpectralField x = SpectralField::Zero(static_cast<Eigen::Index>(cfg.dim()));
        x[0] = 1.0 / std::sqrt(cfg.basis.w_v[0]);
        const double exact = 1.0 / (1.0 - std::exp(-2.0));
        const RateEstimate r = rate_endpoint(x, cfg, t);
        const double s = seconds_since(t0);
        const double rel = std::abs(r.value - exact) / exact;
        ok = ok && r.finite && rel <= 0.01 && s < 60.0;
        detail += fmt("OU %.5f vs %.5f (rel %.1e); ", r.value, exact, rel);
        total += s;
    }
    {
        const auto t0 = std::chrono::steady_clock::now();
        const ModelConfig cfg = additive_linear(2, 1.0, {{0, 1, Channel::Cos}, {1, 1, Channel::Cos}});
        const TrilinearTensor t = assemble_trilinear(cfg.basis);
        const double y[2] = {0.65, 0.45};  // V-coordinates of the target
        SpectralField x = SpectralField::Zero(static_cast<Eigen::Index>(cfg.dim()));
        double exact = 0.0;
        for (int j = 0; j < 2; ++j) {
            const std::size_t i = cfg.forcing.modes[static_cast<std::size_t>(j)];
            x[static_cast<Eigen::Index>(i)] = y[j] / std::sqrt(cfg.basis.w_v[static_cast<Eigen::Index>(i)]);
            exact += ou_cost(decay_rate(cfg, i), y[j], cfg.T);
        }
        const RateEstimate r = rate_endpoint(x, cfg, t);
        const double s = seconds_since(t0);
        const double rel = std::abs(r.value - exact) / exact;
        ok = ok && r.finite && rel <= 0.01 && s < 60.0;
        detail += fmt("2-mode %.5f vs %.5f (rel %.1e)", r.value, exact, rel);
        total += s;
    }
    report(6, ok, "endpoint rate vs closed-form oracles", detail, total);
}

// Shared 2-mode ball event for the sweep criteria.
struct BallInstance {
    ModelConfig cfg = additive_linear(2, 1.0, {{0, 1, Channel::Cos}, {1, 1, Channel::Cos}});
    TrilinearTensor tensor = assemble_trilinear(cfg.basis);
    Event event;
    double oracle = 0.0;

    BallInstance() {
        const double c[2] = {0.65, 0.45};
        const double delta = 0.3;
        event.radius = delta;
        event.center = SpectralField::Zero(static_cast<Eigen::Index>(cfg.dim()));
        double q[2];
        for (int j = 0; j < 2; ++j) {
            const std::size_t i = cfg.forcing.modes[static_cast<std::size_t>(j)];
            event.center[static_cast<Eigen::Index>(i)] = c[j] / std::sqrt(cfg.basis.w_v[static_cast<Eigen::Index>(i)]);
            q[j] = ou_cost(decay_rate(cfg, i), 1.0, cfg.T);
        }
        // origin lies outside the ball, so the infimum sits on the boundary circle
        oracle = std::numeric_limits<double>::infinity();
        const int n = 1 << 20;
        for (int k = 0; k < n; ++k) {
            const double th = 2.0 * std::numbers::pi * k / n;
            const double y0 = c[0] + delta * std::cos(th), y1 = c[1] + delta * std::sin(th);
            oracle = std::min(oracle, q[0] * y0 * y0 + q[1] * y1 * y1);
        }
    }
};

void criterion_7(const BallInstance& b) {
    const auto t0 = std::chrono::steady_clock::now();
    EnsembleOptions o;
    o.dt = 1e-2;
    o.threads = threads();
    const std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
    const SweepResult r = ldp_sweep(b.cfg, b.tensor, eps, b.event, b.oracle, 100000, 2024, o);
    const double s = seconds_since(t0);
    std::string rows;
    for (const auto& row : r.rows) {
        rows += fmt("eps %.2f: %.4f (bound %.4f); ", row.eps, row.neg_eps_log_p,
                    -row.eps * std::log(halfspace_probability_bound(b.oracle, row.eps)));
    }
    const bool ok = r.monotone && std::isfinite(r.final_rel_gap) && r.final_rel_gap <= 0.25 && s < 600.0;
    report(7, ok, "small-noise sweep toward ball infimum, n 1e5 per eps",
           rows + fmt("I* %.5f, final rel gap %.3f, monotone %.0f", b.oracle, r.final_rel_gap, r.monotone ? 1 : 0), s);
}

void criterion_8() {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelConfig cfg = nonlinear_config(3, 808);
    const TrilinearTensor t = assemble_trilinear(cfg.basis);
    Eigen::MatrixXd hv(8, 2);
    hv.col(0).setConstant(0.5);
    hv.col(1).setLinSpaced(8, -1.0, 1.0);
    ConditionAOptions o;
    o.dt = 1e-3;
    o.threads = threads();
    const ConditionAReport r = condition_a_check(cfg, t, ControlPath(1.0, hv), {0.4, 0.2, 0.1, 0.05}, 32, o);
    report(8, r.sqrt_fit.r2 >= 0.9, "controlled vs skeleton distance ~ C sqrt(eps)",
           fmt("C %.4f, R^2 %.4f", r.sqrt_fit.slope, r.sqrt_fit.r2), seconds_since(t0));
}

void criterion_9() {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelConfig cfg = nonlinear_config(3, 909);
    const TrilinearTensor t = assemble_trilinear(cfg.basis);
    ConditionBOptions o;
    o.cells = 16;
    o.threads = threads();
    const ConditionBReport r = condition_b_check(cfg, t, 1.0, 50, o);
    std::string curve;
    for (std::size_t i = 0; i < r.covering_growth.size(); ++i) {
        curve += std::to_string(r.sample_sizes[i]) + ":" + std::to_string(r.covering_growth[i]) + " ";
    }
    const bool ok = std::isfinite(r.lipschitz_fit) && std::isfinite(r.lipschitz_max) && r.saturated;
    report(9, ok, "skeleton map on 50 controls in S_1",
           fmt("L_fit %.4f, L_max %.4f, covering ", r.lipschitz_fit, r.lipschitz_max) + curve, seconds_since(t0));
}

void criterion_10() {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelConfig cfg = nonlinear_config(3, 1010);
    const TrilinearTensor t = assemble_trilinear(cfg.basis);
    const MomentReport r = moment_study(cfg, t, {0.4, 0.2, 0.1, 0.05}, 200, nullptr, 1e-2, 17, threads());
    std::string rows;
    for (const auto& row : r.rows) rows += fmt("%.2f:%.4g ", row.eps, row.mean_sup_w4);
    report(10, r.ratio <= 2.0, "E sup |u|_W^4 uniform in eps", rows + fmt("max/min %.3f", r.ratio), seconds_since(t0));
}

void criterion_11(const std::string& cli) {
    const auto t0 = std::chrono::steady_clock::now();
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / ("sgldp_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "config.json");
        cfg << R"({"nu":1,"alpha":1,"cutoff":2,"T":1,"nonlinear":false,"dt":0.01,"seed":99,
"diffusion":{"family":"additive","m":2,"modes":[0,6],"sigma":[1.4142135623730951,1.7320508075688772]},
"u0":{"type":"zero"},"eps_list":[0.4,0.2,0.1],"n":20000,
"event":{"center":{"type":"v_components","entries":[{"mode":0,"value":0.65},{"mode":6,"value":0.45}]},"radius":0.3}})";
    }
    auto run = [&](int th) {
        const std::string out = (dir / ("t" + std::to_string(th))).string();
        const std::string cmd = cli + " sweep --config " + (dir / "config.json").string() + " --out " + out +
                                " --threads " + std::to_string(th) + " > /dev/null";
        if (std::system(cmd.c_str()) != 0) return std::string("<cli failed>");
        std::ifstream in(out + "/sweep.csv", std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string a = run(1), b = run(3), c = run(8);
    fs::remove_all(dir);
    const bool ok = !a.empty() && a[0] != '<' && a == b && a == c;
    report(11, ok, "sweep CSV with 1, 3 and 8 threads", ok ? "byte-identical" : "outputs differ", seconds_since(t0));
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "sgldp-cli";
    std::printf("threads available: %u\n", std::thread::hardware_concurrency());
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    const BallInstance ball;
    criterion_7(ball);
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11(cli);
    std::printf("%d of 11 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
