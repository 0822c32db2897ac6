#pragma once

// Self-checks of a configured model: structural identities of the operators,
// the discrete energy balance and the adjoint gradient. Used by the CLI's
// check-invariants command.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "sgldp/basis.hpp"
#include "sgldp/fluid_ops.hpp"
#include "sgldp/integrators.hpp"
#include "sgldp/ldp.hpp"

namespace sgldp {

struct InvariantResult {
    std::string name;
    double measured = 0.0;  ///< worst value seen
    double tolerance = 0.0;
    bool pass = false;
    std::string note;
};

namespace detail {

inline SpectralField gaussian_field(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> nd;
    SpectralField u(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = nd(rng);
    return u;
}

inline InvariantResult make_result(std::string name, double measured, double tol, std::string note = {}) {
    return {std::move(name), measured, tol, measured <= tol, std::move(note)};
}

}  // namespace detail

inline std::vector<InvariantResult> run_invariant_suite(const ModelConfig& cfg, const TrilinearTensor& tensor,
                                                        std::uint64_t seed, int samples = 1000) {
    const BasisSpec& b = cfg.basis;
    std::mt19937_64 rng(seed);
    auto field = [&] { return detail::gaussian_field(rng, b.size()); };
    std::vector<InvariantResult> out;

    {
        double worst_skew = 0.0;
        double worst_diag = 0.0;
        for (int k = 0; k < samples; ++k) {
            const SpectralField u = field(), v = field(), w = field();
            const double scale = norm_w(u, b) * norm_v(v, b) * norm_v(w, b);
            const double s = inner_v(bhat(u, v, tensor, b), w, b) + inner_v(bhat(u, w, tensor, b), v, b);
            worst_skew = std::max(worst_skew, std::abs(s) / scale);
            worst_diag = std::max(worst_diag, std::abs(inner_v(bhat(u, v, tensor, b), v, b)) / scale);
        }
        out.push_back(detail::make_result("bhat <B(u,v),v> = 0", worst_diag, 1e-12, "relative to |u|_W |v|_V^2"));
        out.push_back(detail::make_result("bhat antisymmetry", worst_skew, 1e-12, "relative to |u|_W |v|_V |w|_V"));
    }
    {
        double worst = 0.0;
        for (int k = 0; k < samples / 10; ++k) {
            const SpectralField f = field(), g = field();
            const double rhs = inner_l2(f, g);
            const double lhs = inner_v(apply_inv_stokes(f, b), g, b);
            worst = std::max(worst, std::abs(lhs - rhs) / (f.norm() * g.norm()));
        }
        out.push_back(detail::make_result("resolvent (v,g)_V = (f,g)", worst, 1e-12));
    }
    {
        double worst = 0.0;
        for (int k = 0; k < samples; ++k) {
            const Norms n = norms(field(), b);
            const double v2 = n.v * n.v, g2 = n.grad * n.grad;
            worst = std::max({worst, (v2 / (1.0 + b.alpha) - g2) / v2, (g2 - v2 / b.alpha) / v2});
        }
        out.push_back(detail::make_result("norm sandwich", std::max(worst, 0.0), 1e-14, "violation relative to |u|_V^2"));
    }
    {
        double worst = 0.0;
        for (int k = 0; k < samples; ++k) {
            const SpectralField u = field();
            const double g2 = inner_grad(u, u, b);
            worst = std::max(worst, std::abs(inner_v(ahat(u, b), u, b) - g2) / g2);
        }
        out.push_back(detail::make_result("(A_hat u,u)_V = |grad u|^2", worst, 1e-12));
    }
    {
        const SpectralField z = SpectralField::Zero(static_cast<Eigen::Index>(b.size()));
        double worst = 0.0;
        for (double t : {0.0, 0.3 * cfg.T, cfg.T}) {
            worst = std::max(worst, fhat(z, t, cfg.forcing, b).cwiseAbs().maxCoeff());
            const Eigen::MatrixXd g = ghat(z, t, cfg.forcing, b);
            if (g.size() > 0) worst = std::max(worst, g.cwiseAbs().maxCoeff());
        }
        out.push_back(detail::make_result("F(0,t) = 0, G(0,t) = 0", worst, 0.0,
                                          cfg.forcing.satisfies_hypotheses() ? "" : "additive noise violates G(0)=0"));
    }
    {
        // unforced, noiseless copy: |u(T)|_V^2 + 2 nu int |grad u|^2 = |u0|_V^2
        ModelConfig free = cfg;
        free.forcing = ForcingSpec{};
        free.validate();
        const double dt = free.T / std::max<double>(1.0, std::round(free.T / 1e-3));
        const Trajectory tr = solve_deterministic(free, tensor, dt, 1 << 30);
        const double e0 = std::pow(norm_v(free.u0, b), 2);
        const double eT = std::pow(norm_v(tr.final_state(), b), 2) + tr.dissipation.back();
        const double rel = e0 > 0.0 ? std::abs(eT - e0) / e0 : std::abs(eT);
        out.push_back(detail::make_result("energy identity (RK4, dt~1e-3)", rel, 1e-6));
    }
    if (cfg.m() > 0) {
        const int K = 8;
        const double dt = cfg.T / (K * 4);
        std::normal_distribution<double> nd;
        Eigen::MatrixXd hv(K, cfg.m());
        for (Eigen::Index i = 0; i < hv.size(); ++i) hv.data()[i] = 0.5 * nd(rng);
        const ControlPath h(cfg.T, hv);
        const EndpointObjective obj{0.3 * field() / std::sqrt(static_cast<double>(b.size())), 5.0};
        const ObjectiveEval ev = adjoint_gradient(h, obj, cfg, tensor, dt);
        double worst = 0.0;
        for (int d = 0; d < 20; ++d) {
            Eigen::MatrixXd dir(K, cfg.m());
            for (Eigen::Index i = 0; i < dir.size(); ++i) dir.data()[i] = nd(rng);
            const double step = 1e-5;
            const double fp = adjoint_gradient(ControlPath(cfg.T, hv + step * dir), obj, cfg, tensor, dt).value;
            const double fm = adjoint_gradient(ControlPath(cfg.T, hv - step * dir), obj, cfg, tensor, dt).value;
            const double fd = (fp - fm) / (2 * step);
            const double an = (ev.gradient.array() * dir.array()).sum();
            worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-3));
        }
        out.push_back(detail::make_result("adjoint vs central differences", worst, 1e-5));
    }
    return out;
}

}  // namespace sgldp
