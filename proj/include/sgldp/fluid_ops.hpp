#pragma once

// Galerkin-projected operators of the second-grade fluid model on the torus basis.
//
//   A_hat u   = (I + alpha A)^{-1} A u
//   B_hat(u,v) = (I + alpha A)^{-1} (curl(u - alpha Lap u) x v)
//   F_hat, G_hat = (I + alpha A)^{-1} applied to the forcing / noise fields
//
// The nonlinearity is stored as the trilinear tensor
//   T[i][j][l] = (curl(e_j - alpha Lap e_j) x e_l, e_i)
// so that (B_hat(u, v), w)_V = sum T[i][j][l] u_j v_l w_i.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sgldp/basis.hpp"
#include "sgldp/errors.hpp"

namespace sgldp {

// ---------------------------------------------------------------------------
// Trilinear tensor

struct TensorEntry {
    std::uint32_t i = 0;
    std::uint32_t j = 0;
    std::uint32_t l = 0;
    double value = 0.0;
};

/// Sparse T[i][j][l], entries sorted by (i, j, l). Immutable after assembly.
struct TrilinearTensor {
    std::size_t dim = 0;
    double alpha = 0.0;
    int cutoff = 0;
    std::vector<TensorEntry> entries;
    std::vector<std::size_t> row_begin;  ///< size dim + 1, offsets of output index i

    std::size_t nnz() const { return entries.size(); }

    void build_rows() {
        row_begin.assign(dim + 1, 0);
        for (const auto& e : entries) ++row_begin[e.i + 1];
        for (std::size_t i = 0; i < dim; ++i) row_begin[i + 1] += row_begin[i];
    }
};

namespace detail {

/// Integral over [0,2pi]^2 of c1(k1.x) c2(k2.x) c3(k3.x), each c cos or sin.
inline double triple_trig_integral(const std::array<ModeKey, 3>& f) {
    using cd = std::complex<double>;
    cd total = 0.0;
    for (int s = 0; s < 8; ++s) {
        int kx = 0;
        int ky = 0;
        cd coef = 1.0;
        for (int a = 0; a < 3; ++a) {
            const int sign = (s >> a) & 1 ? -1 : 1;
            kx += sign * f[static_cast<std::size_t>(a)].k1;
            ky += sign * f[static_cast<std::size_t>(a)].k2;
            // cos = (e^{i} + e^{-i}) / 2, sin = (e^{i} - e^{-i}) / 2i
            coef *= f[static_cast<std::size_t>(a)].channel == Channel::Cos ? cd(0.5, 0.0)
                                                                           : cd(0.0, -0.5 * sign);
        }
        if (kx == 0 && ky == 0) total += coef;
    }
    return 4.0 * std::numbers::pi * std::numbers::pi * total.real();
}

inline std::pair<int, int> half_plane(int k1, int k2) {
    if (k1 < 0 || (k1 == 0 && k2 < 0)) return {-k1, -k2};
    return {k1, k2};
}

}  // namespace detail

/// Analytic value of a single entry, independent of any sparsity bookkeeping.
inline double trilinear_entry(const BasisSpec& basis, std::size_t i, std::size_t j, std::size_t l) {
    const ModeKey& mi = basis.modes[i];
    const ModeKey& mj = basis.modes[j];
    const ModeKey& ml = basis.modes[l];
    const double kj = std::sqrt(static_cast<double>(mj.norm2()));
    const double ki = std::sqrt(static_cast<double>(mi.norm2()));
    const double kl = std::sqrt(static_cast<double>(ml.norm2()));
    const double cross = static_cast<double>(ml.k1 * mi.k2 - ml.k2 * mi.k1);
    if (cross == 0.0) return 0.0;
    // curl(e_j - alpha Lap e_j) = A (1 + alpha|k_j|^2) |k_j| c_j'(k_j.x)
    // with cos' = -sin and sin' = cos
    ModeKey dj = mj;
    double sign = 1.0;
    if (mj.channel == Channel::Cos) {
        dj.channel = Channel::Sin;
        sign = -1.0;
    } else {
        dj.channel = Channel::Cos;
    }
    const double integral = detail::triple_trig_integral({dj, ml, mi});
    if (integral == 0.0) return 0.0;
    const double a3 = kModeAmplitude * kModeAmplitude * kModeAmplitude;
    return a3 * (1.0 + basis.alpha * mj.norm2()) * kj * sign * cross / (kl * ki) * integral;
}

/// Enumerates (j, l) pairs and only the output wavevectors allowed by the
/// convolution rule k_i = +-(k_j +- k_l).
inline TrilinearTensor assemble_trilinear(const BasisSpec& basis) {
    TrilinearTensor t;
    t.dim = basis.size();
    t.alpha = basis.alpha;
    t.cutoff = basis.cutoff;

    std::map<std::pair<int, int>, std::size_t> cos_index;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        if (basis.modes[i].channel == Channel::Cos) cos_index[{basis.modes[i].k1, basis.modes[i].k2}] = i;
    }

    for (std::size_t j = 0; j < basis.size(); ++j) {
        const ModeKey& mj = basis.modes[j];
        for (std::size_t l = 0; l < basis.size(); ++l) {
            const ModeKey& ml = basis.modes[l];
            std::set<std::size_t> targets;
            for (int s : {1, -1}) {
                const auto key = detail::half_plane(mj.k1 + s * ml.k1, mj.k2 + s * ml.k2);
                auto it = cos_index.find(key);
                if (it != cos_index.end()) {
                    targets.insert(it->second);
                    targets.insert(basis.partner[it->second]);
                }
            }
            for (std::size_t i : targets) {
                const double v = trilinear_entry(basis, i, j, l);
                if (v != 0.0) {
                    t.entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                                         static_cast<std::uint32_t>(l), v});
                }
            }
        }
    }
    std::sort(t.entries.begin(), t.entries.end(), [](const TensorEntry& a, const TensorEntry& b) {
        return std::tie(a.i, a.j, a.l) < std::tie(b.i, b.j, b.l);
    });
    t.build_rows();
    return t;
}

inline void check_tensor(const TrilinearTensor& t, const BasisSpec& basis) {
    if (t.dim != basis.size()) {
        throw DimensionError("tensor assembled for " + std::to_string(t.dim) + " modes, basis has " +
                             std::to_string(basis.size()));
    }
}

/// sum T[i][j][l] u_j v_l w_i
inline double trilinear_form(const SpectralField& u, const SpectralField& v, const SpectralField& w,
                             const TrilinearTensor& t) {
    double s = 0.0;
    for (const auto& e : t.entries) s += e.value * u[e.j] * v[e.l] * w[e.i];
    return s;
}

/// Projection of curl(u - alpha Lap u) x v onto each e_i, before the resolvent.
inline SpectralField contract(const SpectralField& u, const SpectralField& v, const TrilinearTensor& t) {
    SpectralField out = SpectralField::Zero(static_cast<Eigen::Index>(t.dim));
    for (std::size_t i = 0; i < t.dim; ++i) {
        double s = 0.0;
        for (std::size_t p = t.row_begin[i]; p < t.row_begin[i + 1]; ++p) {
            const auto& e = t.entries[p];
            s += e.value * u[e.j] * v[e.l];
        }
        out[static_cast<Eigen::Index>(i)] = s;
    }
    return out;
}

inline SpectralField bhat(const SpectralField& u, const SpectralField& v, const TrilinearTensor& t,
                          const BasisSpec& basis) {
    check_dims(u, basis, "u");
    check_dims(v, basis, "v");
    check_tensor(t, basis);
    return apply_inv_stokes(contract(u, v, t), basis);
}

inline SpectralField ahat(const SpectralField& u, const BasisSpec& basis) {
    check_dims(u, basis);
    return u.cwiseProduct(basis.w_grad).cwiseQuotient(basis.w_v);
}

// ---------------------------------------------------------------------------
// Forcing and diffusion

enum class ForcingFamily { None, Linear, Modulated };
enum class DiffusionFamily { None, Diagonal, Additive };

inline const char* to_string(ForcingFamily f) {
    switch (f) {
        case ForcingFamily::None: return "none";
        case ForcingFamily::Linear: return "linear";
        case ForcingFamily::Modulated: return "modulated";
    }
    return "?";
}

inline const char* to_string(DiffusionFamily g) {
    switch (g) {
        case DiffusionFamily::None: return "none";
        case DiffusionFamily::Diagonal: return "diagonal";
        case DiffusionFamily::Additive: return "additive";
    }
    return "?";
}

/// F(u,t) = kappa s(t) u with s = 1 (linear) or sin(omega t + phase) (modulated).
/// Diagonal G: column j is sigma_j D_j u. Additive G: column j is sigma_j e_{mode_j};
/// the additive family breaks G(0,t) = 0 and exists for linear-Gaussian oracles.
struct ForcingSpec {
    ForcingFamily forcing = ForcingFamily::None;
    double kappa = 0.0;
    double omega = 1.0;
    double phase = 0.0;

    DiffusionFamily diffusion = DiffusionFamily::None;
    int m = 1;
    std::vector<double> sigma;
    std::vector<Eigen::VectorXd> diag;  ///< Diagonal: one length-M vector per column
    std::vector<std::size_t> modes;     ///< Additive: target mode per column

    double modulation(double t) const {
        switch (forcing) {
            case ForcingFamily::None: return 0.0;
            case ForcingFamily::Linear: return 1.0;
            case ForcingFamily::Modulated: return std::sin(omega * t + phase);
        }
        return 0.0;
    }

    bool satisfies_hypotheses() const { return diffusion != DiffusionFamily::Additive; }

    /// Lipschitz constant of F in the V norm, uniform in t.
    double lipschitz_f() const {
        return forcing == ForcingFamily::None ? 0.0 : std::abs(kappa);
    }

    /// Lipschitz constant of G into V^m, uniform in t.
    double lipschitz_g() const {
        if (diffusion != DiffusionFamily::Diagonal) return 0.0;
        double s = 0.0;
        for (int j = 0; j < m; ++j) {
            const double dmax = diag[static_cast<std::size_t>(j)].cwiseAbs().maxCoeff();
            s += sigma[static_cast<std::size_t>(j)] * sigma[static_cast<std::size_t>(j)] * dmax * dmax;
        }
        return std::sqrt(s);
    }

    /// Checks internal consistency against a basis and fills default D_j.
    void validate(const BasisSpec& basis) {
        const auto n = static_cast<Eigen::Index>(basis.size());
        if (!std::isfinite(kappa)) throw ConfigError("kappa", "must be finite");
        if (diffusion == DiffusionFamily::None) {
            sigma.clear();
            diag.clear();
            modes.clear();
            return;
        }
        if (m < 1) throw ConfigError("diffusion.m", "must be >= 1");
        if (sigma.empty()) sigma.assign(static_cast<std::size_t>(m), 1.0);
        if (sigma.size() != static_cast<std::size_t>(m)) {
            throw ConfigError("diffusion.sigma", "expected " + std::to_string(m) + " entries");
        }
        if (diffusion == DiffusionFamily::Diagonal) {
            if (diag.empty()) {
                for (int j = 0; j < m; ++j) {
                    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
                    for (Eigen::Index i = 0; i < n; ++i) {
                        if (i % m == j) d[i] = 1.0;
                    }
                    diag.push_back(d);
                }
            }
            if (diag.size() != static_cast<std::size_t>(m)) {
                throw ConfigError("diffusion.diag", "expected " + std::to_string(m) + " rows");
            }
            for (const auto& d : diag) {
                if (d.size() != n) throw ConfigError("diffusion.diag", "row length must equal the mode count");
            }
        } else {
            if (modes.size() != static_cast<std::size_t>(m)) {
                throw ConfigError("diffusion.modes", "expected " + std::to_string(m) + " mode indices");
            }
            for (auto idx : modes) {
                if (idx >= basis.size()) throw ConfigError("diffusion.modes", "mode index out of range");
            }
        }
    }
};

struct ModelConfig {
    double nu = 1.0;
    BasisSpec basis;
    ForcingSpec forcing;
    SpectralField u0;
    double T = 1.0;
    bool nonlinear = true;  ///< false zeroes B_hat (linear oracle instances)
    double blowup_ceiling = 1e6;

    double alpha() const { return basis.alpha; }
    std::size_t dim() const { return basis.size(); }
    int m() const { return forcing.diffusion == DiffusionFamily::None ? 0 : forcing.m; }

    void validate() {
        if (!(nu > 0.0) || !std::isfinite(nu)) throw ConfigError("nu", "must be a finite positive number");
        if (!(basis.alpha > 0.0)) throw ConfigError("alpha", "must be positive");
        if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("T", "must be a finite positive number");
        if (u0.size() == 0) u0 = SpectralField::Zero(static_cast<Eigen::Index>(basis.size()));
        if (static_cast<std::size_t>(u0.size()) != basis.size()) throw ConfigError("u0", "dimension mismatch");
        if (!u0.allFinite()) throw ConfigError("u0", "must be finite");
        if (!(blowup_ceiling > 0.0)) throw ConfigError("blowup_ceiling", "must be positive");
        forcing.validate(basis);
    }
};

inline SpectralField fhat(const SpectralField& u, double t, const ForcingSpec& forcing, const BasisSpec& basis) {
    check_dims(u, basis);
    const double s = forcing.kappa * forcing.modulation(t);
    return apply_inv_stokes(s * u, basis);
}

/// Raw noise fields G(u,t) as an M x m matrix (columns are fields).
inline Eigen::MatrixXd g_raw(const SpectralField& u, double /*t*/, const ForcingSpec& forcing,
                             const BasisSpec& basis) {
    check_dims(u, basis);
    const auto n = static_cast<Eigen::Index>(basis.size());
    if (forcing.diffusion == DiffusionFamily::None) return Eigen::MatrixXd::Zero(n, 0);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, forcing.m);
    for (int j = 0; j < forcing.m; ++j) {
        const double s = forcing.sigma[static_cast<std::size_t>(j)];
        if (forcing.diffusion == DiffusionFamily::Diagonal) {
            g.col(j) = s * forcing.diag[static_cast<std::size_t>(j)].cwiseProduct(u);
        } else {
            g(static_cast<Eigen::Index>(forcing.modes[static_cast<std::size_t>(j)]), j) = s;
        }
    }
    return g;
}

inline Eigen::MatrixXd ghat(const SpectralField& u, double t, const ForcingSpec& forcing, const BasisSpec& basis) {
    Eigen::MatrixXd g = g_raw(u, t, forcing, basis);
    for (Eigen::Index c = 0; c < g.cols(); ++c) g.col(c) = g.col(c).cwiseQuotient(basis.w_v);
    return g;
}

/// -nu A_hat u - B_hat(u,u) + F_hat(u,t) + G_hat(u,t) h_dot
inline SpectralField drift(const SpectralField& u, double t, const Eigen::VectorXd& h_dot, const ModelConfig& cfg,
                           const TrilinearTensor& tensor) {
    const BasisSpec& b = cfg.basis;
    check_dims(u, b);
    SpectralField rhs = -cfg.nu * u.cwiseProduct(b.w_grad);
    if (cfg.nonlinear) {
        check_tensor(tensor, b);
        rhs -= contract(u, u, tensor);
    }
    rhs += cfg.forcing.kappa * cfg.forcing.modulation(t) * u;
    if (cfg.m() > 0 && h_dot.size() > 0) {
        if (h_dot.size() != cfg.m()) throw DimensionError("h_dot has wrong dimension");
        rhs += g_raw(u, t, cfg.forcing, b) * h_dot;
    }
    return rhs.cwiseQuotient(b.w_v);
}

/// (d drift / du)^T lam, Euclidean in coefficient space.
inline SpectralField drift_vjp_state(const SpectralField& u, double t, const Eigen::VectorXd& h_dot,
                                     const SpectralField& lam, const ModelConfig& cfg,
                                     const TrilinearTensor& tensor) {
    const BasisSpec& b = cfg.basis;
    const SpectralField lt = lam.cwiseQuotient(b.w_v);
    SpectralField out = (-cfg.nu * b.w_grad.array() + cfg.forcing.kappa * cfg.forcing.modulation(t)).matrix()
                            .cwiseProduct(lt);
    if (cfg.nonlinear) {
        // d/du_p sum T[i][j][l] u_j u_l hits both slots
        for (const auto& e : tensor.entries) {
            const double w = e.value * lt[e.i];
            out[e.j] -= w * u[e.l];
            out[e.l] -= w * u[e.j];
        }
    }
    if (cfg.forcing.diffusion == DiffusionFamily::Diagonal && h_dot.size() > 0) {
        for (int j = 0; j < cfg.forcing.m; ++j) {
            out += cfg.forcing.sigma[static_cast<std::size_t>(j)] * h_dot[j] *
                   cfg.forcing.diag[static_cast<std::size_t>(j)].cwiseProduct(lt);
        }
    }
    return out;
}

/// (d drift / d h_dot)^T lam = G_hat(u,t)^T lam.
inline Eigen::VectorXd drift_vjp_control(const SpectralField& u, double t, const SpectralField& lam,
                                         const ModelConfig& cfg) {
    if (cfg.m() == 0) return Eigen::VectorXd::Zero(0);
    return ghat(u, t, cfg.forcing, cfg.basis).transpose() * lam;
}

}  // namespace sgldp
