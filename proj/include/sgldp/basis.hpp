#pragma once

// Divergence-free real Fourier basis on the periodic torus [0, 2pi]^2.
//
// Each mode is e_{k,c}(x) = A * (k_perp / |k|) * c(k.x) with k_perp = (-k2, k1),
// c in {cos, sin} and A = 1 / (pi sqrt 2), so modes are L2-orthonormal and
// exactly divergence-free. Only zero-mean fields are represented (|k| >= 1),
// which makes the Poincare constant equal to 1.
//
// Coefficient vectors (SpectralField) hold the L2 coordinates of a field; every
// norm used by the model is a weighted sum of squared coefficients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "sgldp/errors.hpp"

namespace sgldp {

using SpectralField = Eigen::VectorXd;

enum class Channel { Cos, Sin };

inline const char* to_string(Channel c) { return c == Channel::Cos ? "cos" : "sin"; }

struct ModeKey {
    int k1 = 1;
    int k2 = 0;
    Channel channel = Channel::Cos;

    int norm2() const { return k1 * k1 + k2 * k2; }
    friend bool operator==(const ModeKey&, const ModeKey&) = default;
};

/// L2-normalization amplitude of a single real mode on [0, 2pi]^2.
inline constexpr double kModeAmplitude = 1.0 / (std::numbers::pi * std::numbers::sqrt2);

/// Mode catalogue plus per-mode weights. Immutable after construction.
struct BasisSpec {
    double alpha = 1.0;
    int cutoff = 1;
    std::vector<ModeKey> modes;
    Eigen::VectorXd w_l2;     ///< |e_i|^2 (all ones)
    Eigen::VectorXd w_grad;   ///< ||e_i||^2 = |k|^2
    Eigen::VectorXd w_v;      ///< 1 + alpha |k|^2
    Eigen::VectorXd w_curlx;  ///< |curl(e_i - alpha Lap e_i)|^2 = |k|^2 (1 + alpha |k|^2)^2
    Eigen::VectorXd lambda;   ///< (w_v + w_curlx) / w_v
    std::vector<std::size_t> partner;  ///< index of the same wavevector in the other channel

    std::size_t size() const { return modes.size(); }

    Eigen::VectorXd w_w() const { return w_v + w_curlx; }

    /// Index of a mode key, or size() when absent.
    std::size_t index_of(const ModeKey& key) const {
        auto it = std::find(modes.begin(), modes.end(), key);
        return static_cast<std::size_t>(it - modes.begin());
    }
};

inline void check_dims(const SpectralField& u, const BasisSpec& basis, const char* what = "field") {
    if (static_cast<std::size_t>(u.size()) != basis.size()) {
        throw DimensionError(std::string(what) + " has " + std::to_string(u.size()) +
                             " coefficients, basis has " + std::to_string(basis.size()));
    }
}

/// All divergence-free real channels with 1 <= |k|^2 <= cutoff^2, one
/// representative per +-k pair (k1 > 0, or k1 == 0 and k2 > 0).
inline BasisSpec build_torus_basis(int cutoff, double alpha) {
    if (cutoff < 1) throw ConfigError("cutoff", "must be >= 1");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha", "must be a finite positive number");

    BasisSpec basis;
    basis.alpha = alpha;
    basis.cutoff = cutoff;
    const int c2 = cutoff * cutoff;
    for (int k1 = 0; k1 <= cutoff; ++k1) {
        for (int k2 = -cutoff; k2 <= cutoff; ++k2) {
            const int n2 = k1 * k1 + k2 * k2;
            if (n2 < 1 || n2 > c2) continue;
            if (k1 == 0 && k2 <= 0) continue;
            basis.modes.push_back({k1, k2, Channel::Cos});
            basis.modes.push_back({k1, k2, Channel::Sin});
        }
    }
    std::sort(basis.modes.begin(), basis.modes.end(), [](const ModeKey& a, const ModeKey& b) {
        return std::tuple(a.norm2(), a.k1, a.k2, static_cast<int>(a.channel)) <
               std::tuple(b.norm2(), b.k1, b.k2, static_cast<int>(b.channel));
    });

    const auto n = static_cast<Eigen::Index>(basis.modes.size());
    basis.w_l2 = Eigen::VectorXd::Ones(n);
    basis.w_grad.resize(n);
    basis.w_v.resize(n);
    basis.w_curlx.resize(n);
    basis.lambda.resize(n);
    basis.partner.resize(basis.modes.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const ModeKey& m = basis.modes[static_cast<std::size_t>(i)];
        const double k2 = m.norm2();
        const double v = 1.0 + alpha * k2;
        basis.w_grad[i] = k2;
        basis.w_v[i] = v;
        basis.w_curlx[i] = k2 * v * v;
        basis.lambda[i] = (basis.w_v[i] + basis.w_curlx[i]) / basis.w_v[i];
        // cos/sin of one wavevector are adjacent after sorting
        basis.partner[static_cast<std::size_t>(i)] =
            static_cast<std::size_t>(m.channel == Channel::Cos ? i + 1 : i - 1);
    }
    return basis;
}

// Inner products. Both arguments are L2 coordinates in the same basis.

inline double inner_l2(const SpectralField& u, const SpectralField& v) { return u.dot(v); }

inline double inner_grad(const SpectralField& u, const SpectralField& v, const BasisSpec& b) {
    return (u.array() * v.array() * b.w_grad.array()).sum();
}

inline double inner_v(const SpectralField& u, const SpectralField& v, const BasisSpec& b) {
    return (u.array() * v.array() * b.w_v.array()).sum();
}

inline double inner_w(const SpectralField& u, const SpectralField& v, const BasisSpec& b) {
    return (u.array() * v.array() * (b.w_v + b.w_curlx).array()).sum();
}

struct Norms {
    double l2 = 0.0;     ///< |u|
    double grad = 0.0;   ///< ||u||
    double v = 0.0;      ///< ||u||_V
    double curlx = 0.0;  ///< ||u||_* = |curl(u - alpha Lap u)|
    double w = 0.0;      ///< ||u||_W
};

inline Norms norms(const SpectralField& u, const BasisSpec& basis) {
    check_dims(u, basis);
    const Eigen::ArrayXd sq = u.array().square();
    const double l2 = (sq * basis.w_l2.array()).sum();
    const double grad = (sq * basis.w_grad.array()).sum();
    const double curlx = (sq * basis.w_curlx.array()).sum();
    const double v = l2 + basis.alpha * grad;
    return {std::sqrt(l2), std::sqrt(grad), std::sqrt(v), std::sqrt(curlx), std::sqrt(v + curlx)};
}

inline double norm_v(const SpectralField& u, const BasisSpec& basis) {
    return std::sqrt((u.array().square() * basis.w_v.array()).sum());
}

inline double norm_w(const SpectralField& u, const BasisSpec& basis) {
    return std::sqrt((u.array().square() * (basis.w_v + basis.w_curlx).array()).sum());
}

/// Dual norm of W* restricted to the span: sup_w (f, w)_V / ||w||_W.
inline double norm_wstar(const SpectralField& f, const BasisSpec& basis) {
    check_dims(f, basis);
    return std::sqrt((f.array().square() * basis.w_v.array() / basis.lambda.array()).sum());
}

/// Solves v - alpha Lap v + grad q = f, div v = 0 for divergence-free f.
inline SpectralField apply_inv_stokes(const SpectralField& f, const BasisSpec& basis) {
    check_dims(f, basis);
    return f.cwiseQuotient(basis.w_v);
}

/// Scalar coefficients of curl(u - alpha Lap u) in the L2-orthonormal scalar
/// basis s_{k,c} = A c(k.x), indexed by the same mode keys.
inline Eigen::VectorXd curl_excess(const SpectralField& u, const BasisSpec& basis) {
    check_dims(u, basis);
    Eigen::VectorXd q(u.size());
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const ModeKey& m = basis.modes[i];
        const double k = std::sqrt(static_cast<double>(m.norm2()));
        const double scale = k * basis.w_v[static_cast<Eigen::Index>(i)];
        const std::size_t p = basis.partner[i];
        // curl of the cos channel is -|k| sin, curl of the sin channel is |k| cos
        if (m.channel == Channel::Cos) {
            q[static_cast<Eigen::Index>(p)] = -scale * u[static_cast<Eigen::Index>(i)];
        } else {
            q[static_cast<Eigen::Index>(p)] = scale * u[static_cast<Eigen::Index>(i)];
        }
    }
    return q;
}

/// Coefficients of u (in `from`) expressed in `to`: shared modes are copied,
/// modes missing from `to` are dropped and new ones start at zero.
inline SpectralField transfer(const SpectralField& u, const BasisSpec& from, const BasisSpec& to) {
    check_dims(u, from);
    SpectralField out = SpectralField::Zero(static_cast<Eigen::Index>(to.size()));
    for (std::size_t i = 0; i < to.size(); ++i) {
        const std::size_t j = from.index_of(to.modes[i]);
        if (j < from.size()) out[static_cast<Eigen::Index>(i)] = u[static_cast<Eigen::Index>(j)];
    }
    return out;
}

/// Point evaluation of the velocity field.
inline std::pair<double, double> evaluate_velocity(const SpectralField& u, const BasisSpec& basis,
                                                   double x, double y) {
    check_dims(u, basis);
    double vx = 0.0;
    double vy = 0.0;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const ModeKey& m = basis.modes[i];
        const double phase = m.k1 * x + m.k2 * y;
        const double c = m.channel == Channel::Cos ? std::cos(phase) : std::sin(phase);
        const double s = kModeAmplitude * c * u[static_cast<Eigen::Index>(i)] /
                         std::sqrt(static_cast<double>(m.norm2()));
        vx += -m.k2 * s;
        vy += m.k1 * s;
    }
    return {vx, vy};
}

}  // namespace sgldp
