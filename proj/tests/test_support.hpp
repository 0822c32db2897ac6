#pragma once

// Test-only oracles. Nothing here calls the library's weight formulas,
// tensor assembly or resolvent: fields are sampled on a grid from the mode
// definition and integrated numerically.

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sgldp/basis.hpp"

namespace sgldp::testing {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// n-th derivative of cos or sin evaluated at theta.
inline double trig_derivative(Channel c, int order, double theta) {
    // cos -> -sin -> -cos -> sin -> cos; sin is cos shifted by a quarter period
    const double shift = c == Channel::Cos ? 0.0 : -0.5 * std::numbers::pi;
    return std::cos(theta + shift + 0.5 * std::numbers::pi * order);
}

/// Velocity of one basis mode and its partial derivatives, from the definition
/// e = (1/(pi sqrt2)) (k_perp/|k|) c(k.x), k_perp = (-k2, k1).
struct ModeOracle {
    ModeKey key;

    /// d^{a+b} / dx^a dy^b of the velocity component `comp` at (x, y).
    double partial(int comp, int a, int b, double x, double y) const {
        const double amp = 1.0 / (std::numbers::pi * std::sqrt(2.0));
        const double kn = std::sqrt(static_cast<double>(key.k1 * key.k1 + key.k2 * key.k2));
        const double dir = comp == 0 ? -key.k2 / kn : key.k1 / kn;
        const double chain = std::pow(key.k1, a) * std::pow(key.k2, b);
        return amp * dir * chain * trig_derivative(key.channel, a + b, key.k1 * x + key.k2 * y);
    }

    double laplacian(int comp, double x, double y) const {
        return partial(comp, 2, 0, x, y) + partial(comp, 0, 2, x, y);
    }

    /// curl(e - alpha Lap e) from third derivatives, no closed-form shortcuts.
    double curl_excess(double alpha, double x, double y) const {
        const double curl = partial(1, 1, 0, x, y) - partial(0, 0, 1, x, y);
        const double curl_lap = partial(1, 3, 0, x, y) + partial(1, 1, 2, x, y) - partial(0, 2, 1, x, y) -
                                partial(0, 0, 3, x, y);
        return curl - alpha * curl_lap;
    }
};

/// Trapezoid rule on an n x n periodic grid (exact for trig polynomials of degree < n).
inline double integrate_grid(int n, const std::function<double(double, double)>& f) {
    const double h = kTwoPi / n;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) s += f(i * h, j * h);
    }
    return s * h * h;
}

/// Sampled periodic scalar field on an n x n grid, index (i, j) -> (x_i, y_j).
struct GridField {
    int n = 0;
    std::vector<double> v;

    GridField(int size, const std::function<double(double, double)>& f) : n(size), v(static_cast<std::size_t>(size * size)) {
        const double h = kTwoPi / n;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) v[idx(i, j)] = f(i * h, j * h);
        }
    }
    GridField(int size, std::vector<double> values) : n(size), v(std::move(values)) {}

    std::size_t idx(int i, int j) const {
        return static_cast<std::size_t>(((i % n + n) % n) * n + ((j % n + n) % n));
    }
    double at(int i, int j) const { return v[idx(i, j)]; }

    /// Eighth-order central difference along x (axis 0) or y (axis 1).
    GridField diff(int axis) const {
        static constexpr double c[4] = {4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0};
        const double h = kTwoPi / n;
        std::vector<double> out(v.size());
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int p = 1; p <= 4; ++p) {
                    s += c[p - 1] * (axis == 0 ? at(i + p, j) - at(i - p, j) : at(i, j + p) - at(i, j - p));
                }
                out[idx(i, j)] = s / h;
            }
        }
        return {n, out};
    }

    GridField operator+(const GridField& o) const { return combine(o, 1.0); }
    GridField operator-(const GridField& o) const { return combine(o, -1.0); }
    GridField scaled(double a) const {
        std::vector<double> out(v);
        for (auto& x : out) x *= a;
        return {n, out};
    }
    double integral_of_product(const GridField& o) const {
        const double h = kTwoPi / n;
        double s = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) s += v[k] * o.v[k];
        return s * h * h;
    }

private:
    GridField combine(const GridField& o, double sign) const {
        std::vector<double> out(v);
        for (std::size_t k = 0; k < v.size(); ++k) out[k] += sign * o.v[k];
        return {n, out};
    }
};

inline Eigen::VectorXd random_field(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Eigen::VectorXd u(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = nd(rng);
    return u;
}

}  // namespace sgldp::testing
