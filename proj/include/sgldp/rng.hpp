#pragma once

// Counter-based Gaussian increments. Every normal variate is a pure function of
// (seed, stream, step, index), so ensembles reproduce bit-exactly no matter how
// trajectories are scheduled across threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Dense>

namespace sgldp {

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) {
        for (int r = 0; r < 10; ++r) {
            if (r > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            ctr = round(ctr, key);
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static Counter round(const Counter& c, const Key& k) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// Uniform in (0, 1) from the top 52 random bits; never returns 0 or 1.
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Brownian increments for one trajectory.
///
/// With `substeps` = r, the increment over a coarse step k is the sum of the r
/// fine increments at fine indices k*r .. k*r + r - 1, so a path run at dt with
/// r = 2 sees the same Brownian path as one run at dt/2 with r = 1.
struct NoiseDriver {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    int m = 1;
    int substeps = 1;

    /// Standard normal number `index` of fine step `step`.
    double normal(std::uint64_t step, int index) const {
        const auto block = static_cast<std::uint32_t>(index / 2);
        const Philox4x32::Counter ctr{block, static_cast<std::uint32_t>(step),
                                      static_cast<std::uint32_t>(stream),
                                      static_cast<std::uint32_t>(stream >> 32) ^
                                          (static_cast<std::uint32_t>(step >> 32) << 16)};
        const Philox4x32::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
        const auto r = Philox4x32::generate(ctr, key);
        // Box-Muller on one pair of uniforms gives two normals
        const double u1 = to_open_unit(r[0], r[1]);
        const double u2 = to_open_unit(r[2], r[3]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        return index % 2 == 0 ? rad * std::cos(ang) : rad * std::sin(ang);
    }

    /// W(t_{k+1}) - W(t_k) for coarse step k of size dt.
    Eigen::VectorXd increment(std::uint64_t step, double dt) const {
        Eigen::VectorXd dw = Eigen::VectorXd::Zero(m);
        const double scale = std::sqrt(dt / substeps);
        for (int s = 0; s < substeps; ++s) {
            const std::uint64_t fine = step * static_cast<std::uint64_t>(substeps) + static_cast<std::uint64_t>(s);
            for (int j = 0; j < m; ++j) dw[j] += scale * normal(fine, j);
        }
        return dw;
    }
};

/// Stream id for sample `index` of ensemble `group`; groups keep ensembles at
/// different epsilon values on disjoint streams.
inline std::uint64_t stream_id(std::uint64_t group, std::uint64_t index) { return (group << 40) | index; }

}  // namespace sgldp
