#ifndef RERAND_RNG_HPP
#define RERAND_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

#include <Eigen/Core>

namespace rerand {

/// splitmix64 step; used to whiten seeds and derive named substreams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Deterministic substream seed from a master seed and a list of tags
/// (method id, dimension, replication index, ...). The same tags always
/// yield the same seed, independent of scheduling or worker count.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> tags) {
    std::uint64_t state = master;
    std::uint64_t h = splitmix64(state);
    for (std::uint64_t t : tags) {
        state = h ^ t;
        h = splitmix64(state);
    }
    return h;
}

/// Seeded random stream. The engine is mt19937_64 (its output sequence is
/// pinned by the standard); uniforms, integers and normals are generated
/// here rather than with std:: distributions so that sequences do not
/// depend on the standard library implementation. Normals use Box-Muller
/// with a cached spare.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on the open interval (0,1) with 53-bit resolution.
    double uniform01() {
        return (static_cast<double>(engine_() >> 11) + 0.5) *
               (1.0 / 9007199254740992.0);  // 2^53
    }

    /// Unbiased uniform integer in [lo, hi] by rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1u;
        if (range == 0) return static_cast<std::int64_t>(engine_());  // full span
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return lo + static_cast<std::int64_t>(v % range);
    }

    /// Standard normal deviate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace rerand

#endif  // RERAND_RNG_HPP
