#pragma once

// Deterministic random streams for trajectory ensembles.
//
// Each trajectory draws from its own generator derived from
// (master seed, trajectory index, channel), so ensemble results do not
// depend on scheduling order and a fixed seed reproduces runs bit for bit.
// The generator and the normal transform are implemented here rather than
// taken from <random> because libstdc++'s distributions are not pinned
// across versions.

#include <cmath>
#include <cstdint>

namespace colddamp {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** by Blackman & Vigna (public domain reference implementation).
class Xoshiro256 {
  public:
    Xoshiro256() : Xoshiro256(0) {}

    explicit Xoshiro256(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in (0, 1]; never returns 0 so log() below is safe.
    double uniform() {
        return ((next() >> 11) + 1) * 0x1.0p-53;
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
};

// Standard-normal stream via Box-Muller, pairwise cached.
class NormalStream {
  public:
    NormalStream(std::uint64_t master_seed, std::uint64_t trajectory_index,
                 std::uint64_t channel)
        : gen_(mix(master_seed, trajectory_index, channel)) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = gen_.uniform();
        const double u2 = gen_.uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double c = std::cos(6.283185307179586476925287 * u2);
        const double s = std::sin(6.283185307179586476925287 * u2);
        spare_ = r * s;
        have_spare_ = true;
        return r * c;
    }

  private:
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t index,
                             std::uint64_t channel) {
        std::uint64_t s = seed;
        std::uint64_t a = splitmix64(s);
        s ^= index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
        std::uint64_t b = splitmix64(s);
        s ^= channel * 0xda942042e4dd58b5ULL + 1;
        std::uint64_t c = splitmix64(s);
        return a ^ (b + 0x9e3779b97f4a7c15ULL) ^ (c << 1);
    }

    Xoshiro256 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace colddamp
