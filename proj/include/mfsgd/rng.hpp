#pragma once
#include <cstdint>
#include <span>

namespace mfsgd {

// splitmix64 finalizer; doubles as the hash for substream keying
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed) {
        // expand the seed through a splitmix64 sequence (recommended seeding)
        for (auto& w : s_) {
            seed += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = seed;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            w = z ^ (z >> 31);
        }
    }

    std::uint64_t next() {
        const std::uint64_t r = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return r;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

// every random draw in the library comes from a stream keyed by
// (master seed, replication, purpose); runs sharing (master, replication)
// and differing elsewhere (e.g. the noise exponent) are therefore coupled
enum class StreamPurpose : std::uint64_t {
    Init = 1,
    Data = 2,
    BatchSize = 3,
    Noise = 4,
    Quadrature = 5,
    Bootstrap = 6,
};

// replication id reserved for reference runs (large-N or mean-field)
inline constexpr std::uint32_t kReferenceRep = 0xFFFFFFFFu;

inline std::uint64_t substream_seed(std::uint64_t master, std::uint32_t replication,
                                    StreamPurpose purpose) {
    return mix64(master ^ mix64(0xA24BAED4963EE407ULL * (replication + 1ULL)) ^
                 mix64(0x9FB21C651E98DF25ULL * static_cast<std::uint64_t>(purpose)));
}

// 256-layer ziggurat tables for the standard normal
struct ZigguratTables {
    double w[256];        // layer widths scaled by 2^-53
    double f[257];        // exp(-x_i^2/2)
    std::uint64_t k[256]; // fast-accept thresholds on the 53-bit mantissa
};
extern const ZigguratTables kZigTables;

class RngStream {
public:
    RngStream(std::uint64_t master, std::uint32_t replication, StreamPurpose purpose)
        : gen_(substream_seed(master, replication, purpose)) {}
    explicit RngStream(std::uint64_t raw_seed) : gen_(raw_seed) {}

    std::uint64_t raw() { return gen_.next(); }

    double uniform() {  // [0, 1)
        return static_cast<double>(gen_.next() >> 11) * 0x1.0p-53;
    }

    // standard normal via ziggurat; the NaN-sentinel retry below relies on
    // IEEE comparisons, so this translation unit must not see -ffast-math
    double normal() {
        for (;;) {
            const std::uint64_t u = gen_.next();
            const int i = static_cast<int>(u & 255);
            const std::uint64_t j = u >> 11;
            const double x = static_cast<double>(j) * kZigTables.w[i];
            if (j < kZigTables.k[i]) return (u & 256) ? -x : x;
            const double v = normal_overhang(i, x, (u & 256) != 0);
            if (v == v) return v;
        }
    }

    void fill_normal(std::span<double> out) {
        for (auto& v : out) v = normal();
    }

    // unbiased integer in [0, n)
    std::uint64_t below(std::uint64_t n);

private:
    double normal_overhang(int i, double x, bool neg);  // NaN means "rejected"
    Xoshiro256pp gen_;
};

}  // namespace mfsgd
