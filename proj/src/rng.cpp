#include "mfsgd/rng.hpp"

#include <cmath>
#include <limits>

namespace mfsgd {

namespace {
// classic 256-layer constants: tail cutoff and per-layer area
constexpr double kTailR = 3.6541528853610088;
constexpr double kArea = 0.00492867323399;

ZigguratTables make_tables() {
    ZigguratTables t{};
    double x[257];
    x[0] = kArea / std::exp(-0.5 * kTailR * kTailR);  // virtual width of the base strip
    x[1] = kTailR;
    for (int i = 2; i < 256; ++i)
        x[i] = std::sqrt(-2.0 * std::log(kArea / x[i - 1] + std::exp(-0.5 * x[i - 1] * x[i - 1])));
    x[256] = 0.0;
    for (int i = 0; i < 256; ++i) {
        t.k[i] = static_cast<std::uint64_t>((x[i + 1] / x[i]) * 9007199254740992.0);  // 2^53
        t.w[i] = x[i] * 0x1.0p-53;
    }
    for (int i = 0; i <= 256; ++i) t.f[i] = std::exp(-0.5 * x[i] * x[i]);
    return t;
}
}  // namespace

const ZigguratTables kZigTables = make_tables();

double RngStream::normal_overhang(int i, double x, bool neg) {
    if (i == 0) {  // tail beyond kTailR
        double a, b;
        do {
            a = -std::log(1.0 - uniform()) / kTailR;
            b = -std::log(1.0 - uniform());
        } while (b + b < a * a);
        const double v = kTailR + a;
        return neg ? -v : v;
    }
    if (kZigTables.f[i + 1] + uniform() * (kZigTables.f[i] - kZigTables.f[i + 1]) <
        std::exp(-0.5 * x * x))
        return neg ? -x : x;
    return std::numeric_limits<double>::quiet_NaN();
}

std::uint64_t RngStream::below(std::uint64_t n) {
    const std::uint64_t reject = (0 - n) % n;  // 2^64 mod n
    for (;;) {
        const std::uint64_t r = gen_.next();
        if (r >= reject) return r % n;
    }
}

}  // namespace mfsgd
