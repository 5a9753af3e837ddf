#include "fdl/rng.hpp"

#include <cmath>

namespace fdl {

std::uint64_t mix_seed(std::uint64_t state) {
    std::uint64_t z = state + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return mix_seed(mix_seed(base) ^ (0xa0761d6478bd642fULL * (index + 1)));
}

Rng Rng::from_entropy() {
    std::random_device rd;
    std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    return Rng(seed);
}

double Rng::uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

int Rng::uniform_int(int lo, int hi) {
    // Rejection-free modulo is biased; span here is tiny relative to 2^64 so
    // the bias is far below anything observable, and determinism matters more.
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double Rng::laplace(double scale) {
    double u = uniform() - 0.5;
    double mag = std::abs(u);
    if (mag >= 0.5) mag = 0.4999999999999999;  // guard log(0)
    double s = (u < 0.0) ? -1.0 : 1.0;
    return -scale * s * std::log(1.0 - 2.0 * mag);
}

}  // namespace fdl
