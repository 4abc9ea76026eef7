#include "fedack/rng.hpp"

#include <cmath>
#include <limits>

#include "fedack/common.hpp"

namespace fedack {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

Rng Rng::derive(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t s = base;
    std::uint64_t h = splitmix64(s);
    s ^= a + 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(s);
    s ^= b + 0xc2b2ae3d27d4eb4fULL;
    h ^= splitmix64(s);
    s ^= c + 0x165667b19e3779f9ULL;
    h ^= splitmix64(s);
    return Rng(h);
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

double Rng::gamma(double alpha) {
    check(alpha > 0.0, "Rng::gamma: alpha must be > 0");
    if (alpha < 1.0) {
        double u = uniform();
        if (u < 1e-300) u = 1e-300;
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        double u = uniform();
        if (u < 1e-300) u = 1e-300;
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

std::vector<double> Rng::dirichlet(double concentration, int k) {
    check(concentration > 0.0, "Rng::dirichlet: concentration must be > 0");
    check(k >= 1, "Rng::dirichlet: k must be >= 1");
    std::vector<double> out(static_cast<size_t>(k));
    double sum = 0.0;
    for (auto& x : out) {
        x = gamma(concentration);
        sum += x;
    }
    if (sum < 1e-300) {
        // All draws underflowed; fall back to a uniform split.
        for (auto& x : out) x = 1.0 / k;
        return out;
    }
    for (auto& x : out) x /= sum;
    return out;
}

int Rng::uniform_int(int n) {
    check(n > 0, "Rng::uniform_int: n must be > 0");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = eng_();
    } while (x >= limit);
    return static_cast<int>(x % bound);
}

} // namespace fedack
