#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedack {

// Deterministic random source. The engine is std::mt19937_64 (fully specified
// by the standard); all value transforms are hand-rolled so that streams are
// bit-identical across platforms and standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Independent stream keyed by up to three stream ids (round, client, stage...).
    static Rng derive(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0);

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal();

    // Gamma(alpha, 1), Marsaglia-Tsang with the boost transform for alpha < 1.
    double gamma(double alpha);

    std::vector<double> dirichlet(double concentration, int k);

    // Uniform integer in [0, n), rejection sampled (unbiased).
    int uniform_int(int n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[i], v[static_cast<size_t>(j)]);
        }
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace fedack
