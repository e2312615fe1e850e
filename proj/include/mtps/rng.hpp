#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mtps {

// Deterministic random source. All distributions are hand-rolled on top of
// mt19937_64 so that streams are bit-identical across platforms and standard
// library versions (std:: distributions are implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed), base_seed_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int n) {  // [0, n)
        return static_cast<int>(engine_() % static_cast<uint64_t>(n));
    }

    double normal(double mean = 0.0, double sd = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + sd * spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return mean + sd * u * f;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Knuth's product method; event rates here are small (< ~10).
    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        int k = 0;
        double prod = uniform();
        while (prod > limit) {
            ++k;
            prod *= uniform();
        }
        return k;
    }

    // Marsaglia-Tsang for shape >= 1, boosted for shape < 1.
    double gamma(double shape, double scale) {
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
        }
    }

    // Shuffle indices deterministically (Fisher-Yates).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = engine_() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream; splitmix64 over (seed ^ tag) so derived
    // streams do not overlap with the parent.
    static uint64_t mix(uint64_t seed, uint64_t tag) {
        uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    Rng derive(uint64_t tag) const { return Rng(mix(base_seed_, tag)); }

private:
    std::mt19937_64 engine_;
    uint64_t base_seed_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mtps
