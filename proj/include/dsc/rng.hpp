#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace dsc {

/// Deterministic random stream. All stochastic pieces of the pipeline
/// (parameter init, shuffling, dropout, synthetic data) draw from streams
/// derived from a single experiment seed, so runs are reproducible bit for
/// bit. Gaussians are produced with a hand-rolled Box-Muller transform to
/// stay independent of the standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }

    /// Derive an independent stream from this seed, a tag and indices.
    /// hash-combined with splitmix64 so (seed, "shuffle", epoch) and
    /// (seed, "dropout", epoch) never collide in practice.
    static Rng derive(std::uint64_t seed, const std::string& tag, std::uint64_t a = 0,
                      std::uint64_t b = 0) {
        std::uint64_t h = seed;
        for (char c : tag) h = splitmix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
        h = splitmix(h ^ a);
        h = splitmix(h ^ (b + 0x9e3779b97f4a7c15ULL));
        return Rng(h);
    }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dsc
