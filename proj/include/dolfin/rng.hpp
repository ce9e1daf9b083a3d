#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace dolfin {

// Deterministic splitmix64 generator. All randomness in the project flows
// through this type so runs are reproducible across platforms; the standard
// <random> distributions are implementation-defined and never used.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1), never exactly zero (safe under log).
    double uniform_open() {
        return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return next() % n;
    }

    // Standard normal via Box-Muller, one value per call.
    double gaussian() {
        double u1 = uniform_open();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Gamma(alpha, 1) via Marsaglia-Tsang, with the boost for alpha < 1.
    double gamma(double alpha) {
        if (alpha < 1.0) {
            double u = uniform_open();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        double d = alpha - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = gaussian();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform_open();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return d * v;
            }
        }
    }

    // Dirichlet(beta * 1_k) proportions.
    std::vector<double> dirichlet(double beta, int k) {
        std::vector<double> p(static_cast<std::size_t>(k));
        double sum = 0.0;
        for (auto& v : p) {
            v = gamma(beta);
            sum += v;
        }
        for (auto& v : p) v /= sum;
        return p;
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// One experiment-level seed reproduces everything: per-client/per-task/per-round
// streams are derived by folding the tags through splitmix steps.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    SplitMix64 g(seed);
    std::uint64_t s = g.next();
    SplitMix64 ga(s ^ (a * 0x9e3779b97f4a7c15ULL));
    s = ga.next();
    SplitMix64 gb(s ^ (b * 0xbf58476d1ce4e5b9ULL));
    s = gb.next();
    SplitMix64 gc(s ^ (c * 0x94d049bb133111ebULL));
    return gc.next();
}

}  // namespace dolfin
