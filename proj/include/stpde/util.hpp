#ifndef STPDE_UTIL_HPP
#define STPDE_UTIL_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace stpde {

using TimeFn = std::function<double(double)>;

struct NumericError : std::runtime_error {
    double residual;
    explicit NumericError(const std::string& what, double res = std::numeric_limits<double>::quiet_NaN())
        : std::runtime_error(what), residual(res) {}
};

struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

inline void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw DomainError(std::string("non-finite value for ") + what);
}

// Counter-based deterministic RNG. splitmix64 finalizer applied to a
// (seed, stream, counter) triple gives identical output on every platform.
inline std::uint64_t hash_mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t h = hash_mix(seed ^ 0x6a09e667f3bcc909ULL);
    h = hash_mix(h ^ stream);
    h = hash_mix(h ^ counter);
    return h;
}

// uniform in (0,1), never exactly 0 or 1
inline double u01(std::uint64_t h) {
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

// standard normal via Box-Muller from two counter values
inline double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    double u1 = u01(counter_hash(seed, stream, 2 * counter));
    double u2 = u01(counter_hash(seed, stream, 2 * counter + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Small stateful generator for tests and sampling loops.
class SplitMix {
public:
    explicit SplitMix(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next_u64() { return hash_mix(state_ += 0x9e3779b97f4a7c15ULL); }
    double uniform() { return u01(next_u64()); }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    double normal() {
        double u1 = uniform(), u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    std::uint64_t state_;
};

// Gauss-Legendre nodes/weights on [-1,1], computed by Newton iteration on
// the Legendre recurrence. Deterministic to machine precision.
inline void gauss_legendre(int m, std::vector<double>& nodes, std::vector<double>& weights) {
    if (m < 1) throw DomainError("gauss_legendre: m >= 1 required");
    nodes.assign(m, 0.0);
    weights.assign(m, 0.0);
    for (int i = 0; i < (m + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (m + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= m; ++k) {
                double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = m * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = weights[m - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    if (m % 2 == 1) nodes[m / 2] = 0.0;
}

// quadrature of f over [a,b] with m Gauss-Legendre nodes
template <class F>
double gauss_legendre_integrate(F&& f, double a, double b, int m) {
    std::vector<double> x, w;
    gauss_legendre(m, x, w);
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += w[i] * f(mid + half * x[i]);
    return acc * half;
}

}  // namespace stpde

#endif
