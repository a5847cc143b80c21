#include <doctest.h>

#include <cmath>
#include <vector>

#include "stpde/convex.hpp"

using stpde::ConvexPotential;
using stpde::Interval;
using stpde::SplitMix;

namespace {

// Huber-like strictly convex piecewise quadratic with derivative kinks at
// r = -1 and r = 1 (subgradient interval [1,2] at r = 1).
ConvexPotential make_piecewise() {
    std::vector<double> breaks{-1.0, 1.0};
    std::vector<ConvexPotential::QuadPiece> pieces{
        {-0.5, 0.0, 2.0},
        {0.0, 0.0, 1.0},
        {-0.5, 0.0, 2.0},
    };
    return ConvexPotential::piecewise(breaks, pieces);
}

ConvexPotential make_custom_cubic() {
    stpde::GrowthCertificate g;
    g.p1 = 3.0;
    g.p2 = 3.0;
    g.alpha1 = 1.0 / 3.0;
    g.alpha2 = 1.0 / 3.0;
    g.gamma1 = 0.0;
    g.gamma2 = 0.0;
    g.C1 = 1.0;
    g.C2 = 0.0;
    return ConvexPotential::custom([](double, double r) { return std::abs(r * r * r) / 3.0; },
                                   [](double, double r) { return r * std::abs(r); }, g);
}

std::vector<ConvexPotential> registered() {
    return {ConvexPotential::quadratic(1.0), ConvexPotential::power(4.0, 0.25),
            ConvexPotential::power(1.5, 1.0), make_piecewise(), make_custom_cubic()};
}

// independent biconjugate: sup_s (r s - j*(s)) by golden section with a
// geometrically grown bracket
double biconjugate(const ConvexPotential& pot, double t, double r, double smax) {
    auto m = [&](double s) { return r * s - pot.conjugate(t, s); };
    double a = -smax, b = smax;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = m(c), fd = m(d);
    for (int it = 0; it < 300 && (b - a) > 1e-12 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = m(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = m(d);
        }
    }
    return std::max(fc, fd);
}

}  // namespace

TEST_CASE("evaluation closed forms") {
    CHECK(ConvexPotential::quadratic(1.0).eval(0.0, 2.0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(ConvexPotential::power(4.0, 0.25).eval(0.0, 1.0) == doctest::Approx(0.25).epsilon(1e-14));
    // piecewise value continuous at the breakpoints
    ConvexPotential pw = make_piecewise();
    for (double b : {-1.0, 1.0}) {
        double inner = pw.eval(0.0, b - 1e-9), outer = pw.eval(0.0, b + 1e-9);
        CHECK(std::abs(inner - outer) < 1e-7);
    }
    CHECK_THROWS_AS(ConvexPotential::quadratic(1.0).eval(0.0, std::nan("")), stpde::DomainError);
}

TEST_CASE("conjugate closed forms") {
    CHECK(ConvexPotential::quadratic(1.0).conjugate(0.0, 3.0) == doctest::Approx(4.5).epsilon(1e-12));
    // conjugate of |r|^4/4 is (3/4)|s|^{4/3}
    CHECK(ConvexPotential::power(4.0, 0.25).conjugate(0.0, 1.0) == doctest::Approx(0.75).epsilon(1e-10));
    CHECK(ConvexPotential::power(4.0, 0.25).conjugate(0.0, -2.0) ==
          doctest::Approx(0.75 * std::pow(2.0, 4.0 / 3.0)).epsilon(1e-10));
}

TEST_CASE("piecewise conjugate against brute-force sup oracle") {
    ConvexPotential pw = make_piecewise();
    const int samples = 1000000;
    for (double s : {0.3, 1.0, 1.5, 2.7, -0.8, -2.2}) {
        double sup = -1e300;
        for (int i = 0; i <= samples; ++i) {
            double r = -1000.0 + 2000.0 * double(i) / samples;
            sup = std::max(sup, r * s - pw.eval(0.0, r));
        }
        double cj = pw.conjugate(0.0, s);
        CHECK(cj >= sup - 1e-9);            // conjugate dominates every grid point
        CHECK(cj <= sup + 1e-2 + 1e-6);     // grid resolves the sup to O(grid step)
    }
}

TEST_CASE("subgradient intervals") {
    Interval iv = ConvexPotential::thermostat(1.0, 2.0).subgradient(0.0, 0.0);
    CHECK(iv.lo == doctest::Approx(-2.0));
    CHECK(iv.hi == doctest::Approx(1.0));

    Interval q = ConvexPotential::quadratic(1.0).subgradient(0.0, 5.0);
    CHECK(q.lo == doctest::Approx(5.0));
    CHECK(q.hi == doctest::Approx(5.0));

    Interval k = make_piecewise().subgradient(0.0, 1.0);
    CHECK(k.lo == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(k.hi == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("subgradient elements close the Fenchel gap") {
    SplitMix rng(17);
    for (const auto& pot : registered()) {
        for (int i = 0; i < 400; ++i) {
            double r = rng.uniform(-8.0, 8.0);
            Interval iv = pot.subgradient(0.0, r);
            for (double s : {iv.lo, iv.hi, iv.min_norm()}) {
                CHECK(pot.fenchel_gap(0.0, r, s) <= 1e-8 * (1.0 + std::abs(pot.eval(0.0, r))));
            }
        }
    }
}

TEST_CASE("prox closed forms and oracle") {
    CHECK(ConvexPotential::quadratic(1.0).prox(0.0, 2.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    // 0 is a fixed point of the thermostat prox whenever 0 is in the relay range
    CHECK(ConvexPotential::thermostat(1.0, 2.0).prox(0.0, 0.0, 0.7) == doctest::Approx(0.0).epsilon(1e-12));

    // power(4, 1/4), z = 1, lambda = 1: minimizer solves r^3 + r = 1
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        (mid * mid * mid + mid < 1.0 ? lo : hi) = mid;
    }
    double root = 0.5 * (lo + hi);
    CHECK(root == doctest::Approx(0.682328).epsilon(1e-5));
    CHECK(ConvexPotential::power(4.0, 0.25).prox(0.0, 1.0, 1.0) == doctest::Approx(root).epsilon(1e-9));
}

TEST_CASE("prox optimality inclusion") {
    SplitMix rng(29);
    for (const auto& pot : registered()) {
        for (int i = 0; i < 300; ++i) {
            double z = rng.uniform(-6.0, 6.0);
            double lam = std::exp(rng.uniform(-4.0, 1.5));
            double r = pot.prox(0.0, z, lam);
            Interval iv = pot.subgradient(0.0, r);
            CHECK(iv.contains((z - r) / lam, 1e-9 * (1.0 + std::abs(z))));
        }
    }
}

TEST_CASE("Fenchel gap examples and positivity over 1e4 samples") {
    ConvexPotential q = ConvexPotential::quadratic(1.0);
    CHECK(q.fenchel_gap(0.0, 1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(q.fenchel_gap(0.0, 1.0, 2.0) == doctest::Approx(0.5).epsilon(1e-12));

    SplitMix rng(43);
    auto pots = registered();
    for (int i = 0; i < 10000; ++i) {
        const auto& pot = pots[i % pots.size()];
        double r = rng.uniform(-10.0, 10.0), s = rng.uniform(-10.0, 10.0);
        CHECK(pot.fenchel_gap(0.0, r, s) >= -1e-9);
    }
    // thermostat: conjugate finite only on the relay range
    ConvexPotential th = ConvexPotential::thermostat(1.0, 2.0);
    for (int i = 0; i < 500; ++i) {
        double r = rng.uniform(-10.0, 10.0), s = rng.uniform(-2.0, 1.0);
        CHECK(th.fenchel_gap(0.0, r, s) >= -1e-9);
    }
}

TEST_CASE("biconjugation recovers the potential") {
    SplitMix rng(7);
    for (const auto& pot : registered()) {
        for (int i = 0; i < 100; ++i) {
            double r = rng.uniform(-5.0, 5.0);
            // any s beyond the slope at |r|=6 cannot carry the sup
            double smax = std::abs(pot.subgradient(0.0, 6.0).hi) + std::abs(pot.subgradient(0.0, -6.0).lo) + 1.0;
            double jstar2 = biconjugate(pot, 0.0, r, smax);
            CHECK(jstar2 == doctest::Approx(pot.eval(0.0, r)).epsilon(1e-7).scale(1.0));
        }
    }
}

TEST_CASE("subgradient selection is monotone") {
    SplitMix rng(91);
    for (const auto& pot : registered()) {
        for (int i = 0; i < 500; ++i) {
            double r1 = rng.uniform(-6.0, 6.0), r2 = rng.uniform(-6.0, 6.0);
            if (r1 > r2) std::swap(r1, r2);
            if (r1 == r2) continue;
            CHECK(pot.subgradient(0.0, r1).hi <= pot.subgradient(0.0, r2).lo + 1e-12);
        }
    }
}

TEST_CASE("growth sandwich and symmetry certificates") {
    SplitMix rng(3);
    for (const auto& pot : registered()) {
        const auto& g = pot.growth();
        for (int i = 0; i < 1000; ++i) {
            double r = rng.uniform(-20.0, 20.0);
            double j = pot.eval(0.0, r);
            CHECK(j >= g.gamma1 + g.alpha1 * std::pow(std::abs(r), g.p1) - 1e-9 * (1.0 + std::abs(j)));
            CHECK(j <= g.gamma2 + g.alpha2 * std::pow(std::abs(r), g.p2) + 1e-9 * (1.0 + std::abs(j)));
            CHECK(pot.eval(0.0, -r) <= g.C1 * j + g.C2 + 1e-9 * (1.0 + std::abs(j)));
        }
    }
}

TEST_CASE("midpoint convexity at sampled pairs") {
    SplitMix rng(57);
    for (const auto& pot : registered()) {
        for (int i = 0; i < 500; ++i) {
            double r1 = rng.uniform(-10.0, 10.0), r2 = rng.uniform(-10.0, 10.0);
            double mid = pot.eval(0.0, 0.5 * (r1 + r2));
            CHECK(mid <= 0.5 * (pot.eval(0.0, r1) + pot.eval(0.0, r2)) + 1e-12);
        }
    }
}

TEST_CASE("time weight scales the potential and transforms the conjugate") {
    auto w = [](double t) { return 2.0 + std::sin(t); };
    ConvexPotential base = ConvexPotential::power(4.0, 0.25);
    ConvexPotential wp = base.with_time_weight(w);
    SplitMix rng(11);
    for (int i = 0; i < 200; ++i) {
        double t = rng.uniform(0.0, 3.0), r = rng.uniform(-4.0, 4.0), s = rng.uniform(-4.0, 4.0);
        double wt = w(t);
        CHECK(wp.eval(t, r) == doctest::Approx(wt * base.eval(t, r)).epsilon(1e-12));
        // (w j)*(s) = w j*(s / w)
        CHECK(wp.conjugate(t, s) == doctest::Approx(wt * base.conjugate(t, s / wt)).epsilon(1e-9));
        double z = rng.uniform(-4.0, 4.0), lam = std::exp(rng.uniform(-2.0, 1.0));
        double p = wp.prox(t, z, lam);
        CHECK(wp.subgradient(t, p).contains((z - p) / lam, 1e-8 * (1.0 + std::abs(z))));
    }
}

TEST_CASE("conjugate subgradient inverts the slope") {
    SplitMix rng(71);
    for (const auto& pot : registered()) {
        for (int i = 0; i < 200; ++i) {
            double r = rng.uniform(-5.0, 5.0);
            double s = pot.subgradient(0.0, r).min_norm();
            Interval back = pot.conjugate_subgradient(0.0, s);
            CHECK(back.contains(r, 1e-6 * (1.0 + std::abs(r))));
        }
    }
    ConvexPotential th = ConvexPotential::thermostat(1.0, 2.0);
    CHECK_THROWS_AS(th.conjugate_subgradient(0.0, 5.0), stpde::NumericError);
}
