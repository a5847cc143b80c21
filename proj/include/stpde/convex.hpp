#ifndef STPDE_CONVEX_HPP
#define STPDE_CONVEX_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "stpde/util.hpp"

namespace stpde {

/// Closed interval, used to represent one-dimensional subdifferentials.
struct Interval {
    double lo;
    double hi;
    bool contains(double s, double tol = 0.0) const { return s >= lo - tol && s <= hi + tol; }
    double min_norm() const {
        if (lo <= 0.0 && 0.0 <= hi) return 0.0;
        return std::abs(lo) < std::abs(hi) ? lo : hi;
    }
};

/// Coercivity/growth certificate: gamma1 + alpha1*|r|^p1 <= j(t,r) <= gamma2 + alpha2*|r|^p2,
/// together with the symmetry bound j(t,-r) <= C1 j(t,r) + C2.
struct GrowthCertificate {
    double p1 = 2.0, p2 = 2.0;
    double alpha1 = 0.5, alpha2 = 0.5;
    double gamma1 = 0.0, gamma2 = 0.0;
    double C1 = 1.0, C2 = 0.0;
};

/// Scalar convex potential j(t,r): value, Fenchel conjugate, multivalued
/// subgradient interval, proximal map. Immutable after construction; every
/// operation is pure.
///
/// An optional time weight w(t) > 0 multiplies the whole potential. The
/// thermostat kind carries its own time-dependent coefficients.
class ConvexPotential {
public:
    enum class Kind { Quadratic, Power, Piecewise, Thermostat, Custom };

    /// Convex quadratic piece a + b r + c r^2/2 on an interval of the real line.
    struct QuadPiece {
        double a = 0.0, b = 0.0, c = 0.0;
        double value(double r) const { return a + b * r + 0.5 * c * r * r; }
        double deriv(double r) const { return b + c * r; }
    };

    static ConvexPotential quadratic(double c) {
        if (!(c > 0.0)) throw DomainError("quadratic potential requires c > 0");
        ConvexPotential p;
        p.kind_ = Kind::Quadratic;
        p.par1_ = c;
        p.growth_ = {2.0, 2.0, c / 2, c / 2, 0.0, 0.0, 1.0, 0.0};
        return p;
    }

    /// j(r) = alpha * |r|^p, p > 1.
    static ConvexPotential power(double p, double alpha) {
        if (!(p > 1.0) || !(alpha > 0.0)) throw DomainError("power potential requires p > 1, alpha > 0");
        ConvexPotential pot;
        pot.kind_ = Kind::Power;
        pot.par1_ = p;
        pot.par2_ = alpha;
        pot.growth_ = {p, p, alpha, alpha, 0.0, 0.0, 1.0, 0.0};
        return pot;
    }

    /// Continuous convex piecewise linear-quadratic potential. breaks has m
    /// interior breakpoints; pieces has m+1 entries (first piece extends to
    /// -inf, last to +inf). Continuity and convexity are validated.
    static ConvexPotential piecewise(std::vector<double> breaks, std::vector<QuadPiece> pieces) {
        if (pieces.size() != breaks.size() + 1) throw DomainError("piecewise: need one more piece than breakpoints");
        for (std::size_t i = 1; i < breaks.size(); ++i)
            if (!(breaks[i] > breaks[i - 1])) throw DomainError("piecewise: breakpoints must increase");
        for (const auto& q : pieces)
            if (q.c < 0.0) throw DomainError("piecewise: pieces must be convex (c >= 0)");
        for (std::size_t i = 0; i < breaks.size(); ++i) {
            double x = breaks[i];
            if (std::abs(pieces[i].value(x) - pieces[i + 1].value(x)) > 1e-12 * (1.0 + std::abs(pieces[i].value(x))))
                throw DomainError("piecewise: pieces must be continuous at breakpoints");
            if (pieces[i].deriv(x) > pieces[i + 1].deriv(x) + 1e-12)
                throw DomainError("piecewise: derivative must be nondecreasing at breakpoints");
        }
        ConvexPotential pot;
        pot.kind_ = Kind::Piecewise;
        pot.breaks_ = std::move(breaks);
        pot.pieces_ = std::move(pieces);
        pot.growth_ = infer_piecewise_growth(pot);
        return pot;
    }

    /// Thermostat boundary potential j0(t,r) = alpha1(t) r^+ + alpha2(t) r^-.
    /// Its subdifferential at 0 is the full relay interval [-alpha2, alpha1].
    static ConvexPotential thermostat(TimeFn alpha1, TimeFn alpha2) {
        if (!alpha1 || !alpha2) throw DomainError("thermostat requires both coefficient functions");
        ConvexPotential pot;
        pot.kind_ = Kind::Thermostat;
        pot.a1_ = std::move(alpha1);
        pot.a2_ = std::move(alpha2);
        pot.growth_ = {1.0 + 1e-9, 1.0 + 1e-9, 1e-12, 1e30, 0.0, 0.0, 1e6, 1e6};
        return pot;
    }

    static ConvexPotential thermostat(double alpha1, double alpha2) {
        return thermostat([alpha1](double) { return alpha1; }, [alpha2](double) { return alpha2; });
    }

    /// Custom differentiable convex evaluator with a declared growth certificate.
    static ConvexPotential custom(std::function<double(double, double)> j,
                                  std::function<double(double, double)> dj,
                                  GrowthCertificate growth) {
        if (!j) throw DomainError("custom potential requires an evaluator");
        ConvexPotential pot;
        pot.kind_ = Kind::Custom;
        pot.j_ = std::move(j);
        pot.dj_ = std::move(dj);
        pot.growth_ = growth;
        return pot;
    }

    ConvexPotential with_time_weight(TimeFn w) const {
        ConvexPotential pot = *this;
        pot.weight_ = std::move(w);
        return pot;
    }

    Kind kind() const { return kind_; }
    const GrowthCertificate& growth() const { return growth_; }
    bool time_dependent() const { return static_cast<bool>(weight_) || kind_ == Kind::Thermostat; }

    // ---- operations ----

    double eval(double t, double r) const {
        require_finite(r, "eval r");
        require_finite(t, "eval t");
        return w(t) * base_eval(t, r);
    }

    /// Fenchel conjugate j*(t,s) = sup_r (r s - j(t,r)). Closed form where the
    /// kind admits one, otherwise concave 1-D maximization with geometric
    /// bracket expansion (capped at 2^60).
    double conjugate(double t, double s) const {
        require_finite(s, "conjugate s");
        double wt = w(t);
        // (w j)*(s) = w j*(s/w)
        return wt * base_conjugate(t, s / wt);
    }

    Interval subgradient(double t, double r) const {
        require_finite(r, "subgradient r");
        Interval iv = base_subgradient(t, r);
        double wt = w(t);
        return {wt * iv.lo, wt * iv.hi};
    }

    /// Minimal-norm single-valued section of the subdifferential.
    double slope(double t, double r) const { return subgradient(t, r).min_norm(); }

    /// Generalized second derivative (a.e. value), used by Newton solvers.
    double curvature(double t, double r) const {
        double wt = w(t);
        switch (kind_) {
            case Kind::Quadratic:
                return wt * par1_;
            case Kind::Power: {
                double p = par1_, alpha = par2_;
                double ar = std::abs(r);
                if (p < 2.0 && ar < 1e-300) return 1e12;
                double c = alpha * p * (p - 1.0) * std::pow(ar, p - 2.0);
                return wt * std::min(c, 1e12);
            }
            case Kind::Piecewise: {
                std::size_t i = piece_index(r);
                return wt * pieces_[i].c;
            }
            case Kind::Thermostat:
                return 0.0;
            case Kind::Custom: {
                double h = 1e-5 * (1.0 + std::abs(r));
                double d = (slope_raw(t, r + h) - slope_raw(t, r - h)) / (2 * h);
                return wt * std::max(d, 0.0);
            }
        }
        return 0.0;
    }

    /// prox_{lambda j(t,.)}(z): unique minimizer of j(t,r) + (r-z)^2/(2 lambda).
    /// Optimality (z - r)/lambda in subgradient(r) holds within 1e-10.
    double prox(double t, double z, double lambda) const {
        require_finite(z, "prox z");
        if (!(lambda > 0.0)) throw DomainError("prox requires lambda > 0");
        double lw = lambda * w(t);
        switch (kind_) {
            case Kind::Quadratic:
                return z / (1.0 + lw * par1_);
            case Kind::Power:
                if (par1_ == 2.0) return z / (1.0 + 2.0 * lw * par2_);
                break;
            case Kind::Thermostat: {
                // shrinkage with asymmetric thresholds
                double hi = lw * a1_(t), lo = lw * a2_(t);
                if (z > hi) return z - hi;
                if (z < -lo) return z + lo;
                return 0.0;
            }
            default:
                break;
        }
        return prox_bisection(t, z, lambda);
    }

    /// Fenchel-Young gap j(t,r) + j*(t,s) - r s. Nonnegative; zero iff s is a
    /// subgradient at r.
    double fenchel_gap(double t, double r, double s) const {
        return eval(t, r) + conjugate(t, s) - r * s;
    }

    /// Subdifferential of the conjugate: the set of maximizers of r s - j(t,r),
    /// i.e. the inverse of the monotone graph of the subgradient.
    Interval conjugate_subgradient(double t, double s) const {
        require_finite(s, "conjugate_subgradient s");
        double wt = w(t);
        double su = s / wt;  // (w j)^* slope at s equals (j^*)' (s/w)
        switch (kind_) {
            case Kind::Quadratic:
                return {su / par1_, su / par1_};
            case Kind::Power: {
                double p = par1_, alpha = par2_;
                double r = std::pow(std::abs(su) / (alpha * p), 1.0 / (p - 1.0));
                r = su >= 0 ? r : -r;
                return {r, r};
            }
            case Kind::Thermostat: {
                double hi = a1_(t), lo = a2_(t);
                if (su > -lo - 1e-15 && su < hi + 1e-15) return {0.0, 0.0};
                throw NumericError("thermostat conjugate subgradient: s outside [-alpha2, alpha1]", su);
            }
            default:
                break;
        }
        return invert_graph(t, su);
    }

private:
    ConvexPotential() = default;

    double w(double t) const { return weight_ ? weight_(t) : 1.0; }

    double base_eval(double t, double r) const {
        switch (kind_) {
            case Kind::Quadratic:
                return 0.5 * par1_ * r * r;
            case Kind::Power:
                return par2_ * std::pow(std::abs(r), par1_);
            case Kind::Piecewise:
                return pieces_[piece_index(r)].value(r);
            case Kind::Thermostat:
                return a1_(t) * std::max(r, 0.0) + a2_(t) * std::max(-r, 0.0);
            case Kind::Custom:
                return j_(t, r);
        }
        return 0.0;
    }

    double slope_raw(double t, double r) const { return base_subgradient(t, r).min_norm(); }

    Interval base_subgradient(double t, double r) const {
        switch (kind_) {
            case Kind::Quadratic:
                return {par1_ * r, par1_ * r};
            case Kind::Power: {
                double p = par1_, alpha = par2_;
                double g = alpha * p * std::pow(std::abs(r), p - 1.0);
                g = r >= 0 ? g : -g;
                return {g, g};
            }
            case Kind::Piecewise: {
                // fill the jump at breakpoints; snap within a few ulps so the
                // set-valued map stays outer semicontinuous under rounding
                for (std::size_t i = 0; i < breaks_.size(); ++i)
                    if (std::abs(r - breaks_[i]) <= 4e-14 * (1.0 + std::abs(breaks_[i])))
                        return {pieces_[i].deriv(breaks_[i]), pieces_[i + 1].deriv(breaks_[i])};
                double d = pieces_[piece_index(r)].deriv(r);
                return {d, d};
            }
            case Kind::Thermostat: {
                if (r > 0) return {a1_(t), a1_(t)};
                if (r < 0) return {-a2_(t), -a2_(t)};
                return {-a2_(t), a1_(t)};
            }
            case Kind::Custom: {
                if (dj_) {
                    double d = dj_(t, r);
                    return {d, d};
                }
                double h = 1e-7 * (1.0 + std::abs(r));
                double d = (j_(t, r + h) - j_(t, r - h)) / (2 * h);
                return {d, d};
            }
        }
        return {0.0, 0.0};
    }

    double base_conjugate(double t, double s) const {
        switch (kind_) {
            case Kind::Quadratic:
                return 0.5 * s * s / par1_;
            case Kind::Power: {
                double p = par1_, alpha = par2_;
                double q = p / (p - 1.0);
                return (1.0 - 1.0 / p) * std::pow(alpha * p, -1.0 / (p - 1.0)) * std::pow(std::abs(s), q);
            }
            case Kind::Thermostat: {
                double hi = a1_(t), lo = a2_(t);
                if (s >= -lo - 1e-14 && s <= hi + 1e-14) return 0.0;
                throw NumericError("thermostat conjugate is +inf outside [-alpha2, alpha1]", s);
            }
            default:
                return conjugate_numeric(t, s);
        }
    }

    // geometric bracket expansion followed by golden-section on the concave
    // map r -> r s - j(t,r); growth certificate guarantees a finite sup
    double conjugate_numeric(double t, double s) const {
        auto m = [&](double r) { return r * s - base_eval(t, r); };
        double R = 1.0;
        const double cap = std::ldexp(1.0, 60);
        while (true) {
            // max must be interior: value should fall off at both ends
            double interior = std::max({m(-R / 2), m(0.0), m(R / 2)});
            if (m(-R) < interior && m(R) < interior) break;
            R *= 2.0;
            if (R > cap)
                throw NumericError("conjugate bracketing failed: growth certificate violated", s);
        }
        double a = -R, b = R;
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        double c = b - gr * (b - a), d = a + gr * (b - a);
        double fc = m(c), fd = m(d);
        for (int it = 0; it < 400 && (b - a) > 1e-13 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
            if (fc < fd) {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = m(d);
            } else {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = m(c);
            }
        }
        return std::max(fc, fd);
    }

    // monotone bisection for the prox optimality inclusion
    double prox_bisection(double t, double z, double lambda) const {
        auto excess = [&](double r) {
            // G(r) = r - z + lambda * dj(t,r): returns signed distance of 0 from
            // the interval [r - z + lw*lo, r - z + lw*hi]
            Interval iv = base_subgradient(t, r);
            double lw = lambda * w(t);
            double glo = r - z + lw * iv.lo, ghi = r - z + lw * iv.hi;
            if (glo > 0) return glo;
            if (ghi < 0) return ghi;
            return 0.0;
        };
        double lo = z, hi = z;
        double step = 1.0 + std::abs(z);
        while (excess(lo) > 0) {
            lo -= step;
            step *= 2;
            if (step > 1e300) throw NumericError("prox bracketing failed", z);
        }
        step = 1.0 + std::abs(z);
        while (excess(hi) < 0) {
            hi += step;
            step *= 2;
            if (step > 1e300) throw NumericError("prox bracketing failed", z);
        }
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (lo + hi);
            double e = excess(mid);
            if (e == 0.0) return mid;
            (e > 0 ? hi : lo) = mid;
            if (hi - lo < 1e-14 * (1.0 + std::abs(mid))) return mid;
        }
        double r = 0.5 * (lo + hi);
        double res = std::abs(excess(r));
        if (res > 1e-9) throw NumericError("prox bisection did not converge", res);
        return r;
    }

    // bisection inverse of the subgradient graph: maximizer interval of rs - j
    Interval invert_graph(double t, double s) const {
        auto below = [&](double r) { return base_subgradient(t, r).hi < s; };
        auto above = [&](double r) { return base_subgradient(t, r).lo > s; };
        double lo = 0.0, hi = 0.0, step = 1.0;
        while (below(hi)) {
            hi += step;
            step *= 2;
            if (step > 1e300) throw NumericError("conjugate subgradient unbounded", s);
        }
        step = 1.0;
        while (above(lo)) {
            lo -= step;
            step *= 2;
            if (step > 1e300) throw NumericError("conjugate subgradient unbounded", s);
        }
        // tighten [lo,hi] to points whose subgradient interval contains s
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (lo + hi);
            if (below(mid))
                lo = mid;
            else if (above(mid))
                hi = mid;
            else {
                lo = hi = mid;
                break;
            }
            if (hi - lo < 1e-13 * (1.0 + std::abs(mid))) break;
        }
        double r = 0.5 * (lo + hi);
        return {r, r};
    }

    std::size_t piece_index(double r) const {
        std::size_t i = 0;
        while (i < breaks_.size() && r > breaks_[i]) ++i;
        return i;
    }

    static GrowthCertificate infer_piecewise_growth(const ConvexPotential& pot) {
        GrowthCertificate g;
        const auto& first = pot.pieces_.front();
        const auto& last = pot.pieces_.back();
        bool quad = first.c > 0 && last.c > 0;
        g.p1 = quad ? 2.0 : 1.0 + 1e-9;
        g.p2 = 2.0;
        g.alpha1 = quad ? 0.25 * std::min(first.c, last.c) : 1e-12;
        double cmax = 0.0, vmax = 0.0, dmax = 0.0;
        for (const auto& q : pot.pieces_) {
            cmax = std::max(cmax, q.c);
            dmax = std::max(dmax, std::abs(q.b));
            vmax = std::max(vmax, std::abs(q.a));
        }
        g.alpha2 = cmax + dmax + 1.0;
        g.gamma1 = -(vmax + dmax * dmax + 1.0);
        g.gamma2 = vmax + dmax + 1.0;
        g.C1 = 4.0;
        g.C2 = 4.0 * (vmax + dmax * dmax + 1.0);
        return g;
    }

    Kind kind_ = Kind::Quadratic;
    double par1_ = 1.0;  // quadratic c / power p
    double par2_ = 0.0;  // power alpha
    std::vector<double> breaks_;
    std::vector<QuadPiece> pieces_;
    TimeFn a1_, a2_;  // thermostat coefficients
    std::function<double(double, double)> j_, dj_;
    TimeFn weight_;
    GrowthCertificate growth_;
};

}  // namespace stpde

#endif
