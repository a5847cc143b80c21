#include <doctest.h>

#include <cmath>

#include "stpde/transport.hpp"

using namespace stpde;

namespace {

Field random_field(GeometryPtr geo, Space space, std::uint64_t seed, bool mean_zero = false) {
    Field f(geo, space);
    SplitMix rng(seed);
    for (double& x : f.v) x = rng.uniform(-1.0, 1.0);
    if (mean_zero) {
        double m = f.mean();
        for (double& x : f.v) x -= m;
    }
    return f;
}

Field smooth_torus_field(GeometryPtr geo, Space space) {
    Field f(geo, space);
    for (int i = 0; i < geo->nodes(0); ++i) {
        double x = geo->coord(0, i) / geo->length(0);
        f.v[i] = std::sin(2 * M_PI * x) + 0.3 * std::cos(4 * M_PI * x);
    }
    return f;
}

}  // namespace

TEST_CASE("constant transport has the explicit flow") {
    auto geo = Geometry::torus1d(1.0, 32);
    auto tf = TransportField::constant1d(0.7);
    Point z = flow(*tf, *geo, 0.0, 1.3, Point{0.2, 0.0});
    double expect = std::fmod(0.2 + 0.7 * 1.3, 1.0);
    CHECK(z.x == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("rotation flow preserves the radius") {
    auto geo = Geometry::rect2d(2.0, 2.0, 16, 16, Boundary::Periodic);
    auto tf = TransportField::rotation2d(1.0, 1.0, 1.0);
    Point p{1.4, 1.1};
    Point z = flow(*tf, *geo, 0.0, 0.9, p);
    double r0 = std::hypot(p.x - 1.0, p.y - 1.0);
    double r1 = std::hypot(z.x - 1.0, z.y - 1.0);
    CHECK(r1 == doctest::Approx(r0).epsilon(1e-10));
    // angle advanced by s
    double a0 = std::atan2(p.y - 1.0, p.x - 1.0), a1 = std::atan2(z.y - 1.0, z.x - 1.0);
    CHECK(std::remainder(a1 - a0 - 0.9, 2 * M_PI) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("flow group law") {
    auto geo = Geometry::rect2d(1.0, 1.0, 24, 24, Boundary::Dirichlet);
    auto tf = TransportField::stream2d(1.0, 1.0, 1, 1, 0.8);
    SplitMix rng(5);
    for (int i = 0; i < 40; ++i) {
        Point p{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
        double s1 = rng.uniform(-1.0, 1.0), s2 = rng.uniform(-1.0, 1.0);
        Point one = flow(*tf, *geo, 0.0, s1 + s2, p);
        Point two = flow(*tf, *geo, 0.0, s2, flow(*tf, *geo, 0.0, s1, p));
        CHECK(std::abs(one.x - two.x) <= 1e-8);
        CHECK(std::abs(one.y - two.y) <= 1e-8);
    }
}

TEST_CASE("stream field is discretely divergence free with zero normal trace") {
    auto geo = Geometry::rect2d(1.0, 1.0, 32, 32, Boundary::Dirichlet);
    auto tf = TransportField::stream2d(1.0, 1.0, 2, 1, 1.1);
    VectorField b = tf->nodal_velocity(*geo, 0.0);
    Field div = divergence(b);
    for (double d : div.v) CHECK(std::abs(d) <= 1e-10);
    // normal component vanishes on the boundary by construction of sigma
    for (int i = 0; i < geo->nodes(0); ++i) {
        Point p{geo->coord(0, i), 0.0};
        CHECK(std::abs(tf->velocity(0.0, p).y) <= 1e-12);
    }
}

TEST_CASE("diffusion group: identity, translation, adjoint, isometry") {
    auto geo = Geometry::torus1d(1.0, 128);
    auto tf = TransportField::constant1d(0.5);
    NoiseOperator op(NoiseOperator::Form::Diffusion, tf, geo);

    Field f = smooth_torus_field(geo, Space::L2);
    Field id = group_apply(op, 0.0, 0.0, f);
    CHECK(id.v == f.v);  // bit exact at s = 0

    // translation of a smooth profile, cubic interpolation error O(h^3)
    double s = 0.37;
    Field g = group_apply(op, 0.0, s, f);
    double h = geo->spacing(0);
    for (int i = 0; i < geo->nodes(0); ++i) {
        double x = geo->coord(0, i) + 0.5 * s;  // c*s with c = 0.5
        double exact = std::sin(2 * M_PI * x) + 0.3 * std::cos(4 * M_PI * x);
        CHECK(std::abs(g.v[i] - exact) <= 60.0 * h * h * h);
    }

    CHECK(std::abs(norm(g, Space::L2) - norm(f, Space::L2)) <= 1e-6);

    // adjoint pairing <e^{sB}u, v> = <u, e^{-sB}v>
    Field u = random_field(geo, Space::L2, 3);
    Field v = random_field(geo, Space::L2, 4);
    double lhs = inner(group_apply(op, 0.0, s, u), v, Space::L2);
    double rhs = inner(u, group_apply(op, 0.0, -s, v), Space::L2);
    CHECK(std::abs(lhs - rhs) <= 1e-6 * (1.0 + std::abs(lhs)));
}

TEST_CASE("porous-media group: identity, isometry, round trip") {
    auto tf = TransportField::stream2d(1.0, 1.0, 1, 1, 0.6);
    auto geo2 = Geometry::rect2d(1.0, 1.0, 20, 20, Boundary::Dirichlet);
    NoiseOperator op(NoiseOperator::Form::PorousMedia, tf, geo2);

    Field u = random_field(geo2, Space::Hminus1, 9);
    Field id = group_apply(op, 0.0, 0.0, u);
    CHECK(id.v == u.v);

    SplitMix rng(13);
    for (int i = 0; i < 5; ++i) {
        double s = rng.uniform(-2.0, 2.0);
        Field g = group_apply(op, 0.0, s, u);
        CHECK(std::abs(norm(g, Space::Hminus1) - norm(u, Space::Hminus1)) <= 1e-6 * (1.0 + std::abs(s)));
        Field back = group_apply(op, 0.0, -s, g);
        Field diff = back - u;
        CHECK(norm(diff, Space::Hminus1) <= 1e-6);
    }
}

TEST_CASE("gamma vanishes for autonomous transport and empty integral") {
    auto geo = Geometry::torus1d(1.0, 64);
    NoiseOperator op(NoiseOperator::Form::Diffusion, TransportField::constant1d(0.4), geo);
    Field y = smooth_torus_field(geo, Space::L2);
    Field z = gamma_apply(op, 0.3, 1.7, y);
    for (double d : z.v) CHECK(d == 0.0);  // exact zero array

    auto tfdep = TransportField::constant1d([](double t) { return 1.0 + t; }, [](double) { return 1.0; });
    NoiseOperator opd(NoiseOperator::Form::Diffusion, tfdep, geo);
    Field z0 = gamma_apply(opd, 0.3, 0.0, y);
    for (double d : z0.v) CHECK(d == 0.0);
}

TEST_CASE("gamma quadrature refinement and linearity") {
    auto geo = Geometry::torus1d(1.0, 64);
    auto tf = TransportField::constant1d([](double t) { return 1.0 + t; }, [](double) { return 1.0; });
    NoiseOperator op(NoiseOperator::Form::Diffusion, tf, geo);
    Field y = smooth_torus_field(geo, Space::L2);

    Field g8 = gamma_apply(op, 0.5, 0.8, y, 8);
    Field g32 = gamma_apply(op, 0.5, 0.8, y, 32);
    Field diff = g8 - g32;
    CHECK(norm(diff, Space::L2) <= 1e-8 * (1.0 + norm(g32, Space::L2)));

    Field w = random_field(geo, Space::L2, 77);
    Field lin = gamma_apply(op, 0.5, 0.8, Field(2.0 * y + w), 8);
    Field parts = 2.0 * gamma_apply(op, 0.5, 0.8, y, 8) + gamma_apply(op, 0.5, 0.8, w, 8);
    Field ldiff = lin - parts;
    CHECK(norm(ldiff, Space::L2) <= 1e-10 * (1.0 + norm(parts, Space::L2)));
}

TEST_CASE("skewness defect of both operator forms") {
    auto torus = Geometry::torus1d(1.0, 64);
    NoiseOperator c1(NoiseOperator::Form::Diffusion, TransportField::constant1d(0.9), torus);
    Field u = random_field(torus, Space::L2, 31);
    CHECK(skewness_defect(c1, 0.0, u) <= 1e-8);

    auto rect = Geometry::rect2d(1.0, 1.0, 24, 24, Boundary::Dirichlet);
    NoiseOperator s2(NoiseOperator::Form::Diffusion, TransportField::stream2d(1.0, 1.0, 1, 2, 0.7), rect);
    Field v = random_field(rect, Space::L2, 32);
    CHECK(skewness_defect(s2, 0.0, v) <= 1e-8);

    NoiseOperator pm(NoiseOperator::Form::PorousMedia, TransportField::stream2d(1.0, 1.0, 1, 1, 0.7), rect);
    Field w = random_field(rect, Space::Hminus1, 33);
    CHECK(skewness_defect(pm, 0.0, w) <= 1e-8);

    Field zero(torus, Space::L2);
    CHECK(skewness_defect(c1, 0.0, zero) == 0.0);
}

TEST_CASE("commuting channel pair") {
    auto torus = Geometry::torus1d(1.0, 64);
    NoiseOperator a(NoiseOperator::Form::Diffusion, TransportField::constant1d(0.9), torus);
    NoiseOperator b(NoiseOperator::Form::Diffusion, TransportField::constant1d(-0.4), torus);
    Field u = smooth_torus_field(torus, Space::L2);
    CHECK(commutator_defect(a, b, 0.0, u) <= 1e-8 * (1.0 + norm(u, Space::L2)));
}

TEST_CASE("1-D Dirichlet transport must vanish") {
    auto geo = Geometry::interval_dirichlet(0.0, 1.0, 16);
    CHECK_THROWS_WITH_AS((NoiseOperator{NoiseOperator::Form::Diffusion, TransportField::constant1d(0.3), geo}),
                         doctest::Contains("force b = 0"), stpde::DomainError);
    // b = 0 is fine
    NoiseOperator ok(NoiseOperator::Form::Diffusion, TransportField::zero(), geo);
    CHECK(ok.trivial());
    // rotation needs a periodic box
    CHECK_THROWS_AS((NoiseOperator{NoiseOperator::Form::Diffusion, TransportField::rotation2d(1.0, 0.5, 0.5),
                                   Geometry::rect2d(1.0, 1.0, 16, 16, Boundary::Dirichlet)}),
                    stpde::DomainError);
}
