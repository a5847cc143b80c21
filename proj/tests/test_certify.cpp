#include <doctest.h>

#include <cmath>
#include <vector>

#include "stpde/certify.hpp"

using namespace stpde;

namespace {

NoisePath zero_path() { return NoisePath::deterministic(1.0, {{0.0, 0.0, 0.0}}); }

// heat problem on the 2pi torus: the first mode is a discrete eigenvector
// with eigenvalue lambda_h = (2 - 2 cos h)/h^2, so the exact solution of
// the semi-discrete flow is available in closed form
struct ModeSetup {
    Problem pb;
    double lambda;
    Field mode;
};

ModeSetup make_mode_setup(int n) {
    ModeSetup s{.pb = {}, .lambda = 0.0, .mode = Field()};
    auto geo = Geometry::torus1d(2 * M_PI, n);
    s.pb.geo = geo;
    s.pb.energy = EnergyForm::gradient_type(ConvexPotential::quadratic(1.0));
    s.pb.T = 1.0;
    s.mode = Field(geo, Space::L2);
    for (int i = 0; i < n; ++i) s.mode.v[i] = std::sin(geo->coord(0, i));
    s.pb.initial = s.mode;
    double h = geo->spacing(0);
    s.lambda = (2.0 - 2.0 * std::cos(h)) / (h * h);
    return s;
}

// trajectory along the exact semi-discrete solution with the exact
// subgradient selection u = lambda y; every Fenchel gap vanishes and the
// primal value reduces to pure quadrature error
Trajectory exact_mode_trajectory(const ModeSetup& s, int K) {
    Trajectory tr;
    tr.T = s.pb.T;
    tr.K = K;
    double tau = tr.tau();
    for (int k = 0; k <= K; ++k) {
        Field y = s.mode;
        y *= std::exp(-s.lambda * tau * k);
        tr.y.push_back(y);
        Field u = y;
        u *= s.lambda;
        tr.u.push_back(std::move(u));
        tr.g.emplace_back(s.pb.geo, Space::L2);
        tr.diag.push_back({});
    }
    return tr;
}

}  // namespace

TEST_CASE("primal objective vanishes on the exact linear-quadratic solution") {
    ModeSetup s = make_mode_setup(64);
    Trajectory tr = exact_mode_trajectory(s, 2048);
    double J = primal_objective(tr, s.pb, zero_path());
    CHECK(std::abs(J) <= 1e-6);

    // perturbing the state while keeping the co-state opens the gaps
    Trajectory bad = tr;
    SplitMix rng(4);
    for (auto& y : bad.y)
        for (double& v : y.v) v += 0.1 * rng.uniform(-1.0, 1.0);
    double Jbad = primal_objective(bad, s.pb, zero_path());
    CHECK(Jbad > J + 1e-3);
}

TEST_CASE("zero data gives an exactly zero certificate") {
    ModeSetup s = make_mode_setup(16);
    s.pb.initial = Field(s.pb.geo, Space::L2);
    Trajectory tr = solve_random_pde(s.pb, zero_path(), 8);
    CertificateReport rep = certify(tr, s.pb, zero_path());
    CHECK(rep.primal == 0.0);
    CHECK(rep.dual == 0.0);
    CHECK(rep.defect == 0.0);
    CHECK(rep.energy_residual == 0.0);
}

TEST_CASE("per-step gaps integrate to the primal value") {
    ModeSetup s = make_mode_setup(32);
    Trajectory tr = solve_random_pde(s.pb, zero_path(), 24);
    std::vector<double> gaps = fenchel_gaps(tr, s.pb, zero_path());
    for (double g : gaps) CHECK(g >= -1e-9);

    // reassemble J from gap + pairing + boundary pieces; must agree with
    // primal_objective to rounding
    double tau = tr.tau();
    std::vector<double> ell(tr.K + 1);
    for (int k = 0; k <= tr.K; ++k) {
        const Field& u = tr.u[std::max(k, 1)];
        double gap = k >= 1 ? gaps[k - 1]
                            : composed_energy(s.pb, 0.0, {0.0}, tr.y[0]) +
                                  composed_conj_value(s.pb, 0.0, {0.0}, u) - inner(u, tr.y[0], Space::L2);
        ell[k] = gap + inner(u, tr.y[k], Space::L2);
    }
    double acc = 0.0;
    for (int k = 0; k < tr.K; ++k) acc += 0.5 * tau * (ell[k] + ell[k + 1]);
    acc += 0.5 * (inner(tr.y[tr.K], tr.y[tr.K], Space::L2) - inner(tr.y[0], tr.y[0], Space::L2));
    double J = primal_objective(tr, s.pb, zero_path());
    CHECK(acc == doctest::Approx(J).epsilon(1e-10));
}

TEST_CASE("primal value and duality defect shrink under time refinement") {
    ModeSetup s = make_mode_setup(32);
    s.pb.T = 0.5;
    std::vector<double> J, defect, eres;
    for (int K : {32, 64, 128}) {
        Trajectory tr = solve_random_pde(s.pb, zero_path(), K);
        CertificateReport rep = certify(tr, s.pb, zero_path());
        CHECK(rep.available);
        CHECK(rep.primal >= -rep.eps());
        CHECK(rep.dual >= -rep.eps());
        CHECK(rep.min_gap >= -1e-9);
        J.push_back(rep.primal);
        defect.push_back(rep.defect);
        eres.push_back(rep.energy_residual);
    }
    CHECK(J[0] > J[1]);
    CHECK(J[1] > J[2]);
    CHECK(J[0] / J[1] >= 1.8);
    CHECK(J[1] / J[2] >= 1.8);
    CHECK(defect[0] / defect[1] >= 1.8);
    CHECK(defect[1] / defect[2] >= 1.8);
    CHECK(eres[0] / eres[1] >= 1.8);  // first order in tau
}

TEST_CASE("certificate holds with noise and a nonlinear potential") {
    auto geo = Geometry::torus1d(1.0, 32);
    Problem pb;
    pb.geo = geo;
    pb.energy = EnergyForm::gradient_type(ConvexPotential::power(4.0, 0.25));
    pb.initial = Field(geo, Space::L2);
    for (int i = 0; i < 32; ++i) pb.initial.v[i] = std::sin(2 * M_PI * geo->coord(0, i));
    pb.T = 0.5;
    pb.ops = {NoiseOperator(NoiseOperator::Form::Diffusion, TransportField::constant1d(0.6), geo)};
    NoisePath path = NoisePath::sample_brownian(42, pb.T, 256, 1);

    std::vector<double> defect;
    for (int K : {32, 64}) {
        Trajectory tr = solve_random_pde(pb, path, K);
        CertificateReport rep = certify(tr, pb, path);
        CHECK(rep.available);
        CHECK(rep.primal >= -rep.eps());
        CHECK(rep.dual >= -rep.eps());
        defect.push_back(rep.defect);
    }
    CHECK(defect[0] / defect[1] >= 1.8);
}

TEST_CASE("dual objective rejects an infeasible pair") {
    ModeSetup s = make_mode_setup(16);
    Trajectory tr = solve_random_pde(s.pb, zero_path(), 8);
    DualPair dp = synthesize_dual(tr, s.pb, zero_path());
    dp.p[3].v[5] += 0.1;  // break the backward recursion
    CHECK_THROWS_AS(dual_objective(dp, tr, s.pb, zero_path()), UsageError);
}

TEST_CASE("energy identity residual on a two-step hand example") {
    auto geo = Geometry::torus1d(1.0, 8);
    Trajectory tr;
    tr.T = 1.0;
    tr.K = 2;
    for (double c : {0.0, 1.0, 3.0}) {
        Field y(geo, Space::L2);
        for (double& v : y.v) v = c;
        tr.y.push_back(std::move(y));
    }
    // |y2|^2/2 - |y0|^2/2 = 4.5; right-endpoint sum <dy, y> = 1 + 6 = 7;
    // residual = 2.5 = half the summed squared increments
    CHECK(energy_identity_residual(tr) == doctest::Approx(2.5).epsilon(1e-14));

    // constant trajectory has zero residual
    Trajectory flat;
    flat.T = 1.0;
    flat.K = 2;
    Field c(geo, Space::L2);
    for (double& v : c.v) v = 1.7;
    flat.y = {c, c, c};
    CHECK(energy_identity_residual(flat) == 0.0);
}

TEST_CASE("composed conjugate agrees with the group-transported conjugate") {
    auto geo = Geometry::torus1d(1.0, 32);
    Problem pb;
    pb.geo = geo;
    pb.energy = EnergyForm::pointwise(ConvexPotential::power(4.0, 0.25));
    pb.initial = Field(geo, Space::Hminus1);
    pb.T = 1.0;
    pb.ops = {NoiseOperator(NoiseOperator::Form::PorousMedia, TransportField::constant1d(0.8), geo)};

    SplitMix rng(9);
    for (int trial = 0; trial < 4; ++trial) {
        Field z(geo, Space::Hminus1);
        for (double& v : z.v) v = rng.uniform(-1.0, 1.0);
        double m = z.mean();
        for (double& v : z.v) v -= m;
        std::vector<double> betas{rng.uniform(-0.5, 0.5)};

        double composed = composed_conj_value(pb, 0.3, betas, z);
        Field zt = group_all(pb, 0.3, betas, +1.0, z);
        double direct = psi_conj_value(pb, 0.3, zt);
        CHECK(composed == doctest::Approx(direct).epsilon(1e-7));

        // Fenchel equality at the conjugate subgradient certifies the value
        Field w = composed_conj_grad(pb, 0.3, betas, z);
        double gap = composed_energy(pb, 0.3, betas, w) + composed - inner(w, z, Space::Hminus1);
        CHECK(std::abs(gap) <= 1e-6 * (1.0 + std::abs(composed)));
    }
}
