#ifndef STPDE_CERTIFY_HPP
#define STPDE_CERTIFY_HPP

#include <cmath>
#include <string>
#include <vector>

#include "stpde/solver.hpp"

namespace stpde {

/// Variational certificate of a trajectory. The primal value J is the
/// time-discretized convex functional whose minimum over curves starting at
/// y0 is attained, with value ~0, at the true solution; along any discrete
/// solver trajectory J must stay above -eps_cert with
/// eps_cert = 1e-7 (1 + |J|).
struct CertificateReport {
    double primal = 0.0;
    double dual = 0.0;
    double defect = 0.0;                // primal + dual, tends to 0 under refinement
    std::vector<double> gaps;           // per-step Fenchel gaps
    double max_gap = 0.0;
    double min_gap = 0.0;
    double energy_residual = 0.0;
    int K = 0;
    bool available = true;              // false: conjugate evaluation failed, gaps only
    std::string note;

    double eps() const { return 1e-7 * (1.0 + std::abs(primal)); }
};

namespace detail {

// shifted problem data: yhat = y - y0 starts at zero, phihat(v) =
// phi(v + y0), phihat*(z) = phi*(z) - <y0, z>, ghat = g - Gamma y0
struct ShiftedEval {
    const Problem& pb;
    const NoisePath& path;
    const Field& y0;

    double phi(double t, const Field& v) const {
        Field s = v + y0;
        return composed_energy(pb, t, path.eval(t), s);
    }
    double phi_star(double t, const Field& z) const {
        return composed_conj_value(pb, t, path.eval(t), z) - inner(y0, z, pb.pivot());
    }
    Field ghat(double t) const {
        std::vector<double> betas = path.eval(t);
        Field g = assemble_g(pb, path, t);
        g -= gamma_total(pb, t, betas, y0);
        return g;
    }
};

inline double trapezoid(const std::vector<double>& values, double tau) {
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < values.size(); ++k) acc += 0.5 * tau * (values[k] + values[k + 1]);
    return acc;
}

}  // namespace detail

/// Per-step Fenchel gaps phi(t_k, y_k) + phi*(t_k, u_k) - <u_k, y_k>.
/// Nonnegative up to solver and conjugate tolerances because u_k is a
/// subgradient selection at y_k. The pairing is evaluated in transformed
/// coordinates <e^{bB}u, e^{bB}y>: the group is unitary in the limit, and
/// with the same arguments fed to psi and psi* the Fenchel-Young bound holds
/// exactly at the discrete level too.
inline std::vector<double> fenchel_gaps(const Trajectory& tr, const Problem& pb, const NoisePath& path) {
    std::vector<double> gaps;
    gaps.reserve(tr.K);
    double tau = tr.tau();
    for (int k = 1; k <= tr.K; ++k) {
        double t = tau * k;
        std::vector<double> betas = path.eval(t);
        Field wu = group_all(pb, t, betas, +1.0, tr.u[k]);
        Field wy = group_all(pb, t, betas, +1.0, tr.y[k]);
        gaps.push_back(composed_energy(pb, t, betas, tr.y[k]) + composed_conj_value(pb, t, betas, tr.u[k]) -
                       inner(wu, wy, pb.pivot()));
    }
    return gaps;
}

/// Primal objective: trapezoidal quadrature of
/// phi(t, y) + phi*(t, u) - <g, y> plus (|y(T)|^2 - |y(0)|^2)/2 in the pivot
/// norm. The co-state at t = 0 is extended constantly (u_0 := u_1).
inline double primal_objective(const Trajectory& tr, const Problem& pb, const NoisePath& path) {
    double tau = tr.tau();
    Space piv = pb.pivot();
    std::vector<double> ell(tr.K + 1);
    for (int k = 0; k <= tr.K; ++k) {
        double t = tau * k;
        std::vector<double> betas = path.eval(t);
        const Field& u = tr.u[std::max(k, 1)];
        Field g = k >= 1 ? tr.g[k] : assemble_g(pb, path, 0.0);
        ell[k] = composed_energy(pb, t, betas, tr.y[k]) + composed_conj_value(pb, t, betas, u) -
                 inner(g, tr.y[k], piv);
    }
    double boundary = 0.5 * (inner(tr.y[tr.K], tr.y[tr.K], piv) - inner(tr.y[0], tr.y[0], piv));
    return detail::trapezoid(ell, tau) + boundary;
}

/// Dual pair (p, v) on the shifted problem, synthesized from the primal
/// solution: v_k = u_k, p_K = -(y_K - y0), backward recursion
///   (p_k - p_{k-1})/tau + Gamma_k p_k = v_k - ghat_k
/// so the discrete constraint holds exactly by construction.
struct DualPair {
    std::vector<Field> p;   // K+1 fields
    std::vector<Field> v;   // indexed 1..K (v[0] unused)
};

inline DualPair synthesize_dual(const Trajectory& tr, const Problem& pb, const NoisePath& path) {
    double tau = tr.tau();
    detail::ShiftedEval sh{pb, path, tr.y[0]};
    DualPair d;
    d.v = tr.u;
    d.p.assign(tr.K + 1, Field(pb.geo, pb.pivot()));
    d.p[tr.K] = tr.y[0] - tr.y[tr.K];
    for (int k = tr.K; k >= 1; --k) {
        double t = tau * k;
        Field rhs = d.v[k] - sh.ghat(t);
        d.p[k - 1] = d.p[k];
        d.p[k - 1].axpy(tau, gamma_total(pb, t, path.eval(t), d.p[k]));
        d.p[k - 1].axpy(-tau, rhs);
    }
    return d;
}

/// Dual objective on the shifted problem:
///   sum_k tau [phihat(t_k, -p_{k-1}) + phihat*(t_k, v_k) + <ghat_k, p_{k-1}>]
///   + |p(T)|^2/2.
/// Validates the discrete constraint first. The left-endpoint quadrature
/// makes the nonnegativity chain (Fenchel inequality plus summation by
/// parts plus skewness of Gamma) hold discretely:
/// value >= |p_0|^2/2 + sum |p_k - p_{k-1}|^2/2 - O(tau^2) Gamma cross terms.
inline double dual_objective(const DualPair& dp, const Trajectory& tr, const Problem& pb, const NoisePath& path) {
    double tau = tr.tau();
    Space piv = pb.pivot();
    detail::ShiftedEval sh{pb, path, tr.y[0]};
    double acc = 0.0;
    for (int k = 1; k <= tr.K; ++k) {
        double t = tau * k;
        Field c = dp.p[k] - dp.p[k - 1];
        c *= 1.0 / tau;
        c += gamma_total(pb, t, path.eval(t), dp.p[k]);
        c -= dp.v[k];
        c += sh.ghat(t);
        double cn = norm(c, piv);
        if (cn > 1e-9 * (1.0 + norm(dp.v[k], piv)))
            throw UsageError("dual pair violates the discrete constraint, residual " + std::to_string(cn));
        Field mp = dp.p[k - 1];
        mp *= -1.0;
        acc += tau * (sh.phi(t, mp) + sh.phi_star(t, dp.v[k]) + inner(sh.ghat(t), dp.p[k - 1], piv));
    }
    return acc + 0.5 * inner(dp.p[tr.K], dp.p[tr.K], piv);
}

/// Shifted primal objective (the yhat problem starts at 0, so only the
/// terminal boundary term survives). Used for the duality defect so that
/// primal and dual refer to the same optimization problem.
inline double shifted_primal_objective(const Trajectory& tr, const Problem& pb, const NoisePath& path) {
    double tau = tr.tau();
    Space piv = pb.pivot();
    detail::ShiftedEval sh{pb, path, tr.y[0]};
    std::vector<double> ell(tr.K + 1);
    for (int k = 0; k <= tr.K; ++k) {
        double t = tau * k;
        Field yh = tr.y[k] - tr.y[0];
        const Field& u = tr.u[std::max(k, 1)];
        ell[k] = sh.phi(t, yh) + sh.phi_star(t, u) - inner(sh.ghat(t), yh, piv);
    }
    Field yT = tr.y[tr.K] - tr.y[0];
    return detail::trapezoid(ell, tau) + 0.5 * inner(yT, yT, piv);
}

/// Duality defect: shifted primal plus dual at the synthesized pair. Tends
/// to 0 at order >= 1 in tau; a genuine consistency check because the dual
/// pair comes from the backward recursion, not from the primal identity.
inline double duality_defect(const Trajectory& tr, const Problem& pb, const NoisePath& path) {
    DualPair dp = synthesize_dual(tr, pb, path);
    return shifted_primal_objective(tr, pb, path) + dual_objective(dp, tr, pb, path);
}

/// Residual of the energy identity |p(T)|^2/2 - |p(0)|^2/2 = int <p', p>
/// under right-endpoint quadrature of the pairing. Equals half the summed
/// squared increments, a genuine O(tau) discretization measure.
inline double energy_identity_residual(const Trajectory& tr) {
    Space piv = tr.y[0].space;
    double acc = 0.0;
    for (int k = 1; k <= tr.K; ++k) {
        Field d = tr.y[k] - tr.y[k - 1];
        acc += inner(d, tr.y[k], piv);
    }
    double lhs = 0.5 * (inner(tr.y[tr.K], tr.y[tr.K], piv) - inner(tr.y[0], tr.y[0], piv));
    return std::abs(lhs - acc);
}

/// Full certificate. Conjugate evaluation failures degrade to an
/// unavailable certificate that still carries whatever was computed.
inline CertificateReport certify(const Trajectory& tr, const Problem& pb, const NoisePath& path) {
    CertificateReport rep;
    rep.K = tr.K;
    rep.energy_residual = energy_identity_residual(tr);
    try {
        rep.gaps = fenchel_gaps(tr, pb, path);
        rep.max_gap = rep.min_gap = rep.gaps.empty() ? 0.0 : rep.gaps.front();
        for (double g : rep.gaps) {
            rep.max_gap = std::max(rep.max_gap, g);
            rep.min_gap = std::min(rep.min_gap, g);
        }
        rep.primal = primal_objective(tr, pb, path);
        DualPair dp = synthesize_dual(tr, pb, path);
        rep.dual = dual_objective(dp, tr, pb, path);
        rep.defect = shifted_primal_objective(tr, pb, path) + rep.dual;
    } catch (const NumericError& e) {
        rep.available = false;
        rep.note = std::string("certificate unavailable: ") + e.what();
    }
    return rep;
}

}  // namespace stpde

#endif
