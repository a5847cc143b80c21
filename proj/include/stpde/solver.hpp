#ifndef STPDE_SOLVER_HPP
#define STPDE_SOLVER_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "stpde/convex.hpp"
#include "stpde/field.hpp"
#include "stpde/io.hpp"
#include "stpde/noise.hpp"
#include "stpde/transport.hpp"

namespace stpde {

/// The convex spatial energy psi(t, .). Three shapes:
///  - gradient_type: psi(w) = integral j(t, grad w), pivot L2, componentwise
///    j on forward differences;
///  - pointwise: psi(w) = integral j(t, w), pivot H^-1;
///  - neumann_thermostat (1-D): quadratic interior energy
///    (kappa/2) integral |w'|^2 plus boundary potentials j0(t, w(0)) +
///    j0(t, w(L)), pivot L2.
struct EnergyForm {
    enum class Kind { GradientType, Pointwise, NeumannThermostat };

    Kind kind = Kind::GradientType;
    ConvexPotential j = ConvexPotential::quadratic(1.0);
    double kappa = 1.0;                                      // neumann interior coefficient
    ConvexPotential j0 = ConvexPotential::quadratic(1.0);    // neumann boundary potential

    static EnergyForm gradient_type(ConvexPotential pot) {
        EnergyForm e;
        e.kind = Kind::GradientType;
        e.j = std::move(pot);
        return e;
    }
    static EnergyForm pointwise(ConvexPotential pot) {
        EnergyForm e;
        e.kind = Kind::Pointwise;
        e.j = std::move(pot);
        return e;
    }
    static EnergyForm neumann_thermostat(double kappa, ConvexPotential boundary) {
        if (!(kappa > 0.0)) throw DomainError("neumann form requires kappa > 0");
        EnergyForm e;
        e.kind = Kind::NeumannThermostat;
        e.kappa = kappa;
        e.j0 = std::move(boundary);
        return e;
    }

    Space pivot() const { return kind == Kind::Pointwise ? Space::Hminus1 : Space::L2; }
};

/// Problem data for dy/dt + d(phi)(t, y) + Gamma(t) y = g(t), y(0) = x,
/// where phi(t, y) = psi(t, e^{beta(t) B(t)} y).
struct Problem {
    GeometryPtr geo;
    EnergyForm energy;
    std::vector<NoiseOperator> ops;            // commuting channels, at most 2
    std::function<Field(double)> forcing;      // null means zero forcing
    Field initial;
    double T = 1.0;

    Space pivot() const { return energy.pivot(); }

    void validate() const {
        if (!geo) throw DomainError("problem: geometry missing");
        if (!(T > 0.0)) throw DomainError("problem: horizon T > 0 required");
        if (ops.size() > 2) throw DomainError("problem: at most 2 noise channels supported");
        if (initial.geo != geo) throw DomainError("problem: initial datum on wrong geometry");
        if (initial.space != pivot()) throw DomainError("problem: initial datum space tag must match the pivot");
        for (const auto& op : ops) {
            if (op.geo != geo) throw DomainError("problem: noise operator on wrong geometry");
            if (!op.trivial() && op.space() != pivot())
                throw DomainError("problem: noise operator pivot space must match the energy form");
        }
        if (energy.kind == EnergyForm::Kind::NeumannThermostat) {
            if (geo->boundary() != Boundary::Neumann || geo->dim() != 1)
                throw DomainError("neumann form requires a 1-D interval_neumann geometry");
            for (const auto& op : ops)
                if (!op.trivial()) throw DomainError("neumann form admits no transport (b = 0 forced in 1-D)");
        }
        if (energy.kind == EnergyForm::Kind::Pointwise && geo->boundary() == Boundary::Neumann)
            throw DomainError("pointwise form needs an invertible Laplacian");
    }
};

struct StepDiagnostics {
    int newton_iters = 0;
    double residual = 0.0;
    int retries = 0;
};

struct Trajectory {
    double T = 0.0;
    int K = 0;
    std::vector<Field> y;                 // K+1 states
    std::vector<Field> u;                 // K co-states, u[k] at t_{k+1}... indexed 1..K (u[0] unused)
    std::vector<Field> g;                 // forcing samples at step times, same indexing
    std::vector<Field> X;                 // optional transformed states
    std::vector<StepDiagnostics> diag;    // per step
    double tau() const { return T / K; }
};

// ---------------------------------------------------------------- energies

namespace detail {

// forward differences over the H1 edge set; visit(edge_value, left_index,
// right_index) with index -1 for a Dirichlet boundary ghost (value 0)
template <class Visit>
void for_each_edge(const Geometry& g, const std::vector<double>& w, int axis, Visit&& visit) {
    int nx = g.nodes(0), ny = g.dim() == 2 ? g.nodes(1) : 1;
    double ih = 1.0 / g.spacing(axis);
    bool per = g.periodic();
    bool dir = g.boundary() == Boundary::Dirichlet;
    auto val = [&](int i, int j) -> double {
        if (per) return w[g.index((i + nx) % nx, (j + ny) % ny)];
        if (i < 0 || i >= nx || j < 0 || j >= ny) return 0.0;
        return w[g.index(i, j)];
    };
    int n = axis == 0 ? nx : ny;
    int m = axis == 0 ? ny : nx;
    int e0 = dir ? -1 : 0;
    int e1 = per ? n : (dir ? n : n - 1);  // last edge start index (exclusive bound below)
    for (int l = 0; l < m; ++l)
        for (int e = e0; e < e1; ++e) {
            int ia = axis == 0 ? e : l, ja = axis == 0 ? l : e;
            int ib = axis == 0 ? e + 1 : l, jb = axis == 0 ? l : e + 1;
            double d = (val(ib, jb) - val(ia, ja)) * ih;
            long left = (e < 0) ? -1 : long(g.index(ia, ja));
            long right = (per && e + 1 >= n) ? long(g.index((ib + nx) % nx, (jb + ny) % ny))
                                             : ((e + 1 >= n) ? -1 : long(g.index(ib, jb)));
            visit(d, left, right);
        }
}

}  // namespace detail

/// psi(t, w).
inline double psi_value(const Problem& pb, double t, const Field& w) {
    const Geometry& g = *pb.geo;
    double vol = g.cell_volume();
    switch (pb.energy.kind) {
        case EnergyForm::Kind::GradientType: {
            double acc = 0.0;
            for (int ax = 0; ax < g.dim(); ++ax)
                detail::for_each_edge(g, w.v, ax, [&](double d, long, long) { acc += pb.energy.j.eval(t, d); });
            return acc * vol;
        }
        case EnergyForm::Kind::Pointwise: {
            double acc = 0.0;
            for (double x : w.v) acc += pb.energy.j.eval(t, x);
            return acc * vol;
        }
        case EnergyForm::Kind::NeumannThermostat: {
            double acc = 0.0;
            double ih = 1.0 / g.spacing(0);
            for (int i = 0; i + 1 < g.nodes(0); ++i) {
                double d = (w.v[i + 1] - w.v[i]) * ih;
                acc += 0.5 * pb.energy.kappa * d * d;
            }
            return acc * vol + pb.energy.j0.eval(t, w.v.front()) + pb.energy.j0.eval(t, w.v.back());
        }
    }
    return 0.0;
}

/// Minimal-norm selection of d(psi)(t, w), represented in the pivot space.
inline Field psi_grad(const Problem& pb, double t, const Field& w) {
    const Geometry& g = *pb.geo;
    Field out(pb.geo, pb.pivot());
    switch (pb.energy.kind) {
        case EnergyForm::Kind::GradientType: {
            for (int ax = 0; ax < g.dim(); ++ax) {
                double ih = 1.0 / g.spacing(ax);
                detail::for_each_edge(g, w.v, ax, [&](double d, long left, long right) {
                    double s = pb.energy.j.slope(t, d) * ih;
                    if (left >= 0) out.v[std::size_t(left)] -= s;
                    if (right >= 0) out.v[std::size_t(right)] += s;
                });
            }
            return out;
        }
        case EnergyForm::Kind::Pointwise: {
            Field s(pb.geo, Space::L2);
            for (std::size_t i = 0; i < w.size(); ++i) s.v[i] = pb.energy.j.slope(t, w.v[i]);
            Field lap = laplacian(s);
            out.v = lap.v;
            for (double& x : out.v) x = -x;
            return out;
        }
        case EnergyForm::Kind::NeumannThermostat: {
            int n = g.nodes(0);
            double ih = 1.0 / g.spacing(0);
            std::vector<double> d(n - 1);
            for (int i = 0; i + 1 < n; ++i) d[i] = (w.v[i + 1] - w.v[i]) * ih;
            for (int i = 0; i < n; ++i) {
                double left = i > 0 ? d[i - 1] : 0.0;
                double right = i + 1 < n ? d[i] : 0.0;
                out.v[i] = pb.energy.kappa * (left - right) * ih;
            }
            out.v.front() += pb.energy.j0.slope(t, w.v.front()) / g.spacing(0);
            out.v.back() += pb.energy.j0.slope(t, w.v.back()) / g.spacing(0);
            return out;
        }
    }
    return out;
}

/// Action of the generalized Hessian of psi at w on a direction d.
inline Field psi_hess_apply(const Problem& pb, double t, const Field& w, const Field& d) {
    const Geometry& g = *pb.geo;
    Field out(pb.geo, pb.pivot());
    switch (pb.energy.kind) {
        case EnergyForm::Kind::GradientType: {
            for (int ax = 0; ax < g.dim(); ++ax) {
                double ih = 1.0 / g.spacing(ax);
                std::vector<double> cs;
                cs.reserve(w.size() * 2);
                detail::for_each_edge(g, w.v, ax, [&](double e, long, long) { cs.push_back(pb.energy.j.curvature(t, e)); });
                std::size_t q = 0;
                detail::for_each_edge(g, d.v, ax, [&](double e, long left, long right) {
                    double s = cs[q++] * e * ih;
                    if (left >= 0) out.v[std::size_t(left)] -= s;
                    if (right >= 0) out.v[std::size_t(right)] += s;
                });
            }
            return out;
        }
        case EnergyForm::Kind::Pointwise: {
            Field s(pb.geo, Space::L2);
            for (std::size_t i = 0; i < w.size(); ++i) s.v[i] = pb.energy.j.curvature(t, w.v[i]) * d.v[i];
            Field lap = laplacian(s);
            out.v = lap.v;
            for (double& x : out.v) x = -x;
            return out;
        }
        case EnergyForm::Kind::NeumannThermostat: {
            int n = g.nodes(0);
            double ih = 1.0 / g.spacing(0);
            for (int i = 0; i < n; ++i) {
                double left = i > 0 ? (d.v[i] - d.v[i - 1]) * ih : 0.0;
                double right = i + 1 < n ? (d.v[i + 1] - d.v[i]) * ih : 0.0;
                out.v[i] = pb.energy.kappa * (left - right) * ih;
            }
            out.v.front() += pb.energy.j0.curvature(t, w.v.front()) * d.v.front() / g.spacing(0);
            out.v.back() += pb.energy.j0.curvature(t, w.v.back()) * d.v.back() / g.spacing(0);
            return out;
        }
    }
    return out;
}

// -------------------------------------------------------- group composition

/// e^{sign * sum_j beta_j B_j(t)} applied channel by channel (the channels
/// commute, so the order is immaterial).
inline Field group_all(const Problem& pb, double t, const std::vector<double>& betas, double sign, const Field& f) {
    Field out = f;
    for (std::size_t j = 0; j < pb.ops.size(); ++j) {
        if (pb.ops[j].trivial() || betas[j] == 0.0) continue;
        out = group_apply(pb.ops[j], t, sign * betas[j], out);
    }
    return out;
}

/// phi(t, y) = psi(t, e^{beta B} y).
inline double composed_energy(const Problem& pb, double t, const std::vector<double>& betas, const Field& y) {
    return psi_value(pb, t, group_all(pb, t, betas, +1.0, y));
}

/// d(phi)(t, y) = e^{-beta B} d(psi)(e^{beta B} y); the group is a pivot
/// isometry, so the chain rule produces the inverse group, not an adjoint.
inline Field composed_grad(const Problem& pb, double t, const std::vector<double>& betas, const Field& y) {
    Field w = group_all(pb, t, betas, +1.0, y);
    return group_all(pb, t, betas, -1.0, psi_grad(pb, t, w));
}

/// Gamma(t) y summed over channels.
inline Field gamma_total(const Problem& pb, double t, const std::vector<double>& betas, const Field& y) {
    Field out(pb.geo, pb.pivot());
    for (std::size_t j = 0; j < pb.ops.size(); ++j) out += gamma_apply(pb.ops[j], t, betas[j], y);
    return out;
}

/// g(t) = e^{-sum beta_j B_j} f(t); the adjoint of the skew operator is its
/// negative, so the transformed forcing uses the inverse group.
inline Field assemble_g(const Problem& pb, const NoisePath& path, double t) {
    if (!pb.forcing) return Field(pb.geo, pb.pivot());
    Field f = pb.forcing(t);
    if (f.space != pb.pivot()) throw DomainError("forcing sample space tag must match the pivot");
    return group_all(pb, t, path.eval(t), -1.0, f);
}

// --------------------------------------------------------------- prox step

namespace detail {

// CG for an SPD operator in the given pivot inner product
inline Field cg_solve(const std::function<Field(const Field&)>& apply, const Field& rhs, Space space, double rel_tol,
                      int max_iter) {
    Field x(rhs.geo, rhs.space);
    Field r = rhs;
    Field p = r;
    double rr = inner(r, r, space);
    double target = rel_tol * rel_tol * rr;
    for (int it = 0; it < max_iter && rr > target && rr > 1e-300; ++it) {
        Field ap = apply(p);
        double pap = inner(p, ap, space);
        if (!(pap > 0.0)) break;  // lost positivity: return best iterate
        double alpha = rr / pap;
        x.axpy(alpha, p);
        r.axpy(-alpha, ap);
        double rr_new = inner(r, r, space);
        double beta = rr_new / rr;
        rr = rr_new;
        Field pn = r;
        pn.axpy(beta, p);
        p = pn;
    }
    return x;
}

// residual of the prox inclusion y - z + tau d(phi)(y) at the min-norm
// selection; for the neumann form the boundary entries use the full relay
// interval, so a stuck boundary node reports zero residual
inline Field prox_residual(const Problem& pb, double t, const std::vector<double>& betas, const Field& y,
                           const Field& z, double tau) {
    Field r = y - z;
    r.axpy(tau, composed_grad(pb, t, betas, y));
    if (pb.energy.kind == EnergyForm::Kind::NeumannThermostat) {
        const Geometry& g = *pb.geo;
        int n = g.nodes(0);
        double h = g.spacing(0), ih = 1.0 / h;
        for (int side = 0; side < 2; ++side) {
            int k = side == 0 ? 0 : n - 1;
            int nb = side == 0 ? 1 : n - 2;
            double d = (y.v[nb] - y.v[k]) * ih;  // derivative toward the interior
            // optimality: y_k - z_k + tau(-kappa d + zeta)/h = 0 for some
            // zeta in dj0(y_k); project the required zeta onto the interval
            double zeta_star = pb.energy.kappa * d - (y.v[k] - z.v[k]) * h / tau;
            Interval iv = pb.energy.j0.subgradient(t, y.v[k]);
            double zeta = std::clamp(zeta_star, iv.lo, iv.hi);
            r.v[k] = y.v[k] - z.v[k] + tau * (-pb.energy.kappa * d + zeta) * ih;
        }
    }
    return r;
}

// exact scalar prox update of a boundary node given its neighbor (neumann
// form only); the relay subdifferential is handled by the potential's prox
inline void neumann_boundary_polish(const Problem& pb, double t, Field& y, const Field& z, double tau) {
    const Geometry& g = *pb.geo;
    int n = g.nodes(0);
    double h = g.spacing(0);
    for (int side = 0; side < 2; ++side) {
        int k = side == 0 ? 0 : n - 1;
        int nb = side == 0 ? 1 : n - 2;
        double a = h / tau + pb.energy.kappa / h;
        double m = (h * z.v[k] / tau + pb.energy.kappa * y.v[nb] / h) / a;
        y.v[k] = pb.energy.j0.prox(t, m, 1.0 / a);
    }
}

}  // namespace detail

struct SolveOptions {
    double tol = 1e-10;      // pivot-norm residual target for each prox step
    int max_newton = 60;
    int cg_max_iter = 400;
    bool store_g = true;
    bool store_X = false;
};

/// One implicit step: solve y + tau d(phi)(t, y) = z by damped Newton with
/// matrix-free CG in the pivot metric. Returns y; the co-state is
/// u = (z - y)/tau.
inline Field prox_step(const Problem& pb, double t, const std::vector<double>& betas, const Field& z, double tau,
                       const Field& y_guess, const SolveOptions& opt, StepDiagnostics& diag) {
    Space piv = pb.pivot();
    Field y = y_guess;
    if (pb.energy.kind == EnergyForm::Kind::NeumannThermostat) detail::neumann_boundary_polish(pb, t, y, z, tau);
    Field r = detail::prox_residual(pb, t, betas, y, z, tau);
    double rn = norm(r, piv);
    double scale = 1.0 + norm(z, piv);
    for (int it = 0; it < opt.max_newton; ++it) {
        if (rn <= opt.tol * scale) {
            diag.newton_iters = it;
            diag.residual = rn;
            return y;
        }
        Field w = group_all(pb, t, betas, +1.0, y);
        auto apply = [&](const Field& d) {
            Field gd = group_all(pb, t, betas, +1.0, d);
            Field hd = psi_hess_apply(pb, t, w, gd);
            Field back = group_all(pb, t, betas, -1.0, hd);
            Field out = d;
            out.axpy(tau, back);
            return out;
        };
        Field rhs = r;
        rhs *= -1.0;
        Field d = detail::cg_solve(apply, rhs, piv, 1e-4, opt.cg_max_iter);
        bool accepted = false;
        for (double s = 1.0; s > 1e-8; s *= 0.5) {
            Field yt = y;
            yt.axpy(s, d);
            if (pb.energy.kind == EnergyForm::Kind::NeumannThermostat)
                detail::neumann_boundary_polish(pb, t, yt, z, tau);
            Field rt = detail::prox_residual(pb, t, betas, yt, z, tau);
            double rtn = norm(rt, piv);
            if (rtn < rn * (1.0 - 1e-4 * s) || rtn <= opt.tol * scale) {
                y = yt;
                r = rt;
                rn = rtn;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // gradient fallback: the residual is itself a descent direction
            // of the strongly convex step objective
            bool ok = false;
            for (double s = 1.0; s > 1e-10; s *= 0.5) {
                Field yt = y;
                yt.axpy(-s, r);
                if (pb.energy.kind == EnergyForm::Kind::NeumannThermostat)
                    detail::neumann_boundary_polish(pb, t, yt, z, tau);
                Field rt = detail::prox_residual(pb, t, betas, yt, z, tau);
                double rtn = norm(rt, piv);
                if (rtn < rn) {
                    y = yt;
                    r = rt;
                    rn = rtn;
                    ok = true;
                    break;
                }
            }
            if (!ok) throw NumericError("prox step stalled; retry with a smaller time step", rn);
        }
    }
    if (rn <= opt.tol * scale) {
        diag.newton_iters = opt.max_newton;
        diag.residual = rn;
        return y;
    }
    throw NumericError("prox step did not converge; retry with a smaller time step", rn);
}

/// One solver step: explicit Gamma, implicit convex part.
/// z = y_prev - tau Gamma(t) y_prev + tau g(t); then the prox solve.
inline std::pair<Field, Field> step(const Problem& pb, const NoisePath& path, const Field& y_prev, double t_next,
                                    double tau, const SolveOptions& opt, StepDiagnostics& diag) {
    if (!(tau > 0.0)) throw DomainError("step: tau > 0 required");
    std::vector<double> betas = path.eval(t_next);
    Field z = y_prev;
    z.axpy(-tau, gamma_total(pb, t_next, betas, y_prev));
    z.axpy(tau, assemble_g(pb, path, t_next));
    Field y;
    try {
        y = prox_step(pb, t_next, betas, z, tau, y_prev, opt, diag);
    } catch (const NumericError&) {
        // retry by internal sub-stepping, up to 3 halvings
        bool done = false;
        for (int splits = 2; splits <= 8 && !done; splits *= 2) {
            ++diag.retries;
            try {
                Field yc = y_prev;
                double sub = tau / splits;
                for (int m = 1; m <= splits; ++m) {
                    double ts = t_next - tau + sub * m;
                    std::vector<double> bs = path.eval(ts);
                    Field zs = yc;
                    zs.axpy(-sub, gamma_total(pb, ts, bs, yc));
                    zs.axpy(sub, assemble_g(pb, path, ts));
                    StepDiagnostics dsub;
                    yc = prox_step(pb, ts, bs, zs, sub, yc, opt, dsub);
                    diag.newton_iters += dsub.newton_iters;
                    diag.residual = dsub.residual;
                }
                y = yc;
                done = true;
            } catch (const NumericError&) {
            }
        }
        if (!done) throw;
    }
    Field u = z - y;
    u *= 1.0 / tau;
    return {std::move(y), std::move(u)};
}

/// March the implicit scheme over a uniform mesh with K steps.
inline Trajectory solve_random_pde(const Problem& pb, const NoisePath& path, int K, SolveOptions opt = {}) {
    pb.validate();
    if (K < 1) throw DomainError("solve_random_pde: K >= 1 required");
    Trajectory tr;
    tr.T = pb.T;
    tr.K = K;
    double tau = pb.T / K;
    tr.y.reserve(K + 1);
    tr.y.push_back(pb.initial);
    tr.u.assign(1, Field(pb.geo, pb.pivot()));  // u[0] placeholder
    tr.g.assign(1, Field(pb.geo, pb.pivot()));
    tr.diag.assign(1, StepDiagnostics{});
    for (int k = 1; k <= K; ++k) {
        double t = tau * k;
        StepDiagnostics d;
        auto [y, u] = step(pb, path, tr.y.back(), t, tau, opt, d);
        tr.y.push_back(std::move(y));
        tr.u.push_back(std::move(u));
        tr.g.push_back(opt.store_g ? assemble_g(pb, path, t) : Field(pb.geo, pb.pivot()));
        tr.diag.push_back(d);
    }
    return tr;
}

/// X(t_k) = e^{+sum beta_j(t_k) B_j} y(t_k).
inline void transform_back(Trajectory& tr, const Problem& pb, const NoisePath& path) {
    tr.X.clear();
    tr.X.reserve(tr.y.size());
    for (std::size_t k = 0; k < tr.y.size(); ++k) {
        double t = tr.T * double(k) / double(tr.K);
        tr.X.push_back(group_all(pb, t, path.eval(t), +1.0, tr.y[k]));
    }
}

/// Full pipeline: transformed equation solve plus back-transformation.
inline Trajectory solve_spde(const Problem& pb, const NoisePath& path, int K, SolveOptions opt = {}) {
    Trajectory tr = solve_random_pde(pb, path, K, opt);
    transform_back(tr, pb, path);
    return tr;
}

// ------------------------------------------------- conjugate machinery

/// Solve d(psi)(t, w) = zeta for w (the conjugate subgradient d(psi*)(zeta)).
/// Damped Newton with Levenberg regularization; on the torus the data are
/// projected to mean zero (the gradient range) and so is the answer.
inline Field psi_grad_inverse(const Problem& pb, double t, const Field& zeta_in, double tol = 1e-9) {
    Space piv = pb.pivot();
    Field zeta = zeta_in;
    bool project = pb.geo->periodic();
    if (project) {
        double m = zeta.mean();
        for (double& x : zeta.v) x -= m;
    }
    // zero data stays exactly zero when the potential rests at the origin
    bool all_zero = true;
    for (double x : zeta.v)
        if (x != 0.0) { all_zero = false; break; }
    if (all_zero && pb.energy.j.subgradient(t, 0.0).contains(0.0, 0.0)) return Field(pb.geo, piv);
    if (pb.energy.kind == EnergyForm::Kind::Pointwise) {
        // pointwise form: d(psi)(w) = -Lap j'(w) in H^-1, so j'(w) =
        // (-Lap)^-1 zeta up to a constant fixed by the mean-zero constraint
        Field v = inv_laplacian(zeta);
        Field w(pb.geo, piv);
        auto fill = [&](double c) {
            double mean = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) {
                w.v[i] = pb.energy.j.conjugate_subgradient(t, v.v[i] + c).min_norm();
                mean += w.v[i];
            }
            return mean / double(w.size());
        };
        if (!project) {
            fill(0.0);
            return w;
        }
        double lo = -1.0, hi = 1.0;
        while (fill(lo) > 0) lo *= 2.0;
        while (fill(hi) < 0) hi *= 2.0;
        for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
            double mid = 0.5 * (lo + hi);
            (fill(mid) > 0 ? hi : lo) = mid;
        }
        fill(0.5 * (lo + hi));
        return w;
    }
    if (pb.energy.kind == EnergyForm::Kind::GradientType && pb.geo->dim() == 1) {
        // 1-D direct solve: -D^-(j'(D^+ w)) = zeta integrates to
        // sigma_e = sigma_start - h * cumsum(zeta); d_e = (j*)'(sigma_e); the
        // integration constant is fixed by the closure sum(d_e) = 0
        const Geometry& g = *pb.geo;
        int n = g.nodes(0);
        double h = g.spacing(0);
        bool dir = g.boundary() == Boundary::Dirichlet;
        // edge e connects node e-1 to node e (dirichlet: edge 0 starts at the
        // boundary ghost; edge n ends there); node i couples edges i and i+1
        // via zeta_i = (sigma_i - sigma_{i+1})/h, torus shifts by one
        int ne = dir ? n + 1 : n;
        std::vector<double> cum(ne, 0.0);
        double run = 0.0;
        for (int e = 0; e < ne; ++e) {
            cum[e] = run;
            int node = dir ? e : (e + 1) % n;  // node between edge e and e+1
            if (node < n) run += h * zeta.v[node];
        }
        std::vector<double> d(ne);
        auto closure = [&](double s0) {
            double acc = 0.0;
            for (int e = 0; e < ne; ++e) {
                d[e] = pb.energy.j.conjugate_subgradient(t, s0 - cum[e]).min_norm();
                acc += d[e];
            }
            return acc;
        };
        double lo = -1.0, hi = 1.0;
        while (closure(lo) > 0) {
            lo *= 2.0;
            if (lo < -1e300) throw NumericError("conjugate solve: closure bracket failed", lo);
        }
        while (closure(hi) < 0) {
            hi *= 2.0;
            if (hi > 1e300) throw NumericError("conjugate solve: closure bracket failed", hi);
        }
        for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
            double mid = 0.5 * (lo + hi);
            (closure(mid) > 0 ? hi : lo) = mid;
        }
        closure(0.5 * (lo + hi));
        Field w(pb.geo, piv);
        if (dir) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += h * d[i];
                w.v[i] = acc;
            }
        } else {
            double acc = 0.0;
            for (int i = 1; i < n; ++i) {
                acc += h * d[i - 1];  // edge i-1 connects node i-1 to node i
                w.v[i] = acc;
            }
            double m = w.mean();
            for (double& x : w.v) x -= m;
        }
        return w;
    }
    if (pb.energy.kind == EnergyForm::Kind::NeumannThermostat) {
        // integrate the node equations: with c_i = h zeta_i and s0 the left
        // boundary flux, kappa d_i = s0 - sum_{j<=i} c_j, and the right flux
        // is s1 = S - s0 with S = sum c_i. The boundary inclusions
        // s0 in dj0(w_0), s1 in dj0(w_{n-1}) close the system through the
        // scalar equation q(S - s0) - q(s0) = D(s0), q = (j0*)' and D the
        // end-to-end increment; the left side is nonincreasing and D is
        // increasing, so bisection applies.
        const Geometry& g = *pb.geo;
        int n = g.nodes(0);
        double h = g.spacing(0);
        double kap = pb.energy.kappa;
        std::vector<double> C(n);
        double run = 0.0, sumC = 0.0;
        for (int i = 0; i < n; ++i) {
            run += h * zeta.v[i];
            C[i] = run;
            if (i < n - 1) sumC += run;
        }
        double S = run;
        auto D = [&](double s0) { return (h / kap) * (double(n - 1) * s0 - sumC); };
        auto eval_g = [&](double s0, bool& ok) {
            ok = true;
            try {
                double a = pb.energy.j0.conjugate_subgradient(t, S - s0).min_norm();
                double b = pb.energy.j0.conjugate_subgradient(t, s0).min_norm();
                return a - b - D(s0);
            } catch (const NumericError&) {
                ok = false;
                return 0.0;
            }
        };
        // s0 = S/2 is feasible whenever the system is solvable (the conjugate
        // domain is convex and contains both fluxes)
        bool ok = false;
        double mid = 0.5 * S;
        double gm = eval_g(mid, ok);
        if (!ok) throw NumericError("conjugate solve: boundary flux outside the admissible range", S);
        double lo = mid, hi = mid, glo = gm, ghi = gm;
        auto expand = [&](double& edge, double& ge, double dir) {
            // walk outward until the sign flips, halving back at the domain
            // boundary; if the sign never flips the root sits at the edge
            double step = 1.0 + std::abs(S);
            for (int it = 0; it < 200; ++it) {
                if (dir > 0 ? ge <= 0.0 : ge >= 0.0) return;
                bool valid = false;
                double cand = edge + dir * step;
                double gc = eval_g(cand, valid);
                if (!valid) {
                    step *= 0.5;
                    if (step < 1e-14 * (1.0 + std::abs(edge))) return;
                    continue;
                }
                edge = cand;
                ge = gc;
                step *= 2.0;
            }
        };
        expand(hi, ghi, +1.0);
        expand(lo, glo, -1.0);
        double s0;
        if (glo <= 0.0)
            s0 = lo;  // root pinned at the lower domain edge
        else if (ghi >= 0.0)
            s0 = hi;
        else {
            for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
                bool v = false;
                double m = 0.5 * (lo + hi);
                (eval_g(m, v) >= 0.0 ? lo : hi) = m;
            }
            s0 = 0.5 * (lo + hi);
        }
        // anchor: w_0 must lie in dj0*(s0) and in dj0*(S - s0) shifted back
        // by the end-to-end increment
        Interval A = pb.energy.j0.conjugate_subgradient(t, s0);
        Interval B = pb.energy.j0.conjugate_subgradient(t, S - s0);
        double blo = B.lo - D(s0), bhi = B.hi - D(s0);
        double ilo = std::max(A.lo, blo), ihi = std::min(A.hi, bhi);
        double w0 = ilo <= ihi ? std::clamp(0.0, ilo, ihi) : 0.5 * (std::clamp(0.0, A.lo, A.hi) + std::clamp(0.0, blo, bhi));
        Field w(pb.geo, piv);
        w.v[0] = w0;
        for (int i = 0; i + 1 < n; ++i) w.v[i + 1] = w.v[i] + (h / kap) * (s0 - C[i]);
        return w;
    }
    // gradient_type / neumann: damped Newton on d(psi)(w) - zeta = 0
    Field w(pb.geo, piv);
    Field r = psi_grad(pb, t, w) - zeta;
    double rn = norm(r, piv);
    double scale = 1.0 + norm(zeta, piv);
    double mu = 1e-8;
    for (int it = 0; it < 200; ++it) {
        if (rn <= tol * scale) return w;
        auto apply = [&](const Field& d) {
            Field hd = psi_hess_apply(pb, t, w, d);
            hd.axpy(mu, d);
            return hd;
        };
        Field rhs = r;
        rhs *= -1.0;
        Field d = detail::cg_solve(apply, rhs, piv, 1e-6, 2000);
        if (project) {
            double m = d.mean();
            for (double& x : d.v) x -= m;
        }
        bool accepted = false;
        for (double s = 1.0; s > 1e-10; s *= 0.5) {
            Field wt = w;
            wt.axpy(s, d);
            Field rt = psi_grad(pb, t, wt) - zeta;
            double rtn = norm(rt, piv);
            if (rtn < rn) {
                w = wt;
                r = rt;
                rn = rtn;
                accepted = true;
                break;
            }
        }
        if (accepted)
            mu = std::max(mu * 0.25, 1e-12);
        else {
            mu *= 10.0;
            if (mu > 1e12) throw NumericError("conjugate solve stalled", rn);
        }
    }
    if (rn <= 10 * tol * scale) return w;
    throw NumericError("conjugate solve did not converge", rn);
}

/// psi*(t, zeta) = <zeta, w*> - psi(t, w*) at the maximizer w*.
inline double psi_conj_value(const Problem& pb, double t, const Field& zeta, double tol = 1e-9) {
    if (pb.energy.kind == EnergyForm::Kind::Pointwise && !pb.geo->periodic()) {
        // closed form: psi*(zeta) = integral j*((-Lap)^-1 zeta)
        Field v = inv_laplacian(zeta);
        double acc = 0.0;
        for (double x : v.v) acc += pb.energy.j.conjugate(t, x);
        return acc * pb.geo->cell_volume();
    }
    Field w = psi_grad_inverse(pb, t, zeta, tol);
    return inner(zeta, w, pb.pivot()) - psi_value(pb, t, w);
}

/// phi*(t, u) = psi*(t, e^{beta B} u): the group is a pivot isometry.
inline double composed_conj_value(const Problem& pb, double t, const std::vector<double>& betas, const Field& u,
                                  double tol = 1e-9) {
    return psi_conj_value(pb, t, group_all(pb, t, betas, +1.0, u), tol);
}

/// d(phi*)(t, u) = e^{-beta B} d(psi*)(e^{beta B} u).
inline Field composed_conj_grad(const Problem& pb, double t, const std::vector<double>& betas, const Field& u,
                                double tol = 1e-9) {
    Field w = psi_grad_inverse(pb, t, group_all(pb, t, betas, +1.0, u), tol);
    return group_all(pb, t, betas, -1.0, w);
}

// ------------------------------------------- Euler-Lagrange gradient solver

struct EulerLagrangeResult {
    Trajectory traj;
    std::vector<Field> q;            // backward co-state trace
    std::vector<double> residuals;   // Fenchel-gap objective per sweep
};

/// Gradient algorithm on the time-integrated Fenchel-gap functional
/// F(u) = sum_k tau [phi(y^k) + phi*(u^k) - <u^k, y^k>], where y is the
/// forward state driven by u:
///   y^k = y^{k-1} - tau Gamma_k y^{k-1} + tau (g^k - u^k).
/// F >= 0 with equality exactly at the implicit trajectory, so its value is
/// the natural residual. Each sweep runs one forward state pass, one
/// backward adjoint pass
///   w^m = tau a_m + (I + tau Gamma_{m+1}) w^{m+1},  a_m = d(phi)(y^m) - u^m,
/// and a backtracked gradient update u^m -= rho (d(phi*)(u^m) - y^m - w^m).
/// Seed u = 0.
inline EulerLagrangeResult solve_euler_lagrange(const Problem& pb, const NoisePath& path, int K, int sweeps,
                                                double rho = 0.5) {
    pb.validate();
    if (sweeps < 1) throw DomainError("solve_euler_lagrange: sweeps >= 1 required");
    double tau = pb.T / K;
    Space piv = pb.pivot();
    bool project = pb.geo->periodic() && pb.energy.kind == EnergyForm::Kind::GradientType;

    std::vector<std::vector<double>> betas(K + 1);
    std::vector<Field> gs(K + 1, Field(pb.geo, piv));
    for (int k = 0; k <= K; ++k) {
        betas[k] = path.eval(tau * k);
        if (k >= 1) gs[k] = assemble_g(pb, path, tau * k);
    }

    std::vector<Field> u(K + 1, Field(pb.geo, piv));
    std::vector<Field> y(K + 1, Field(pb.geo, piv));
    std::vector<Field> w(K + 2, Field(pb.geo, piv));

    auto forward = [&](const std::vector<Field>& uu, std::vector<Field>& yy) {
        yy[0] = pb.initial;
        for (int k = 1; k <= K; ++k) {
            yy[k] = yy[k - 1];
            yy[k].axpy(-tau, gamma_total(pb, tau * k, betas[k], yy[k - 1]));
            yy[k].axpy(tau, gs[k]);
            yy[k].axpy(-tau, uu[k]);
        }
    };
    auto objective = [&](const std::vector<Field>& uu, const std::vector<Field>& yy) {
        double F = 0.0;
        for (int k = 1; k <= K; ++k) {
            double t = tau * k;
            F += tau * (composed_energy(pb, t, betas[k], yy[k]) + composed_conj_value(pb, t, betas[k], uu[k]) -
                        inner(uu[k], yy[k], piv));
        }
        return F;
    };

    forward(u, y);
    double F = objective(u, y);
    EulerLagrangeResult res;
    res.residuals.push_back(F);

    // backward adjoint pass feeding the gradient of F in u
    auto gradient = [&](const std::vector<Field>& uu, const std::vector<Field>& yy) {
        w[K + 1] = Field(pb.geo, piv);
        for (int m = K; m >= 1; --m) {
            double tm = tau * m;
            Field a = composed_grad(pb, tm, betas[m], yy[m]) - uu[m];
            w[m] = w[m + 1];
            if (m + 1 <= K) w[m].axpy(tau, gamma_total(pb, tau * (m + 1), betas[m + 1], w[m + 1]));
            w[m].axpy(tau, a);
        }
        std::vector<Field> grad(K + 1, Field(pb.geo, piv));
        for (int m = 1; m <= K; ++m) {
            double tm = tau * m;
            grad[m] = composed_conj_grad(pb, tm, betas[m], uu[m]) - yy[m] - w[m];
            grad[m] *= tau;
            if (project) {
                double mm = grad[m].mean();
                for (double& x : grad[m].v) x -= mm;
            }
        }
        return grad;
    };
    auto dot_all = [&](const std::vector<Field>& a, const std::vector<Field>& b) {
        double s = 0.0;
        for (int m = 1; m <= K; ++m) s += inner(a[m], b[m], piv);
        return s;
    };

    // Polak-Ribiere conjugate directions with a parabolic, strictly monotone
    // line search: on the quadratic problems this reduces to linear CG
    std::vector<Field> g = gradient(u, y);
    std::vector<Field> d = g;
    for (int m = 1; m <= K; ++m) d[m] *= -1.0;
    double step = rho;
    std::vector<Field> ut(K + 1, Field(pb.geo, piv));
    std::vector<Field> yt(K + 1, Field(pb.geo, piv));
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        double gg = dot_all(g, g);
        if (gg <= 1e-28 * (1.0 + std::abs(F))) {
            res.residuals.push_back(F);
            continue;
        }
        double slope = dot_all(g, d);
        if (slope >= 0.0) {  // stale direction: restart on steepest descent
            d = g;
            for (int m = 1; m <= K; ++m) d[m] *= -1.0;
            slope = -gg;
        }
        auto value_at = [&](double s) {
            for (int m = 0; m <= K; ++m) {
                ut[m] = u[m];
                if (m >= 1) ut[m].axpy(s, d[m]);
            }
            forward(ut, yt);
            return objective(ut, yt);
        };
        double s = step, Fs = value_at(s);
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            double denom = Fs - F - slope * s;
            if (denom > 0.0) {
                double sq = -0.5 * slope * s * s / denom;  // parabolic minimizer
                if (sq > 0.0 && sq < 10.0 * s) {
                    double Fq = value_at(sq);
                    if (Fq < Fs) {
                        s = sq;
                        Fs = Fq;
                    }
                }
            }
            if (Fs <= F + 1e-14 * (1.0 + std::abs(F))) {
                accepted = true;
                break;
            }
            s *= 0.25;
            Fs = value_at(s);
        }
        if (!accepted) {
            res.residuals.push_back(F);
            continue;
        }
        for (int m = 0; m <= K; ++m) {
            u[m].axpy(s, d[m]);
        }
        forward(u, y);
        F = std::min(Fs, F);
        step = std::min(std::max(2.0 * s, 1e-6), 1e6);
        std::vector<Field> gn = gradient(u, y);
        double beta = 0.0;
        for (int m = 1; m <= K; ++m) {
            Field diff = gn[m] - g[m];
            beta += inner(gn[m], diff, piv);
        }
        beta = std::max(0.0, beta / gg);
        for (int m = 1; m <= K; ++m) {
            d[m] *= beta;
            d[m].axpy(-1.0, gn[m]);
        }
        g.swap(gn);
        res.residuals.push_back(F);
        if (res.residuals.size() >= 2 && F > 10.0 * res.residuals.front() + 1e-12)
            throw NumericError("gradient iteration diverged", F);
    }

    res.traj.T = pb.T;
    res.traj.K = K;
    res.traj.y = std::move(y);
    res.traj.u = std::move(u);
    res.traj.g = std::move(gs);
    res.traj.diag.assign(K + 1, StepDiagnostics{});
    res.q.assign(w.begin(), w.begin() + K + 1);
    return res;
}

// --------------------------------------------------------------- export

/// Binary dump per field plus an index CSV (step, time, l2 norm, energy,
/// prox iterations).
inline void save_trajectory(const Trajectory& tr, const Problem& pb, const NoisePath& path, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream idx(dir + "/index.csv");
    if (!idx) throw UsageError("cannot open " + dir + "/index.csv");
    idx.precision(17);
    idx << "step,time,l2,energy,prox_iters\n";
    for (std::size_t k = 0; k < tr.y.size(); ++k) {
        double t = tr.T * double(k) / double(tr.K);
        char name[64];
        std::snprintf(name, sizeof(name), "/y_%05zu.stfd", k);
        save_field_binary(tr.y[k], dir + name);
        if (!tr.X.empty()) {
            std::snprintf(name, sizeof(name), "/X_%05zu.stfd", k);
            save_field_binary(tr.X[k], dir + name);
        }
        if (k >= 1) {
            std::snprintf(name, sizeof(name), "/u_%05zu.stfd", k);
            save_field_binary(tr.u[k], dir + name);
        }
        idx << k << "," << t << "," << norms(tr.y[k]).l2 << "," << composed_energy(pb, t, path.eval(t), tr.y[k]) << ","
            << (k < tr.diag.size() ? tr.diag[k].newton_iters : 0) << "\n";
    }
}

}  // namespace stpde

#endif
