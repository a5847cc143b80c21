#ifndef STPDE_EXPERIMENTS_HPP
#define STPDE_EXPERIMENTS_HPP

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "stpde/certify.hpp"
#include "stpde/solver.hpp"

namespace stpde {

using json = nlohmann::json;

/// Parsed experiment configuration. `raw` keeps the original document for
/// echoing into reports.
struct ExperimentConfig {
    std::string kind;  // wong_zakai | stability | diffusion | porous_media | neumann_thermostat | deterministic_path
    std::string output_dir;
    json raw;

    json problem_block;
    std::uint64_t seed = 1;
    int M = 4096;
    std::vector<int> levels;
    std::string path_csv;

    int K = 128;
    SolveOptions opt;
    int gamma_quad = 8;
    Interp interp = Interp::Cubic;

    std::string family = "potential_quadratic";
    std::vector<int> members;
    std::vector<double> probes{0.0, 0.05, -0.05, 0.1, -0.1};

    double dict_slack = 0.10;
    double strong_ratio_min = 2.0;
    double conjugate_tol = 1e-3;
    double defect_max = 1e-3;
    double surrogate_max = 1e6;
};

namespace detail {

inline json require_key(const json& j, const std::string& key, const std::string& ctx) {
    if (!j.contains(key)) throw UsageError("config: missing \"" + key + "\" in " + ctx);
    return j.at(key);
}

inline GeometryPtr make_geometry(const json& g) {
    std::string kind = require_key(g, "kind", "geometry");
    if (kind == "torus1d") return Geometry::torus1d(g.value("length", 1.0), require_key(g, "cells", "geometry"));
    if (kind == "interval_dirichlet")
        return Geometry::interval_dirichlet(g.value("a", 0.0), g.value("b", 1.0), require_key(g, "cells", "geometry"));
    if (kind == "interval_neumann")
        return Geometry::interval_neumann(g.value("a", 0.0), g.value("b", 1.0), require_key(g, "cells", "geometry"));
    if (kind == "rect2d_periodic" || kind == "rect2d_dirichlet")
        return Geometry::rect2d(g.value("Lx", 1.0), g.value("Ly", 1.0), require_key(g, "cells_x", "geometry"),
                                require_key(g, "cells_y", "geometry"),
                                kind == "rect2d_periodic" ? Boundary::Periodic : Boundary::Dirichlet);
    throw UsageError("config: unknown geometry kind \"" + kind + "\"");
}

inline ConvexPotential make_potential(const json& p) {
    std::string kind = require_key(p, "kind", "potential");
    if (kind == "quadratic") return ConvexPotential::quadratic(p.value("c", 1.0));
    if (kind == "power") return ConvexPotential::power(require_key(p, "p", "potential"), p.value("alpha", 1.0));
    throw UsageError("config: unknown potential kind \"" + kind + "\"");
}

inline EnergyForm make_energy(const json& e) {
    std::string form = require_key(e, "form", "energy");
    if (form == "gradient_type") return EnergyForm::gradient_type(make_potential(require_key(e, "potential", "energy")));
    if (form == "pointwise") return EnergyForm::pointwise(make_potential(require_key(e, "potential", "energy")));
    if (form == "neumann_thermostat")
        return EnergyForm::neumann_thermostat(
            e.value("kappa", 1.0),
            ConvexPotential::thermostat(double(e.value("alpha1", 1.0)), double(e.value("alpha2", 1.0))));
    throw UsageError("config: unknown energy form \"" + form + "\"");
}

inline TransportPtr make_transport(const json& t, double scale) {
    std::string kind = t.is_null() ? "none" : t.value("kind", "none");
    if (kind == "none") return TransportField::zero();
    double rate = t.value("rate", 0.0);
    if (kind == "constant1d") {
        double c = double(require_key(t, "c", "transport")) * scale;
        if (rate == 0.0) return TransportField::constant1d(c);
        return TransportField::constant1d([c, rate](double s) { return c * (1.0 + rate * s); },
                                          [c, rate](double) { return c * rate; });
    }
    if (kind == "stream2d") {
        double amp = double(require_key(t, "amp", "transport")) * scale;
        double Lx = t.value("Lx", 1.0), Ly = t.value("Ly", 1.0);
        int kx = t.value("kx", 1), ky = t.value("ky", 1);
        if (rate == 0.0) return TransportField::stream2d(Lx, Ly, kx, ky, amp);
        return TransportField::stream2d(
            Lx, Ly, kx, ky, [amp, rate](double s) { return amp * (1.0 + rate * s); },
            [amp, rate](double) { return amp * rate; });
    }
    if (kind == "rotation2d") {
        double om = double(require_key(t, "omega", "transport")) * scale;
        double cx = t.value("cx", 0.5), cy = t.value("cy", 0.5);
        if (rate == 0.0) return TransportField::rotation2d(om, cx, cy);
        return TransportField::rotation2d([om, rate](double s) { return om * (1.0 + rate * s); },
                                          [om, rate](double) { return om * rate; }, cx, cy);
    }
    throw UsageError("config: unknown transport kind \"" + kind + "\"");
}

inline Field make_profile(const json& p, GeometryPtr geo, Space space, double tshift = 0.0) {
    std::string kind = p.is_null() ? "none" : p.value("kind", "none");
    Field f(geo, space);
    const Geometry& g = *geo;
    if (kind == "none" || kind == "zero") return f;
    double amp = p.value("amplitude", 1.0);
    (void)tshift;
    if (kind == "mode") {
        int mx = p.value("mode", 1);
        int my = p.value("mode_y", 0);
        int ny = g.dim() == 2 ? g.nodes(1) : 1;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < g.nodes(0); ++i) {
                double x = g.coord(0, i);
                double val;
                if (g.boundary() == Boundary::Dirichlet)
                    val = std::sin(mx * M_PI * (x - g.origin(0)) / g.length(0));
                else if (g.boundary() == Boundary::Neumann)
                    val = std::cos(mx * M_PI * (x - g.origin(0)) / g.length(0));
                else
                    val = std::sin(2.0 * mx * M_PI * (x - g.origin(0)) / g.length(0));
                if (g.dim() == 2 && my > 0) {
                    double y = g.coord(1, j);
                    val *= g.boundary() == Boundary::Dirichlet ? std::sin(my * M_PI * y / g.length(1))
                                                               : std::sin(2.0 * my * M_PI * y / g.length(1));
                }
                f.v[g.index(i, j)] = amp * val;
            }
    } else if (kind == "bump") {
        double x0 = p.value("center", 0.5), s = p.value("width", 0.1);
        int ny = g.dim() == 2 ? g.nodes(1) : 1;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < g.nodes(0); ++i) {
                double x = g.coord(0, i);
                double val = std::exp(-std::pow((x - x0) / s, 2));
                if (g.dim() == 2) {
                    double y0 = p.value("center_y", 0.5);
                    val *= std::exp(-std::pow((g.coord(1, j) - y0) / s, 2));
                }
                f.v[g.index(i, j)] = amp * val;
            }
    } else {
        throw UsageError("config: unknown profile kind \"" + kind + "\"");
    }
    if (space == Space::Hminus1 && g.periodic()) {
        double m = f.mean();
        for (double& x : f.v) x -= m;
    }
    return f;
}

}  // namespace detail

/// Build the Problem from a config problem block. `member_n` = 0 builds the
/// limit problem; n >= 1 builds the n-th member of the declared stability
/// family.
inline Problem build_problem(const ExperimentConfig& cfg, int member_n = 0, GeometryPtr share_geo = nullptr) {
    const json& pbk = cfg.problem_block;
    Problem pb;
    // reuse the caller's geometry when runs must be comparable field-wise
    pb.geo = share_geo ? share_geo : detail::make_geometry(detail::require_key(pbk, "geometry", "problem"));
    json energy = detail::require_key(pbk, "energy", "problem");
    double eps = member_n > 0 ? 1.0 / member_n : 0.0;
    if (member_n > 0 && cfg.family == "exponent") {
        if (energy.at("potential").value("kind", "") != "power")
            throw UsageError("exponent family requires a power potential");
        energy["potential"]["p"] = double(energy["potential"]["p"]) + eps;
    }
    pb.energy = detail::make_energy(energy);
    if (member_n > 0 && cfg.family == "potential_quadratic") {
        // j_n = j + (1/n) r^2/2, converging to j as n grows
        ConvexPotential base = pb.energy.j;
        GrowthCertificate gc = base.growth();
        gc.alpha2 += eps;
        gc.gamma2 += eps;
        ConvexPotential shifted = ConvexPotential::custom(
            [base, eps](double t, double r) { return base.eval(t, r) + 0.5 * eps * r * r; },
            [base, eps](double t, double r) { return base.slope(t, r) + eps * r; }, gc);
        if (pb.energy.kind == EnergyForm::Kind::Pointwise)
            pb.energy = EnergyForm::pointwise(shifted);
        else
            pb.energy = EnergyForm::gradient_type(shifted);
    }
    double tscale = (member_n > 0 && cfg.family == "transport") ? 1.0 + eps : 1.0;
    if (pbk.contains("transport")) {
        const json& tr = pbk.at("transport");
        std::vector<json> chans = tr.is_array() ? std::vector<json>(tr.begin(), tr.end()) : std::vector<json>{tr};
        for (const json& ch : chans) {
            TransportPtr tf = detail::make_transport(ch, tscale);
            auto form = pb.energy.pivot() == Space::Hminus1 ? NoiseOperator::Form::PorousMedia
                                                            : NoiseOperator::Form::Diffusion;
            pb.ops.emplace_back(form, tf, pb.geo, cfg.interp, cfg.gamma_quad);
        }
    }
    pb.T = detail::require_key(pbk, "T", "problem");
    pb.initial = detail::make_profile(pbk.contains("initial") ? pbk.at("initial") : json(), pb.geo, pb.energy.pivot());
    if (pbk.contains("forcing") && !pbk.at("forcing").is_null() &&
        pbk.at("forcing").value("kind", "none") != "none") {
        json fo = pbk.at("forcing");
        double omega = fo.value("omega", 0.0);
        double fscale = (member_n > 0 && cfg.family == "forcing") ? 1.0 + eps : 1.0;
        GeometryPtr geo = pb.geo;
        Space piv = pb.energy.pivot();
        pb.forcing = [fo, omega, fscale, geo, piv](double t) {
            Field f = detail::make_profile(fo, geo, piv);
            f *= fscale * std::cos(omega * t);
            return f;
        };
    }
    pb.validate();
    return pb;
}

inline ExperimentConfig parse_config(const json& doc) {
    ExperimentConfig cfg;
    cfg.raw = doc;
    cfg.kind = detail::require_key(doc, "experiment", "top level");
    static const std::vector<std::string> kinds{"wong_zakai",        "stability",          "diffusion",
                                                "porous_media",      "neumann_thermostat", "deterministic_path"};
    if (std::find(kinds.begin(), kinds.end(), cfg.kind) == kinds.end())
        throw UsageError("config: unknown experiment kind \"" + cfg.kind + "\"");
    cfg.output_dir = doc.value("output_dir", "out/" + cfg.kind);
    cfg.problem_block = detail::require_key(doc, "problem", "top level");

    if (doc.contains("noise")) {
        const json& n = doc.at("noise");
        cfg.seed = n.value("seed", std::uint64_t(1));
        cfg.M = n.value("M", 4096);
        cfg.path_csv = n.value("path_csv", "");
        if (n.contains("levels")) cfg.levels = n.at("levels").get<std::vector<int>>();
    }
    if (doc.contains("solver")) {
        const json& s = doc.at("solver");
        cfg.K = s.value("K", 128);
        cfg.opt.tol = s.value("tol", 1e-10);
        cfg.gamma_quad = s.value("gamma_quadrature", 8);
        std::string ik = s.value("interpolation", "cubic");
        if (ik == "linear")
            cfg.interp = Interp::Linear;
        else if (ik == "cubic")
            cfg.interp = Interp::Cubic;
        else if (ik == "cubic_clamped")
            cfg.interp = Interp::CubicClamped;
        else
            throw UsageError("config: unknown interpolation kind \"" + ik + "\"");
    }
    if (doc.contains("stability")) {
        const json& s = doc.at("stability");
        cfg.family = s.value("family", "potential_quadratic");
        static const std::vector<std::string> fams{"potential_quadratic", "exponent", "forcing", "transport"};
        if (std::find(fams.begin(), fams.end(), cfg.family) == fams.end())
            throw UsageError("config: unknown stability family \"" + cfg.family + "\"");
        if (s.contains("members")) cfg.members = s.at("members").get<std::vector<int>>();
        if (s.contains("probes")) cfg.probes = s.at("probes").get<std::vector<double>>();
    }
    if (doc.contains("gates")) {
        const json& g = doc.at("gates");
        cfg.dict_slack = g.value("dict_slack", cfg.dict_slack);
        cfg.strong_ratio_min = g.value("strong_ratio_min", cfg.strong_ratio_min);
        cfg.conjugate_tol = g.value("conjugate_tol", cfg.conjugate_tol);
        cfg.defect_max = g.value("defect_max", cfg.defect_max);
        cfg.surrogate_max = g.value("surrogate_max", cfg.surrogate_max);
    }

    // structural validation
    for (std::size_t i = 1; i < cfg.levels.size(); ++i)
        if (cfg.levels[i] <= cfg.levels[i - 1]) throw UsageError("config: levels must be strictly increasing");
    if (!cfg.levels.empty() && cfg.K < cfg.levels.back())
        throw UsageError("config: solver K must be >= the largest level");
    for (std::size_t i = 1; i < cfg.members.size(); ++i)
        if (cfg.members[i] <= cfg.members[i - 1]) throw UsageError("config: family members must be strictly increasing");
    build_problem(cfg);  // forces full problem-block validation
    return cfg;
}

// ------------------------------------------------------------- distances

/// Fixed dictionary of 8 smooth test fields, unit L2 norm. Weak convergence
/// is measured through duality pairings against these.
inline std::vector<Field> weak_dictionary(GeometryPtr geo, Space space) {
    const Geometry& g = *geo;
    std::vector<Field> dict;
    auto push = [&](auto&& fn) {
        Field f(geo, space);
        int ny = g.dim() == 2 ? g.nodes(1) : 1;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < g.nodes(0); ++i)
                f.v[g.index(i, j)] = fn(g.coord(0, i), g.dim() == 2 ? g.coord(1, j) : 0.0);
        if (space == Space::Hminus1 && g.periodic()) {
            double m = f.mean();
            for (double& x : f.v) x -= m;
        }
        double n2 = 0.0;
        for (double x : f.v) n2 += x * x;
        n2 = std::sqrt(n2 * g.cell_volume());
        if (n2 > 1e-300) f *= 1.0 / n2;
        dict.push_back(std::move(f));
    };
    double L = g.length(0), a = g.origin(0);
    if (g.dim() == 1) {
        if (g.boundary() == Boundary::Dirichlet) {
            for (int m = 1; m <= 8; ++m) push([&, m](double x, double) { return std::sin(m * M_PI * (x - a) / L); });
        } else if (g.boundary() == Boundary::Neumann) {
            for (int m = 1; m <= 8; ++m) push([&, m](double x, double) { return std::cos((m - 1) * M_PI * (x - a) / L); });
        } else {
            for (int m = 1; m <= 4; ++m) {
                push([&, m](double x, double) { return std::sin(2 * m * M_PI * (x - a) / L); });
                push([&, m](double x, double) { return std::cos(2 * m * M_PI * (x - a) / L); });
            }
        }
    } else {
        double Ly = g.length(1);
        int count = 0;
        for (int mx = 1; mx <= 3 && count < 8; ++mx)
            for (int my = 1; my <= 3 && count < 8; ++my) {
                if (g.boundary() == Boundary::Dirichlet)
                    push([&, mx, my](double x, double y) {
                        return std::sin(mx * M_PI * x / L) * std::sin(my * M_PI * y / Ly);
                    });
                else
                    push([&, mx, my](double x, double y) {
                        return std::sin(2 * mx * M_PI * x / L) * std::cos(2 * my * M_PI * y / Ly);
                    });
                ++count;
            }
    }
    return dict;
}

/// |integral_0^T <A(t) - B(t), chi_m> dt| per dictionary member, trapezoid in
/// time over the shared mesh.
inline std::vector<double> weak_distances(const std::vector<Field>& A, const std::vector<Field>& B, double T,
                                          const std::vector<Field>& dict, Space space) {
    if (A.size() != B.size()) throw UsageError("weak_distances: trajectories have different lengths");
    std::size_t K = A.size() - 1;
    double tau = T / double(K);
    std::vector<double> out(dict.size(), 0.0);
    for (std::size_t m = 0; m < dict.size(); ++m) {
        double acc = 0.0;
        for (std::size_t k = 0; k <= K; ++k) {
            double wgt = (k == 0 || k == K) ? 0.5 : 1.0;
            Field d = A[k] - B[k];
            acc += wgt * tau * inner(d, dict[m], space);
        }
        out[m] = std::abs(acc);
    }
    return out;
}

/// L2-in-time pivot-norm distance (a strong metric; diagnostic only, the
/// guarantees are for the weak dictionary).
/// Trapezoid-in-time duality pairings of the transformed state against the
/// dictionary, evaluated in adjoint form <y(t), e^{-bB} chi>. Equal to
/// pairing X(t) = e^{bB} y(t) directly in the continuum limit, but here the
/// interpolation error of the group rides on the fixed smooth dictionary
/// member, varies smoothly with the shift, and cancels between two runs
/// instead of leaving an h^3 noise floor under the weak distances.
inline std::vector<double> weak_pairings(const Problem& pb, const std::vector<Field>& y, const NoisePath& path,
                                         double T, const std::vector<Field>& dict) {
    std::size_t K = y.size() - 1;
    double tau = T / double(K);
    Space piv = pb.pivot();
    std::vector<double> out(dict.size(), 0.0);
    for (std::size_t k = 0; k <= K; ++k) {
        double t = tau * k;
        std::vector<double> betas = path.eval(t);
        double wgt = (k == 0 || k == K) ? 0.5 : 1.0;
        for (std::size_t m = 0; m < dict.size(); ++m) {
            Field chi = group_all(pb, t, betas, -1.0, dict[m]);
            out[m] += wgt * tau * inner(y[k], chi, piv);
        }
    }
    return out;
}

inline double strong_distance(const std::vector<Field>& A, const std::vector<Field>& B, double T, Space space) {
    if (A.size() != B.size()) throw UsageError("strong_distance: trajectories have different lengths");
    std::size_t K = A.size() - 1;
    double tau = T / double(K);
    double acc = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
        double wgt = (k == 0 || k == K) ? 0.5 : 1.0;
        Field d = A[k] - B[k];
        acc += wgt * tau * inner(d, d, space);
    }
    return std::sqrt(std::max(acc, 0.0));
}

// --------------------------------------------------------------- reports

inline json certificate_json(const CertificateReport& c) {
    json j;
    j["primal"] = c.primal;
    j["dual"] = c.dual;
    j["defect"] = c.defect;
    j["max_gap"] = c.max_gap;
    j["min_gap"] = c.min_gap;
    j["energy_residual"] = c.energy_residual;
    j["K"] = c.K;
    j["available"] = c.available;
    if (!c.note.empty()) j["note"] = c.note;
    return j;
}

struct ExperimentResult {
    json report;
    bool passed = false;
};

namespace detail {

inline int thread_budget() {
    if (const char* env = std::getenv("STPDE_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? int(hw) : 1;
}

// discrete surrogates of the a-priori regularity bounds: sup-in-time pivot
// norm and the p1-integrated V-seminorm
inline json regularity_surrogates(const Trajectory& tr, const Problem& pb) {
    double p1 = pb.energy.kind == EnergyForm::Kind::NeumannThermostat ? 2.0 : pb.energy.j.growth().p1;
    double sup = 0.0, integ = 0.0;
    double tau = tr.tau();
    for (int k = 0; k <= tr.K; ++k) {
        sup = std::max(sup, norm(tr.y[k], pb.pivot()));
        double vn;
        if (pb.energy.kind == EnergyForm::Kind::Pointwise)
            vn = norms(tr.y[k], p1).lp;
        else {
            Norms nn = norms(tr.y[k], p1);
            vn = pb.energy.kind == EnergyForm::Kind::GradientType ? nn.h1_seminorm
                                                                  : std::sqrt(nn.l2 * nn.l2 + nn.h1_seminorm * nn.h1_seminorm);
        }
        integ += tau * std::pow(vn, p1);
    }
    json j;
    j["sup_pivot_norm"] = sup;
    j["v_norm_p1_integral"] = integ;
    j["p1"] = p1;
    return j;
}

inline void write_json(const json& j, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw UsageError("cannot open " + path + " for writing");
    f << j.dump(2) << "\n";
}

inline bool gate(json& gates, const std::string& name, double value, double threshold, bool pass) {
    gates[name] = {{"pass", pass}, {"value", value}, {"threshold", threshold}};
    return pass;
}

// non-increase across levels with multiplicative slack
inline bool monotone_with_slack(const std::vector<double>& v, double slack) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[i - 1] * (1.0 + slack) + 1e-14) return false;
    return true;
}

}  // namespace detail

/// Wong-Zakai driver: reference solve with the raw path, then one solve per
/// piecewise-linear level; distances measured on the transformed states X.
inline ExperimentResult run_wong_zakai(const ExperimentConfig& cfg) {
    if (cfg.levels.empty()) throw UsageError("wong_zakai: noise.levels required");
    Problem pb = build_problem(cfg);
    int channels = std::max<std::size_t>(pb.ops.size(), 1);
    NoisePath path = NoisePath::sample_brownian(cfg.seed, pb.T, cfg.M, channels);

    Trajectory ref = solve_spde(pb, path, cfg.K, cfg.opt);
    CertificateReport ref_cert = certify(ref, pb, path);

    struct LevelRun {
        int level;
        Trajectory traj;
        CertificateReport cert;
        NoisePath path;
    };
    auto solve_level = [&](int n) {
        NoisePath approx = path.wong_zakai(n);
        Trajectory tr = solve_spde(pb, approx, cfg.K, cfg.opt);
        CertificateReport cert = certify(tr, pb, approx);
        return LevelRun{n, std::move(tr), std::move(cert), std::move(approx)};
    };
    std::vector<LevelRun> runs;
    if (detail::thread_budget() > 1) {
        std::vector<std::future<LevelRun>> futs;
        for (int n : cfg.levels) futs.push_back(std::async(std::launch::async, solve_level, n));
        for (auto& f : futs) runs.push_back(f.get());
    } else {
        for (int n : cfg.levels) runs.push_back(solve_level(n));
    }

    std::vector<Field> dict = weak_dictionary(pb.geo, pb.pivot());
    std::vector<double> ref_pairings = weak_pairings(pb, ref.y, path, pb.T, dict);
    json levels = json::array();
    std::vector<std::vector<double>> dists;
    std::vector<double> strongs;
    for (const LevelRun& r : runs) {
        std::vector<double> wd = weak_pairings(pb, r.traj.y, r.path, pb.T, dict);
        for (std::size_t m = 0; m < wd.size(); ++m) wd[m] = std::abs(wd[m] - ref_pairings[m]);
        double sd = strong_distance(r.traj.X, ref.X, pb.T, pb.pivot());
        dists.push_back(wd);
        strongs.push_back(sd);
        json row;
        row["level"] = r.level;
        row["strong"] = sd;
        row["dict"] = wd;
        row["path_sup_distance"] = r.path.sup_distance(path);
        row["certificate"] = certificate_json(r.cert);
        levels.push_back(row);
    }

    json gates;
    bool pass = true;
    for (std::size_t m = 0; m < dict.size(); ++m) {
        std::vector<double> col;
        for (const auto& wd : dists) col.push_back(wd[m]);
        pass &= detail::gate(gates, "dict_" + std::to_string(m) + "_nonincreasing",
                             col.empty() ? 0.0 : col.back(), cfg.dict_slack,
                             detail::monotone_with_slack(col, cfg.dict_slack));
    }
    // strongs.back() can vanish (zero transport); keep the ratio finite so
    // the report stays valid JSON
    double ratio = strongs.back() > 1e-300 ? strongs.front() / strongs.back() : 1e300;
    if (strongs.front() <= 1e-300 && strongs.back() <= 1e-300) ratio = 1e300;
    pass &= detail::gate(gates, "strong_ratio", ratio, cfg.strong_ratio_min, ratio >= cfg.strong_ratio_min);

    ExperimentResult res;
    res.report["experiment"] = cfg.kind;
    res.report["config"] = cfg.raw;
    res.report["reference"] = {{"certificate", certificate_json(ref_cert)}};
    res.report["metrics"] = {{"levels", levels}};
    res.report["gates"] = gates;
    res.report["passed"] = pass;
    res.passed = pass;
    return res;
}

/// Structural-stability driver: family members solved against the same path;
/// distances to the limit run plus energy/conjugate probe samples.
inline ExperimentResult run_stability(const ExperimentConfig& cfg) {
    if (cfg.members.empty()) throw UsageError("stability: stability.members required");
    Problem limit = build_problem(cfg);
    int channels = std::max<std::size_t>(limit.ops.size(), 1);
    NoisePath raw = NoisePath::sample_brownian(cfg.seed, limit.T, cfg.M, channels);
    // members are solved with a fixed smooth approximant so that every run
    // sees identical driving data
    NoisePath path = raw.wong_zakai(std::min<std::size_t>(cfg.K, raw.mesh_count()));

    Trajectory ref = solve_spde(limit, path, cfg.K, cfg.opt);
    CertificateReport ref_cert = certify(ref, limit, path);

    // probe field for the psi / psi* samples
    Field zprobe(limit.geo, limit.pivot());
    {
        const Geometry& g = *limit.geo;
        int ny = g.dim() == 2 ? g.nodes(1) : 1;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < g.nodes(0); ++i) {
                double x = (g.coord(0, i) - g.origin(0)) / g.length(0);
                zprobe.v[g.index(i, j)] = g.boundary() == Boundary::Dirichlet ? std::sin(M_PI * x)
                                                                              : std::sin(2 * M_PI * x);
            }
        if (limit.pivot() == Space::Hminus1 && g.periodic()) {
            double m = zprobe.mean();
            for (double& x : zprobe.v) x -= m;
        }
    }

    struct MemberRun {
        int n;
        Trajectory traj;
        CertificateReport cert;
        std::vector<double> psi_err, conj_err;
    };
    auto solve_member = [&](int n) {
        Problem pbn = build_problem(cfg, n, limit.geo);
        Trajectory tr = solve_spde(pbn, path, cfg.K, cfg.opt);
        MemberRun r;
        r.n = n;
        r.traj = std::move(tr);
        r.cert = certify(r.traj, pbn, path);
        for (double amp : cfg.probes) {
            Field z = zprobe;
            z *= amp;
            r.psi_err.push_back(std::abs(psi_value(pbn, 0.0, z) - psi_value(limit, 0.0, z)));
            r.conj_err.push_back(std::abs(psi_conj_value(pbn, 0.0, z) - psi_conj_value(limit, 0.0, z)));
        }
        return r;
    };
    std::vector<MemberRun> runs;
    if (detail::thread_budget() > 1) {
        std::vector<std::future<MemberRun>> futs;
        for (int n : cfg.members) futs.push_back(std::async(std::launch::async, solve_member, n));
        for (auto& f : futs) runs.push_back(f.get());
    } else {
        for (int n : cfg.members) runs.push_back(solve_member(n));
    }

    std::vector<Field> dict = weak_dictionary(limit.geo, limit.pivot());
    json members = json::array();
    std::vector<std::vector<double>> dists;
    double worst_conj = 0.0;
    for (const MemberRun& r : runs) {
        std::vector<double> wd = weak_distances(r.traj.X, ref.X, limit.T, dict, limit.pivot());
        dists.push_back(wd);
        json row;
        row["n"] = r.n;
        row["dict"] = wd;
        row["strong"] = strong_distance(r.traj.X, ref.X, limit.T, limit.pivot());
        row["psi_probe_errors"] = r.psi_err;
        row["conjugate_probe_errors"] = r.conj_err;
        row["certificate"] = certificate_json(r.cert);
        members.push_back(row);
    }
    if (!runs.empty())
        for (double e : runs.back().conj_err) worst_conj = std::max(worst_conj, e);

    json gates;
    bool pass = true;
    for (std::size_t m = 0; m < dict.size(); ++m) {
        std::vector<double> col;
        for (const auto& wd : dists) col.push_back(wd[m]);
        pass &= detail::gate(gates, "dict_" + std::to_string(m) + "_nonincreasing",
                             col.empty() ? 0.0 : col.back(), cfg.dict_slack,
                             detail::monotone_with_slack(col, cfg.dict_slack));
    }
    pass &= detail::gate(gates, "conjugate_probes", worst_conj, cfg.conjugate_tol, worst_conj <= cfg.conjugate_tol);

    ExperimentResult res;
    res.report["experiment"] = cfg.kind;
    res.report["config"] = cfg.raw;
    res.report["reference"] = {{"certificate", certificate_json(ref_cert)}};
    res.report["metrics"] = {{"members", members}};
    res.report["gates"] = gates;
    res.report["passed"] = pass;
    res.passed = pass;
    return res;
}

/// Single-problem drivers (the worked examples): full solve, certificate,
/// regularity surrogates, and for the thermostat the boundary-flux range.
inline ExperimentResult run_example(const ExperimentConfig& cfg) {
    Problem pb = build_problem(cfg);
    int channels = std::max<std::size_t>(pb.ops.size(), 1);
    NoisePath path = cfg.path_csv.empty() ? NoisePath::sample_brownian(cfg.seed, pb.T, cfg.M, channels)
                                          : NoisePath::load_csv(cfg.path_csv);
    Trajectory tr = solve_spde(pb, path, cfg.K, cfg.opt);
    CertificateReport cert = certify(tr, pb, path);
    json surro = detail::regularity_surrogates(tr, pb);

    json gates;
    bool pass = true;
    double defect = std::abs(cert.defect);
    pass &= detail::gate(gates, "certificate_defect", defect, cfg.defect_max,
                         cert.available && defect <= cfg.defect_max);
    double sup = surro["sup_pivot_norm"];
    double vint = surro["v_norm_p1_integral"];
    pass &= detail::gate(gates, "sup_norm_bounded", sup, cfg.surrogate_max, sup <= cfg.surrogate_max);
    pass &= detail::gate(gates, "v_integral_bounded", vint, cfg.surrogate_max, vint <= cfg.surrogate_max);

    json metrics;
    metrics["surrogates"] = surro;
    if (pb.energy.kind == EnergyForm::Kind::NeumannThermostat) {
        // boundary flux zeta_k = kappa d + h u at each boundary node must
        // stay inside the relay interval [-alpha2, alpha1]
        const Geometry& g = *pb.geo;
        int n = g.nodes(0);
        double h = g.spacing(0);
        double worst = 0.0;
        std::vector<double> flux0, flux1;
        double tau = tr.tau();
        for (int k = 1; k <= tr.K; ++k) {
            double t = tau * k;
            for (int side = 0; side < 2; ++side) {
                int idx = side == 0 ? 0 : n - 1;
                int nb = side == 0 ? 1 : n - 2;
                double d = (tr.y[k].v[nb] - tr.y[k].v[idx]) / h;
                double zeta = pb.energy.kappa * d + h * tr.u[k].v[idx];
                (side == 0 ? flux0 : flux1).push_back(zeta);
                Interval iv = pb.energy.j0.subgradient(t, 0.0);  // full relay range
                double excess = std::max({iv.lo - zeta, zeta - iv.hi, 0.0});
                worst = std::max(worst, excess);
            }
        }
        metrics["boundary_flux_left"] = flux0;
        metrics["boundary_flux_right"] = flux1;
        pass &= detail::gate(gates, "flux_in_relay_range", worst, 1e-7, worst <= 1e-7);
    }

    ExperimentResult res;
    res.report["experiment"] = cfg.kind;
    res.report["config"] = cfg.raw;
    res.report["certificate"] = certificate_json(cert);
    res.report["metrics"] = metrics;
    res.report["gates"] = gates;
    res.report["passed"] = pass;
    res.passed = pass;
    return res;
}

/// Deterministic-path driver: externally supplied (or tabulated) path,
/// optional piecewise-linear approximant levels.
inline ExperimentResult run_deterministic_path(const ExperimentConfig& cfg) {
    Problem pb = build_problem(cfg);
    if (cfg.path_csv.empty()) throw UsageError("deterministic_path: noise.path_csv required");
    NoisePath path = NoisePath::load_csv(cfg.path_csv);
    if (std::abs(path.horizon() - pb.T) > 1e-9 * std::max(1.0, pb.T))
        throw UsageError("deterministic_path: path horizon does not match problem T");
    Trajectory ref = solve_spde(pb, path, cfg.K, cfg.opt);
    CertificateReport cert = certify(ref, pb, path);

    json gates;
    bool pass = true;
    double defect = std::abs(cert.defect);
    pass &= detail::gate(gates, "certificate_defect", defect, cfg.defect_max,
                         cert.available && defect <= cfg.defect_max);

    json metrics;
    metrics["surrogates"] = detail::regularity_surrogates(ref, pb);
    if (!cfg.levels.empty()) {
        std::vector<Field> dict = weak_dictionary(pb.geo, pb.pivot());
        std::vector<double> ref_pairings = weak_pairings(pb, ref.y, path, pb.T, dict);
        json levels = json::array();
        std::vector<double> strongs;
        for (int n : cfg.levels) {
            NoisePath approx = path.wong_zakai(n);
            Trajectory tr = solve_spde(pb, approx, cfg.K, cfg.opt);
            double sd = strong_distance(tr.X, ref.X, pb.T, pb.pivot());
            strongs.push_back(sd);
            std::vector<double> wd = weak_pairings(pb, tr.y, approx, pb.T, dict);
            for (std::size_t m = 0; m < wd.size(); ++m) wd[m] = std::abs(wd[m] - ref_pairings[m]);
            json row;
            row["level"] = n;
            row["strong"] = sd;
            row["dict"] = wd;
            levels.push_back(row);
        }
        metrics["levels"] = levels;
        pass &= detail::gate(gates, "approximant_convergence", strongs.back(), cfg.dict_slack,
                             detail::monotone_with_slack(strongs, cfg.dict_slack));
    }

    ExperimentResult res;
    res.report["experiment"] = cfg.kind;
    res.report["config"] = cfg.raw;
    res.report["certificate"] = certificate_json(cert);
    res.report["metrics"] = metrics;
    res.report["gates"] = gates;
    res.report["passed"] = pass;
    res.passed = pass;
    return res;
}

/// Render plot-ready CSV summaries from a written report.json.
inline void render_report_csv(const std::string& dir) {
    std::ifstream f(dir + "/report.json");
    if (!f) throw UsageError("no report.json in " + dir);
    json rep = json::parse(f);
    const json& metrics = rep.at("metrics");
    auto dump_rows = [&](const json& rows, const std::string& key, const std::string& file) {
        std::ofstream os(dir + "/" + file);
        os.precision(17);
        os << key << ",strong";
        std::size_t nd = rows.empty() ? 0 : rows.front().value("dict", json::array()).size();
        for (std::size_t m = 0; m < nd; ++m) os << ",dict" << m;
        os << "\n";
        for (const json& r : rows) {
            os << r.at(key).get<double>() << "," << r.value("strong", 0.0);
            if (r.contains("dict"))
                for (const auto& d : r.at("dict")) os << "," << d.get<double>();
            os << "\n";
        }
    };
    if (metrics.contains("levels")) dump_rows(metrics.at("levels"), "level", "levels.csv");
    if (metrics.contains("members")) dump_rows(metrics.at("members"), "n", "members.csv");
    std::ofstream os(dir + "/summary.csv");
    os.precision(17);
    os << "gate,pass,value,threshold\n";
    if (rep.contains("gates"))
        for (auto& [name, g] : rep.at("gates").items())
            os << name << "," << int(g.at("pass").get<bool>()) << "," << g.value("value", 0.0) << ","
               << g.value("threshold", 0.0) << "\n";
}

/// Dispatch, write report.json (deterministic) and timing.json (excluded
/// from determinism comparisons), render CSVs.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    ExperimentResult res;
    if (cfg.kind == "wong_zakai")
        res = run_wong_zakai(cfg);
    else if (cfg.kind == "stability")
        res = run_stability(cfg);
    else if (cfg.kind == "deterministic_path")
        res = run_deterministic_path(cfg);
    else
        res = run_example(cfg);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::filesystem::create_directories(cfg.output_dir);
    detail::write_json(res.report, cfg.output_dir + "/report.json");
    detail::write_json(json{{"total_seconds", secs}, {"threads", detail::thread_budget()}},
                       cfg.output_dir + "/timing.json");
    render_report_csv(cfg.output_dir);
    return res;
}

}  // namespace stpde

#endif
