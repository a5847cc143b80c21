#ifndef STPDE_FIELD_HPP
#define STPDE_FIELD_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "stpde/util.hpp"

namespace stpde {

enum class Space { L2, Hminus1 };
enum class Boundary { Dirichlet, Periodic, Neumann };

/// Uniform discrete spatial domain in d <= 2. Dirichlet geometries store
/// interior unknowns only (node elimination), so -Laplacian is symmetric
/// positive definite and the discrete H^-1 duality is exact.
class Geometry {
public:
    enum class Kind { IntervalDirichlet, IntervalNeumann, Torus1d, Rect2d };

    static std::shared_ptr<const Geometry> interval_dirichlet(double a, double b, int n_cells) {
        check_cells(n_cells);
        auto g = std::shared_ptr<Geometry>(new Geometry);
        g->kind_ = Kind::IntervalDirichlet;
        g->dim_ = 1;
        g->a_ = {a, 0.0};
        g->len_ = {b - a, 0.0};
        g->cells_ = {n_cells, 1};
        g->nodes_ = {n_cells - 1, 1};
        g->h_ = {(b - a) / n_cells, 1.0};
        g->boundary_ = Boundary::Dirichlet;
        g->build_bases();
        return g;
    }

    static std::shared_ptr<const Geometry> interval_neumann(double a, double b, int n_cells) {
        check_cells(n_cells);
        auto g = std::shared_ptr<Geometry>(new Geometry);
        g->kind_ = Kind::IntervalNeumann;
        g->dim_ = 1;
        g->a_ = {a, 0.0};
        g->len_ = {b - a, 0.0};
        g->cells_ = {n_cells, 1};
        g->nodes_ = {n_cells + 1, 1};
        g->h_ = {(b - a) / n_cells, 1.0};
        g->boundary_ = Boundary::Neumann;
        return g;  // no spectral basis; Neumann geometries never need (-Lap)^-1
    }

    static std::shared_ptr<const Geometry> torus1d(double L, int n_cells) {
        check_cells(n_cells);
        auto g = std::shared_ptr<Geometry>(new Geometry);
        g->kind_ = Kind::Torus1d;
        g->dim_ = 1;
        g->a_ = {0.0, 0.0};
        g->len_ = {L, 0.0};
        g->cells_ = {n_cells, 1};
        g->nodes_ = {n_cells, 1};
        g->h_ = {L / n_cells, 1.0};
        g->boundary_ = Boundary::Periodic;
        g->build_bases();
        return g;
    }

    static std::shared_ptr<const Geometry> rect2d(double Lx, double Ly, int nx, int ny, Boundary bc) {
        check_cells(nx);
        check_cells(ny);
        if (bc == Boundary::Neumann) throw DomainError("rect2d: Neumann boundary not supported");
        auto g = std::shared_ptr<Geometry>(new Geometry);
        g->kind_ = Kind::Rect2d;
        g->dim_ = 2;
        g->a_ = {0.0, 0.0};
        g->len_ = {Lx, Ly};
        g->cells_ = {nx, ny};
        bool dir = bc == Boundary::Dirichlet;
        g->nodes_ = {dir ? nx - 1 : nx, dir ? ny - 1 : ny};
        g->h_ = {Lx / nx, Ly / ny};
        g->boundary_ = bc;
        g->build_bases();
        return g;
    }

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    Boundary boundary() const { return boundary_; }
    bool periodic() const { return boundary_ == Boundary::Periodic; }
    std::size_t size() const { return std::size_t(nodes_[0]) * nodes_[1]; }
    int nodes(int axis) const { return nodes_[axis]; }
    int cells(int axis) const { return cells_[axis]; }
    double spacing(int axis = 0) const { return h_[axis]; }
    double length(int axis = 0) const { return len_[axis]; }
    double origin(int axis = 0) const { return a_[axis]; }
    /// h^d volume weight of one node
    double cell_volume() const { return dim_ == 1 ? h_[0] : h_[0] * h_[1]; }

    std::size_t index(int i, int j = 0) const { return std::size_t(j) * nodes_[0] + i; }

    /// physical coordinate of node i along an axis
    double coord(int axis, int i) const {
        int off = (boundary_ == Boundary::Dirichlet) ? 1 : 0;
        return a_[axis] + h_[axis] * (i + off);
    }

    // ---- spectral data for the discrete -Laplacian ----
    // basis_[ax] is an orthonormal eigenbasis (column k = eigenvector),
    // eig_[ax][k] the matching eigenvalue of the 1-D second-difference matrix.
    const std::vector<double>& basis(int axis) const { return basis_[axis]; }
    const std::vector<double>& eigenvalues(int axis) const { return eig_[axis]; }

private:
    Geometry() = default;

    static void check_cells(int n) {
        if (n < 4) throw DomainError("geometry requires at least 4 cells per axis");
    }

    void build_bases() {
        for (int ax = 0; ax < dim_; ++ax) {
            int n = nodes_[ax];
            double h = h_[ax];
            std::vector<double>& Q = basis_[ax];
            std::vector<double>& lam = eig_[ax];
            Q.assign(std::size_t(n) * n, 0.0);
            lam.assign(n, 0.0);
            if (boundary_ == Boundary::Dirichlet) {
                int N = cells_[ax];
                double scale = std::sqrt(2.0 / N);
                for (int k = 0; k < n; ++k) {
                    lam[k] = (4.0 / (h * h)) * std::pow(std::sin((k + 1) * M_PI / (2.0 * N)), 2);
                    for (int i = 0; i < n; ++i) Q[std::size_t(k) * n + i] = scale * std::sin((i + 1) * (k + 1) * M_PI / N);
                }
            } else {  // periodic: real Fourier basis
                int N = n;
                int col = 0;
                auto set = [&](int c, auto&& f, double lambda) {
                    lam[c] = lambda;
                    for (int i = 0; i < N; ++i) Q[std::size_t(c) * N + i] = f(i);
                };
                set(col++, [&](int) { return 1.0 / std::sqrt(double(N)); }, 0.0);
                for (int k = 1; 2 * k < N; ++k) {
                    double lambda = (4.0 / (h * h)) * std::pow(std::sin(M_PI * k / N), 2);
                    set(col++, [&](int i) { return std::sqrt(2.0 / N) * std::cos(2 * M_PI * k * i / double(N)); }, lambda);
                    set(col++, [&](int i) { return std::sqrt(2.0 / N) * std::sin(2 * M_PI * k * i / double(N)); }, lambda);
                }
                if (N % 2 == 0) set(col++, [&](int i) { return (i % 2 ? -1.0 : 1.0) / std::sqrt(double(N)); }, 4.0 / (h * h));
            }
        }
    }

    Kind kind_ = Kind::Torus1d;
    int dim_ = 1;
    Boundary boundary_ = Boundary::Periodic;
    std::array<double, 2> a_{}, len_{}, h_{};
    std::array<int, 2> cells_{}, nodes_{};
    std::array<std::vector<double>, 2> basis_, eig_;
};

using GeometryPtr = std::shared_ptr<const Geometry>;

/// Real-valued grid function on a Geometry, tagged with the pivot space
/// whose norm applies.
struct Field {
    GeometryPtr geo;
    Space space = Space::L2;
    std::vector<double> v;

    Field() = default;
    Field(GeometryPtr g, Space s = Space::L2) : geo(std::move(g)), space(s), v(geo->size(), 0.0) {}
    Field(GeometryPtr g, Space s, std::vector<double> values) : geo(std::move(g)), space(s), v(std::move(values)) {
        if (v.size() != geo->size()) throw DomainError("field value array does not match geometry");
    }

    std::size_t size() const { return v.size(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    Field& operator+=(const Field& o) {
        check_same(o);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    Field& operator-=(const Field& o) {
        check_same(o);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
        return *this;
    }
    Field& operator*=(double c) {
        for (double& x : v) x *= c;
        return *this;
    }
    friend Field operator+(Field a, const Field& b) { return a += b; }
    friend Field operator-(Field a, const Field& b) { return a -= b; }
    friend Field operator*(double c, Field a) { return a *= c; }

    void axpy(double c, const Field& o) {
        check_same(o);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += c * o.v[i];
    }

    double mean() const { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

    void check_same(const Field& o) const {
        if (geo != o.geo) throw DomainError("field geometry mismatch");
    }
};

/// Vector-valued grid function (one component per axis).
struct VectorField {
    GeometryPtr geo;
    std::array<std::vector<double>, 2> comp;

    explicit VectorField(GeometryPtr g) : geo(std::move(g)) {
        for (int ax = 0; ax < geo->dim(); ++ax) comp[ax].assign(geo->size(), 0.0);
    }
};

namespace detail {

// centered first difference along an axis; Dirichlet uses zero ghost values
inline void diff_centered(const Geometry& g, const std::vector<double>& u, int axis, std::vector<double>& out) {
    int nx = g.nodes(0), ny = g.dim() == 2 ? g.nodes(1) : 1;
    double inv2h = 0.5 / g.spacing(axis);
    bool per = g.periodic();
    out.assign(u.size(), 0.0);
    auto at = [&](int i, int j) -> double {
        if (axis == 0) {
            if (i < 0 || i >= nx) {
                if (per) return u[g.index((i + nx) % nx, j)];
                return 0.0;  // Dirichlet / Neumann handled by caller
            }
        } else {
            if (j < 0 || j >= ny) {
                if (per) return u[g.index(i, (j + ny) % ny)];
                return 0.0;
            }
        }
        return u[g.index(i, j)];
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double up = axis == 0 ? at(i + 1, j) : at(i, j + 1);
            double dn = axis == 0 ? at(i - 1, j) : at(i, j - 1);
            out[g.index(i, j)] = (up - dn) * inv2h;
        }
}

}  // namespace detail

/// Centered second-order gradient. Dirichlet fields use the zero boundary
/// extension. Requires the L2 space tag.
inline VectorField gradient(const Field& u) {
    if (u.space != Space::L2) throw UsageError("gradient requires an L2-tagged field");
    VectorField w(u.geo);
    for (int ax = 0; ax < u.geo->dim(); ++ax) detail::diff_centered(*u.geo, u.v, ax, w.comp[ax]);
    return w;
}

/// Divergence as the exact negative L2 adjoint of `gradient` (summation by
/// parts holds to machine precision). On uniform grids this is again the
/// centered stencil.
inline Field divergence(const VectorField& w) {
    Field out(w.geo, Space::L2);
    std::vector<double> tmp;
    for (int ax = 0; ax < w.geo->dim(); ++ax) {
        detail::diff_centered(*w.geo, w.comp[ax], ax, tmp);
        for (std::size_t i = 0; i < tmp.size(); ++i) out.v[i] += tmp[i];
    }
    return out;
}

/// Standard 3/5-point Laplacian stencil.
inline Field laplacian(const Field& u) {
    const Geometry& g = *u.geo;
    Field out(u.geo, u.space);
    int nx = g.nodes(0), ny = g.dim() == 2 ? g.nodes(1) : 1;
    bool per = g.periodic();
    bool neu = g.boundary() == Boundary::Neumann;
    auto at = [&](int i, int j) -> double {
        if (per) return u.v[g.index((i + nx) % nx, (j + ny) % ny)];
        if (i < 0 || i >= nx || j < 0 || j >= ny) {
            if (!neu) return 0.0;
            // homogeneous Neumann: mirror
            int ii = i < 0 ? 1 : (i >= nx ? nx - 2 : i);
            int jj = j < 0 ? 1 : (j >= ny ? ny - 2 : j);
            return u.v[g.index(ii, jj)];
        }
        return u.v[g.index(i, j)];
    };
    double ihx2 = 1.0 / (g.spacing(0) * g.spacing(0));
    double ihy2 = g.dim() == 2 ? 1.0 / (g.spacing(1) * g.spacing(1)) : 0.0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double val = (at(i + 1, j) - 2 * at(i, j) + at(i - 1, j)) * ihx2;
            if (g.dim() == 2) val += (at(i, j + 1) - 2 * at(i, j) + at(i, j - 1)) * ihy2;
            out.v[g.index(i, j)] = val;
        }
    return out;
}

namespace detail {

// apply the per-axis spectral transform: forward=true maps nodal values to
// eigenbasis coefficients (Q^T x), forward=false maps back (Q x)
inline void axis_transform(const Geometry& g, std::vector<double>& x, int axis, bool forward) {
    int n = g.nodes(axis);
    const std::vector<double>& Q = g.basis(axis);
    int nx = g.nodes(0), ny = g.dim() == 2 ? g.nodes(1) : 1;
    std::vector<double> line(n), res(n);
    int nlines = axis == 0 ? ny : nx;
    for (int l = 0; l < nlines; ++l) {
        for (int i = 0; i < n; ++i) line[i] = x[axis == 0 ? g.index(i, l) : g.index(l, i)];
        for (int k = 0; k < n; ++k) {
            double acc = 0.0;
            const double* col = &Q[std::size_t(k) * n];
            if (forward)
                for (int i = 0; i < n; ++i) acc += col[i] * line[i];
            else
                for (int i = 0; i < n; ++i) acc += Q[std::size_t(i) * n + k] * line[i];
            res[k] = acc;
        }
        for (int i = 0; i < n; ++i) x[axis == 0 ? g.index(i, l) : g.index(l, i)] = res[i];
    }
}

}  // namespace detail

/// Solve -Lap v = u exactly in the eigenbasis of the discrete Laplacian.
/// Dirichlet: v vanishes on the (eliminated) boundary. Periodic: u is
/// centered to mean zero first if needed (flag recorded through `centered`)
/// and v has mean zero.
inline Field inv_laplacian(const Field& u, bool* centered = nullptr) {
    const Geometry& g = *u.geo;
    if (g.boundary() == Boundary::Neumann) throw NumericError("inv_laplacian: singular all-Neumann system");
    Field out = u;
    if (centered) *centered = false;
    if (g.periodic()) {
        double m = u.mean();
        if (std::abs(m) > 1e-12) {
            if (centered) *centered = true;
            for (double& x : out.v) x -= m;
        } else {
            for (double& x : out.v) x -= m;  // exact mean-zero projection either way
        }
    }
    for (int ax = 0; ax < g.dim(); ++ax) detail::axis_transform(g, out.v, ax, true);
    int nx = g.nodes(0), ny = g.dim() == 2 ? g.nodes(1) : 1;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double lam = g.eigenvalues(0)[i] + (g.dim() == 2 ? g.eigenvalues(1)[j] : 0.0);
            std::size_t idx = g.index(i, j);
            out.v[idx] = lam > 0 ? out.v[idx] / lam : 0.0;
        }
    for (int ax = 0; ax < g.dim(); ++ax) detail::axis_transform(g, out.v, ax, false);
    return out;
}

/// h-weighted dot product (L2) or <u, (-Lap)^-1 v>_{L2} (H^-1).
inline double inner(const Field& u, const Field& w, Space space) {
    u.check_same(w);
    if (space == Space::L2) {
        double acc = 0.0;
        for (std::size_t i = 0; i < u.v.size(); ++i) acc += u.v[i] * w.v[i];
        return acc * u.geo->cell_volume();
    }
    Field iv = inv_laplacian(w);
    double acc = 0.0;
    for (std::size_t i = 0; i < u.v.size(); ++i) acc += u.v[i] * iv.v[i];
    return acc * u.geo->cell_volume();
}

/// inner product in the field's own pivot space
inline double inner(const Field& u, const Field& w) {
    if (u.space != w.space) throw UsageError("inner: space tag mismatch");
    return inner(u, w, u.space);
}

inline double norm(const Field& u, Space space) { return std::sqrt(std::max(inner(u, u, space), 0.0)); }
inline double norm(const Field& u) { return norm(u, u.space); }

struct Norms {
    double l2;
    double h1_seminorm;
    double lp;
    double hminus1;
};

/// Discrete norms record; lp uses exponent p (p >= 1).
inline Norms norms(const Field& u, double p = 2.0) {
    if (p < 1.0) throw DomainError("norms: p >= 1 required");
    const Geometry& g = *u.geo;
    double vol = g.cell_volume();
    double l2 = 0.0, lp = 0.0;
    for (double x : u.v) {
        l2 += x * x;
        lp += std::pow(std::abs(x), p);
    }
    // H1 seminorm from forward differences over cell edges (midpoint rule);
    // Dirichlet boundary edges contribute through the zero extension
    double h1 = 0.0;
    int nx = g.nodes(0), ny = g.dim() == 2 ? g.nodes(1) : 1;
    bool per = g.periodic();
    auto at = [&](int i, int j) -> double {
        if (per) return u.v[g.index((i + nx) % nx, (j + ny) % ny)];
        if (i < 0 || i >= nx || j < 0 || j >= ny) return 0.0;
        return u.v[g.index(i, j)];
    };
    int x_edges = per ? nx : nx + (g.boundary() == Boundary::Dirichlet ? 1 : -1);
    int i0 = g.boundary() == Boundary::Dirichlet ? -1 : 0;
    for (int j = 0; j < ny; ++j)
        for (int e = 0; e < x_edges; ++e) {
            double d = (at(i0 + e + 1, j) - at(i0 + e, j)) / g.spacing(0);
            h1 += d * d;
        }
    if (g.dim() == 2) {
        int y_edges = per ? ny : ny + 1;
        for (int i = 0; i < nx; ++i)
            for (int e = 0; e < y_edges; ++e) {
                double d = (at(i, i0 + e + 1) - at(i, i0 + e)) / g.spacing(1);
                h1 += d * d;
            }
    }
    double hm1 = (g.boundary() == Boundary::Neumann) ? 0.0 : norm(u, Space::Hminus1);
    return {std::sqrt(l2 * vol), std::sqrt(h1 * vol), std::pow(lp * vol, 1.0 / p), hm1};
}

}  // namespace stpde

#endif
