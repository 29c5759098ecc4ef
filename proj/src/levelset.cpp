#include "pinchlab/levelset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "pinchlab/common.hpp"

namespace pinchlab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Gauss-Legendre, 8 points on [-1, 1].
constexpr double kGx[8] = {-0.9602898564975363, -0.7966664774136267,
                           -0.5255324099163290, -0.1834346424956498,
                           0.1834346424956498,  0.5255324099163290,
                           0.7966664774136267,  0.9602898564975363};
constexpr double kGw[8] = {0.1012285362903763, 0.2223810344533745,
                           0.3137066458778873, 0.3626837833783620,
                           0.3626837833783620, 0.3137066458778873,
                           0.2223810344533745, 0.1012285362903763};

template <class F>
double gauss8(F&& g, double w0, double w1) {
    const double mid = 0.5 * (w0 + w1);
    const double half = 0.5 * (w1 - w0);
    double s = 0.0;
    for (int k = 0; k < 8; ++k) s += kGw[k] * g(mid + half * kGx[k]);
    return s * half;
}

double density_at(const ConformalFactor& f, const Vec2& z) {
    return -f.laplacian(z);  // K e^{2u} away from cone points
}

// Integral of (-Delta u) r dr over [0, r1] when a cone of weight beta0 may
// sit at the origin. The substitution xi = r^{p/2}, p = 2 + 2 beta0, turns
// the leading power density c r^{p-2} into a linear integrand, so composite
// Gauss panels converge fast; for a pure radial branch the corrections are
// odd powers of xi and effectively exact.
double radial_mass_head(const ConformalFactor& f, double r1, double beta0) {
    if (r1 <= 0.0) return 0.0;
    const double p = 2.0 + 2.0 * beta0;
    const double xi1 = std::pow(r1, 0.5 * p);
    auto g = [&](double xi) {
        const double r = std::pow(xi, 2.0 / p);
        return density_at(f, {r, 0.0}) * (2.0 / p) * std::pow(xi, 4.0 / p - 1.0);
    };
    const int panels = 24;
    double total = 0.0;
    for (int k = 0; k < panels; ++k) {
        total += gauss8(g, xi1 * k / panels, xi1 * (k + 1) / panels);
    }
    return total;
}

// Integral of (-Delta u) r dr over [ra, rb], smooth interior (no cone, no
// seam inside): composite Gauss in log r.
double radial_mass_segment(const ConformalFactor& f, double ra, double rb) {
    if (rb <= ra) return 0.0;
    auto g = [&](double w) {
        const double r = std::exp(w);
        return density_at(f, {r, 0.0}) * r * r;
    };
    const double wa = std::log(ra), wb = std::log(rb);
    const int panels = std::max(4, static_cast<int>(std::ceil((wb - wa) / 0.3)));
    double total = 0.0;
    for (int k = 0; k < panels; ++k) {
        total += gauss8(g, wa + (wb - wa) * k / panels,
                        wa + (wb - wa) * (k + 1) / panels);
    }
    return total;
}

// Shared post-processing: centered d/dt estimates with a difference-based
// error model (third differences for the truncation term, the second
// difference for kinks and jitter, measurement errors for the endpoints),
// defect values, and structural validation.
void finish_profile(LevelSetProfile& p) {
    const std::size_t n = p.t.size();
    if (n == 0) throw pinch_error("level-set profile: empty t grid");
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!(p.t[i] > p.t[i + 1]))
            throw pinch_error("level-set profile: t grid must be strictly descending");
    }
    p.dA.assign(n, 0.0);
    p.dB.assign(n, 0.0);
    p.slack_dA.assign(n, kInf);
    p.slack_dB.assign(n, kInf);
    p.defect.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        p.defect[i] = p.L[i] * p.L[i] - 4.0 * kPi * p.B[i];
    if (n < 2) return;

    auto deriv = [&](const std::vector<double>& f, std::vector<double>& df,
                     std::vector<double>& slack) {
        // third-difference magnitude around i (0 when the stencil is short)
        auto third = [&](std::size_t i) {
            double worst = 0.0;
            for (std::size_t j = (i >= 1 ? i - 1 : i); j <= i + 1; ++j) {
                if (j < 2 || j + 2 >= n) continue;
                const double h = std::abs(p.t[j] - p.t[j + 1]);
                const double d3 = (f[j + 2] - 2.0 * f[j + 1] + 2.0 * f[j - 1] - f[j - 2]) /
                                  (2.0 * h * h * h);
                worst = std::max(worst, std::abs(d3));
            }
            return worst;
        };
        // Measurement errors of f are strongly correlated across neighboring
        // t (same raster, same quadrature), so they are NOT propagated into
        // the derivative slack; the second difference self-measures the
        // actual local roughness, jitter and kinks included.
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double span = p.t[i + 1] - p.t[i - 1];
            const double h = 0.5 * std::abs(span);
            df[i] = (f[i + 1] - f[i - 1]) / span;
            const double jump = std::abs(f[i + 1] - 2.0 * f[i] + f[i - 1]) / h;
            slack[i] = h * h / 6.0 * third(i) + 0.5 * jump +
                       1e-13 * (1.0 + std::abs(df[i]));
        }
        // one-sided endpoints; excluded from checks but kept defined
        df[0] = (f[1] - f[0]) / (p.t[1] - p.t[0]);
        df[n - 1] = (f[n - 1] - f[n - 2]) / (p.t[n - 1] - p.t[n - 2]);
        if (n >= 3) {
            slack[0] = 3.0 * slack[1] + std::abs(df[1] - df[0]);
            slack[n - 1] = 3.0 * slack[n - 2] + std::abs(df[n - 1] - df[n - 2]);
        }
    };
    deriv(p.A, p.dA, p.slack_dA);
    deriv(p.B, p.dB, p.slack_dB);
}

void sort_components_desc(std::vector<double>& v) {
    std::sort(v.begin(), v.end(), std::greater<double>());
}

void require_descending(const std::vector<double>& ts, const char* who) {
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        if (!(ts[i] > ts[i + 1]))
            throw pinch_error(std::string(who) + ": t grid must be strictly descending");
    }
}

double sum_finite_weights(const ConicDivisor& d) {
    double s = 0.0;
    for (const auto& q : d.points()) {
        if (!q.infinite) s += q.beta;
    }
    return s;
}

}  // namespace

std::vector<double> t_grid(double t_hi, double t_lo, double step) {
    if (!(step > 0.0)) throw pinch_error("t_grid: step must be positive");
    if (!(t_hi > t_lo)) throw pinch_error("t_grid: need t_hi > t_lo");
    const int n = static_cast<int>(std::floor((t_hi - t_lo) / step + 1e-9)) + 1;
    std::vector<double> ts(n);
    for (int i = 0; i < n; ++i) ts[i] = t_hi - i * step;
    return ts;
}

LevelSetProfile radial_profile(const ConformalFactor& f,
                               const std::vector<double>& ts) {
    if (ts.empty()) throw pinch_error("radial_profile: empty t grid");
    require_descending(ts, "radial_profile");
    if (!f.radially_symmetric())
        throw pinch_error("radial_profile: factor is not radially symmetric");

    double beta0 = 0.0;  // finite cone weight at the origin, if any
    for (const auto& q : f.divisor().points()) {
        if (q.infinite) continue;
        if (q.position.norm() > 1e-12)
            throw pinch_error("radial_profile: finite cone away from the origin");
        beta0 = q.beta;
    }

    auto u_at = [&](double r) { return f.value({r, 0.0}); };
    const double t_min = ts.back();

    // outer reach: find R_out with u(R_out) safely below the deepest t
    double r_out = 2.0;
    const double r_cap = std::min(1e12, f.max_sample_radius());
    while (u_at(r_out) > t_min - 0.5) {
        r_out *= 2.0;
        if (r_out > r_cap)
            throw pinch_error("radial_profile: root not bracketed within [0, R_out]");
    }

    // monotonicity check on a log-spaced sample grid
    {
        const int m = 512;
        double prev = u_at(1e-9);
        for (int k = 1; k <= m; ++k) {
            const double r = 1e-9 * std::pow(r_out / 1e-9, double(k) / m);
            const double v = u_at(r);
            if (v > prev + 1e-11 * (1.0 + std::abs(prev)))
                throw pinch_error("radial_profile: u is not strictly decreasing in r");
            prev = v;
        }
    }

    const std::size_t n = ts.size();
    LevelSetProfile p;
    p.t = ts;
    p.A.assign(n, 0.0);
    p.B.assign(n, 0.0);
    p.L.assign(n, 0.0);
    p.flux.assign(n, 0.0);
    p.err_A.assign(n, 0.0);
    p.err_B.assign(n, 0.0);
    p.err_L.assign(n, 0.0);
    p.err_flux.assign(n, 0.0);
    p.components.assign(n, {});
    p.spacing = 0.0;
    p.alpha = sum_finite_weights(f.divisor());

    // level radii by monotone root-finding in log r, reusing the previous
    // radius as the lower bracket (t descending => r ascending)
    std::vector<double> radii(n, 0.0);
    double w_lo = std::log(1e-300);
    const double w_hi = std::log(r_out);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = ts[i];
        auto g = [&](double w) { return u_at(std::exp(w)) - t; };
        if (g(w_lo) <= 0.0)
            throw pinch_error("radial_profile: t above the factor maximum");
        const double w = find_root(g, w_lo, w_hi, 1e-14);
        radii[i] = std::exp(w);
        w_lo = w;
        p.B[i] = kPi * radii[i] * radii[i];
        p.L[i] = 2.0 * kPi * radii[i];
        const Vec2 gr = f.gradient({radii[i], 0.0});
        p.flux[i] = 2.0 * kPi * radii[i] * gr.norm();
        p.components[i] = {p.B[i]};
    }

    // curvature mass accumulated across sorted breakpoints (levels + seams)
    std::vector<double> marks = radii;  // ascending already
    for (const auto& s : f.seams()) {
        if (s.center.norm() > 1e-12)
            throw pinch_error("radial_profile: off-center seam on a radial factor");
        if (s.radius > 0.0 && s.radius < radii.back()) marks.push_back(s.radius);
    }
    std::sort(marks.begin(), marks.end());
    marks.erase(std::unique(marks.begin(), marks.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-15 * (a + b); }),
                marks.end());
    std::unordered_map<double, double> mass_at;  // breakpoint radius -> mass
    double acc = radial_mass_head(f, marks.front(), beta0);
    mass_at[marks.front()] = acc;
    for (std::size_t k = 0; k + 1 < marks.size(); ++k) {
        acc += radial_mass_segment(f, marks[k], marks[k + 1]);
        mass_at[marks[k + 1]] = acc;
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto it = mass_at.find(radii[i]);
        double mass;
        if (it != mass_at.end()) {
            mass = it->second;
        } else {
            // radius merged with a neighboring mark by the dedupe; locate it
            auto lb = std::lower_bound(marks.begin(), marks.end(), radii[i]);
            if (lb == marks.end()) --lb;
            mass = mass_at[*lb];
        }
        p.A[i] = 2.0 * kPi * mass;  // smooth density only, cone deltas excluded
        p.err_A[i] = 1e-11 * (1.0 + std::abs(p.A[i]));
        p.err_B[i] = 1e-12 * (1.0 + p.B[i]);
        p.err_L[i] = 1e-12 * (1.0 + p.L[i]);
        p.err_flux[i] = 1e-10 * (1.0 + p.flux[i]);
    }

    finish_profile(p);
    return p;
}

namespace {

// One-time mass integrals for the cells of a small block around a cone,
// where the density is unbounded and the midpoint rule is useless.

// Distance from `p` to the boundary of [xa,xb]x[ya,yb] along direction theta.
double ray_to_rect(const Vec2& p, double theta, double xa, double xb, double ya,
                   double yb) {
    const double cx = std::cos(theta), cy = std::sin(theta);
    double best = kInf;
    if (cx > 1e-300) best = std::min(best, (xb - p.x) / cx);
    if (cx < -1e-300) best = std::min(best, (xa - p.x) / cx);
    if (cy > 1e-300) best = std::min(best, (yb - p.y) / cy);
    if (cy < -1e-300) best = std::min(best, (ya - p.y) / cy);
    return best;
}

// Mass of a rectangle containing the cone `p` of weight `beta`: polar
// integral around p, graded toward the cone by the same power substitution
// as the radial head, split at the corner directions where the radial
// extent R(theta) kinks.
double rect_polar_mass(const ConformalFactor& f, const Vec2& p, double beta,
                       double xa, double xb, double ya, double yb) {
    std::vector<double> cuts;
    const double corners[4][2] = {{xa, ya}, {xb, ya}, {xb, yb}, {xa, yb}};
    for (auto& c : corners) {
        double th = std::atan2(c[1] - p.y, c[0] - p.x);
        if (th < 0.0) th += 2.0 * kPi;
        cuts.push_back(th);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.push_back(cuts.front() + 2.0 * kPi);
    const double pw = 2.0 + 2.0 * beta;
    double total = 0.0;
    for (std::size_t a = 0; a + 1 < cuts.size(); ++a) {
        auto arc = [&](double theta) {
            const double R = ray_to_rect(p, theta, xa, xb, ya, yb);
            if (!(R > 0.0)) return 0.0;
            // integral of density * r dr from 0 to R along this ray
            const double xi1 = std::pow(R, 0.5 * pw);
            auto g = [&](double xi) {
                const double r = std::pow(xi, 2.0 / pw);
                const Vec2 z{p.x + r * std::cos(theta), p.y + r * std::sin(theta)};
                return density_at(f, z) * (2.0 / pw) * std::pow(xi, 4.0 / pw - 1.0);
            };
            const int panels = 16;
            double s = 0.0;
            for (int k = 0; k < panels; ++k)
                s += gauss8(g, xi1 * k / panels, xi1 * (k + 1) / panels);
            return s;
        };
        const double t0 = cuts[a], t1 = cuts[a + 1];
        if (t1 - t0 < 1e-14) continue;
        const int panels = std::max(3, static_cast<int>(std::ceil((t1 - t0) / 0.2)));
        for (int k = 0; k < panels; ++k)
            total += gauss8(arc, t0 + (t1 - t0) * k / panels,
                            t0 + (t1 - t0) * (k + 1) / panels);
    }
    return total;
}

// Tensor Gauss 8x8 over a rectangle (smooth density; used for block cells
// that do not contain the cone itself, where the density varies steeply).
double rect_gauss_mass(const ConformalFactor& f, double xa, double xb, double ya,
                       double yb) {
    const double mx = 0.5 * (xa + xb), hx = 0.5 * (xb - xa);
    const double my = 0.5 * (ya + yb), hy = 0.5 * (yb - ya);
    double s = 0.0;
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b)
            s += kGw[a] * kGw[b] * density_at(f, {mx + hx * kGx[a], my + hy * kGx[b]});
    return s * hx * hy;
}

struct UnionFind {
    std::vector<int> parent;
    void reset(int n) {
        parent.resize(n);
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace

LevelSetProfile grid_profile(const ConformalFactor& f,
                             const std::vector<double>& ts, const GridBox& box) {
    if (ts.empty()) throw pinch_error("grid_profile: empty t grid");
    require_descending(ts, "grid_profile");
    if (box.nx < 4 || box.ny < 4 || !(box.h > 0.0))
        throw pinch_error("grid_profile: raster must be at least 4x4 with positive spacing");
    const int nx = box.nx, ny = box.ny;
    const double h = box.h;
    {
        const double reach = std::max(Vec2{box.x0, box.y0}.norm(),
                                      std::max(Vec2{box.x1(), box.y0}.norm(),
                                               std::max(Vec2{box.x0, box.y1()}.norm(),
                                                        Vec2{box.x1(), box.y1()}.norm())));
        if (reach > f.max_sample_radius())
            throw pinch_error("grid_profile: raster exceeds the factor's sample radius");
    }

    // finite cones: must lie inside the raster, pairwise separated
    struct Cone {
        Vec2 pos;
        double beta;
    };
    std::vector<Cone> cones;
    for (const auto& q : f.divisor().points()) {
        if (q.infinite) continue;
        if (q.position.x < box.x0 + h || q.position.x > box.x1() - h ||
            q.position.y < box.y0 + h || q.position.y > box.y1() - h)
            throw pinch_error("grid_profile: cone point outside the raster");
        cones.push_back({q.position, q.beta});
    }
    for (std::size_t a = 0; a < cones.size(); ++a)
        for (std::size_t b = a + 1; b < cones.size(); ++b)
            if ((cones[a].pos - cones[b].pos).norm() < 8.0 * h)
                throw pinch_error("grid_profile: raster too coarse to separate cone points");

    // node samples; exact cone hits carry u = +infinity
    const int n_nodes = nx * ny;
    std::vector<double> u(n_nodes);
    double u_max_fin = -kInf;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const Vec2 z{box.x0 + i * h, box.y0 + j * h};
            double near_cone = kInf;
            for (const auto& c : cones) near_cone = std::min(near_cone, (z - c.pos).norm());
            double v;
            if (near_cone < 1e-9 * h) {
                v = kInf;
            } else {
                v = f.value(z);
                if (!std::isfinite(v)) {
                    if (v > 0.0 && near_cone < 1e-6 * h) {
                        v = kInf;
                    } else {
                        throw pinch_error("grid_profile: non-finite sample away from cone points");
                    }
                }
            }
            u[j * nx + i] = v;
            if (std::isfinite(v)) u_max_fin = std::max(u_max_fin, v);
        }
    }
    const double clamp_val = u_max_fin + 100.0;
    std::vector<double> uc(u);  // clamped copy for interpolation
    for (auto& v : uc)
        if (!std::isfinite(v)) v = clamp_val;

    // block cells around each cone: one-time accurate masses
    const int ncx = nx - 1, ncy = ny - 1;
    std::unordered_map<int, double> block_mass;  // cell index -> mass
    for (const auto& c : cones) {
        const int ci = static_cast<int>(std::floor((c.pos.x - box.x0) / h));
        const int cj = static_cast<int>(std::floor((c.pos.y - box.y0) / h));
        for (int dj = -3; dj <= 3; ++dj) {
            for (int di = -3; di <= 3; ++di) {
                const int ii = ci + di, jj = cj + dj;
                if (ii < 0 || jj < 0 || ii >= ncx || jj >= ncy) continue;
                const int cell = jj * ncx + ii;
                if (block_mass.count(cell)) continue;
                const double xa = box.x0 + ii * h, xb = xa + h;
                const double ya = box.y0 + jj * h, yb = ya + h;
                const bool holds_cone = c.pos.x >= xa - 1e-12 && c.pos.x <= xb + 1e-12 &&
                                        c.pos.y >= ya - 1e-12 && c.pos.y <= yb + 1e-12;
                block_mass[cell] = holds_cone
                                       ? rect_polar_mass(f, c.pos, c.beta, xa, xb, ya, yb)
                                       : rect_gauss_mass(f, xa, xb, ya, yb);
            }
        }
    }

    // midpoint density cache for ordinary cells
    std::vector<double> dens(ncx * ncy, 0.0);
    for (int j = 0; j < ncy; ++j) {
        for (int i = 0; i < ncx; ++i) {
            const int cell = j * ncx + i;
            if (block_mass.count(cell)) continue;
            dens[cell] = density_at(f, {box.x0 + (i + 0.5) * h, box.y0 + (j + 0.5) * h});
        }
    }

    const std::size_t n = ts.size();
    LevelSetProfile p;
    p.t = ts;
    p.A.assign(n, 0.0);
    p.B.assign(n, 0.0);
    p.L.assign(n, 0.0);
    p.flux.assign(n, 0.0);
    p.err_A.assign(n, 0.0);
    p.err_B.assign(n, 0.0);
    p.err_L.assign(n, 0.0);
    p.err_flux.assign(n, 0.0);
    p.components.assign(n, {});
    p.spacing = h;
    p.alpha = sum_finite_weights(f.divisor());

    std::vector<uint8_t> mask(n_nodes);
    std::vector<double> hcross(ncx * ny), vcross(nx * ncy);
    UnionFind uf;
    std::vector<double> comp_area(n_nodes, 0.0);
    std::vector<uint8_t> comp_seen(n_nodes, 0);

    for (std::size_t it = 0; it < n; ++it) {
        const double t = ts[it];
        bool any = false, boundary_hit = false;
        for (int k = 0; k < n_nodes; ++k) {
            mask[k] = (u[k] >= t) ? 1 : 0;
            any |= (mask[k] != 0);
        }
        if (!any) throw pinch_error("grid_profile: t above the maximum sampled u");
        for (int i = 0; i < nx && !boundary_hit; ++i)
            boundary_hit = mask[i] || mask[(ny - 1) * nx + i];
        for (int j = 0; j < ny && !boundary_hit; ++j)
            boundary_hit = boundary_hit || mask[j * nx] || mask[j * nx + nx - 1];
        if (boundary_hit)
            throw pinch_error("grid_profile: contour touches the raster boundary (raster too small)");

        // edge crossings (theta measured from the first node of the edge)
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < ncx; ++i) {
                const int a = j * nx + i, b = a + 1;
                hcross[j * ncx + i] = (mask[a] != mask[b])
                                          ? (uc[a] - t) / (uc[a] - uc[b])
                                          : -1.0;
            }
        }
        for (int j = 0; j < ncy; ++j) {
            for (int i = 0; i < nx; ++i) {
                const int a = j * nx + i, b = a + nx;
                vcross[j * nx + i] = (mask[a] != mask[b])
                                         ? (uc[a] - t) / (uc[a] - uc[b])
                                         : -1.0;
            }
        }

        // component structure: 4-connectivity, plus saddle diagonals when
        // the reconstructed interface connects them
        uf.reset(n_nodes);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < ncx; ++i)
                if (mask[j * nx + i] && mask[j * nx + i + 1])
                    uf.unite(j * nx + i, j * nx + i + 1);
        for (int j = 0; j < ncy; ++j)
            for (int i = 0; i < nx; ++i)
                if (mask[j * nx + i] && mask[(j + 1) * nx + i])
                    uf.unite(j * nx + i, (j + 1) * nx + i);
        for (int j = 0; j < ncy; ++j) {
            for (int i = 0; i < ncx; ++i) {
                const int n0 = j * nx + i, n1 = n0 + 1, n2 = n0 + nx + 1, n3 = n0 + nx;
                const int cs = mask[n0] | (mask[n1] << 1) | (mask[n2] << 2) | (mask[n3] << 3);
                if (cs != 5 && cs != 10) continue;
                const double center = 0.25 * (uc[n0] + uc[n1] + uc[n2] + uc[n3]);
                if (center >= t) {
                    if (cs == 5) uf.unite(n0, n2);
                    else uf.unite(n1, n3);
                }
            }
        }

        double area = 0.0, length = 0.0, mass = 0.0, flux = 0.0;
        double rho_len = 0.0;  // sum of |density| * segment length on the interface
        double err_bump = 0.0;
        std::vector<int> touched;

        auto add_area = [&](int rep_node, double a) {
            const int r = uf.find(rep_node);
            if (!comp_seen[r]) {
                comp_seen[r] = 1;
                touched.push_back(r);
            }
            comp_area[r] += a;
            area += a;
        };
        auto add_segment = [&](const Vec2& a, const Vec2& b) {
            const double len = (b - a).norm();
            if (len <= 0.0) return;
            length += len;
            const Vec2 mid = (a + b) * 0.5;
            flux += len * f.gradient(mid).norm();
            rho_len += len * std::abs(density_at(f, mid));
        };

        for (int j = 0; j < ncy; ++j) {
            for (int i = 0; i < ncx; ++i) {
                const int n0 = j * nx + i, n1 = n0 + 1, n2 = n0 + nx + 1, n3 = n0 + nx;
                const int cs = mask[n0] | (mask[n1] << 1) | (mask[n2] << 2) | (mask[n3] << 3);
                if (cs == 0) continue;
                const int cell = j * ncx + i;
                const double xa = box.x0 + i * h, ya = box.y0 + j * h;
                if (cs == 15) {
                    auto bm = block_mass.find(cell);
                    mass += (bm != block_mass.end()) ? bm->second : dens[cell] * h * h;
                    add_area(n0, h * h);
                    continue;
                }
                const Vec2 P0{xa, ya}, P1{xa + h, ya}, P2{xa + h, ya + h}, P3{xa, ya + h};
                const Vec2 X0{xa + h * hcross[j * ncx + i], ya};
                const Vec2 X1{xa + h, ya + h * vcross[j * nx + i + 1]};
                const Vec2 X2{xa + h * hcross[(j + 1) * ncx + i], ya + h};
                const Vec2 X3{xa, ya + h * vcross[j * nx + i]};

                // polygon list: up to 2 polygons of up to 6 vertices
                Vec2 poly[2][6];
                int pn[2] = {0, 0}, rep[2] = {n0, n0}, npoly = 1;
                auto set_poly = [&](int w, std::initializer_list<Vec2> pts, int r) {
                    pn[w] = 0;
                    for (const auto& q : pts) poly[w][pn[w]++] = q;
                    rep[w] = r;
                };
                switch (cs) {
                    case 1: set_poly(0, {P0, X0, X3}, n0); add_segment(X0, X3); break;
                    case 2: set_poly(0, {P1, X1, X0}, n1); add_segment(X1, X0); break;
                    case 4: set_poly(0, {P2, X2, X1}, n2); add_segment(X2, X1); break;
                    case 8: set_poly(0, {P3, X3, X2}, n3); add_segment(X3, X2); break;
                    case 3: set_poly(0, {P0, P1, X1, X3}, n0); add_segment(X1, X3); break;
                    case 6: set_poly(0, {P1, P2, X2, X0}, n1); add_segment(X2, X0); break;
                    case 12: set_poly(0, {P2, P3, X3, X1}, n2); add_segment(X3, X1); break;
                    case 9: set_poly(0, {P3, P0, X0, X2}, n3); add_segment(X0, X2); break;
                    case 7: set_poly(0, {P0, P1, P2, X2, X3}, n0); add_segment(X2, X3); break;
                    case 14: set_poly(0, {P1, P2, P3, X3, X0}, n1); add_segment(X3, X0); break;
                    case 13: set_poly(0, {P2, P3, P0, X0, X1}, n2); add_segment(X0, X1); break;
                    case 11: set_poly(0, {P3, P0, P1, X1, X2}, n3); add_segment(X1, X2); break;
                    case 5:
                    case 10: {
                        const double center = 0.25 * (uc[n0] + uc[n1] + uc[n2] + uc[n3]);
                        const bool connected = center >= t;
                        if (cs == 5) {
                            if (connected) {
                                set_poly(0, {P0, X0, X1, P2, X2, X3}, n0);
                                add_segment(X0, X1);
                                add_segment(X2, X3);
                            } else {
                                set_poly(0, {P0, X0, X3}, n0);
                                set_poly(1, {P2, X2, X1}, n2);
                                npoly = 2;
                                add_segment(X0, X3);
                                add_segment(X2, X1);
                            }
                        } else {
                            if (connected) {
                                set_poly(0, {P1, X1, X2, P3, X3, X0}, n1);
                                add_segment(X1, X2);
                                add_segment(X3, X0);
                            } else {
                                set_poly(0, {P1, X1, X0}, n1);
                                set_poly(1, {P3, X3, X2}, n3);
                                npoly = 2;
                                add_segment(X1, X0);
                                add_segment(X3, X2);
                            }
                        }
                        break;
                    }
                    default: break;
                }
                const bool in_block = block_mass.count(cell) > 0;
                for (int w = 0; w < npoly; ++w) {
                    if (pn[w] < 3) continue;
                    double a2 = 0.0;
                    Vec2 cen{0.0, 0.0};
                    for (int k = 0; k < pn[w]; ++k) {
                        const Vec2& q = poly[w][k];
                        const Vec2& r = poly[w][(k + 1) % pn[w]];
                        a2 += q.x * r.y - r.x * q.y;
                        cen = cen + q;
                    }
                    const double pa = 0.5 * a2;
                    if (pa <= 0.0) continue;
                    cen = cen / double(pn[w]);
                    add_area(rep[w], pa);
                    bool at_cone = false;
                    if (in_block) {
                        for (const auto& c : cones) {
                            if (c.pos.x >= xa - 1e-12 && c.pos.x <= xa + h + 1e-12 &&
                                c.pos.y >= ya - 1e-12 && c.pos.y <= ya + h + 1e-12)
                                at_cone = true;
                        }
                    }
                    if (at_cone) {
                        // interface inside the cone cell: the centroid rule
                        // would sample an unbounded density, so prorate the
                        // one-time polar mass by area fraction and flag the
                        // whole cell mass as potential error
                        mass += block_mass[cell] * (pa / (h * h));
                        err_bump += std::abs(block_mass[cell]);
                    } else {
                        mass += pa * density_at(f, cen);
                        if (in_block) err_bump += 0.25 * std::abs(block_mass[cell]);
                    }
                }
            }
        }

        p.B[it] = area;
        p.L[it] = length;
        p.A[it] = mass;
        p.flux[it] = flux;
        const double rho_bar = (length > 0.0) ? rho_len / length : 1.0;
        p.err_B[it] = 3.0 * h * length + 1e-12 * (1.0 + area);
        p.err_L[it] = 3.0 * h * (1.0 + length);
        p.err_A[it] = 3.0 * h * length * std::max(1.0, rho_bar) + err_bump +
                      1e-12 * (1.0 + std::abs(mass));
        p.err_flux[it] = 3.0 * h * (1.0 + flux);
        std::vector<double> comps;
        comps.reserve(touched.size());
        for (int r : touched) {
            comps.push_back(comp_area[r]);
            comp_area[r] = 0.0;
            comp_seen[r] = 0;
        }
        sort_components_desc(comps);
        p.components[it] = std::move(comps);
    }

    finish_profile(p);
    return p;
}

namespace {

CheckReport finalize_report(CheckReport rep) {
    rep.n_checked = 0;
    rep.n_excluded = 0;
    rep.worst = kInf;
    for (const auto& ln : rep.lines) {
        if (ln.excluded) {
            ++rep.n_excluded;
            continue;
        }
        ++rep.n_checked;
        rep.worst = std::min(rep.worst, ln.margin + ln.slack);
    }
    rep.passed = rep.n_checked > 0 && rep.worst >= 0.0;
    if (rep.n_checked == 0) rep.worst = 0.0;
    return rep;
}

}  // namespace

CheckReport verify_sandwich(const LevelSetProfile& p, double a, double b) {
    if (!(a > 0.0) || !(b >= a))
        throw pinch_error("verify_sandwich: need 0 < a <= b");
    CheckReport rep;
    rep.name = "sandwich";
    for (std::size_t i = 1; i + 1 < p.size(); ++i) {
        CheckLine ln;
        ln.t = p.t[i];
        ln.what = "sandwich-ratio";
        if (p.plateau(i)) {
            ln.excluded = true;
            ln.note = "plateau: |A'| below 10x its error model";
            rep.lines.push_back(ln);
            continue;
        }
        if (std::abs(p.dB[i]) < 10.0 * p.slack_dB[i]) {
            ln.excluded = true;
            ln.note = "plateau: |B'| below 10x its error model";
            rep.lines.push_back(ln);
            continue;
        }
        if (p.dA[i] >= 0.0) {
            ln.what = "monotone-A";
            ln.value = p.dA[i];
            ln.margin = -p.dA[i];
            ln.slack = p.slack_dA[i];
            ln.note = "A' must be negative";
            rep.lines.push_back(ln);
            continue;
        }
        const double ratio = std::exp(2.0 * p.t[i]) * p.dB[i] / p.dA[i];
        const double slack =
            std::abs(ratio) * (p.slack_dA[i] / std::abs(p.dA[i]) +
                               p.slack_dB[i] / std::max(std::abs(p.dB[i]), 1e-300)) +
            1e-12;
        ln.value = ratio;
        ln.margin = std::min(ratio - 1.0 / b, 1.0 / a - ratio);
        ln.slack = slack;
        rep.lines.push_back(ln);
    }
    return finalize_report(std::move(rep));
}

CheckReport verify_isoperimetric_chain(const LevelSetProfile& p, double alpha) {
    CheckReport rep;
    rep.name = "isoperimetric-chain";
    for (std::size_t i = 0; i < p.size(); ++i) {
        {
            CheckLine ln;
            ln.t = p.t[i];
            ln.what = "isoperimetric";
            ln.value = p.defect[i];
            ln.margin = p.defect[i];
            ln.slack = 2.0 * p.L[i] * p.err_L[i] + 4.0 * kPi * p.err_B[i] + 1e-12;
            rep.lines.push_back(ln);
        }
        {
            CheckLine ln;
            ln.t = p.t[i];
            ln.what = "boundary-identity";
            ln.value = p.A[i] - 2.0 * kPi * alpha - p.flux[i];
            ln.margin = -std::abs(ln.value);
            ln.slack = p.err_A[i] + p.err_flux[i] + 1e-9 * (1.0 + std::abs(p.A[i]));
            rep.lines.push_back(ln);
        }
        if (i >= 1 && i + 1 < p.size()) {
            CheckLine ln;
            ln.t = p.t[i];
            ln.what = "holder";
            if (!std::isfinite(p.slack_dB[i])) {
                ln.excluded = true;
                ln.note = "no derivative estimate";
            } else {
                const double lhs = -p.dB[i] * (p.A[i] - 2.0 * kPi * alpha);
                ln.value = lhs - p.L[i] * p.L[i];
                ln.margin = ln.value;
                ln.slack = std::abs(p.A[i] - 2.0 * kPi * alpha) * p.slack_dB[i] +
                           std::abs(p.dB[i]) * p.err_A[i] +
                           2.0 * p.L[i] * p.err_L[i] + 1e-12;
            }
            rep.lines.push_back(ln);
        }
    }
    return finalize_report(std::move(rep));
}

IntegratedReport integrated_inequality(const LevelSetProfile& p, double a,
                                       double b, double alpha) {
    if (!(a > 0.0) || !(b >= a))
        throw pinch_error("integrated_inequality: need 0 < a <= b");
    const std::size_t n = p.size();
    const double thresh = 2.0 * kPi * (1.0 + alpha);
    IntegratedReport out;

    // crossing of A through 2 pi (1+alpha); A ascends toward deeper t
    bool crossed = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if ((p.A[i] - thresh) * (p.A[i + 1] - thresh) <= 0.0 && p.A[i] != p.A[i + 1]) {
            const double w = (thresh - p.A[i]) / (p.A[i + 1] - p.A[i]);
            out.t_cross = p.t[i] + w * (p.t[i + 1] - p.t[i]);
            crossed = true;
            break;
        }
    }
    if (!crossed)
        throw pinch_error("integrated_inequality: A never crosses 2 pi (1+alpha) in range");

    out.differential.name = "two-branch";
    for (std::size_t i = 1; i + 1 < n; ++i) {
        CheckLine ln;
        ln.t = p.t[i];
        ln.what = "two-branch";
        const double e2t = std::exp(2.0 * p.t[i]);
        const double dEB = e2t * (2.0 * p.B[i] + p.dB[i]);
        const double slack_dEB = e2t * (2.0 * p.err_B[i] + p.slack_dB[i]);
        const double c = (p.A[i] <= thresh) ? b : a;
        const double rhs = p.dA[i] / c * (1.0 + alpha - p.A[i] / (2.0 * kPi));
        const double slack_rhs =
            p.slack_dA[i] / c * std::abs(1.0 + alpha - p.A[i] / (2.0 * kPi)) +
            std::abs(p.dA[i]) * p.err_A[i] / (2.0 * kPi * c);
        ln.value = dEB;
        ln.margin = rhs - dEB;
        ln.slack = slack_dEB + slack_rhs + 1e-12;
        out.differential.lines.push_back(ln);
    }
    out.differential = finalize_report(std::move(out.differential));

    // integrated bound: the shallow side enters through
    //   H = max over A(T) < threshold of e^{2T}B(T) - G_b(A(T)),
    //   G_b(A) = ((1+alpha)A - A^2/4pi)/b,
    // which vanishes identically when the shallow branch has K = b.
    double eb_high = 0.0, eb_high_err = 0.0;
    bool have_high = false;
    for (std::size_t j = 0; j < n; ++j) {
        if (p.A[j] < thresh) {
            const double gb = ((1.0 + alpha) * p.A[j] -
                               p.A[j] * p.A[j] / (4.0 * kPi)) / b;
            const double v = std::exp(2.0 * p.t[j]) * p.B[j] - gb;
            if (!have_high || v > eb_high) {
                have_high = true;
                eb_high = v;
                eb_high_err = std::exp(2.0 * p.t[j]) * p.err_B[j] +
                              std::abs(1.0 + alpha - p.A[j] / (2.0 * kPi)) / b *
                                  p.err_A[j];
            }
        }
    }
    out.integrated.name = "integrated";
    for (std::size_t i = 0; i < n; ++i) {
        if (!(p.A[i] > thresh)) continue;
        CheckLine ln;
        ln.t = p.t[i];
        ln.what = "integrated";
        const double A = p.A[i];
        const double rhs = A * A / (4.0 * a * kPi) - (1.0 + alpha) / a * A +
                           kPi * (1.0 + alpha) * (1.0 + alpha) * (1.0 / a - 1.0 / b);
        const double e2t = std::exp(2.0 * p.t[i]);
        const double lhs = (have_high ? eb_high : 0.0) - e2t * p.B[i];
        ln.value = lhs;
        ln.margin = rhs - lhs;
        ln.slack = std::abs(A / (2.0 * a * kPi) - (1.0 + alpha) / a) * p.err_A[i] +
                   e2t * p.err_B[i] + eb_high_err + 1e-12;
        out.integrated.lines.push_back(ln);
    }
    out.integrated = finalize_report(std::move(out.integrated));

    out.x = p.A[n - 1] / thresh;
    out.implied_ratio_upper = (out.x - 1.0) * (out.x - 1.0);
    const double s = std::sqrt(a / b);
    out.rel_gap = (out.x - 1.0 - s) / (1.0 + s);
    out.passed = out.differential.passed && out.integrated.passed;
    return out;
}

LimitProfile::LimitProfile(double alpha, double beta1)
    : alpha_(alpha),
      beta1_(beta1),
      rho0_(sqr((1.0 + beta1) / (1.0 + alpha))),
      t_seam_(std::log1p(alpha)),
      fb_(alpha, beta1) {
    if (!(beta1 > -1.0) || !(beta1 <= alpha) || !(alpha <= 0.0))
        throw pinch_error("limit_profile: need -1 < beta1 <= alpha <= 0");
}

double LimitProfile::t_max() const {
    return alpha_ < 0.0 ? kInf : std::log(2.0);
}

double LimitProfile::r_of_t(double t) const {
    if (t >= t_max()) return 0.0;
    auto g = [&](double w) { return fb_.value_r(std::exp(w)) - t; };
    double w_hi = 0.0;
    while (g(w_hi) > 0.0) {
        w_hi += std::log(4.0);
        if (w_hi > 800.0) throw pinch_error("limit_profile: level radius out of range");
    }
    const double w_lo_0 = std::log(1e-300);
    if (g(w_lo_0) <= 0.0) throw pinch_error("limit_profile: t above the profile maximum");
    return std::exp(find_root(g, w_lo_0, w_hi, 1e-14));
}

double LimitProfile::A_star(double t) const {
    const double r = r_of_t(t);
    return r > 0.0 ? fb_.mass_to(r) : 0.0;
}

double LimitProfile::B_star(double t) const {
    const double r = r_of_t(t);
    return kPi * r * r;
}

double LimitProfile::quoted_e2tB(double A, bool inner_branch) const {
    const double one_a = 1.0 + alpha_;
    if (inner_branch) {
        return -A * A / (4.0 * rho0_ * rho0_ * kPi) + one_a / rho0_ * A;
    }
    return -A * A / (4.0 * rho0_ * kPi) + one_a / rho0_ * A -
           kPi * one_a * one_a * (1.0 / rho0_ - 1.0);
}

LimitProfile::SystemReport LimitProfile::check_printed_system(
    int samples_per_branch, double tol) const {
    SystemReport rep;
    double inner_scale = 0.0, outer_scale = 0.0;
    auto probe = [&](double t, bool inner) {
        const double r = r_of_t(t);
        if (!(r > 0.0)) return;
        const double A = fb_.mass_to(r);
        const double e2tB = std::exp(2.0 * t) * kPi * r * r;
        const double quoted = quoted_e2tB(A, inner);
        const double d = std::abs(quoted - e2tB);
        if (inner) {
            rep.inner_discrepancy = std::max(rep.inner_discrepancy, d);
            inner_scale = std::max(inner_scale, std::abs(e2tB));
        } else {
            rep.outer_discrepancy = std::max(rep.outer_discrepancy, d);
            outer_scale = std::max(outer_scale, std::abs(e2tB));
        }
        // first equation of the system, exact for every radial profile
        const double up = fb_.slope_r(r);
        const double Bp = 2.0 * kPi * r / up;
        const double res = std::abs(4.0 * kPi * kPi * r * r + Bp * (A - 2.0 * kPi * alpha_)) /
                           (1.0 + 4.0 * kPi * kPi * r * r);
        rep.ode_residual = std::max(rep.ode_residual, res);
    };
    const double span = std::isfinite(t_max()) ? (t_max() - t_seam_) : 3.0;
    for (int k = 1; k <= samples_per_branch; ++k) {
        probe(t_seam_ + span * k / (samples_per_branch + 1), true);
        probe(t_seam_ - 3.0 * k / samples_per_branch, false);
    }
    rep.quoted_matches = rep.inner_discrepancy <= tol * (1.0 + inner_scale) &&
                         rep.outer_discrepancy <= tol * (1.0 + outer_scale);
    return rep;
}

void write_profile_csv(const LevelSetProfile& p, std::ostream& os) {
    os << "t,A,B,L,defect,n_components,largest_component_area\n";
    char buf[512];
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n",
                      p.t[i], p.A[i], p.B[i], p.L[i], p.defect[i],
                      p.n_components(i), p.largest_component(i));
        os << buf;
    }
}

std::string profile_csv(const LevelSetProfile& p) {
    std::ostringstream os;
    write_profile_csv(p, os);
    return os.str();
}

}  // namespace pinchlab
