#include "pinchlab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <utility>

#include "pinchlab/quadrature.hpp"

namespace pinchlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Small dense LU with partial pivoting, used as the multigrid base solve.

struct DenseLU {
    int n = 0;
    std::vector<double> a;  // row-major, overwritten by the factors
    std::vector<int> piv;

    void factor() {
        piv.assign(n, 0);
        for (int k = 0; k < n; ++k) {
            int p = k;
            double best = std::fabs(a[std::size_t(k) * n + k]);
            for (int r = k + 1; r < n; ++r) {
                double v = std::fabs(a[std::size_t(r) * n + k]);
                if (v > best) {
                    best = v;
                    p = r;
                }
            }
            piv[k] = p;
            if (p != k) {
                for (int c = 0; c < n; ++c)
                    std::swap(a[std::size_t(k) * n + c], a[std::size_t(p) * n + c]);
            }
            double d = a[std::size_t(k) * n + k];
            if (std::fabs(d) < 1e-250) {
                d = (d < 0.0 ? -1e-250 : 1e-250);
                a[std::size_t(k) * n + k] = d;
            }
            for (int r = k + 1; r < n; ++r) {
                double m = a[std::size_t(r) * n + k] / d;
                a[std::size_t(r) * n + k] = m;
                if (m == 0.0) continue;
                for (int c = k + 1; c < n; ++c)
                    a[std::size_t(r) * n + c] -= m * a[std::size_t(k) * n + c];
            }
        }
    }

    void solve(std::vector<double>& x) const {
        for (int k = 0; k < n; ++k) {
            if (piv[k] != k) std::swap(x[k], x[piv[k]]);
            double xk = x[k];
            if (xk == 0.0) continue;
            for (int r = k + 1; r < n; ++r) x[r] -= a[std::size_t(r) * n + k] * xk;
        }
        for (int k = n - 1; k >= 0; --k) {
            double s = x[k];
            for (int c = k + 1; c < n; ++c) s -= a[std::size_t(k) * n + c] * x[c];
            x[k] = s / a[std::size_t(k) * n + k];
        }
    }
};

// ---------------------------------------------------------------------------
// Geometric multigrid V-cycle for L5 + diag on a square grid with a fixed
// boundary ring. Used as a right preconditioner, so one cycle per apply.

struct MgLevel {
    int n = 0;
    double ih2 = 0.0;
    std::vector<double> diag, x, b, r;
};

void mg_smooth(MgLevel& L, int sweeps) {
    const int n = L.n;
    const double ih2 = L.ih2;
    for (int s = 0; s < sweeps; ++s) {
        for (int color = 0; color < 2; ++color) {
            for (int j = 1; j < n - 1; ++j) {
                int i0 = (((1 + j) & 1) == color) ? 1 : 2;
                for (int i = i0; i < n - 1; i += 2) {
                    int id = j * n + i;
                    double off =
                        (L.x[id - 1] + L.x[id + 1] + L.x[id - n] + L.x[id + n]) * ih2;
                    double den = -4.0 * ih2 + L.diag[id];
                    // A diagonal spike must not flip the update's sign or the
                    // sweep amplifies instead of smoothing; keep den negative.
                    if (den > -0.5 * ih2) den = -0.5 * ih2;
                    L.x[id] = (L.b[id] - off) / den;
                }
            }
        }
    }
}

void mg_residual(MgLevel& L) {
    const int n = L.n;
    const double ih2 = L.ih2;
    std::fill(L.r.begin(), L.r.end(), 0.0);
    for (int j = 1; j < n - 1; ++j) {
        for (int i = 1; i < n - 1; ++i) {
            int id = j * n + i;
            double ax = (L.x[id - 1] + L.x[id + 1] + L.x[id - n] + L.x[id + n] -
                         4.0 * L.x[id]) *
                            ih2 +
                        L.diag[id] * L.x[id];
            L.r[id] = L.b[id] - ax;
        }
    }
}

void mg_restrict(const std::vector<double>& f, int nf, std::vector<double>& c, int nc) {
    std::fill(c.begin(), c.end(), 0.0);
    for (int J = 1; J < nc - 1; ++J) {
        for (int I = 1; I < nc - 1; ++I) {
            int id = (2 * J) * nf + 2 * I;
            c[J * nc + I] = (4.0 * f[id] +
                             2.0 * (f[id - 1] + f[id + 1] + f[id - nf] + f[id + nf]) +
                             f[id - nf - 1] + f[id - nf + 1] + f[id + nf - 1] +
                             f[id + nf + 1]) /
                            16.0;
        }
    }
}

void mg_prolong_add(const std::vector<double>& c, int nc, std::vector<double>& f, int nf) {
    for (int j = 1; j < nf - 1; ++j) {
        int J = j >> 1;
        for (int i = 1; i < nf - 1; ++i) {
            int I = i >> 1;
            double v;
            if (!(i & 1) && !(j & 1)) v = c[J * nc + I];
            else if ((i & 1) && !(j & 1)) v = 0.5 * (c[J * nc + I] + c[J * nc + I + 1]);
            else if (!(i & 1) && (j & 1)) v = 0.5 * (c[J * nc + I] + c[(J + 1) * nc + I]);
            else
                v = 0.25 * (c[J * nc + I] + c[J * nc + I + 1] + c[(J + 1) * nc + I] +
                            c[(J + 1) * nc + I + 1]);
            f[j * nf + i] += v;
        }
    }
}

struct Multigrid {
    std::vector<MgLevel> lv;
    DenseLU lu;
    std::vector<double> base_rhs;

    void init(int n0, double h0) {
        lv.clear();
        int n = n0;
        double h = h0;
        for (;;) {
            MgLevel L;
            L.n = n;
            L.ih2 = 1.0 / (h * h);
            L.diag.assign(std::size_t(n) * n, 0.0);
            L.x = L.b = L.r = L.diag;
            lv.push_back(std::move(L));
            if ((n - 1) % 2 == 0 && (n - 1) > 16) {
                n = (n - 1) / 2 + 1;
                h *= 2.0;
            } else {
                break;
            }
        }
        if (lv.back().n > 33)
            throw pinch_error(
                "grid does not coarsen to a small multigrid base; choose a cell count "
                "of the form m * 2^k with m <= 16");
        lu.n = lv.back().n * lv.back().n;
        lu.a.assign(std::size_t(lu.n) * lu.n, 0.0);
        base_rhs.assign(lu.n, 0.0);
    }

    void set_diag(const std::vector<double>& dfine) {
        lv[0].diag = dfine;
        for (std::size_t k = 0; k + 1 < lv.size(); ++k)
            mg_restrict(lv[k].diag, lv[k].n, lv[k + 1].diag, lv[k + 1].n);
        const MgLevel& C = lv.back();
        const int n = C.n;
        const int N = n * n;
        const double ih2 = C.ih2;
        std::fill(lu.a.begin(), lu.a.end(), 0.0);
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                int id = j * n + i;
                if (i == 0 || j == 0 || i == n - 1 || j == n - 1) {
                    lu.a[std::size_t(id) * N + id] = 1.0;
                    continue;
                }
                lu.a[std::size_t(id) * N + id] = -4.0 * ih2 + C.diag[id];
                lu.a[std::size_t(id) * N + id - 1] = ih2;
                lu.a[std::size_t(id) * N + id + 1] = ih2;
                lu.a[std::size_t(id) * N + id - n] = ih2;
                lu.a[std::size_t(id) * N + id + n] = ih2;
            }
        }
        lu.factor();
    }

    void vcycle(std::size_t k) {
        MgLevel& L = lv[k];
        if (k + 1 == lv.size()) {
            base_rhs.assign(L.b.begin(), L.b.end());
            lu.solve(base_rhs);
            std::copy(base_rhs.begin(), base_rhs.end(), L.x.begin());
            return;
        }
        mg_smooth(L, 2);
        mg_residual(L);
        MgLevel& C = lv[k + 1];
        mg_restrict(L.r, L.n, C.b, C.n);
        std::fill(C.x.begin(), C.x.end(), 0.0);
        vcycle(k + 1);
        mg_prolong_add(C.x, C.n, L.x, L.n);
        mg_smooth(L, 2);
    }

    void apply(const std::vector<double>& r, std::vector<double>& out) {
        MgLevel& L = lv[0];
        std::copy(r.begin(), r.end(), L.b.begin());
        std::fill(L.x.begin(), L.x.end(), 0.0);
        vcycle(0);
        std::copy(L.x.begin(), L.x.end(), out.begin());
    }
};

// ---------------------------------------------------------------------------
// Preconditioned BiCGStab. Deterministic: the shadow vector starts as the
// right-hand side and breakdowns restart from the current residual.

using LinOp = std::function<void(const std::vector<double>&, std::vector<double>&)>;

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double vnorm(const std::vector<double>& a) { return std::sqrt(vdot(a, a)); }

double bicgstab(const LinOp& A, const LinOp& M, const std::vector<double>& rhs,
                std::vector<double>& x, double rtol, int maxit) {
    const std::size_t N = rhs.size();
    std::fill(x.begin(), x.end(), 0.0);
    double nb = vnorm(rhs);
    if (nb == 0.0) return 0.0;
    std::vector<double> r(rhs), rhat(rhs), p(N, 0.0), v(N, 0.0), y(N, 0.0), z(N, 0.0),
        s(N, 0.0), t(N, 0.0);
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    bool fresh = true;
    double rn = nb;
    for (int it = 0; it < maxit && rn > rtol * nb; ++it) {
        double rho1 = vdot(rhat, r);
        if (std::fabs(rho1) < 1e-300 * nb * nb) {
            rhat = r;
            rho1 = vdot(r, r);
            fresh = true;
            if (rho1 == 0.0) break;
        }
        if (fresh) {
            p = r;
            fresh = false;
        } else {
            double beta = (rho1 / rho) * (alpha / omega);
            for (std::size_t i = 0; i < N; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        rho = rho1;
        M(p, y);
        A(y, v);
        double den = vdot(rhat, v);
        if (std::fabs(den) < 1e-300) {
            rhat = r;
            fresh = true;
            continue;
        }
        alpha = rho / den;
        for (std::size_t i = 0; i < N; ++i) s[i] = r[i] - alpha * v[i];
        double sn = vnorm(s);
        if (sn <= rtol * nb) {
            for (std::size_t i = 0; i < N; ++i) x[i] += alpha * y[i];
            rn = sn;
            break;
        }
        M(s, z);
        A(z, t);
        double tt = vdot(t, t);
        if (tt == 0.0) {
            for (std::size_t i = 0; i < N; ++i) x[i] += alpha * y[i];
            rn = sn;
            break;
        }
        omega = vdot(t, s) / tt;
        for (std::size_t i = 0; i < N; ++i) {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rn = vnorm(r);
        if (omega == 0.0) fresh = true;
    }
    return rn / nb;
}

// ---------------------------------------------------------------------------
// Damped Newton iteration shared by the box and disk problems. The residual
// callback fills F and returns its max norm; the step callback solves
// (J - sigma I) d = -F around the current iterate.
//
// When an energy callback is present the residual is a gradient, F = -grad E
// in the callback's own scaling (grad_scale * F per unknown), and the line
// search enforces Armijo decrease of E instead of the residual norm. The
// shift sigma > 0 keeps d a descent direction for E while the Hessian is
// still indefinite far from the minimiser; it is proportional to the
// residual, so the quadratic Newton tail is preserved.

struct NewtonProblem {
    std::function<double(const std::vector<double>&, std::vector<double>&)> residual;
    std::function<void(const std::vector<double>&, const std::vector<double>&,
                       std::vector<double>&, double)>
        step;
    std::function<double(const std::vector<double>&)> energy;
    double grad_scale = 1.0;
};

void run_newton(std::vector<double>& x, const SolverConfig& cfg, SolveReport& rep,
                const NewtonProblem& P) {
    const std::size_t N = x.size();
    std::vector<double> F(N), Ft(N), d(N), trial(N);
    double fn = P.residual(x, F);
    double en = P.energy ? P.energy(x) : 0.0;
    rep.residual = fn;
    rep.residual_history.push_back(fn);
    int it = 0;
    while (fn > cfg.tol_residual) {
        if (it >= cfg.max_newton) {
            std::ostringstream os;
            os << "newton iteration stalled at residual " << fn << " after " << it
               << " steps (tolerance " << cfg.tol_residual << ")";
            throw pinch_error(os.str());
        }
        double sigma = 0.0, slope = 0.0;
        if (P.energy) {
            sigma = std::min(fn, 1e12);
            for (int tries = 0;; ++tries) {
                P.step(x, F, d, sigma);
                slope = -P.grad_scale * vdot(F, d);
                if (slope < 0.0) break;
                if (tries >= 8) {
                    std::ostringstream os;
                    os << "newton step is not a descent direction at residual " << fn
                       << " even under a strong diagonal shift";
                    throw pinch_error(os.str());
                }
                sigma = (sigma == 0.0 ? 1.0 : sigma) * 16.0;
            }
        } else {
            P.step(x, F, d, 0.0);
        }
        double dmax = 0.0;
        for (std::size_t i = 0; i < N; ++i) dmax = std::max(dmax, std::fabs(d[i]));
        // Cap the max-norm update at 2 per step so a poor direction cannot
        // leave the basin; the cap is inactive near the solution.
        const double lam0 = std::min(1.0, 2.0 / std::max(dmax, 1e-300));
        double lam = lam0, ft = 0.0, et = 0.0;
        bool ok = false, guarded = false;
        for (; lam >= lam0 * cfg.damping_min; lam *= 0.5) {
            double mx = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                trial[i] = x[i] + lam * d[i];
                mx = std::max(mx, std::fabs(trial[i]));
            }
            if (mx > cfg.blowup_guard) {
                guarded = true;
                continue;
            }
            ft = P.residual(trial, Ft);
            if (P.energy) {
                et = P.energy(trial);
                if (std::isfinite(et) && et <= en + 1e-4 * lam * slope) {
                    ok = true;
                    break;
                }
            } else if (ft <= (1.0 - 0.25 * lam) * fn) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            std::ostringstream os;
            os << "newton iteration diverged: no damping in [" << cfg.damping_min
               << ", 1] reduced the " << (P.energy ? "energy at residual " : "residual ")
               << fn;
            if (guarded)
                os << " (trial iterates past the blow-up guard " << cfg.blowup_guard
                   << " were rejected)";
            os << "; damping history:";
            for (double dh : rep.damping_history) os << ' ' << dh;
            throw pinch_error(os.str());
        }
        if (std::getenv("PINCHLAB_SOLVER_TRACE") != nullptr) {
            double xmin = kInf, xmax = -kInf;
            std::size_t imax = 0;
            for (std::size_t i = 0; i < N; ++i) {
                xmin = std::min(xmin, trial[i]);
                if (trial[i] > xmax) {
                    xmax = trial[i];
                    imax = i;
                }
            }
            std::fprintf(stderr,
                         "  [newton] it=%d fn=%.4e sigma=%.2e dmax=%.3e lam=%.3e ft=%.4e "
                         "e=%.8e x=[%.3f,%.3f@%zu]\n",
                         it, fn, sigma, dmax, lam, ft, et, xmin, xmax, imax);
            if (std::getenv("PINCHLAB_SOLVER_PROFILE") != nullptr) {
                std::size_t jrow = imax / std::size_t(std::sqrt(double(N)));
                std::size_t nn = std::size_t(std::sqrt(double(N)));
                std::fprintf(stderr, "    row %zu:", jrow);
                for (std::size_t i = 0; i < nn; i += nn / 16)
                    std::fprintf(stderr, " %.2f", trial[jrow * nn + i]);
                std::size_t ic = imax % nn;
                std::fprintf(stderr, " | near:");
                for (std::size_t i = (ic >= 5 ? ic - 5 : 0); i <= ic + 5 && i < nn; ++i)
                    std::fprintf(stderr, " %.2f", trial[jrow * nn + i]);
                std::fprintf(stderr, "\n");
            }
        }
        x.swap(trial);
        F.swap(Ft);
        fn = ft;
        en = et;
        ++it;
        ++rep.newton_iterations;
        rep.residual = fn;
        rep.residual_history.push_back(fn);
        rep.damping_history.push_back(lam);
    }
}

// ---------------------------------------------------------------------------
// Box discretization of the regular part.

struct ConeInfo {
    Vec2 z;
    double beta = 0.0;
    double p = 0.0, ka = 0.0, kb = 0.0, kc = 0.0;  // kernel rho^p - ka - kb r^2 - kc r^4
    double near_radius = 0.0;
};

// Pointwise kernel value; zero at and beyond the support radius R0.
double kernel_value(const ConeInfo& c, double rho, double R0) {
    if (rho >= R0) return 0.0;
    double r2 = rho * rho;
    return std::pow(rho, c.p) - c.ka - (c.kb + c.kc * r2) * r2;
}

double kernel_laplacian(const ConeInfo& c, double rho, double R0) {
    if (rho >= R0) return 0.0;
    return c.p * c.p * std::pow(rho, c.p - 2.0) - 4.0 * c.kb - 16.0 * c.kc * rho * rho;
}

// Cells whose center sits close to a cone carry cell-averaged data: the
// envelope average of rho^{2 beta} and the average of the kernel Laplacian,
// so the scheme keeps its order where the integrand is not smooth.
struct NearCell {
    int idx = 0;
    double w = 0.0;      // cell average of rho^{2 beta} about the owning cone
    double gbase = 0.0;  // background + the other cones' log terms at the node
    std::vector<double> cv, dcv;  // per-cone kernel value / Laplacian
};

struct BoxSystem {
    GridBox box{};
    int n = 0;
    std::size_t N = 0;
    double h = 0.0, ih2 = 0.0;
    double K0 = 0.0;
    double R0 = 0.0;
    double nu = 0.0, binf = 0.0, fw = 0.0;
    // theta > 0 switches the residual to the mass-normalised equation: the
    // curvature scale becomes theta / (interior exponential mass), so a
    // uniform lift of the interior no longer feeds back into the source term.
    double theta = 0.0;
    std::vector<ConeInfo> cones;

    std::vector<double> baselog;  // sum_i beta_i ln rho_i + background value
    std::vector<double> dbg;      // background Laplacian
    std::vector<NearCell> near;
    struct PwList {
        std::vector<int> idx;
        std::vector<double> cv, dcv;
    };
    std::vector<PwList> pw;  // kernel support outside the near zones, per cone

    std::vector<double> gsum, env, src, diag;

    bool on_boundary(int i, int j) const {
        return i == 0 || j == 0 || i == n - 1 || j == n - 1;
    }

    void setup(const ConicDivisor& d, double k0, const SolverConfig& cfg);
    void rebuild_sources(const std::vector<double>& gamma);
    double interior_mass(const std::vector<double>& hv) const;
    double residual(const std::vector<double>& hv, std::vector<double>& F) const;
    void apply_jacobian(const std::vector<double>& v, std::vector<double>& out) const;
};

void BoxSystem::setup(const ConicDivisor& d, double k0, const SolverConfig& cfg) {
    if (!(cfg.box_half > 0.0) || !(cfg.spacing > 0.0))
        throw pinch_error("box half-width and spacing must be positive");
    double cells_f = 2.0 * cfg.box_half / cfg.spacing;
    long cells = std::lround(cells_f);
    if (cells < 32 || std::fabs(cells_f - double(cells)) > 1e-9 * cells_f)
        throw pinch_error("spacing must divide the box width into at least 32 cells");
    n = int(cells) + 1;
    N = std::size_t(n) * n;
    h = 2.0 * cfg.box_half / double(cells);
    ih2 = 1.0 / (h * h);
    box = GridBox{-cfg.box_half, -cfg.box_half, h, n, n};
    K0 = k0;
    nu = 2.0 + d.total();
    binf = d.has_infinite_point() ? d.beta_at_infinity() : 0.0;
    fw = d.total() - binf;

    double max_norm = 0.0;
    for (const auto& q : d.points()) {
        if (q.infinite) continue;
        ConeInfo c;
        c.z = q.position;
        c.beta = q.beta;
        c.p = 2.0 + 2.0 * q.beta;
        cones.push_back(c);
        max_norm = std::max(max_norm, q.position.norm());
    }
    R0 = std::min(cfg.correction_radius, cfg.box_half - max_norm - 2.0 * h);
    if (!cones.empty() && R0 < 8.0 * h)
        throw pinch_error(
            "cone points sit too close to the box edge for their smoothing kernels; "
            "enlarge the box or refine the spacing");
    for (auto& c : cones) {
        double R = R0;
        c.kc = c.p * (c.p - 2.0) / 8.0 * std::pow(R, c.p - 4.0);
        c.kb = c.p * (4.0 - c.p) / 4.0 * std::pow(R, c.p - 2.0);
        c.ka = std::pow(R, c.p) * (1.0 - 0.75 * c.p + c.p * c.p / 8.0);
        double minsep = kInf;
        for (const auto& o : cones)
            if (&o != &c) minsep = std::min(minsep, (o.z - c.z).norm());
        if (minsep < 8.0 * h)
            throw pinch_error(
                "cone points closer than eight grid cells cannot be resolved; refine "
                "the spacing");
        c.near_radius = std::min({64.0 * h, 0.45 * minsep, 0.9 * R0});
    }

    baselog.assign(N, 0.0);
    dbg.assign(N, 0.0);
    gsum.assign(N, 0.0);
    env.assign(N, 0.0);
    src.assign(N, 0.0);
    diag.assign(N, 0.0);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            Vec2 z{box.x0 + i * h, box.y0 + j * h};
            double r2 = z.norm2();
            std::size_t id = std::size_t(j) * n + i;
            dbg[id] = -2.0 * nu / ((1.0 + r2) * (1.0 + r2));
            double bl = -0.5 * nu * std::log1p(r2);
            for (const auto& c : cones) bl += c.beta * std::log((z - c.z).norm());
            baselog[id] = bl;
        }
    }

    std::vector<std::uint8_t> is_near(N, 0);
    const std::size_t nc = cones.size();
    for (std::size_t k = 0; k < nc; ++k) {
        const ConeInfo& c = cones[k];
        double Rn = c.near_radius;
        int i_lo = std::max(1, int(std::ceil((c.z.x - Rn - box.x0) / h - 1e-12)));
        int i_hi = std::min(n - 2, int(std::floor((c.z.x + Rn - box.x0) / h + 1e-12)));
        int j_lo = std::max(1, int(std::ceil((c.z.y - Rn - box.y0) / h - 1e-12)));
        int j_hi = std::min(n - 2, int(std::floor((c.z.y + Rn - box.y0) / h + 1e-12)));
        for (int j = j_lo; j <= j_hi; ++j) {
            for (int i = i_lo; i <= i_hi; ++i) {
                Vec2 z{box.x0 + i * h, box.y0 + j * h};
                Vec2 rel = z - c.z;
                if (rel.norm() > Rn) continue;
                std::size_t id = std::size_t(j) * n + i;
                if (is_near[id])
                    throw pinch_error("internal: overlapping near-cone zones");
                is_near[id] = 1;
                NearCell ncell;
                ncell.idx = int(id);
                ncell.w = detail::cell_average_power(rel, h, c.beta);
                double rho2_avg = rel.norm2() + h * h / 6.0;
                double gb = -0.5 * nu * std::log1p(z.norm2());
                ncell.cv.assign(nc, 0.0);
                ncell.dcv.assign(nc, 0.0);
                for (std::size_t m = 0; m < nc; ++m) {
                    if (m == k) {
                        ncell.cv[m] = kernel_value(c, rel.norm(), R0);
                        if (rel.norm() == 0.0) ncell.cv[m] = -c.ka;
                        ncell.dcv[m] = c.p * c.p * ncell.w - 4.0 * c.kb -
                                       16.0 * c.kc * rho2_avg;
                    } else {
                        double rho = (z - cones[m].z).norm();
                        gb += cones[m].beta * std::log(rho);
                        ncell.cv[m] = kernel_value(cones[m], rho, R0);
                        ncell.dcv[m] = kernel_laplacian(cones[m], rho, R0);
                    }
                }
                ncell.gbase = gb;
                near.push_back(std::move(ncell));
            }
        }
    }

    pw.assign(nc, PwList{});
    for (std::size_t k = 0; k < nc; ++k) {
        const ConeInfo& c = cones[k];
        int i_lo = std::max(1, int(std::ceil((c.z.x - R0 - box.x0) / h - 1e-12)));
        int i_hi = std::min(n - 2, int(std::floor((c.z.x + R0 - box.x0) / h + 1e-12)));
        int j_lo = std::max(1, int(std::ceil((c.z.y - R0 - box.y0) / h - 1e-12)));
        int j_hi = std::min(n - 2, int(std::floor((c.z.y + R0 - box.y0) / h + 1e-12)));
        for (int j = j_lo; j <= j_hi; ++j) {
            for (int i = i_lo; i <= i_hi; ++i) {
                Vec2 z{box.x0 + i * h, box.y0 + j * h};
                double rho = (z - c.z).norm();
                if (rho >= R0) continue;
                std::size_t id = std::size_t(j) * n + i;
                if (is_near[id]) continue;
                pw[k].idx.push_back(int(id));
                pw[k].cv.push_back(kernel_value(c, rho, R0));
                pw[k].dcv.push_back(kernel_laplacian(c, rho, R0));
            }
        }
    }
}

void BoxSystem::rebuild_sources(const std::vector<double>& gamma) {
    std::fill(gsum.begin(), gsum.end(), 0.0);
    for (std::size_t k = 0; k < pw.size(); ++k) {
        double g = gamma[k];
        const PwList& L = pw[k];
        for (std::size_t t = 0; t < L.idx.size(); ++t) gsum[L.idx[t]] += g * L.cv[t];
    }
    for (std::size_t id = 0; id < N; ++id) {
        env[id] = std::exp(2.0 * (baselog[id] + gsum[id]));
        src[id] = dbg[id];
    }
    for (std::size_t k = 0; k < pw.size(); ++k) {
        double g = gamma[k];
        const PwList& L = pw[k];
        for (std::size_t t = 0; t < L.idx.size(); ++t) src[L.idx[t]] += g * L.dcv[t];
    }
    for (const NearCell& ncell : near) {
        double gs = 0.0, ds = 0.0;
        for (std::size_t m = 0; m < ncell.cv.size(); ++m) {
            gs += gamma[m] * ncell.cv[m];
            ds += gamma[m] * ncell.dcv[m];
        }
        env[ncell.idx] = ncell.w * std::exp(2.0 * (ncell.gbase + gs));
        src[ncell.idx] = dbg[ncell.idx] + ds;
    }
    if (std::getenv("PINCHLAB_SOLVER_TRACE") != nullptr) {
        double emax = 0.0;
        std::size_t eidx = 0;
        for (std::size_t id = 0; id < N; ++id)
            if (env[id] > emax) {
                emax = env[id];
                eidx = id;
            }
        std::fprintf(stderr, "[env] max=%.4e at id=%zu (i=%d j=%d)\n", emax, eidx,
                     int(eidx % std::size_t(n)), int(eidx / std::size_t(n)));
    }
}

double BoxSystem::interior_mass(const std::vector<double>& hv) const {
    double m = 0.0;
    for (int j = 1; j < n - 1; ++j) {
        const std::size_t row = std::size_t(j) * n;
        for (int i = 1; i < n - 1; ++i) {
            std::size_t id = row + i;
            m += std::exp(2.0 * hv[id]) * env[id];
        }
    }
    return m * h * h;
}

double BoxSystem::residual(const std::vector<double>& hv, std::vector<double>& F) const {
    const double k = theta > 0.0 ? theta / interior_mass(hv) : K0;
    double mx = 0.0;
    std::fill(F.begin(), F.end(), 0.0);
    for (int j = 1; j < n - 1; ++j) {
        const std::size_t row = std::size_t(j) * n;
        for (int i = 1; i < n - 1; ++i) {
            std::size_t id = row + i;
            double lap = (hv[id - 1] + hv[id + 1] + hv[id - n] + hv[id + n] -
                          4.0 * hv[id]) *
                         ih2;
            double f = lap + src[id] + k * std::exp(2.0 * hv[id]) * env[id];
            F[id] = f;
            double af = std::fabs(f);
            if (af > mx) mx = af;
        }
    }
    return mx;
}

void BoxSystem::apply_jacobian(const std::vector<double>& v, std::vector<double>& out) const {
    for (int j = 0; j < n; ++j) {
        const std::size_t row = std::size_t(j) * n;
        if (j == 0 || j == n - 1) {
            for (int i = 0; i < n; ++i) out[row + i] = v[row + i];
            continue;
        }
        out[row] = v[row];
        out[row + n - 1] = v[row + n - 1];
        for (int i = 1; i < n - 1; ++i) {
            std::size_t id = row + i;
            out[id] = (v[id - 1] + v[id + 1] + v[id - n] + v[id + n] - 4.0 * v[id]) * ih2 +
                      diag[id] * v[id];
        }
    }
}

// Far-field boundary data: the radial exterior model of dilation lam,
// written in regular-part form. The additive constant cancels, so the trace
// depends on lam alone.
double far_model(double r, double lam, double binf, double fw, double nu, double K0) {
    RadialBranch ext(binf, lam, -0.5 * std::log(K0));
    return ext.value_r(r) - fw * std::log(r) + 0.5 * nu * std::log1p(r * r);
}

double lambda_of_cinf(double c_inf, double binf, double K0) {
    return std::exp((std::log(2.0 * (1.0 + binf)) - 0.5 * std::log(K0) - c_inf) /
                    (1.0 + binf));
}

double cinf_of_lambda(double lam, double binf, double K0) {
    return std::log(2.0 * (1.0 + binf)) - (1.0 + binf) * std::log(lam) -
           0.5 * std::log(K0);
}

void set_boundary(const BoxSystem& S, std::vector<double>& hv, double lam, double k0) {
    const int n = S.n;
    RadialBranch ext(S.binf, lam, -0.5 * std::log(k0));
    auto bc = [&](int i, int j) {
        Vec2 z{S.box.x0 + i * S.h, S.box.y0 + j * S.h};
        double r = z.norm();
        hv[std::size_t(j) * n + i] =
            ext.value_r(r) - S.fw * std::log(r) + 0.5 * S.nu * std::log1p(r * r);
    };
    for (int i = 0; i < n; ++i) {
        bc(i, 0);
        bc(i, n - 1);
    }
    for (int j = 1; j < n - 1; ++j) {
        bc(0, j);
        bc(n - 1, j);
    }
}

double bilinear_sample(const std::vector<double>& v, const GridBox& b, const Vec2& z) {
    double fx = (z.x - b.x0) / b.h;
    double fy = (z.y - b.y0) / b.h;
    int i = std::min(std::max(int(std::floor(fx)), 0), b.nx - 2);
    int j = std::min(std::max(int(std::floor(fy)), 0), b.ny - 2);
    double tx = fx - i, ty = fy - j;
    std::size_t id = std::size_t(j) * b.nx + i;
    return (1.0 - tx) * (1.0 - ty) * v[id] + tx * (1.0 - ty) * v[id + 1] +
           (1.0 - tx) * ty * v[id + b.nx] + tx * ty * v[id + b.nx + 1];
}

double circle_average_raw(const std::vector<double>& v, const GridBox& b, double r,
                          int samples) {
    double s = 0.0;
    for (int i = 0; i < samples; ++i) {
        double th = 2.0 * kPi * i / samples;
        s += bilinear_sample(v, b, Vec2{r * std::cos(th), r * std::sin(th)});
    }
    return s / samples;
}

// One pass of the kernel-amplitude fixed point: gamma_k = -keff e^{2 c_k} / p_k^2
// with c_k the regular value of u at the cone, read off the current iterate.
// keff is the curvature the iterate actually realises; during the normalised
// stage that is theta / mass, not the requested K0.
std::vector<double> updated_gammas(const BoxSystem& S, const std::vector<double>& hv,
                                   const std::vector<double>& gamma, double keff) {
    std::vector<double> out(gamma.size(), 0.0);
    for (std::size_t k = 0; k < S.cones.size(); ++k) {
        const ConeInfo& c = S.cones[k];
        double ck = bilinear_sample(hv, S.box, c.z) - 0.5 * S.nu * std::log1p(c.z.norm2());
        for (std::size_t m = 0; m < S.cones.size(); ++m) {
            if (m == k) {
                ck += gamma[m] * (-c.ka);
                continue;
            }
            double rho = (c.z - S.cones[m].z).norm();
            ck += S.cones[m].beta * std::log(rho) +
                  gamma[m] * kernel_value(S.cones[m], rho, S.R0);
        }
        out[k] = -keff * std::exp(2.0 * ck) / (c.p * c.p);
    }
    return out;
}

struct WarmState {
    std::vector<double> h;
    std::vector<Vec2> pos;
    std::vector<double> gamma;
    double c_inf = 0.0;
};

void measure_quality(const GridRegularPart& g, const BoxSystem& S, const SolverConfig& cfg,
                     SolveReport& rep) {
    if (!cfg.report_quality) return;
    if (cfg.curvature_probes > 0) {
        double r_lo = std::max(0.15, 8.0 * S.h);
        double r_hi = 0.75 * cfg.box_half;
        double keep_away = std::max(0.12, 8.0 * S.h);
        double worst = 0.0;
        int used = 0;
        const int nr = 12, na = 12;
        for (int ir = 0; ir < nr && used < cfg.curvature_probes; ++ir) {
            double r = r_lo * std::pow(r_hi / r_lo, ir / double(nr - 1));
            for (int ia = 0; ia < na && used < cfg.curvature_probes; ++ia) {
                double th = 2.0 * kPi * (ia / double(na) + 0.3819660112501051 * ir);
                Vec2 z{r * std::cos(th), r * std::sin(th)};
                bool clear = true;
                for (const auto& c : S.cones)
                    if ((z - c.z).norm() < keep_away) {
                        clear = false;
                        break;
                    }
                if (!clear) continue;
                worst = std::max(worst, std::fabs(g.curvature(z) / S.K0 - 1.0));
                ++used;
            }
        }
        if (used > 0) rep.tol_K = worst;
    }
    QuadratureSpec qs;
    qs.radius = std::max(16.0, 1.5 * cfg.box_half);
    QuadratureResult q = integrate_sphere(g, Density::mass, qs);
    rep.gauss_bonnet_mass = q.value;
    rep.gauss_bonnet_target = 2.0 * kPi * S.nu;
    rep.gauss_bonnet_rel =
        std::fabs(q.value - rep.gauss_bonnet_target) / std::fabs(rep.gauss_bonnet_target);
}

GridRegularPart solve_box(const ConicDivisor& d, double K0, const SolverConfig& cfg,
                          SolveReport& rep, const WarmState* warm_in,
                          WarmState* warm_out) {
    if (!(K0 > 0.0)) throw pinch_error("target curvature must be positive");
    if (d.chi() <= 0.0)
        throw pinch_error(
            "no positive-curvature metric: the total cone weight must exceed -2");
    Classification cls = d.classify();
    if (cls.kind == Criticality::supercritical)
        throw pinch_error(
            "no constant-curvature metric exists: the divisor is supercritical "
            "(total weight at least twice the smallest weight)");
    bool pinned = false;
    if (cls.kind == Criticality::critical) {
        bool radial = d.empty();
        if (d.size() == 2 && d.has_infinite_point()) {
            for (const auto& q : d.points())
                if (!q.infinite && q.position.norm() == 0.0) radial = true;
        }
        if (!radial)
            throw pinch_error(
                "critical divisor sits on the existence boundary; only its radially "
                "symmetric cases are solvable (empty divisor, or an equal-weight pair "
                "with the finite cone at the origin)");
        pinned = true;
    }

    BoxSystem S;
    S.setup(d, K0, cfg);

    rep = SolveReport{};
    rep.K0 = K0;

    std::vector<double> gamma(S.cones.size(), 0.0);
    double c_inf = cinf_of_lambda(1.0, S.binf, K0);
    std::vector<double> hv(S.N, c_inf);
    if (warm_in != nullptr) {
        if (warm_in->h.size() != S.N)
            throw pinch_error("internal: warm start grid size mismatch");
        hv = warm_in->h;
        c_inf = warm_in->c_inf;
        for (std::size_t k = 0; k < S.cones.size(); ++k) {
            for (std::size_t m = 0; m < warm_in->pos.size(); ++m) {
                if ((warm_in->pos[m] - S.cones[k].z).norm() < 1e-9) {
                    gamma[k] = warm_in->gamma[m];
                    break;
                }
            }
        }
    }

    const double match_radius = 0.75 * cfg.box_half;
    NewtonProblem P;
    P.residual = [&S](const std::vector<double>& x, std::vector<double>& F) {
        return S.residual(x, F);
    };
    std::vector<double> rhs(S.N, 0.0);
    Multigrid mg;
    mg.init(S.n, S.h);
    std::vector<double> wv(S.N, 0.0);
    P.step = [&](const std::vector<double>& x, const std::vector<double>& F,
                 std::vector<double>& delta, double sigma) {
        const bool normalised = S.theta > 0.0;
        double m = 0.0;
        for (int j = 1; j < S.n - 1; ++j) {
            const std::size_t row = std::size_t(j) * S.n;
            for (int i = 1; i < S.n - 1; ++i) {
                std::size_t id = row + i;
                wv[id] = std::exp(2.0 * x[id]) * S.env[id];
                m += wv[id];
            }
        }
        m *= S.h * S.h;
        const double k = normalised ? S.theta / m : S.K0;
        for (std::size_t id = 0; id < S.N; ++id) S.diag[id] = 2.0 * k * wv[id] - sigma;
        for (int i = 0; i < S.n; ++i) {
            S.diag[i] = 0.0;
            S.diag[std::size_t(S.n - 1) * S.n + i] = 0.0;
            S.diag[std::size_t(i) * S.n] = 0.0;
            S.diag[std::size_t(i) * S.n + S.n - 1] = 0.0;
        }
        for (int i = 0; i < S.n; ++i) {
            wv[i] = 0.0;
            wv[std::size_t(S.n - 1) * S.n + i] = 0.0;
            wv[std::size_t(i) * S.n] = 0.0;
            wv[std::size_t(i) * S.n + S.n - 1] = 0.0;
        }
        mg.set_diag(S.diag);
        for (std::size_t id = 0; id < S.N; ++id) rhs[id] = -F[id];
        // Normalising the mass adds a symmetric rank-one term to the
        // Jacobian; the multigrid preconditioner ignores it and the Krylov
        // iteration absorbs the discrepancy.
        const double rank1 = normalised ? 2.0 * k * S.h * S.h / m : 0.0;
        LinOp A = [&S, &wv, rank1](const std::vector<double>& v, std::vector<double>& out) {
            S.apply_jacobian(v, out);
            if (rank1 != 0.0) {
                double dot = 0.0;
                for (std::size_t id = 0; id < S.N; ++id) dot += wv[id] * v[id];
                for (std::size_t id = 0; id < S.N; ++id) out[id] -= rank1 * wv[id] * dot;
            }
        };
        LinOp M = [&mg](const std::vector<double>& v, std::vector<double>& out) {
            mg.apply(v, out);
        };
        double rel = bicgstab(A, M, rhs, delta, 1e-6, 200);
        if (std::getenv("PINCHLAB_SOLVER_TRACE") != nullptr)
            std::fprintf(stderr, "  [lin] k=%.6g sigma=%.2e rel=%.2e\n", k, sigma, rel);
    };
    // The normalised equation is the gradient of a Dirichlet-plus-log-mass
    // functional that stays coercive even on the grid (a concentration spike
    // gains only linearly through the log while its gradient cost grows
    // quadratically); descending it keeps the iteration honest while the
    // Jacobian is indefinite away from the minimiser.
    P.grad_scale = S.h * S.h;
    P.energy = [&S](const std::vector<double>& x) {
        double quad = 0.0, lin = 0.0, mass = 0.0;
        for (int j = 0; j < S.n; ++j) {
            const std::size_t row = std::size_t(j) * S.n;
            for (int i = 0; i + 1 < S.n; ++i) {
                double dx = x[row + i + 1] - x[row + i];
                quad += dx * dx;
            }
        }
        for (int j = 0; j + 1 < S.n; ++j) {
            const std::size_t row = std::size_t(j) * S.n;
            for (int i = 0; i < S.n; ++i) {
                double dy = x[row + S.n + i] - x[row + i];
                quad += dy * dy;
            }
        }
        for (int j = 1; j < S.n - 1; ++j) {
            const std::size_t row = std::size_t(j) * S.n;
            for (int i = 1; i < S.n - 1; ++i) {
                std::size_t id = row + i;
                lin += S.src[id] * x[id];
                mass += std::exp(2.0 * x[id]) * S.env[id];
            }
        }
        if (std::getenv("PINCHLAB_SOLVER_ENERGY") != nullptr)
            std::fprintf(stderr,
                         "    [energy] quad=%.4e lin=%.4e masslog=%.4e theta=%.4e\n",
                         0.5 * quad, -S.h * S.h * lin,
                         -0.5 * S.theta * std::log(mass * S.h * S.h), S.theta);
        return 0.5 * quad - S.h * S.h * lin -
               0.5 * S.theta * std::log(mass * S.h * S.h);
    };

    // Mass target for the normalised inner solves. The whole surface carries
    // curvature mass 2 pi nu; the exterior radial model accounts in closed
    // form for what lives beyond a disk of the box radius, and the secant
    // below absorbs the square-versus-disk remainder. The cap keeps every
    // visited target strictly below the cheapest concentration threshold
    // 4 pi (1 + beta), under which the log-mass functional stays coercive.
    double theta_cap = 4.0 * kPi;
    for (const auto& c : S.cones)
        theta_cap = std::min(theta_cap, 4.0 * kPi * (1.0 + c.beta));
    theta_cap *= 0.995;

    // Each outer parameter (kernel amplitudes, mass target, far-field level)
    // is driven by a clamped scalar secant on its own residual and freezes as
    // soon as that residual is below its settle tolerance, so the joint fixed
    // point is approached without the parameters stirring each other through
    // solve-level noise. The inner solves run tighter than the reported
    // residual tolerance for the same reason.
    const double tol_phi = 1e-10;
    bool settled = false;
    const bool cold = (warm_in == nullptr);
    std::vector<double> ga_prev, gr_prev;
    double g_prev = std::numeric_limits<double>::quiet_NaN();
    double c_prev = std::numeric_limits<double>::quiet_NaN();
    double phi_prev = std::numeric_limits<double>::quiet_NaN();
    double lt_prev = std::numeric_limits<double>::quiet_NaN();
    double log_theta = std::numeric_limits<double>::quiet_NaN();
    SolverConfig icfg = cfg;
    icfg.tol_residual = std::min(cfg.tol_residual, 1e-12);
    for (int outer = 0; outer < cfg.max_outer; ++outer) {
        rep.outer_iterations = outer + 1;
        double lam = pinned ? 1.0 : lambda_of_cinf(c_inf, S.binf, K0);
        set_boundary(S, hv, lam, K0);
        S.rebuild_sources(gamma);
        if (!std::isfinite(log_theta)) {
            double m_ext = 2.0 + 2.0 * S.binf;
            double tail = std::pow(lam * cfg.box_half, m_ext);
            double mass_out = 2.0 * kPi * m_ext / (1.0 + tail);
            double theta0 = 2.0 * kPi * S.nu - mass_out;
            theta0 = std::max(theta0, 0.1 * kPi * S.nu);
            log_theta = std::log(std::min(theta0, theta_cap));
            if (cold) {
                // Start the interior at the level whose mass already matches
                // the target; the constant-fill inherited from the boundary
                // data can overshoot it badly enough to park the first solve
                // on a spurious high-mass branch.
                double se = 0.0;
                for (int j = 1; j < S.n - 1; ++j)
                    for (int i = 1; i < S.n - 1; ++i)
                        se += S.env[std::size_t(j) * S.n + i];
                se *= S.h * S.h;
                double level = 0.5 * (log_theta - std::log(K0 * se));
                for (int j = 1; j < S.n - 1; ++j)
                    for (int i = 1; i < S.n - 1; ++i)
                        hv[std::size_t(j) * S.n + i] = level;
            }
        }
        S.theta = std::exp(log_theta);
        run_newton(hv, icfg, rep, P);
        // Consistency gap of the mass target: the normalised solve realises
        // curvature theta / mass, which must come back to the requested one.
        double m_cur = S.interior_mass(hv);
        double phi = std::log(K0 * m_cur) - log_theta;
        std::vector<double> gnew = updated_gammas(S, hv, gamma, S.theta / m_cur);
        double dg = 0.0;
        for (std::size_t k = 0; k < gamma.size(); ++k)
            dg = std::max(dg, std::fabs(gnew[k] - gamma[k]));
        double mismatch = 0.0;
        if (!pinned)
            mismatch = circle_average_raw(hv, S.box, match_radius, 720) -
                       far_model(match_radius, lam, S.binf, S.fw, S.nu, K0);
        if (std::getenv("PINCHLAB_SOLVER_TRACE") != nullptr)
            std::fprintf(stderr,
                         "[outer %d] dg=%.3e phi=%.3e mismatch=%.3e c_inf=%.6f "
                         "theta=%.6f\n",
                         outer, dg, phi, mismatch, c_inf, S.theta);
        if (dg <= cfg.tol_gamma && std::fabs(phi) <= tol_phi &&
            (pinned || std::fabs(mismatch) <= cfg.tol_cinf)) {
            settled = true;
            break;
        }
        if (dg > cfg.tol_gamma) {
            if (ga_prev.size() != gamma.size()) {
                ga_prev.assign(gamma.size(), std::numeric_limits<double>::quiet_NaN());
                gr_prev.assign(gamma.size(), std::numeric_limits<double>::quiet_NaN());
            }
            for (std::size_t k = 0; k < gamma.size(); ++k) {
                double g = gnew[k] - gamma[k];
                double step = 0.5 * g;
                if (std::isfinite(gr_prev[k]) &&
                    std::fabs(g - gr_prev[k]) > 1e-14 * (1.0 + std::fabs(g)))
                    step = -g * (gamma[k] - ga_prev[k]) / (g - gr_prev[k]);
                step = std::min(std::max(step, -1.0), 1.0);
                ga_prev[k] = gamma[k];
                gr_prev[k] = g;
                gamma[k] = std::min(std::max(gamma[k] + step, -10.0), 0.0);
            }
        }
        if (std::fabs(phi) > tol_phi) {
            double step = phi;
            if (std::isfinite(phi_prev) &&
                std::fabs(phi - phi_prev) > 1e-14 * (1.0 + std::fabs(phi)))
                step = -phi * (log_theta - lt_prev) / (phi - phi_prev);
            step = std::min(std::max(step, -0.25), 0.25);
            phi_prev = phi;
            lt_prev = log_theta;
            log_theta = std::min(log_theta + step, std::log(theta_cap));
        }
        if (!pinned && std::fabs(mismatch) > cfg.tol_cinf) {
            double step = mismatch;
            if (std::isfinite(g_prev) &&
                std::fabs(mismatch - g_prev) > 1e-14 * (1.0 + std::fabs(mismatch)))
                step = -mismatch * (c_inf - c_prev) / (mismatch - g_prev);
            step = std::min(std::max(step, -0.5), 0.5);
            g_prev = mismatch;
            c_prev = c_inf;
            c_inf += step;
        }
    }
    if (!settled)
        throw pinch_error(
            "far-field closure did not settle within the outer iteration budget");

    // The settled iterate solves the normalised equation whose curvature
    // scale agrees with the requested one to the mass tolerance; finish on
    // the plain equation so the reported residual refers to it exactly.
    S.theta = 0.0;
    NewtonProblem Pp;
    Pp.residual = P.residual;
    Pp.step = P.step;
    run_newton(hv, cfg, rep, Pp);

    double lam = pinned ? 1.0 : lambda_of_cinf(c_inf, S.binf, K0);
    if (pinned) c_inf = cinf_of_lambda(1.0, S.binf, K0);
    rep.c_inf = c_inf;
    rep.lambda = lam;
    rep.gammas = gamma;
    rep.converged = true;

    if (warm_out != nullptr) {
        warm_out->h = hv;
        warm_out->pos.clear();
        for (const auto& c : S.cones) warm_out->pos.push_back(c.z);
        warm_out->gamma = gamma;
        warm_out->c_inf = c_inf;
    }

    UniformGrid2D hg(S.box);
    for (int j = 0; j < S.n; ++j)
        for (int i = 0; i < S.n; ++i) hg.set(i, j, hv[std::size_t(j) * S.n + i]);
    BackgroundModel bg = BackgroundModel::make(S.nu, K0, lam, S.binf);
    GridRegularPart out(std::move(hg), d, bg, gamma, S.R0);
    measure_quality(out, S, cfg, rep);
    return out;
}

// ---------------------------------------------------------------------------
// Shortley-Weller discretization of the unit disk.

struct DiskSystem {
    GridBox box{};
    int n = 0;
    std::size_t N = 0;
    double h = 0.0;
    double s = 0.0;
    std::vector<std::uint8_t> free_node;
    std::vector<double> cw, ce, cs, cn, cd;  // cut-cell stencil coefficients
    std::vector<double> kv;                  // curvature at nodes
    std::vector<double> diag;

    double residual(const std::vector<double>& u, std::vector<double>& F) const {
        double mx = 0.0;
        for (std::size_t id = 0; id < N; ++id) {
            if (!free_node[id]) {
                F[id] = 0.0;
                continue;
            }
            double f = cw[id] * u[id - 1] + ce[id] * u[id + 1] + cs[id] * u[id - n] +
                       cn[id] * u[id + n] + cd[id] * u[id] +
                       kv[id] * std::exp(2.0 * u[id]);
            F[id] = f;
            double af = std::fabs(f);
            if (af > mx) mx = af;
        }
        return mx;
    }

    void apply_jacobian(const std::vector<double>& v, std::vector<double>& out) const {
        for (std::size_t id = 0; id < N; ++id) {
            if (!free_node[id]) {
                out[id] = v[id];
                continue;
            }
            out[id] = cw[id] * v[id - 1] + ce[id] * v[id + 1] + cs[id] * v[id - n] +
                      cn[id] * v[id + n] + (cd[id] + diag[id]) * v[id];
        }
    }
};

}  // namespace

namespace detail {

// 16-point Gauss-Legendre nodes and weights on [-1, 1], positive half.
constexpr int kGlHalf = 8;
constexpr double kGlX[kGlHalf] = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
    0.7554044083550030, 0.8656312023878318, 0.9445750230732326, 0.9894009349916499};
constexpr double kGlW[kGlHalf] = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

namespace {

template <class F>
double gauss16(double t0, double t1, F g) {
    double c = 0.5 * (t0 + t1), r = 0.5 * (t1 - t0);
    double s = 0.0;
    for (int i = 0; i < kGlHalf; ++i)
        s += kGlW[i] * (g(c - r * kGlX[i]) + g(c + r * kGlX[i]));
    return s * r;
}

// Integral of rho^{2 beta} over [0, X] x [0, Y] about the origin, X, Y >= 0.
// Exact radial integration leaves two smooth angular integrals.
double corner_power(double X, double Y, double beta) {
    if (X <= 0.0 || Y <= 0.0) return 0.0;
    const double q = 2.0 * beta + 2.0;
    const double t1 = std::atan2(Y, X);
    double a = gauss16(0.0, t1, [&](double t) { return std::pow(X / std::cos(t), q); });
    double b = gauss16(t1, 0.5 * kPi,
                       [&](double t) { return std::pow(Y / std::sin(t), q); });
    return (a + b) / q;
}

double signed_corner(double X, double Y, double beta) {
    double sg = 1.0;
    if (X < 0.0) {
        sg = -sg;
        X = -X;
    }
    if (Y < 0.0) {
        sg = -sg;
        Y = -Y;
    }
    return sg * corner_power(X, Y, beta);
}

}  // namespace

double cell_average_power(const Vec2& rel, double cell, double beta) {
    const double hh = 0.5 * cell;
    const double x0 = rel.x - hh, x1 = rel.x + hh;
    const double y0 = rel.y - hh, y1 = rel.y + hh;
    double v = signed_corner(x1, y1, beta) - signed_corner(x0, y1, beta) -
               signed_corner(x1, y0, beta) + signed_corner(x0, y0, beta);
    return v / (cell * cell);
}

}  // namespace detail

nlohmann::json SolveReport::json() const {
    nlohmann::json j;
    j["converged"] = converged;
    j["newton_iterations"] = newton_iterations;
    j["outer_iterations"] = outer_iterations;
    j["residual"] = residual;
    j["residual_history"] = residual_history;
    j["damping_history"] = damping_history;
    j["K0"] = K0;
    j["c_inf"] = c_inf;
    j["lambda"] = lambda;
    j["gammas"] = gammas;
    j["tol_K"] = tol_K;
    if (std::isfinite(gauss_bonnet_mass)) {
        j["gauss_bonnet"] = {{"mass", gauss_bonnet_mass},
                             {"target", gauss_bonnet_target},
                             {"rel_error", gauss_bonnet_rel}};
    } else {
        j["gauss_bonnet"] = nullptr;
    }
    j["mass_fraction_inner"] = mass_fraction_inner;
    return j;
}

GridRegularPart solve_constant_curvature(const ConicDivisor& d, double K0,
                                         const SolverConfig& cfg, SolveReport* report) {
    SolveReport rep;
    GridRegularPart out = solve_box(d, K0, cfg, rep, nullptr, nullptr);
    if (report != nullptr) *report = std::move(rep);
    return out;
}

std::vector<GridRegularPart> continuation_family(const ConicDivisor& base,
                                                 const std::vector<double>& alphas,
                                                 const SolverConfig& cfg,
                                                 std::vector<SolveReport>* reports) {
    for (const auto& q : base.points()) {
        if (q.infinite)
            throw pinch_error("continuation base must not contain the point at infinity");
        if (q.position.norm() == 0.0)
            throw pinch_error(
                "continuation base must keep the origin free for the tightening cone");
    }
    if (alphas.empty()) throw pinch_error("continuation needs at least one cone order");
    std::vector<ConicDivisor> members;
    for (std::size_t j = 0; j < alphas.size(); ++j) {
        double a = alphas[j];
        if (!(a > -1.0 && a < 0.0))
            throw pinch_error("cone orders must lie in (-1, 0)");
        if (j > 0 && !(a < alphas[j - 1]))
            throw pinch_error("cone orders must decrease strictly along the family");
        std::vector<ConicPoint> pts = base.points();
        pts.push_back(ConicPoint{Vec2{0.0, 0.0}, a});
        ConicDivisor dj(pts);
        Classification cls = dj.classify();
        if (cls.kind != Criticality::subcritical) {
            std::ostringstream os;
            os << "continuation member " << j << " (origin order " << a
               << ") is not subcritical; the family must stay below the threshold";
            throw pinch_error(os.str());
        }
        members.push_back(std::move(dj));
    }

    std::vector<GridRegularPart> out;
    WarmState warm;
    bool have_warm = false;
    for (std::size_t j = 0; j < members.size(); ++j) {
        double K0 = (1.0 + alphas[j]) * (1.0 + alphas[j]);
        SolveReport rep;
        GridRegularPart g =
            solve_box(members[j], K0, cfg, rep, have_warm ? &warm : nullptr, &warm);
        have_warm = true;
        if (cfg.report_quality) {
            QuadratureResult q = integrate_disk(g, Density::mass, 1.0);
            rep.mass_fraction_inner = q.value / (2.0 * kPi * (2.0 + members[j].total()));
        }
        if (reports != nullptr) reports->push_back(std::move(rep));
        out.push_back(std::move(g));
    }
    return out;
}

DiskSolution solve_dirichlet_disk(const std::function<double(const Vec2&)>& K, double a,
                                  double b, double s, const SolverConfig& cfg) {
    if (!(a > 0.0) || !(a <= b))
        throw pinch_error("curvature bounds need 0 < a <= b");
    double cells_f = 2.0 / cfg.spacing;
    long cells = std::lround(cells_f);
    if (cells < 16 || std::fabs(cells_f - double(cells)) > 1e-9 * cells_f)
        throw pinch_error("spacing must divide the disk diameter into at least 16 cells");
    DiskSystem S;
    S.n = int(cells) + 1;
    S.N = std::size_t(S.n) * S.n;
    S.h = 2.0 / double(cells);
    S.box = GridBox{-1.0, -1.0, S.h, S.n, S.n};
    S.s = s;

    const int n = S.n;
    const double h = S.h;
    S.free_node.assign(S.N, 0);
    S.cw.assign(S.N, 0.0);
    S.ce.assign(S.N, 0.0);
    S.cs.assign(S.N, 0.0);
    S.cn.assign(S.N, 0.0);
    S.cd.assign(S.N, 0.0);
    S.kv.assign(S.N, 0.0);
    S.diag.assign(S.N, 0.0);

    auto node = [&](int i, int j) { return Vec2{-1.0 + i * h, -1.0 + j * h}; };
    auto strictly_inside = [&](int i, int j) {
        if (i < 0 || j < 0 || i >= n || j >= n) return false;
        return node(i, j).norm2() < 1.0 - 1e-12;
    };

    std::vector<double> kall(S.N, 0.0);
    double kmin = kInf, kmax = -kInf;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            Vec2 z = node(i, j);
            double r = z.norm();
            std::size_t id = std::size_t(j) * n + i;
            double val;
            if (r <= 1.0) {
                val = K(z);
                kmin = std::min(kmin, val);
                kmax = std::max(kmax, val);
            } else {
                val = K(z / r);
            }
            kall[id] = val;
        }
    }
    if (kmin < a - 1e-12 * std::max(1.0, a) || kmax > b + 1e-12 * std::max(1.0, b)) {
        std::ostringstream os;
        os << "curvature samples leave the declared range [" << a << ", " << b
           << "]: observed [" << kmin << ", " << kmax << "]";
        throw pinch_error(os.str());
    }
    S.kv = kall;

    for (int j = 1; j < n - 1; ++j) {
        for (int i = 1; i < n - 1; ++i) {
            if (!strictly_inside(i, j)) continue;
            Vec2 z = node(i, j);
            double x = z.x, y = z.y;
            double tw = strictly_inside(i - 1, j) ? 1.0 : (x + std::sqrt(1.0 - y * y)) / h;
            double te = strictly_inside(i + 1, j) ? 1.0 : (-x + std::sqrt(1.0 - y * y)) / h;
            double ts = strictly_inside(i, j - 1) ? 1.0 : (y + std::sqrt(1.0 - x * x)) / h;
            double tn = strictly_inside(i, j + 1) ? 1.0 : (-y + std::sqrt(1.0 - x * x)) / h;
            double tmin = std::min(std::min(tw, te), std::min(ts, tn));
            if (tmin < 1e-6) continue;  // rim grazes the node; hold it at s
            std::size_t id = std::size_t(j) * n + i;
            S.free_node[id] = 1;
            double ih2 = 1.0 / (h * h);
            S.cw[id] = 2.0 / (tw * (tw + te)) * ih2;
            S.ce[id] = 2.0 / (te * (tw + te)) * ih2;
            S.cs[id] = 2.0 / (ts * (ts + tn)) * ih2;
            S.cn[id] = 2.0 / (tn * (ts + tn)) * ih2;
            S.cd[id] = -2.0 / (tw * te) * ih2 - 2.0 / (ts * tn) * ih2;
        }
    }

    SolveReport rep;
    rep.K0 = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> u(S.N, s);

    NewtonProblem P;
    P.residual = [&S](const std::vector<double>& x, std::vector<double>& F) {
        return S.residual(x, F);
    };
    std::vector<double> rhs(S.N, 0.0);
    P.step = [&](const std::vector<double>& x, const std::vector<double>& F,
                 std::vector<double>& delta, double) {
        for (std::size_t id = 0; id < S.N; ++id)
            S.diag[id] =
                S.free_node[id] ? 2.0 * S.kv[id] * std::exp(2.0 * x[id]) : 0.0;
        for (std::size_t id = 0; id < S.N; ++id) rhs[id] = -F[id];
        LinOp A = [&S](const std::vector<double>& v, std::vector<double>& out) {
            S.apply_jacobian(v, out);
        };
        LinOp M = [&S](const std::vector<double>& v, std::vector<double>& out) {
            for (std::size_t id = 0; id < S.N; ++id) {
                double den = S.free_node[id] ? S.cd[id] + S.diag[id] : 1.0;
                if (std::fabs(den) < 1e-30) den = 1.0;
                out[id] = v[id] / den;
            }
        };
        bicgstab(A, M, rhs, delta, 1e-8, 20000);
    };
    run_newton(u, cfg, rep, P);
    rep.converged = true;

    DiskSolution out;
    UniformGrid2D ug(S.box), kg(S.box);
    double H = -kInf;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            std::size_t id = std::size_t(j) * n + i;
            ug.set(i, j, u[id]);
            kg.set(i, j, kall[id]);
            if (node(i, j).norm2() <= 1.0) H = std::max(H, u[id]);
        }
    }
    ug.build_spline();
    kg.build_spline();
    out.u = std::move(ug);
    out.k = std::move(kg);
    out.s = s;
    out.a = a;
    out.b = b;
    out.H = H;
    out.radius = 1.0;
    out.report = std::move(rep);
    return out;
}

double circle_average(const ConformalFactor& f, double r, int samples) {
    if (samples < 1) throw pinch_error("circle average needs at least one sample");
    double s = 0.0;
    for (int i = 0; i < samples; ++i) {
        double th = 2.0 * kPi * i / samples;
        s += f.value(Vec2{r * std::cos(th), r * std::sin(th)});
    }
    return s / samples;
}

}  // namespace pinchlab
