#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pinchlab/factor.hpp"
#include "pinchlab/grid.hpp"

namespace pinchlab {

// Level-set functionals of a conformal factor u. With Omega(t) = {u >= t}:
//   A(t)    = integral of K e^{2u} over Omega(t)      (curvature mass),
//   B(t)    = euclidean area of Omega(t),
//   L(t)    = euclidean length of the boundary curve,
//   flux(t) = integral of |grad u| along the boundary.
// Finite cone points carry u -> +infinity, so they sit inside Omega(t) for
// every t; A picks up only the smooth density K e^{2u} = -Delta u, never
// the cone point masses. The identity A(t) = flux(t) + 2 pi alpha (alpha =
// sum of the finite cone weights) holds for every t and is checked, not
// assumed: A is always measured by quadrature, flux by boundary sampling.
struct LevelSetProfile {
    std::vector<double> t;  // strictly descending
    std::vector<double> A, B, L, flux;
    std::vector<double> dA, dB;              // centered d/dt estimates
    std::vector<double> slack_dA, slack_dB;  // derivative error model
    // Per-t measurement error estimates for the functionals themselves.
    std::vector<double> err_A, err_B, err_L, err_flux;
    std::vector<double> defect;                   // L^2 - 4 pi B
    std::vector<std::vector<double>> components;  // areas, descending, per t

    double spacing = 0.0;  // raster spacing; 0 for the closed-form radial route
    double alpha = 0.0;    // sum of finite cone weights

    std::size_t size() const { return t.size(); }
    int n_components(std::size_t i) const {
        return static_cast<int>(components[i].size());
    }
    double largest_component(std::size_t i) const {
        return components[i].empty() ? 0.0 : components[i].front();
    }
    // Derivative estimates too small to trust against their own error model;
    // ratio checks skip these t values and report them as excluded.
    bool plateau(std::size_t i) const {
        return std::abs(dA[i]) < 10.0 * slack_dA[i];
    }
};

// Uniform descending grid from t_hi down to t_lo (inclusive up to rounding).
std::vector<double> t_grid(double t_hi, double t_lo, double step = 0.02);

// Exact-geometry route for radially symmetric factors: solves u(r) = t by
// bracketed root-finding on the strictly decreasing radial trace, then
// B = pi r^2, L = 2 pi r, flux = 2 pi r |u'(r)|, and A by one-dimensional
// log-graded quadrature of -Delta(u) r dr accumulated across the sorted
// level radii. Throws when u is not strictly decreasing on the sample grid,
// when the factor is not radially symmetric, or when some t exceeds the
// maximum of u (no level circle exists).
LevelSetProfile radial_profile(const ConformalFactor& f,
                               const std::vector<double>& ts);

// Raster route for arbitrary factors: samples u on the node grid of `box`,
// reconstructs each boundary curve by linear interpolation along cell edges
// (the two ambiguous saddle cases resolved by the cell-center average), and
// accumulates B from cell-fraction polygon areas, L from interface segment
// lengths, flux from |grad u| at segment midpoints, and A from the masked
// midpoint rule with one-time polar integrals replacing the cells of a
// small block around each cone, where the density is unbounded. Components
// come from 4-connectivity labeling of the inside nodes, with a saddle
// diagonal united exactly when the reconstructed interface connects it.
// Throws when a contour touches the raster boundary (raster too small),
// when some t exceeds the sampled maximum of u, or when a finite cone lies
// outside the raster.
LevelSetProfile grid_profile(const ConformalFactor& f,
                             const std::vector<double>& ts, const GridBox& box);

struct CheckLine {
    double t = 0.0;
    std::string what;      // sub-check name
    double value = 0.0;    // the quantity tested
    double margin = 0.0;   // distance inside the raw bound (>= 0 is clean)
    double slack = 0.0;    // allowance from the error model
    bool excluded = false; // skipped (plateau); not counted in the verdict
    std::string note;
};

struct CheckReport {
    std::string name;
    std::vector<CheckLine> lines;
    int n_checked = 0;
    int n_excluded = 0;
    double worst = 0.0;  // min over checked lines of margin + slack
    bool passed = false; // n_checked > 0 and worst >= 0
};

// Two-sided bound on the transport ratio e^{2t} B'/A' against curvature
// bounds 0 < a <= K <= b: checks 1/b - slack <= ratio <= 1/a + slack at
// every interior t, excluding plateaus of A.
CheckReport verify_sandwich(const LevelSetProfile& p, double a, double b);

// Per-t inequality chain and boundary identity, alpha = sum of finite cone
// weights: 4 pi B <= L^2, L^2 <= -B' (A - 2 pi alpha), and
// |A - 2 pi alpha - flux| within the measurement model.
CheckReport verify_isoperimetric_chain(const LevelSetProfile& p, double alpha);

struct IntegratedReport {
    CheckReport differential;  // branchwise bound on d/dt [e^{2t} B]
    CheckReport integrated;    // closed-form integrated quadratic bound
    double t_cross = 0.0;      // interpolated t with A = 2 pi (1+alpha)
    double x = 0.0;            // A(deepest t) / (2 pi (1+alpha))
    double implied_ratio_upper = 0.0;  // (x-1)^2, an upper bound for a/b
    double rel_gap = 0.0;  // (x - 1 - sqrt(a/b)) / (1 + sqrt(a/b))
    bool passed = false;
};

// Differential form: d/dt[e^{2t}B] <= (A'/b)(1+alpha-A/2pi) while
// A <= 2 pi (1+alpha) and <= (A'/a)(...) after, checked per interior t.
// Integrated form, for each deep t with A(t) > 2 pi (1+alpha) paired
// against every shallow T with A(T) < 2 pi (1+alpha):
//   e^{2T}B(T) - ((1+alpha)A(T) - A(T)^2/4pi)/b - e^{2t}B(t)
//     <= A(t)^2/(4 a pi) - (1+alpha)A(t)/a + pi (1+alpha)^2 (1/a - 1/b);
// the shallow side collapses to its max H, so one line per deep t. Both
// sides vanish in the two-ends limit, which yields the scalar consequence
// x >= 1 + sqrt(a/b) with x = A(-inf)/(2 pi (1+alpha)), reported from the
// deepest t. Throws when A never crosses 2 pi (1+alpha).
IntegratedReport integrated_inequality(const LevelSetProfile& p, double a,
                                       double b, double alpha);

// Closed-form level-set data of the normalized glued football with cone
// weight alpha at the origin and beta1 at infinity (-1 < beta1 <= alpha
// <= 0): the degeneration target of near-extremal families. A*, B* come
// from the exact radial antiderivatives through the level radius r(t); the
// quadratic A-B relations quoted for the two branches are evaluated
// separately and compared against the exact values, never used as the
// source of truth (the inner-branch quadratic as quoted is inconsistent
// with the exact profile unless rho0 = 1; check_printed_system measures
// the discrepancy on both branches).
class LimitProfile {
  public:
    LimitProfile(double alpha, double beta1);

    double alpha() const { return alpha_; }
    double beta1() const { return beta1_; }
    double rho0() const { return rho0_; }
    double t_seam() const { return t_seam_; }  // ln(1+alpha), branch switch
    // Largest t with a nonempty region: +infinity when alpha < 0 (the cone
    // makes u unbounded), u(0) when alpha = 0.
    double t_max() const;
    double A_total() const { return 2.0 * kPi * (2.0 + alpha_ + beta1_); }

    double r_of_t(double t) const;  // level radius; 0 when t >= t_max
    double A_star(double t) const;
    double B_star(double t) const;

    const GluedFootball& football() const { return fb_; }

    // The quoted branch quadratics for e^{2t}B as a function of A.
    double quoted_e2tB(double A, bool inner_branch) const;

    struct SystemReport {
        double ode_residual = 0.0;       // max |4 pi B* + B*'(A* - 2 pi alpha)|
        double inner_discrepancy = 0.0;  // sup |quoted - exact| on the branch
        double outer_discrepancy = 0.0;
        bool quoted_matches = false;     // both sups within tol
    };
    SystemReport check_printed_system(int samples_per_branch = 24,
                                      double tol = 1e-8) const;

  private:
    double alpha_, beta1_, rho0_, t_seam_;
    GluedFootball fb_;
};

inline LimitProfile limit_profile(double alpha, double beta1) {
    return LimitProfile(alpha, beta1);
}

// CSV with header t,A,B,L,defect,n_components,largest_component_area and
// one row per t in stored (descending) order; %.17g, byte-deterministic.
void write_profile_csv(const LevelSetProfile& p, std::ostream& os);
std::string profile_csv(const LevelSetProfile& p);

}  // namespace pinchlab
