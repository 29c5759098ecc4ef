#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "json.hpp"
#include "pinchlab/divisor.hpp"
#include "pinchlab/factor.hpp"
#include "pinchlab/grid.hpp"
#include "pinchlab/gridfactor.hpp"

namespace pinchlab {

// Damped-Newton controls shared by the constant-curvature and Dirichlet
// solves. The sphere solve discretizes the regular part h of
//   u = sum_i beta_i ln|z - z_i| + smoothing kernels + background + h
// on [-box_half, box_half]^2 and drives the 5-point residual
//   L5(h) + (background + kernel Laplacians) + K0 e^{2h} E = 0
// to tol_residual in the max norm, where E is the pointwise (cell-averaged
// near cones) envelope e^{2(singular+background)}. Multigrid coarsening
// needs the per-side cell count 2*box_half/spacing to keep dividing by two
// until it is at most 16, so powers of two (optionally times a small odd
// factor) are the usable spacings.
struct SolverConfig {
    double box_half = 8.0;
    double spacing = 1.0 / 128.0;
    double tol_residual = 1e-8;       // max norm of the discrete residual
    int max_newton = 60;              // per inner solve
    double damping_min = 1.0 / 1024.0;
    double blowup_guard = 50.0;       // abort when max |h| exceeds this
    int max_outer = 60;               // kernel-amplitude / far-field updates
    double tol_gamma = 1e-12;         // settle threshold for the amplitudes
    double tol_cinf = 1e-11;          // settle threshold for the far field
    double correction_radius = 1.0;   // support of the cone smoothing kernels
    int curvature_probes = 100;       // sample count for the constancy report
    bool report_quality = true;       // measure tol_K and the mass identity
};

// Convergence record of one solve. json() serializes what the tools persist
// next to solution grids; non-finite fields become null.
struct SolveReport {
    int newton_iterations = 0;   // accepted Newton steps, all closure rounds
    int outer_iterations = 0;    // kernel-amplitude / far-field rounds
    std::vector<double> residual_history;  // max norm after each accepted step
    std::vector<double> damping_history;   // step fraction of each accepted step
    double residual = std::numeric_limits<double>::infinity();
    double K0 = 0.0;
    double c_inf = 0.0;          // far-field additive constant of the solution
    double lambda = 1.0;         // dilation of the far-field radial model
    std::vector<double> gammas;  // cone smoothing amplitudes at convergence
    // max |K/K0 - 1| over the probe set, NaN when not measured.
    double tol_K = std::numeric_limits<double>::quiet_NaN();
    // Total curvature mass against 2*pi*(2 + total weight).
    double gauss_bonnet_mass = std::numeric_limits<double>::quiet_NaN();
    double gauss_bonnet_target = std::numeric_limits<double>::quiet_NaN();
    double gauss_bonnet_rel = std::numeric_limits<double>::quiet_NaN();
    // Continuation members only: curvature mass of |z| <= 1 over the total.
    double mass_fraction_inner = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;

    nlohmann::json json() const;
};

// Solves -e^{-2u} (Delta u) = K0 for the conic factor u with the cone data
// of d, K0 > 0, and returns the assembled regular-part factor. Subcritical
// divisors are accepted; critical ones only in the radially symmetric cases
// (the empty divisor and the equal-weight pair at 0 and infinity) whose
// solutions are known to exist; everything else is refused. The additive
// gauge: radial cases pin the far-field dilation to 1, all others match the
// circle average of h at 0.75*box_half to the far-field radial model.
// Reruns with identical inputs are bit-identical. Throws pinch_error on
// refused divisors, Newton divergence (the message carries the last
// residual and the damping history), or a blow-up past cfg.blowup_guard.
GridRegularPart solve_constant_curvature(const ConicDivisor& d, double K0,
                                         const SolverConfig& cfg = {},
                                         SolveReport* report = nullptr);

// Solves the family D_j = base + (alpha_j at the origin) at curvature
// (1 + alpha_j)^2, warm-starting each member from the previous one. base
// holds the fixed finite cones (none at the origin, none infinite); alphas
// must be strictly decreasing and every D_j subcritical. Each report gets
// mass_fraction_inner, the curvature mass inside |z| <= 1 over the total,
// which grows as the members tighten toward their limit profile.
std::vector<GridRegularPart> continuation_family(
    const ConicDivisor& base, const std::vector<double>& alphas,
    const SolverConfig& cfg = {}, std::vector<SolveReport>* reports = nullptr);

// Dirichlet solution of Delta u = -K e^{2u} on the unit disk with u = s on
// the boundary. The grid covers [-1, 1]^2; nodes outside the disk hold s.
struct DiskSolution {
    UniformGrid2D u;  // spline-ready; boundary value outside the disk
    UniformGrid2D k;  // curvature samples at nodes (rim value outside)
    double s = 0.0;
    double a = 0.0;   // declared curvature bounds 0 < a <= K <= b
    double b = 0.0;
    double H = 0.0;   // max of u over the closed disk
    double radius = 1.0;
    SolveReport report;

    double value(const Vec2& z) const { return u.interp(z); }
    bool inside(const Vec2& z) const { return z.norm2() <= radius * radius; }
};

// Damped Newton on a Shortley-Weller discretization: boundary-cut stencils
// reach the circle exactly, so the residual gate matches the box solver's.
// K is sampled at grid nodes and must stay inside [a, b] on the disk.
// Throws pinch_error on divergence; boundary values past the fold of the
// problem have no solution and surface that way.
DiskSolution solve_dirichlet_disk(const std::function<double(const Vec2&)>& K,
                                  double a, double b, double s,
                                  const SolverConfig& cfg = {});

// Average of f over the circle |z| = r by an n-point trapezoid rule, used
// to pin additive gauges when two factors are compared.
double circle_average(const ConformalFactor& f, double r, int n = 720);

namespace detail {
// Average of |z - cone|^{2 beta} over the square cell of side `cell`
// centered at cone + rel. Exact radial integration in closed form per
// corner rectangle; valid for any cone position, beta > -1.
double cell_average_power(const Vec2& rel, double cell, double beta);
}  // namespace detail

}  // namespace pinchlab
