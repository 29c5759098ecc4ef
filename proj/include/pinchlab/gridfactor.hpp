#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pinchlab/divisor.hpp"
#include "pinchlab/factor.hpp"
#include "pinchlab/grid.hpp"

namespace pinchlab {

// Factor known only through node samples of u on a box. Evaluation uses the
// C^2 spline and is confined to the box; there is no model of the field
// outside, so tails and far sweeps are unavailable.
//
// Near seam circles the underlying u is only C^{1,1} and the spline's second
// derivatives ring within a few cells; node_curvature with the compact
// 5-point stencil stays clean one cell away, which is what the node-based
// pinching sweep uses.
class GridSampledFactor final : public ConformalFactor {
  public:
    GridSampledFactor(UniformGrid2D u, ConicDivisor div, std::vector<Circle> seams);

    static GridSampledFactor sample(const ConformalFactor& src, const GridBox& box);

    const UniformGrid2D& grid() const { return u_; }

    double value(const Vec2& z) const override { return u_.interp(z); }
    Vec2 gradient(const Vec2& z) const override { return u_.interp_gradient(z); }
    double laplacian(const Vec2& z) const override { return u_.interp_laplacian(z); }
    const ConicDivisor& divisor() const override { return divisor_; }
    std::vector<Circle> seams() const override { return seams_; }
    double max_sample_radius() const override;

    double node_curvature(int i, int j) const {
        return -std::exp(-2.0 * u_.at(i, j)) * u_.node_laplacian5(i, j);
    }

  private:
    UniformGrid2D u_;
    ConicDivisor divisor_;
    std::vector<Circle> seams_;
};

// Curvature extremes over the grid's interior nodes using the 5-point
// Laplacian. Spacing comes from the grid; config supplies the exclusion
// collars. Cone collars are widened to at least 4 cells because the stencil
// itself is meaningless closer in; the seam collar (default one cell) is
// exactly what keeps a stencil arm from crossing a seam circle.
PinchingReport measure_pinching_nodes(const GridSampledFactor& g,
                                      const PinchingConfig& config = {});

// Parameters of the structural decomposition u = P + BG + h and of the
// radial model that closes the field outside the grid box:
//   BG(z)    = -(nu/2) ln(1 + |z|^2),            nu = 2 + total weight,
//   u_ext(r) = radial branch with weight beta_inf, scale Lambda and constant
//              curvature k0 (its own constant is -ln(k0)/2),
//   c_inf    = lim_{r->inf} u_ext(r) - BG(r) - (sum of finite weights) ln r.
struct BackgroundModel {
    double nu = 2.0;
    double k0 = 1.0;
    double c_inf = 0.0;
    double Lambda = 1.0;
    double beta_inf = 0.0;

    static BackgroundModel make(double nu, double k0, double Lambda, double beta_inf);
};

// A solved conformal factor: u = P + BG + h with the regular part h held on
// a grid, and the exterior closure u = P + BG + c_inf + T(|z|) outside the
// box, where T collects the deviation of the exact radial exterior solution
// from its own asymptotics. P carries the cone singularities
//   P = sum_i [ beta_i ln|z-z_i| + gamma_i C_i(|z-z_i|) ],
//   C_i(rho) = rho^{p} - a - b rho^2 - c rho^4 on [0, R0], 0 past R0,
//   p = 2+2 beta_i, with (a, b, c) matching value, slope and second
//   derivative at R0 so C_i is C^2 with a plain C^3 break at the circle.
// The gamma corrections absorb the leading non-smooth term of h at each
// cone; the polynomial complement is benign for the spline, unlike a cutoff
// band, whose high derivatives would poison the interpolated Laplacian.
// Kernels of different cones may overlap each other's centers freely: away
// from its own center a kernel is C^2-smooth, so it never breaks the C^2
// regularity of h at another cone.
class GridRegularPart final : public ConformalFactor {
  public:
    GridRegularPart(UniformGrid2D h, ConicDivisor div, BackgroundModel bg,
                    std::vector<double> gammas = {}, double correction_radius = 0.0);

    const UniformGrid2D& regular_grid() const { return h_; }
    const BackgroundModel& background() const { return bg_; }
    const std::vector<double>& gammas() const { return gammas_; }
    double correction_radius() const { return r_corr_; }

    // Structural pieces, exposed for solvers and diagnostics.
    double singular_part(const Vec2& z) const;      // P
    Vec2 singular_gradient(const Vec2& z) const;
    double singular_laplacian(const Vec2& z) const;  // cutoff corrections only
    double bg_value(const Vec2& z) const;            // BG
    Vec2 bg_gradient(const Vec2& z) const;
    double bg_laplacian(const Vec2& z) const;
    double closure_T(double r) const;
    double closure_T_slope(double r) const;
    const RadialBranch& exterior_model() const { return ext_; }
    bool inside_box(const Vec2& z) const { return h_.box().contains(z); }

    double value(const Vec2& z) const override;
    Vec2 gradient(const Vec2& z) const override;
    double laplacian(const Vec2& z) const override;
    const ConicDivisor& divisor() const override { return divisor_; }
    std::optional<TailMoments> tail(double R) const override;

  private:
    UniformGrid2D h_;
    ConicDivisor divisor_;
    BackgroundModel bg_;
    std::vector<double> gammas_;
    double r_corr_;
    RadialBranch ext_;
    struct Kernel {
        double p, a, b, c;
    };
    std::vector<Kernel> kernels_;  // one per finite cone point
    double finite_weight_sum_ = 0.0;
    double box_reach_ = 0.0;  // largest |z| over the box; tails need R past it
};

// Grid files: a single-line JSON header, then the node payload row-major
// (float64 native little-endian, or CSV rows when csv_payload is set).
void save_grid_factor(const GridRegularPart& f, const std::string& path,
                      bool csv_payload = false);
void save_grid_factor(const GridSampledFactor& f, const std::string& path,
                      bool csv_payload = false);
std::shared_ptr<const ConformalFactor> load_grid_factor(const std::string& path);
GridRegularPart load_grid_regular_part(const std::string& path);
GridSampledFactor load_grid_sampled(const std::string& path);

}  // namespace pinchlab
