#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pinchlab/common.hpp"
#include "pinchlab/divisor.hpp"

namespace pinchlab {

// A conformal factor u on (a chart of) the sphere: the metric is
// e^{2u} |dz|^2 on C, with conic singularities at the divisor points and a
// standard end at infinity carrying the divisor's weight there. Gauss
// curvature is K = -e^{-2u} * (Delta u).
class ConformalFactor {
  public:
    virtual ~ConformalFactor() = default;

    virtual double value(const Vec2& z) const = 0;
    virtual Vec2 gradient(const Vec2& z) const = 0;
    virtual double laplacian(const Vec2& z) const = 0;
    virtual const ConicDivisor& divisor() const = 0;

    // Circles across which the factor is only C^{1,1} (curvature may jump).
    virtual std::vector<Circle> seams() const { return {}; }

    // True when u depends on |z| only; enables exact radial reductions.
    virtual bool radially_symmetric() const { return false; }

    // Largest |z| at which the factor may be evaluated; samplers clip to it.
    // Finite only for grid-backed factors without a closure outside the box.
    virtual double max_sample_radius() const {
        return std::numeric_limits<double>::infinity();
    }

    double curvature(const Vec2& z) const {
        return -std::exp(-2.0 * value(z)) * laplacian(z);
    }

    struct TailMoments {
        double area = 0.0;  // integral of e^{2u} over |z| > R
        double mass = 0.0;  // integral of K e^{2u} over |z| > R
    };
    // Exact moments of the region |z| > R when the family provides them.
    virtual std::optional<TailMoments> tail(double R) const {
        (void)R;
        return std::nullopt;
    }
};

// The closed radial family
//   F(r) = c + ln(2(1+a)) + (1+a) ln(lambda) + a ln(r) - ln(1 + (lambda r)^m),
//   m = 2 + 2a,  a in (-1, 0],  lambda > 0.
// This is the constant-curvature football with equal cone weight a at 0 and
// at infinity; K = e^{-2c} everywhere. Closed-form area and curvature mass
// of centered disks are exposed, along with exact tails.
class RadialBranch final : public ConformalFactor {
  public:
    RadialBranch(double a, double lambda, double c);

    double a() const { return a_; }
    double lambda() const { return lambda_; }
    double c() const { return c_; }
    double m() const { return m_; }
    double curvature_constant() const { return std::exp(-2.0 * c_); }

    double value_r(double r) const;
    // dF/dr; multiply by z/r for the gradient.
    double slope_r(double r) const;
    double laplacian_r(double r) const;

    double area_to(double r) const;   // area of {|z| <= r}
    double mass_to(double r) const;   // curvature mass of {|z| <= r}
    double area_total() const { return std::exp(2.0 * c_) * 4.0 * kPi * (1.0 + a_); }
    double mass_total() const { return 4.0 * kPi * (1.0 + a_); }

    double value(const Vec2& z) const override { return value_r(z.norm()); }
    Vec2 gradient(const Vec2& z) const override;
    double laplacian(const Vec2& z) const override { return laplacian_r(z.norm()); }
    const ConicDivisor& divisor() const override { return divisor_; }
    bool radially_symmetric() const override { return true; }
    std::optional<TailMoments> tail(double R) const override;

  private:
    double a_, lambda_, c_, m_;
    ConicDivisor divisor_;
};

// Two constant-curvature radial branches glued along |z| = 1: weight alpha
// at 0 (inner branch) and beta at infinity (outer branch), -1 < beta <=
// alpha <= 0. The glued factor is C^{1,1}: values and slopes match at the
// seam (both branches have r u'(r) = -1 there), curvature jumps.
class GluedFootball final : public ConformalFactor {
  public:
    enum class Normalization {
        unit_inner,     // inner curvature 1, u(1) = ln(1+alpha)
        boundary_zero,  // u(1) = 0, inner curvature (1+alpha)^2
    };

    GluedFootball(double alpha, double beta,
                  Normalization norm = Normalization::unit_inner);

    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    const RadialBranch& inner() const { return inner_; }
    const RadialBranch& outer() const { return outer_; }

    double value_r(double r) const;
    double slope_r(double r) const;
    double laplacian_r(double r) const;
    double curvature_r(double r) const;

    double area_to(double r) const;
    double mass_to(double r) const;
    double area_total() const;
    double mass_total() const;

    double value(const Vec2& z) const override { return value_r(z.norm()); }
    Vec2 gradient(const Vec2& z) const override;
    double laplacian(const Vec2& z) const override { return laplacian_r(z.norm()); }
    const ConicDivisor& divisor() const override { return divisor_; }
    std::vector<Circle> seams() const override { return {Circle{{0.0, 0.0}, 1.0}}; }
    bool radially_symmetric() const override { return true; }
    std::optional<TailMoments> tail(double R) const override;

  private:
    double alpha_, beta_;
    RadialBranch inner_, outer_;
    ConicDivisor divisor_;
};

// Coordinate rescaling u'(z) = base(lambda z - k) + ln(lambda) + c.
// Geometrically a Moebius dilation-translation plus a constant conformal
// shift: a base point z0 moves to (z0 + k)/lambda, curvature becomes
// e^{-2c} K_base pointwise (invariant when c = 0).
class Rescaled final : public ConformalFactor {
  public:
    Rescaled(std::shared_ptr<const ConformalFactor> base, double lambda, Vec2 k,
             double c = 0.0);

    double lambda() const { return lambda_; }
    Vec2 k() const { return k_; }
    double shift() const { return c_; }
    const ConformalFactor& base() const { return *base_; }

    double value(const Vec2& z) const override;
    Vec2 gradient(const Vec2& z) const override;
    double laplacian(const Vec2& z) const override;
    const ConicDivisor& divisor() const override { return divisor_; }
    std::vector<Circle> seams() const override;
    bool radially_symmetric() const override;
    double max_sample_radius() const override;
    std::optional<TailMoments> tail(double R) const override;

  private:
    Vec2 pullback(const Vec2& z) const { return {lambda_ * z.x - k_.x, lambda_ * z.y - k_.y}; }

    std::shared_ptr<const ConformalFactor> base_;
    double lambda_;
    Vec2 k_;
    double c_;
    ConicDivisor divisor_;
};

struct PinchingConfig {
    double box_radius = 2.0;        // half-width of the uniform sample box
    double spacing = 1.0 / 64.0;    // uniform sample spacing
    double exclusion_cells = 1e-3;  // skip samples within this many cells of a cone point
    double seam_exclusion_cells = 1.0;  // skip samples within this many cells of a seam
    double far_radius = 1e4;        // radial sweep reaches past this radius
    int n_radial = 256;             // log-spaced radii in the radial sweep
    int n_angular = 64;             // angles per radius
};

struct PinchingReport {
    double k_min = 0.0;
    double k_max = 0.0;
    double rho = 0.0;    // k_min / k_max
    double rho0 = 0.0;   // divisor-level reference ratio (NaN when undefined)
    Classification classification;
    std::size_t n_samples = 0;     // samples that entered the extremes
    std::size_t n_nonfinite = 0;   // samples discarded as non-finite
    Vec2 argmin, argmax;
    PinchingConfig config;
};

// Samples curvature over a uniform box plus a log-radial sweep out past
// config.far_radius, excluding cone points and seam collars, and reports the
// extremes. Deterministic: fixed traversal order, no reductions that depend
// on scheduling.
PinchingReport measure_pinching(const ConformalFactor& f,
                                const PinchingConfig& config = {});

inline std::shared_ptr<const Rescaled> rescale(
    std::shared_ptr<const ConformalFactor> base, double lambda, Vec2 k, double c = 0.0) {
    return std::make_shared<const Rescaled>(std::move(base), lambda, k, c);
}

}  // namespace pinchlab
