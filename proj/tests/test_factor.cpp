#include <cmath>
#include <memory>

#include "doctest.h"
#include "pinchlab/factor.hpp"

using namespace pinchlab;

namespace {

// Centered 2nd-order stencils, for checking analytic derivatives.
Vec2 fd_gradient(const ConformalFactor& f, Vec2 z, double h) {
    return {(f.value({z.x + h, z.y}) - f.value({z.x - h, z.y})) / (2 * h),
            (f.value({z.x, z.y + h}) - f.value({z.x, z.y - h})) / (2 * h)};
}

double fd_laplacian(const ConformalFactor& f, Vec2 z, double h) {
    return (f.value({z.x + h, z.y}) + f.value({z.x - h, z.y}) + f.value({z.x, z.y + h}) +
            f.value({z.x, z.y - h}) - 4 * f.value(z)) /
           (h * h);
}

}  // namespace

TEST_SUITE("factor") {

TEST_CASE("round sphere") {
    RadialBranch s(0.0, 1.0, 0.0);
    CHECK(s.value_r(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    for (double r : {0.1, 0.5, 1.0, 3.0, 50.0}) {
        CHECK(s.value_r(r) == doctest::Approx(std::log(2.0 / (1.0 + r * r))).epsilon(1e-14));
        CHECK(s.curvature({r, 0.0}) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(s.mass_total() == doctest::Approx(4.0 * kPi).epsilon(1e-15));
    CHECK(s.area_total() == doctest::Approx(4.0 * kPi).epsilon(1e-15));
    CHECK(s.divisor().empty());
}

TEST_CASE("radial branch curvature is exp(-2c) independent of lambda") {
    for (double a : {-0.75, -0.5, -0.2, 0.0}) {
        for (double lambda : {0.5, 1.0, 2.7}) {
            for (double c : {-0.4, 0.0, 1.1}) {
                RadialBranch f(a, lambda, c);
                for (double r : {0.3, 1.0, 4.2}) {
                    CHECK(f.curvature({r * 0.6, r * 0.8}) ==
                          doctest::Approx(std::exp(-2.0 * c)).epsilon(1e-11));
                }
            }
        }
    }
}

TEST_CASE("radial branch scaling law") {
    // F_{a,lambda,c}(r) = F_{a,1,c}(lambda r) + ln(lambda)
    RadialBranch base(-0.4, 1.0, 0.3);
    RadialBranch scaled(-0.4, 2.5, 0.3);
    for (double r : {0.2, 1.0, 7.0}) {
        CHECK(scaled.value_r(r) ==
              doctest::Approx(base.value_r(2.5 * r) + std::log(2.5)).epsilon(1e-13));
    }
}

TEST_CASE("radial branch seam slope") {
    for (double a : {-0.9, -0.5, 0.0}) {
        RadialBranch f(a, 1.0, 0.7);
        CHECK(f.slope_r(1.0) == doctest::Approx(-1.0).epsilon(1e-14));
    }
}

TEST_CASE("radial branch singular center") {
    RadialBranch f(-0.5, 1.0, 0.0);
    CHECK(std::isinf(f.value_r(0.0)));
    CHECK(f.value_r(0.0) > 0);
    REQUIRE(f.divisor().size() == 2);
    CHECK(f.divisor().beta_at_infinity() == -0.5);
}

TEST_CASE("analytic derivatives match finite differences") {
    RadialBranch f(-0.35, 1.3, -0.2);
    const double h = 1e-5;
    for (Vec2 z : {Vec2{0.4, 0.1}, Vec2{-0.7, 0.9}, Vec2{2.0, -1.5}}) {
        Vec2 g = f.gradient(z), gfd = fd_gradient(f, z, h);
        CHECK(g.x == doctest::Approx(gfd.x).epsilon(1e-6));
        CHECK(g.y == doctest::Approx(gfd.y).epsilon(1e-6));
        CHECK(f.laplacian(z) == doctest::Approx(fd_laplacian(f, z, 1e-4)).epsilon(1e-5));
    }
}

TEST_CASE("area and mass profiles differentiate to the density") {
    RadialBranch f(-0.5, 0.8, 0.4);
    const double h = 1e-6;
    for (double r : {0.5, 1.0, 2.0}) {
        double darea = (f.area_to(r + h) - f.area_to(r - h)) / (2 * h);
        CHECK(darea == doctest::Approx(2 * kPi * r * std::exp(2 * f.value_r(r))).epsilon(1e-7));
        double dmass = (f.mass_to(r + h) - f.mass_to(r - h)) / (2 * h);
        CHECK(dmass == doctest::Approx(2 * kPi * r * std::exp(2 * f.value_r(r)) *
                                       f.curvature_constant())
                           .epsilon(1e-7));
    }
    CHECK(f.mass_total() == doctest::Approx(4 * kPi * 0.5).epsilon(1e-15));
}

TEST_CASE("glued football values and curvature") {
    GluedFootball g(0.0, -0.5);
    CHECK(g.value_r(1.0) == doctest::Approx(0.0).epsilon(1e-14));  // ln(1+alpha)
    CHECK(g.curvature_r(0.5) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g.curvature_r(2.0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(g.curvature({0.3, 0.1}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.curvature({2.0, 1.0}) == doctest::Approx(0.25).epsilon(1e-12));

    // C^1 across the seam.
    const double eps = 1e-9;
    CHECK(g.value_r(1.0 - eps) == doctest::Approx(g.value_r(1.0 + eps)).epsilon(1e-7));
    CHECK(g.slope_r(1.0 - eps) == doctest::Approx(-1.0).epsilon(1e-7));
    CHECK(g.slope_r(1.0 + eps) == doctest::Approx(-1.0).epsilon(1e-7));

    GluedFootball q(-0.25, -0.75);
    CHECK(q.value_r(1.0) == doctest::Approx(std::log(0.75)).epsilon(1e-14));
    CHECK(q.curvature_r(0.5) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(q.curvature_r(2.0) ==
          doctest::Approx(0.25 * 0.25 / (0.75 * 0.75)).epsilon(1e-13));
}

TEST_CASE("glued football areas and masses") {
    GluedFootball g(0.0, -0.5);
    CHECK(g.area_to(1.0) == doctest::Approx(2 * kPi).epsilon(1e-14));
    CHECK(g.area_total() == doctest::Approx(6 * kPi).epsilon(1e-13));
    CHECK(g.mass_to(1.0) == doctest::Approx(2 * kPi).epsilon(1e-14));
    CHECK(g.mass_total() == doctest::Approx(3 * kPi).epsilon(1e-13));
    // Total curvature mass is 2 pi (2 + total weight).
    CHECK(g.mass_total() == doctest::Approx(2 * kPi * g.divisor().chi()).epsilon(1e-13));

    GluedFootball q(-0.25, -0.75);
    CHECK(q.mass_total() == doctest::Approx(2 * kPi).epsilon(1e-13));
    CHECK(q.mass_total() == doctest::Approx(2 * kPi * q.divisor().chi()).epsilon(1e-13));
}

TEST_CASE("glued football boundary_zero normalization") {
    GluedFootball g(-0.25, -0.75, GluedFootball::Normalization::boundary_zero);
    CHECK(g.value_r(1.0) == doctest::Approx(0.0).epsilon(1e-14));
    const double eps = 1e-10;
    CHECK(g.value_r(1.0 + eps) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(g.curvature_r(0.5) == doctest::Approx(0.75 * 0.75).epsilon(1e-13));
    CHECK(g.curvature_r(2.0) == doctest::Approx(0.25 * 0.25).epsilon(1e-13));
    // Same total mass in either normalization.
    CHECK(g.mass_total() == doctest::Approx(2 * kPi).epsilon(1e-13));
}

TEST_CASE("tails complement truncated moments") {
    GluedFootball g(-0.25, -0.75);
    for (double R : {0.5, 1.0, 3.0, 40.0}) {
        auto t = g.tail(R);
        REQUIRE(t.has_value());
        CHECK(g.mass_to(R) + t->mass == doctest::Approx(g.mass_total()).epsilon(1e-12));
        CHECK(g.area_to(R) + t->area == doctest::Approx(g.area_total()).epsilon(1e-12));
    }
    // Heavy cone at infinity leaves a large share outside R = 16.
    RadialBranch heavy(-0.8, 1.0, 0.0);
    auto t = heavy.tail(16.0);
    REQUIRE(t.has_value());
    CHECK(t->mass / heavy.mass_total() > 0.2);
}

TEST_CASE("rescaled identity and laws") {
    auto base = std::make_shared<GluedFootball>(0.0, -0.5);
    Rescaled id(base, 1.0, {0.0, 0.0}, 0.0);
    for (Vec2 z : {Vec2{0.3, 0.2}, Vec2{1.5, -0.4}}) {
        CHECK(id.value(z) == base->value(z));
        CHECK(id.laplacian(z) == base->laplacian(z));
    }

    Rescaled r(base, 2.0, {0.5, -1.0}, 0.0);
    for (Vec2 z : {Vec2{0.4, 0.3}, Vec2{-0.8, 0.1}, Vec2{1.2, 0.9}}) {
        Vec2 w{2.0 * z.x - 0.5, 2.0 * z.y + 1.0};
        CHECK(r.value(z) == doctest::Approx(base->value(w) + std::log(2.0)).epsilon(1e-14));
        // Curvature is invariant under the c = 0 rescale.
        CHECK(r.curvature(z) == doctest::Approx(base->curvature(w)).epsilon(1e-12));
    }
    // Seam circle moves to center k/lambda, radius 1/lambda.
    auto seams = r.seams();
    REQUIRE(seams.size() == 1);
    CHECK(seams[0].center.x == doctest::Approx(0.25));
    CHECK(seams[0].center.y == doctest::Approx(-0.5));
    CHECK(seams[0].radius == doctest::Approx(0.5));

    // Additive shift scales curvature by exp(-2c).
    Rescaled shifted(base, 1.0, {0.0, 0.0}, 0.3);
    CHECK(shifted.curvature({0.5, 0.0}) ==
          doctest::Approx(std::exp(-0.6) * base->curvature({0.5, 0.0})).epsilon(1e-12));
}

TEST_CASE("rescaled divisor positions") {
    auto base = std::make_shared<GluedFootball>(-0.25, -0.75);
    Rescaled r(base, 4.0, {1.0, 2.0});
    const auto& pts = r.divisor().points();
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].infinite);  // beta = -0.75 stays at infinity
    CHECK(pts[1].position.x == doctest::Approx(0.25));
    CHECK(pts[1].position.y == doctest::Approx(0.5));
}

TEST_CASE("pinching of constant-curvature families is 1") {
    CHECK(measure_pinching(RadialBranch(0.0, 1.0, 0.0)).rho == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(measure_pinching(RadialBranch(-0.5, 1.0, 0.2)).rho ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pinching of the glued football hits the divisor ratio") {
    GluedFootball g(0.0, -0.5);
    auto rep = measure_pinching(g);
    CHECK(rep.k_min == doctest::Approx(0.25).epsilon(1e-13));
    CHECK(rep.k_max == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(rep.rho == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(rep.rho0 == doctest::Approx(0.25).epsilon(1e-13));
    CHECK(rep.classification.kind == Criticality::supercritical);
    CHECK(rep.n_samples > 10000);
    CHECK(rep.n_nonfinite == 0);
}

TEST_CASE("pinching is invariant under rescaling") {
    auto base = std::make_shared<GluedFootball>(0.0, -0.5);
    for (auto [lambda, kx, ky] : {std::tuple{2.0, 0.5, -0.25}, std::tuple{0.7, -1.0, 0.3}}) {
        auto r = rescale(base, lambda, {kx, ky});
        auto rep = measure_pinching(*r);
        CHECK(rep.rho == doctest::Approx(0.25).epsilon(1e-10));
    }
}

}  // TEST_SUITE
