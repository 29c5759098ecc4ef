#include <cmath>
#include <memory>

#include "doctest.h"
#include "pinchlab/factor.hpp"
#include "pinchlab/quadrature.hpp"

using namespace pinchlab;

TEST_SUITE("quadrature") {

TEST_CASE("total curvature mass of closed-form families") {
    // Mass must come out as 2 pi (2 + total weight) to 1e-4 relative.
    auto check = [](const ConformalFactor& f, double expected) {
        auto r = integrate_sphere(f, Density::mass);
        CHECK(r.value == doctest::Approx(expected).epsilon(1e-4));
        CHECK(r.tail_exact);
    };
    check(RadialBranch(0.0, 1.0, 0.0), 4 * kPi);
    check(RadialBranch(-0.25, 1.0, 0.0), 4 * kPi * 0.75);
    check(RadialBranch(-0.5, 1.0, 0.3), 4 * kPi * 0.5);
    check(RadialBranch(-0.75, 1.0, -0.2), 4 * kPi * 0.25);
    check(RadialBranch(-0.8, 1.0, 0.0), 4 * kPi * 0.2);
    check(GluedFootball(0.0, -0.5), 3 * kPi);
    check(GluedFootball(-0.25, -0.75), 2 * kPi);
}

TEST_CASE("total area of closed-form families") {
    auto a1 = integrate_sphere(GluedFootball(0.0, -0.5), Density::area);
    CHECK(a1.value == doctest::Approx(6 * kPi).epsilon(1e-4));
    auto a2 = integrate_sphere(RadialBranch(-0.5, 1.0, 0.3), Density::area);
    CHECK(a2.value == doctest::Approx(std::exp(0.6) * 2 * kPi).epsilon(1e-4));
}

TEST_CASE("disk truncations match closed forms") {
    GluedFootball g(-0.25, -0.75);
    for (double r : {0.5, 1.0, 3.0}) {
        auto m = integrate_disk(g, Density::mass, r);
        CHECK(m.value == doctest::Approx(g.mass_to(r)).epsilon(1e-4));
        auto a = integrate_disk(g, Density::area, r);
        CHECK(a.value == doctest::Approx(g.area_to(r)).epsilon(1e-4));
    }
}

TEST_CASE("error estimates are honest") {
    GluedFootball g(-0.25, -0.75);
    auto r = integrate_sphere(g, Density::mass);
    double exact = 2 * kPi;
    CHECK(std::fabs(r.value - exact) <= 5.0 * r.error_estimate + 1e-8 * exact);
    auto d = integrate_disk(g, Density::mass, 3.0);
    CHECK(std::fabs(d.value - g.mass_to(3.0)) <= 5.0 * d.error_estimate + 1e-8 * exact);
}

TEST_CASE("deeper grading never worsens the reported error") {
    GluedFootball g(-0.25, -0.75);
    QuadratureSpec s20, s40;
    s40.grading_depth = 40;
    auto e20 = integrate_sphere(g, Density::mass, s20).error_estimate;
    auto e40 = integrate_sphere(g, Density::mass, s40).error_estimate;
    CHECK(e40 <= e20 + 1e-12);

    QuadratureSpec sharper;
    sharper.max_splits = 80;
    auto esharp = integrate_sphere(g, Density::mass, sharper).error_estimate;
    CHECK(esharp <= e20 + 1e-12);
}

TEST_CASE("estimated tail covers factors without a closed form") {
    auto base = std::make_shared<GluedFootball>(0.0, -0.5);
    auto moved = rescale(base, 2.0, {0.5, -0.25});
    auto r = integrate_sphere(*moved, Density::mass);
    CHECK_FALSE(r.tail_exact);
    CHECK(r.value == doctest::Approx(3 * kPi).epsilon(2e-3));
    CHECK(r.tail > 0.0);
}

TEST_CASE("offset cone points are integrated through their own grading") {
    // Same football, translated: the cone moves off the grid center.
    auto base = std::make_shared<GluedFootball>(-0.25, -0.75);
    auto moved = rescale(base, 1.0, {0.5, 0.25});
    auto r = integrate_sphere(*moved, Density::mass);
    CHECK(r.value == doctest::Approx(2 * kPi).epsilon(2e-3));
}

TEST_CASE("validation") {
    auto base = std::make_shared<GluedFootball>(-0.25, -0.75);
    auto far_cone = rescale(base, 1.0, {9.0, 0.0});
    QuadratureSpec s;
    s.radius = 16.0;
    CHECK_THROWS_AS(integrate_sphere(*far_cone, Density::mass, s), pinch_error);
    // Auto radius adapts instead.
    CHECK(integrate_sphere(*far_cone, Density::mass).value ==
          doctest::Approx(2 * kPi).epsilon(5e-3));

    QuadratureSpec shallow;
    shallow.grading_depth = 0;
    CHECK_THROWS_AS(integrate_sphere(GluedFootball(-0.75, -0.75), Density::mass, shallow),
                    pinch_error);
    CHECK_THROWS_AS(integrate_disk(GluedFootball(-0.25, -0.75), Density::mass, 0.0),
                    pinch_error);
}

}  // TEST_SUITE
