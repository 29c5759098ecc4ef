#include <cmath>

#include "doctest.h"
#include "pinchlab/divisor.hpp"

using namespace pinchlab;

TEST_SUITE("divisor") {

TEST_CASE("construction validates weights and positions") {
    CHECK_THROWS_AS(ConicDivisor({ConicPoint({0, 0}, -1.0)}), pinch_error);
    CHECK_THROWS_AS(ConicDivisor({ConicPoint({0, 0}, 0.0)}), pinch_error);
    CHECK_THROWS_AS(ConicDivisor({ConicPoint({0, 0}, 0.5)}), pinch_error);
    CHECK_THROWS_AS(ConicDivisor({ConicPoint({1, 0}, -0.5), ConicPoint({1, 0}, -0.25)}),
                    pinch_error);
    CHECK_THROWS_AS(
        ConicDivisor({ConicPoint::at_infinity(-0.5), ConicPoint::at_infinity(-0.25)}),
        pinch_error);
    CHECK_NOTHROW(ConicDivisor({ConicPoint({1, 0}, -0.5), ConicPoint::at_infinity(-0.5)}));
}

TEST_CASE("points are stored sorted by weight ascending") {
    ConicDivisor d({ConicPoint({0, 0}, -0.3), ConicPoint({1, 0}, -0.8),
                    ConicPoint::at_infinity(-0.5)});
    CHECK(d.points()[0].beta == -0.8);
    CHECK(d.points()[1].beta == -0.5);
    CHECK(d.points()[2].beta == -0.3);
    CHECK(d.beta1() == -0.8);
    CHECK(d.total() == doctest::Approx(-1.6).epsilon(1e-15));
}

TEST_CASE("classification trichotomy") {
    auto sub = ConicDivisor::from_weights({-0.3, -0.3, -0.3}).classify();
    CHECK(sub.kind == Criticality::subcritical);
    CHECK(sub.note.empty());
    CHECK(sub.total == doctest::Approx(-0.9));
    CHECK(sub.chi == doctest::Approx(1.1));

    auto crit = ConicDivisor::from_weights({-0.5, -0.25, -0.25}).classify();
    CHECK(crit.kind == Criticality::critical);

    auto sup = ConicDivisor::from_weights({-0.8, -0.3, -0.3}).classify();
    CHECK(sup.kind == Criticality::supercritical);
    CHECK(sup.alpha == doctest::Approx(-0.6));
}

TEST_CASE("classification is invariant under weight permutations") {
    auto a = ConicDivisor::from_weights({-0.8, -0.3, -0.3}).classify();
    auto b = ConicDivisor::from_weights({-0.3, -0.8, -0.3}).classify();
    CHECK(a.kind == b.kind);
    CHECK(a.beta1 == b.beta1);
    CHECK(a.total == b.total);
    CHECK(a.note == b.note);
}

TEST_CASE("alternate threshold note fires exactly on the ambiguous band") {
    // total in (2*beta1, beta1] disagrees across conventions.
    auto one = ConicDivisor::from_weights({-0.5}).classify();
    CHECK(one.kind == Criticality::supercritical);
    CHECK(!one.note.empty());
    CHECK(one.note.find("critical") != std::string::npos);

    auto three = ConicDivisor::from_weights({-0.8, -0.3, -0.3}).classify();
    CHECK(!three.note.empty());
    CHECK(three.note.find("subcritical") != std::string::npos);

    CHECK(ConicDivisor::from_weights({-0.3, -0.3, -0.3}).classify().note.empty());
    CHECK(ConicDivisor::from_weights({-0.5, -0.25, -0.25}).classify().note.empty());
}

TEST_CASE("rho0 values") {
    CHECK(ConicDivisor::from_weights({-0.5}).rho0() == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(ConicDivisor::from_weights({-0.8, -0.3, -0.3}).rho0() ==
          doctest::Approx(0.25).epsilon(1e-14));
    CHECK(ConicDivisor().rho0() == doctest::Approx(1.0));
    // Supercritical iff rho0 < 1.
    CHECK(ConicDivisor::from_weights({-0.3, -0.3, -0.3}).rho0() > 1.0);
}

TEST_CASE("rho0 guards") {
    // 1 + alpha = 0 here: no positive reference ratio exists.
    CHECK_THROWS_AS(ConicDivisor::from_weights({-0.9, -0.5, -0.5}).rho0(), pinch_error);
    // chi < 0.
    CHECK_THROWS_AS(ConicDivisor::from_weights({-0.9, -0.9, -0.9}).rho0(), pinch_error);
}

TEST_CASE("json round trip") {
    ConicDivisor d({ConicPoint({0.25, -0.125}, -0.3), ConicPoint::at_infinity(-0.8)});
    ConicDivisor e = ConicDivisor::from_json(d.to_json());
    REQUIRE(e.size() == 2);
    CHECK(e.points()[0].infinite);
    CHECK(e.points()[0].beta == -0.8);
    CHECK(e.points()[1].position.x == 0.25);
    CHECK(e.points()[1].position.y == -0.125);
    CHECK(e.points()[1].beta == -0.3);
    CHECK(e.classify().kind == d.classify().kind);
}

}  // TEST_SUITE
