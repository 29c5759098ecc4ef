#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "pinchlab/factor.hpp"
#include "pinchlab/grid.hpp"
#include "pinchlab/gridfactor.hpp"
#include "pinchlab/quadrature.hpp"

using namespace pinchlab;

namespace {

UniformGrid2D fill(const GridBox& box, double (*f)(double, double)) {
    UniformGrid2D g(box);
    for (int j = 0; j < box.ny; ++j) {
        for (int i = 0; i < box.nx; ++i) {
            Vec2 z = g.node(i, j);
            g.set(i, j, f(z.x, z.y));
        }
    }
    g.build_spline();
    return g;
}

double smooth_f(double x, double y) { return std::sin(x) * std::cos(y) + 0.3 * x * x * y; }
double smooth_fx(double x, double y) { return std::cos(x) * std::cos(y) + 0.6 * x * y; }
double smooth_fy(double x, double y) { return -std::sin(x) * std::sin(y) + 0.3 * x * x; }
double smooth_lap(double x, double y) { return -2.0 * std::sin(x) * std::cos(y) + 0.6 * y; }

double linear_f(double x, double y) { return 2.0 - 0.3 * x + 0.7 * y; }

struct SplineErrors {
    double value = 0.0, grad = 0.0, lap = 0.0;        // sup over probes
    double value_mean = 0.0, lap_mean = 0.0;          // mean over probes
};

// Errors over an off-node probe lattice in the inner half of the box, away
// from the natural-spline boundary layer. Means smooth out the cell-phase
// wobble that sup norms pick up between resolutions.
SplineErrors probe_errors(double h) {
    GridBox box{-2.0, -2.0, h, static_cast<int>(std::lround(4.0 / h)) + 1,
                static_cast<int>(std::lround(4.0 / h)) + 1};
    UniformGrid2D g = fill(box, smooth_f);
    SplineErrors e;
    int n = 0;
    for (double y = -1.0; y <= 1.0; y += 0.1303) {
        for (double x = -1.0; x <= 1.0; x += 0.1303) {
            double ev = std::fabs(g.interp({x, y}) - smooth_f(x, y));
            double el = std::fabs(g.interp_laplacian({x, y}) - smooth_lap(x, y));
            e.value = std::max(e.value, ev);
            e.lap = std::max(e.lap, el);
            e.value_mean += ev;
            e.lap_mean += el;
            Vec2 gr = g.interp_gradient({x, y});
            e.grad = std::max(e.grad, std::fabs(gr.x - smooth_fx(x, y)));
            e.grad = std::max(e.grad, std::fabs(gr.y - smooth_fy(x, y)));
            ++n;
        }
    }
    e.value_mean /= n;
    e.lap_mean /= n;
    return e;
}

std::string temp_path(const char* name) { return std::string("/tmp/") + name; }

}  // namespace

TEST_SUITE("grid") {

TEST_CASE("spline interpolation converges at the expected orders") {
    SplineErrors coarse = probe_errors(1.0 / 8.0);
    SplineErrors fine = probe_errors(1.0 / 16.0);
    CHECK(fine.value < 1e-4);
    CHECK(fine.grad < 1e-3);
    CHECK(fine.lap < 2e-2);
    // Fourth order in value, second in the Laplacian.
    CHECK(coarse.value_mean / fine.value_mean > 10.0);
    CHECK(coarse.lap_mean / fine.lap_mean > 3.2);
}

TEST_CASE("spline reproduces affine fields exactly") {
    GridBox box{-1.0, -1.0, 0.25, 9, 9};
    UniformGrid2D g = fill(box, linear_f);
    CHECK(g.interp({0.37, -0.52}) == doctest::Approx(linear_f(0.37, -0.52)).epsilon(1e-13));
    Vec2 gr = g.interp_gradient({0.37, -0.52});
    CHECK(gr.x == doctest::Approx(-0.3).epsilon(1e-12));
    CHECK(gr.y == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(std::fabs(g.interp_laplacian({0.37, -0.52})) < 1e-11);
}

TEST_CASE("5-point node Laplacian is exact on quadratics") {
    GridBox box{-1.0, -1.0, 0.125, 17, 17};
    UniformGrid2D g = fill(box, [](double x, double y) { return x * x - 3.0 * y * y; });
    CHECK(g.node_laplacian5(8, 8) == doctest::Approx(-4.0).epsilon(1e-10));
    CHECK(g.node_laplacian5(3, 12) == doctest::Approx(-4.0).epsilon(1e-10));
    CHECK_THROWS_AS((void)g.node_laplacian5(0, 5), pinch_error);
}

TEST_CASE("grid validation and evaluation guards") {
    CHECK_THROWS_AS(UniformGrid2D(GridBox{0, 0, 0.5, 3, 8}), pinch_error);
    CHECK_THROWS_AS(UniformGrid2D(GridBox{0, 0, -1.0, 8, 8}), pinch_error);
    UniformGrid2D g(GridBox{-1, -1, 0.25, 9, 9});
    CHECK_THROWS_AS((void)g.interp({0.0, 0.0}), pinch_error);  // spline not built
    g.build_spline();
    CHECK_THROWS_AS((void)g.interp({1.5, 0.0}), pinch_error);  // outside the box
    CHECK(g.interp({1.0, -1.0}) == doctest::Approx(0.0).epsilon(1e-12));  // corners included
}

TEST_CASE("sampled glued football reproduces values and node pinching") {
    GluedFootball fb(0.0, -0.5);
    GridBox box{-2.5, -2.5, 1.0 / 64.0, 321, 321};
    GridSampledFactor g = GridSampledFactor::sample(fb, box);

    CHECK(g.seams().size() == 1);
    CHECK(g.max_sample_radius() == doctest::Approx(2.5).epsilon(1e-5));
    CHECK_THROWS_AS((void)g.value({3.0, 0.0}), pinch_error);

    for (Vec2 z : {Vec2{0.3, 0.4}, Vec2{-1.7, 0.8}, Vec2{0.05, -0.12}}) {
        CHECK(g.value(z) == doctest::Approx(fb.value(z)).epsilon(1e-6));
        Vec2 gg = g.gradient(z), fg = fb.gradient(z);
        CHECK(gg.x == doctest::Approx(fg.x).epsilon(1e-4));
        CHECK(gg.y == doctest::Approx(fg.y).epsilon(1e-4));
        CHECK(g.laplacian(z) == doctest::Approx(fb.laplacian(z)).epsilon(2e-3));
    }

    PinchingReport rep = measure_pinching_nodes(g);
    CHECK(rep.k_max == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(rep.k_min == doctest::Approx(0.25).epsilon(1e-3));
    CHECK(rep.rho == doctest::Approx(0.25).epsilon(5e-4));
    CHECK(rep.rho0 == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(rep.n_nonfinite == 0);
    CHECK(rep.n_samples > 50000);

    // The continuum sampler clips to the box; the far sweep is unavailable,
    // so only the identity-cap path is checked here.
    auto wrapped = rescale(std::make_shared<const GridSampledFactor>(g), 2.0, {1.0, 0.0});
    CHECK(wrapped->max_sample_radius() == doctest::Approx(0.75).epsilon(1e-3));
}

TEST_CASE("sampling refuses a singular node") {
    GluedFootball fb(-0.25, -0.75);  // cone at the origin
    GridBox box{-1.0, -1.0, 0.25, 9, 9};
    CHECK_THROWS_AS(GridSampledFactor::sample(fb, box), pinch_error);
}

TEST_CASE("background model constants") {
    BackgroundModel bg = BackgroundModel::make(1.5, 0.25, 1.0, -0.5);
    CHECK(bg.c_inf == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(BackgroundModel::make(1.5, 0.0, 1.0, -0.5), pinch_error);
    CHECK_THROWS_AS(BackgroundModel::make(1.5, 1.0, -2.0, -0.5), pinch_error);
    CHECK_THROWS_AS(BackgroundModel::make(1.0, 1.0, 1.0, -1.0), pinch_error);
}

TEST_CASE("regular part reproduces the glued football through the closure") {
    GluedFootball fb(0.0, -0.5);
    BackgroundModel bg = BackgroundModel::make(1.5, 0.25, 1.0, -0.5);
    GridBox box{-4.0, -4.0, 1.0 / 16.0, 129, 129};
    UniformGrid2D h(box);
    for (int j = 0; j < box.ny; ++j) {
        for (int i = 0; i < box.nx; ++i) {
            Vec2 z = h.node(i, j);
            h.set(i, j, fb.value(z) + 0.5 * bg.nu * std::log1p(z.norm2()));
        }
    }
    GridRegularPart f(std::move(h), fb.divisor(), bg);

    // Inside the box, away from the seam circle.
    for (Vec2 z : {Vec2{0.3, 0.2}, Vec2{1.9, 0.3}, Vec2{-2.8, 1.1}}) {
        CHECK(f.value(z) == doctest::Approx(fb.value(z)).epsilon(1e-4));
    }
    // Outside the box the closure is the exact outer branch.
    for (Vec2 z : {Vec2{5.0, 1.0}, Vec2{-7.0, 4.0}, Vec2{30.0, -2.0}}) {
        CHECK(f.value(z) == doctest::Approx(fb.value(z)).epsilon(1e-12));
        Vec2 fg = f.gradient(z), bgr = fb.gradient(z);
        CHECK(fg.x == doctest::Approx(bgr.x).epsilon(1e-12));
        CHECK(fg.y == doctest::Approx(bgr.y).epsilon(1e-12));
        CHECK(f.laplacian(z) == doctest::Approx(fb.laplacian(z)).epsilon(1e-12));
    }
    auto t = f.tail(16.0);
    auto te = fb.tail(16.0);
    REQUIRE(t.has_value());
    CHECK(t->area == doctest::Approx(te->area).epsilon(1e-12));
    CHECK(t->mass == doctest::Approx(te->mass).epsilon(1e-12));
    CHECK_FALSE(f.tail(3.0).has_value());  // circle not past the box corners
}

TEST_CASE("regular part with gamma correction carries a cone exactly") {
    // u = radial branch with weight -1/2 at 0 and infinity, K = 1/4:
    // u - beta ln r - BG = c' - log1p(r) (+ r from the gamma term), and the
    // local correction coefficient is exactly gamma = -K0 e^{2 c_loc} = -1.
    RadialBranch branch(-0.5, 1.0, std::log(2.0));
    const double cprime = std::log(2.0) + std::log(2.0 * 0.5);  // = ln 2
    BackgroundModel bg = BackgroundModel::make(1.0, 0.25, 1.0, -0.5);
    GridBox box{-4.0, -4.0, 1.0 / 16.0, 129, 129};
    const double r_corr = 1.0;
    UniformGrid2D h(box);
    for (int j = 0; j < box.ny; ++j) {
        for (int i = 0; i < box.nx; ++i) {
            Vec2 z = h.node(i, j);
            double r = z.norm();
            // Correction kernel for p = 1, R0 = 1: C = r - 3/8 - 3/4 r^2 + r^4/8.
            double Cr = 0.0;
            if (r < r_corr) Cr = r - 0.375 - 0.75 * r * r + 0.125 * r * r * r * r;
            // h = u - P_corr - BG with gamma = -1, in cancellation-free form.
            h.set(i, j, cprime - std::log1p(r) + Cr + 0.5 * bg.nu * std::log1p(r * r));
        }
    }
    GridRegularPart f(std::move(h), branch.divisor(), bg, {-1.0}, r_corr);

    for (Vec2 z : {Vec2{0.01, 0.02}, Vec2{0.3, -0.1}, Vec2{0.6, 0.6}, Vec2{2.5, 1.0}}) {
        CHECK(f.value(z) == doctest::Approx(branch.value(z)).epsilon(1e-5));
        CHECK(f.curvature(z) == doctest::Approx(0.25).epsilon(2e-3));
    }
    // Finite-difference consistency of the assembled pieces.
    {
        Vec2 z{0.41, -0.23};
        double eps = 1e-5;
        double fx = (f.value({z.x + eps, z.y}) - f.value({z.x - eps, z.y})) / (2 * eps);
        double fy = (f.value({z.x, z.y + eps}) - f.value({z.x, z.y - eps})) / (2 * eps);
        Vec2 gr = f.gradient(z);
        CHECK(gr.x == doctest::Approx(fx).epsilon(1e-5));
        CHECK(gr.y == doctest::Approx(fy).epsilon(1e-5));
    }
    // Outside the box the closure is the branch itself (the multipole factor
    // of a cone at the origin is identically 1).
    CHECK(f.value({6.0, 2.0}) == doctest::Approx(branch.value({6.0, 2.0})).epsilon(1e-12));
    auto t = f.tail(16.0);
    auto te = branch.tail(16.0);
    REQUIRE(t.has_value());
    CHECK(t->area == doctest::Approx(te->area).epsilon(1e-10));
    CHECK(t->mass == doctest::Approx(te->mass).epsilon(1e-12));

    // Whole pipeline: singular quadrature over the grid-backed factor.
    auto mass = integrate_sphere(f, Density::mass);
    auto area = integrate_sphere(f, Density::area);
    CHECK(mass.value == doctest::Approx(branch.mass_total()).epsilon(1e-3));
    CHECK(area.value == doctest::Approx(branch.area_total()).epsilon(1e-3));
}

TEST_CASE("regular part constructor validation") {
    BackgroundModel bg = BackgroundModel::make(1.5, 0.25, 1.0, -0.5);
    GridBox box{-2.0, -2.0, 0.25, 17, 17};
    UniformGrid2D h(box);
    auto div = ConicDivisor({ConicPoint::at_infinity(-0.5)});

    BackgroundModel wrong_nu = bg;
    wrong_nu.nu = 1.3;
    CHECK_THROWS_AS(GridRegularPart(UniformGrid2D(box), div, wrong_nu), pinch_error);

    BackgroundModel wrong_c = bg;
    wrong_c.c_inf += 0.01;
    CHECK_THROWS_AS(GridRegularPart(UniformGrid2D(box), div, wrong_c), pinch_error);

    auto div2 = ConicDivisor({ConicPoint::at_infinity(-0.25)});
    CHECK_THROWS_AS(GridRegularPart(UniformGrid2D(box), div2, bg), pinch_error);

    CHECK_THROWS_AS(GridRegularPart(UniformGrid2D(box), div, bg, {1.0, 2.0}), pinch_error);
}

TEST_CASE("grid files round-trip bitwise") {
    GluedFootball fb(0.0, -0.5);
    GridBox box{-1.5, -1.5, 0.125, 25, 25};
    GridSampledFactor g = GridSampledFactor::sample(fb, box);

    std::string p1 = temp_path("pinchlab_grid_s.bin");
    save_grid_factor(g, p1);
    GridSampledFactor r = load_grid_sampled(p1);
    CHECK(r.grid().box().nx == 25);
    CHECK(r.seams().size() == 1);
    CHECK(r.divisor().total() == doctest::Approx(-0.5).epsilon(1e-15));
    for (int j = 0; j < 25; ++j)
        for (int i = 0; i < 25; ++i) REQUIRE(r.grid().at(i, j) == g.grid().at(i, j));

    // CSV payload preserves values exactly through %.17g.
    std::string p2 = temp_path("pinchlab_grid_s.csv");
    save_grid_factor(g, p2, true);
    GridSampledFactor rc = load_grid_sampled(p2);
    for (int j = 0; j < 25; ++j)
        for (int i = 0; i < 25; ++i) REQUIRE(rc.grid().at(i, j) == g.grid().at(i, j));

    // Deterministic bytes: saving twice produces identical files.
    std::string p3 = temp_path("pinchlab_grid_s2.bin");
    save_grid_factor(g, p3);
    std::ifstream f1(p1, std::ios::binary), f2(p3, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    // Regular-part files keep the background, gammas and kind dispatch.
    BackgroundModel bg = BackgroundModel::make(1.5, 0.25, 1.0, -0.5);
    UniformGrid2D h(box);
    for (int j = 0; j < box.ny; ++j)
        for (int i = 0; i < box.nx; ++i)
            h.set(i, j, fb.value(h.node(i, j)) + 0.5 * bg.nu * std::log1p(h.node(i, j).norm2()));
    GridRegularPart reg(std::move(h), fb.divisor(), bg);
    std::string p4 = temp_path("pinchlab_grid_r.bin");
    save_grid_factor(reg, p4);
    GridRegularPart rr = load_grid_regular_part(p4);
    CHECK(rr.background().c_inf == reg.background().c_inf);
    CHECK(rr.value({0.3, 0.2}) == doctest::Approx(reg.value({0.3, 0.2})).epsilon(1e-14));
    auto any = load_grid_factor(p4);
    CHECK(any->value({0.3, 0.2}) == doctest::Approx(reg.value({0.3, 0.2})).epsilon(1e-14));
    auto any2 = load_grid_factor(p1);
    CHECK(any2->divisor().total() == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK_THROWS_AS(load_grid_regular_part(p1), pinch_error);
}

}  // TEST_SUITE
