#pragma once

#include <cstddef>

#include "pinchlab/factor.hpp"

namespace pinchlab {

// Which density of the metric e^{2u}|dz|^2 to integrate. Curvature mass
// uses K e^{2u} = -Delta(u), so no exponential is involved.
enum class Density { area, mass };

struct QuadratureSpec {
    double radius = 0.0;       // integration disk radius; 0 = auto from the divisor
    int n_radial = 96;         // base polar grid, radial cells
    int n_angular = 96;        // base polar grid, angular cells
    int grading_depth = 20;    // geometric rings per singular disk
    double grading_ratio = 0.5;
    double singular_disk_radius = 0.25;  // cap; shrunk near other points / the boundary
    int max_splits = 60;       // binary splits resolving singular-disk boundaries
    bool with_refinement = true;  // doubled-resolution pass for the error estimate
};

struct QuadratureResult {
    double value = 0.0;           // includes the tail, when integrating the sphere
    double error_estimate = 0.0;  // two-level difference plus tail uncertainty
    double tail = 0.0;            // contribution from beyond the integration disk
    bool tail_exact = false;      // tail came from the factor's closed form
    double radius = 0.0;          // integration disk radius actually used
    std::size_t n_evals = 0;
};

// Integral of the chosen density over the whole sphere: the disk |z| <= R
// by graded/adaptive quadrature plus the tail beyond R (closed form when the
// factor provides one, a power-law fit otherwise). Finite cone points must
// lie inside |z| < R/2.
QuadratureResult integrate_sphere(const ConformalFactor& f, Density kind,
                                  QuadratureSpec spec = {});

// Same machinery over the disk |z| <= r only, no tail. Cone points outside
// the disk are fine; cone points within 1e-9 of the boundary are rejected.
QuadratureResult integrate_disk(const ConformalFactor& f, Density kind, double r,
                                QuadratureSpec spec = {});

}  // namespace pinchlab
