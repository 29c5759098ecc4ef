#pragma once

#include <cstddef>
#include <vector>

#include "pinchlab/common.hpp"

namespace pinchlab {

// Node-centered square-cell grid: node (i, j) sits at
// (x0 + i*h, y0 + j*h), i in [0, nx), j in [0, ny).
struct GridBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double h = 1.0;
    int nx = 0;
    int ny = 0;

    double x1() const { return x0 + h * (nx - 1); }
    double y1() const { return y0 + h * (ny - 1); }
    bool contains(const Vec2& z, double margin_cells = 0.0) const {
        double m = margin_cells * h;
        return z.x >= x0 + m && z.x <= x1() - m && z.y >= y0 + m && z.y <= y1() - m;
    }
};

// Scalar field on a GridBox with C^2 interpolation: tensor-product natural
// cubic spline. Spline coefficient arrays are built once after filling and
// invalidated by writes.
class UniformGrid2D {
  public:
    UniformGrid2D() = default;
    explicit UniformGrid2D(GridBox box);

    const GridBox& box() const { return box_; }
    std::size_t size() const { return data_.size(); }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double at(int i, int j) const { return data_[idx(i, j)]; }
    void set(int i, int j, double v) {
        data_[idx(i, j)] = v;
        spline_ready_ = false;
    }
    Vec2 node(int i, int j) const {
        return {box_.x0 + box_.h * i, box_.y0 + box_.h * j};
    }

    void build_spline();
    bool spline_ready() const { return spline_ready_; }

    // C^2 spline interpolation; throws outside the box. Derivatives are the
    // interpolant's own, exact for the piecewise polynomial.
    double interp(const Vec2& z) const;
    Vec2 interp_gradient(const Vec2& z) const;
    double interp_laplacian(const Vec2& z) const;

    // Compact 5-point Laplacian at an interior node, untouched by spline
    // smoothing; second-order for fields smooth across the stencil.
    double node_laplacian5(int i, int j) const;

  private:
    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(j) * box_.nx + i; }
    void locate(const Vec2& z, int& i, int& j, double& tx, double& ty) const;

    GridBox box_;
    std::vector<double> data_;
    // Spline curvature arrays: d2/dx2, d2/dy2 and the cross d2x d2y field.
    std::vector<double> mxx_, myy_, mxxyy_;
    bool spline_ready_ = false;
};

}  // namespace pinchlab
