#include "pinchlab/grid.hpp"

#include <algorithm>
#include <cmath>

namespace pinchlab {

namespace {

// Natural cubic spline curvatures: M[0] = M[n-1] = 0, interior rows solve
// M[i-1] + 4 M[i] + M[i+1] = 6 (f[i+1] - 2 f[i] + f[i-1]) / h^2.
void spline_curvatures(const double* f, std::ptrdiff_t stride, int n, double h,
                       double* m, std::ptrdiff_t mstride, std::vector<double>& scratch) {
    m[0] = 0.0;
    m[static_cast<std::ptrdiff_t>(n - 1) * mstride] = 0.0;
    if (n < 3) return;
    scratch.resize(static_cast<std::size_t>(n));
    double* c = scratch.data();  // superdiagonal after elimination
    double inv_h2 = 6.0 / (h * h);
    auto rhs = [&](int i) {
        return inv_h2 * (f[(i + 1) * stride] - 2.0 * f[i * stride] + f[(i - 1) * stride]);
    };
    // Thomas algorithm on the interior tridiagonal [1 4 1].
    double diag = 4.0;
    c[1] = 1.0 / diag;
    m[mstride] = rhs(1) / diag;
    for (int i = 2; i <= n - 2; ++i) {
        diag = 4.0 - c[i - 1];
        c[i] = 1.0 / diag;
        m[i * mstride] = (rhs(i) - m[(i - 1) * mstride]) / diag;
    }
    for (int i = n - 3; i >= 1; --i) {
        m[i * mstride] -= c[i + 1] * m[(i + 1) * mstride];
    }
}

struct Seg {
    double v;    // value
    double d;    // first derivative
    double dd;   // second derivative
};

// Cubic spline segment with endpoint values f0, f1 and curvatures m0, m1,
// evaluated at local offset t in [0, h].
Seg seg_eval(double f0, double f1, double m0, double m1, double t, double h) {
    double s = h - t;
    double inv_h = 1.0 / h;
    double inv_6h = inv_h / 6.0;
    Seg out;
    out.v = m0 * s * s * s * inv_6h + m1 * t * t * t * inv_6h +
            (f0 - m0 * h * h / 6.0) * s * inv_h + (f1 - m1 * h * h / 6.0) * t * inv_h;
    out.d = -m0 * s * s * 0.5 * inv_h + m1 * t * t * 0.5 * inv_h + (f1 - f0) * inv_h -
            (m1 - m0) * h / 6.0;
    out.dd = m0 * s * inv_h + m1 * t * inv_h;
    return out;
}

}  // namespace

UniformGrid2D::UniformGrid2D(GridBox box) : box_(box) {
    if (box_.nx < 4 || box_.ny < 4) throw pinch_error("grid needs at least 4x4 nodes");
    if (!(box_.h > 0.0)) throw pinch_error("grid spacing must be positive");
    data_.assign(static_cast<std::size_t>(box_.nx) * box_.ny, 0.0);
}

void UniformGrid2D::build_spline() {
    const int nx = box_.nx, ny = box_.ny;
    const std::size_t n = data_.size();
    mxx_.assign(n, 0.0);
    myy_.assign(n, 0.0);
    mxxyy_.assign(n, 0.0);
    std::vector<double> scratch;
    for (int j = 0; j < ny; ++j) {
        spline_curvatures(&data_[idx(0, j)], 1, nx, box_.h, &mxx_[idx(0, j)], 1, scratch);
    }
    for (int i = 0; i < nx; ++i) {
        spline_curvatures(&data_[idx(i, 0)], nx, ny, box_.h, &myy_[idx(i, 0)], nx, scratch);
        spline_curvatures(&mxx_[idx(i, 0)], nx, ny, box_.h, &mxxyy_[idx(i, 0)], nx, scratch);
    }
    spline_ready_ = true;
}

void UniformGrid2D::locate(const Vec2& z, int& i, int& j, double& tx, double& ty) const {
    if (!spline_ready_) throw pinch_error("grid spline not built; call build_spline()");
    const double eps = 1e-9 * box_.h;
    if (z.x < box_.x0 - eps || z.x > box_.x1() + eps || z.y < box_.y0 - eps ||
        z.y > box_.y1() + eps) {
        throw pinch_error("grid interpolation outside the box");
    }
    double fx = (z.x - box_.x0) / box_.h;
    double fy = (z.y - box_.y0) / box_.h;
    i = std::clamp(static_cast<int>(std::floor(fx)), 0, box_.nx - 2);
    j = std::clamp(static_cast<int>(std::floor(fy)), 0, box_.ny - 2);
    tx = std::clamp(z.x - (box_.x0 + box_.h * i), 0.0, box_.h);
    ty = std::clamp(z.y - (box_.y0 + box_.h * j), 0.0, box_.h);
}

double UniformGrid2D::interp(const Vec2& z) const {
    int i, j;
    double tx, ty;
    locate(z, i, j, tx, ty);
    const double h = box_.h;
    auto row = [&](const std::vector<double>& f, const std::vector<double>& m, int r) {
        return seg_eval(f[idx(i, r)], f[idx(i + 1, r)], m[idx(i, r)], m[idx(i + 1, r)], tx, h).v;
    };
    double g0 = row(data_, mxx_, j), g1 = row(data_, mxx_, j + 1);
    double m0 = row(myy_, mxxyy_, j), m1 = row(myy_, mxxyy_, j + 1);
    return seg_eval(g0, g1, m0, m1, ty, h).v;
}

Vec2 UniformGrid2D::interp_gradient(const Vec2& z) const {
    int i, j;
    double tx, ty;
    locate(z, i, j, tx, ty);
    const double h = box_.h;
    auto row = [&](const std::vector<double>& f, const std::vector<double>& m, int r) {
        return seg_eval(f[idx(i, r)], f[idx(i + 1, r)], m[idx(i, r)], m[idx(i + 1, r)], tx, h);
    };
    Seg g0 = row(data_, mxx_, j), g1 = row(data_, mxx_, j + 1);
    Seg m0 = row(myy_, mxxyy_, j), m1 = row(myy_, mxxyy_, j + 1);
    double ux = seg_eval(g0.d, g1.d, m0.d, m1.d, ty, h).v;
    double uy = seg_eval(g0.v, g1.v, m0.v, m1.v, ty, h).d;
    return {ux, uy};
}

double UniformGrid2D::interp_laplacian(const Vec2& z) const {
    int i, j;
    double tx, ty;
    locate(z, i, j, tx, ty);
    const double h = box_.h;
    auto row = [&](const std::vector<double>& f, const std::vector<double>& m, int r) {
        return seg_eval(f[idx(i, r)], f[idx(i + 1, r)], m[idx(i, r)], m[idx(i + 1, r)], tx, h);
    };
    Seg g0 = row(data_, mxx_, j), g1 = row(data_, mxx_, j + 1);
    Seg m0 = row(myy_, mxxyy_, j), m1 = row(myy_, mxxyy_, j + 1);
    double uxx = seg_eval(g0.dd, g1.dd, m0.dd, m1.dd, ty, h).v;
    double uyy = seg_eval(g0.v, g1.v, m0.v, m1.v, ty, h).dd;
    return uxx + uyy;
}

double UniformGrid2D::node_laplacian5(int i, int j) const {
    if (i < 1 || i >= box_.nx - 1 || j < 1 || j >= box_.ny - 1) {
        throw pinch_error("5-point Laplacian needs an interior node");
    }
    double c = at(i, j);
    return (at(i + 1, j) + at(i - 1, j) + at(i, j + 1) + at(i, j - 1) - 4.0 * c) /
           (box_.h * box_.h);
}

}  // namespace pinchlab
