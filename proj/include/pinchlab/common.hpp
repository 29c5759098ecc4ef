#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pinchlab {

inline constexpr double kPi = 3.14159265358979323846264338327950288;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    double norm2() const { return x * x + y * y; }
    double norm() const { return std::sqrt(norm2()); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }

struct Circle {
    Vec2 center;
    double radius = 0.0;
};

// Thrown for violated preconditions and unusable inputs; carries a
// human-readable report so the CLI can print it and exit with code 2.
class pinch_error : public std::runtime_error {
  public:
    explicit pinch_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic pairwise summation. Independent of thread count and,
// for a fixed input order, of platform. Used wherever a reduction feeds
// a reported number.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    std::size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(v.data(), v.size());
}

// Bracketed scalar root finder: secant steps clipped to the bracket,
// bisection fallback. Requires f(lo) and f(hi) of opposite sign (or a
// zero endpoint). Tolerance is on the bracket width.
inline double find_root(const std::function<double(double)>& f, double lo, double hi,
                        double xtol = 1e-14, int max_iter = 200) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
        throw pinch_error("find_root: endpoints do not bracket a sign change");
    for (int it = 0; it < max_iter; ++it) {
        if (hi - lo <= xtol * (1.0 + std::fabs(lo) + std::fabs(hi))) break;
        double mid;
        double denom = fhi - flo;
        if (denom != 0.0) {
            mid = lo - flo * (hi - lo) / denom;
            double pad = 0.01 * (hi - lo);
            if (!(mid > lo + pad && mid < hi - pad)) mid = 0.5 * (lo + hi);
        } else {
            mid = 0.5 * (lo + hi);
        }
        double fmid = f(mid);
        if (fmid == 0.0) return mid;
        if ((fmid > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
            fhi = fmid;
        }
    }
    return 0.5 * (lo + hi);
}

// Expands a bracket geometrically around x0 until f changes sign, then
// refines. Direction: searches both sides.
inline double find_root_near(const std::function<double(double)>& f, double x0, double step,
                             double lo_limit, double hi_limit, double xtol = 1e-14) {
    double f0 = f(x0);
    if (f0 == 0.0) return x0;
    double s = step;
    for (int it = 0; it < 200; ++it) {
        double lo = std::max(lo_limit, x0 - s);
        double hi = std::min(hi_limit, x0 + s);
        double flo = f(lo), fhi = f(hi);
        if ((flo > 0.0) != (f0 > 0.0)) return find_root(f, lo, x0, xtol);
        if ((fhi > 0.0) != (f0 > 0.0)) return find_root(f, x0, hi, xtol);
        if (lo == lo_limit && hi == hi_limit) break;
        s *= 2.0;
    }
    throw pinch_error("find_root_near: no sign change inside search limits");
}

inline double sqr(double x) { return x * x; }

}  // namespace pinchlab
