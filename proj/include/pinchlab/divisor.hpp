#pragma once

#include <string>
#include <vector>

#include "pinchlab/common.hpp"

namespace pinchlab {

// One conic point: a location on the sphere (finite complex coordinate or
// the point at infinity) with weight beta in (-1, 0). Weight beta means the
// metric has a cone of total angle 2*pi*(1+beta) there.
struct ConicPoint {
    Vec2 position;          // ignored when infinite
    bool infinite = false;
    double beta = 0.0;

    ConicPoint() = default;
    ConicPoint(Vec2 p, double b) : position(p), beta(b) {}
    static ConicPoint at_infinity(double b) {
        ConicPoint q;
        q.infinite = true;
        q.beta = b;
        return q;
    }
};

enum class Criticality { subcritical, critical, supercritical };

std::string to_string(Criticality c);

struct Classification {
    Criticality kind = Criticality::subcritical;
    double total = 0.0;      // sum of weights
    double beta1 = 0.0;      // smallest (most negative) weight
    double alpha = 0.0;      // total - beta1
    double chi = 0.0;        // 2 + total
    double threshold = 0.0;  // 2*beta1: total is compared against this
    // Nonempty when the alternate threshold convention (comparing total
    // against beta1 instead of 2*beta1) classifies this divisor differently.
    std::string note;
};

// A conic divisor: finitely many conic points, at most one of them at
// infinity, all weights in (-1, 0), finite positions pairwise distinct.
// Points are stored sorted by weight ascending (most negative first),
// ties keeping insertion order.
class ConicDivisor {
  public:
    ConicDivisor() = default;
    explicit ConicDivisor(std::vector<ConicPoint> pts);

    // Builds a divisor from weights alone, for operations that only look at
    // the weights. The smallest weight is placed at infinity and the rest
    // on the real axis inside |z| < 1/2.
    static ConicDivisor from_weights(std::vector<double> betas);

    const std::vector<ConicPoint>& points() const { return points_; }
    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    bool has_infinite_point() const;
    // Weight at infinity, 0 if there is no conic point there.
    double beta_at_infinity() const;

    double total() const;                  // sum of weights
    double beta1() const;                  // min weight (0 for the empty divisor)
    double alpha() const { return total() - beta1(); }
    double chi() const { return 2.0 + total(); }

    Classification classify() const;

    // (1+beta1)^2 / (1+alpha)^2. Requires chi > 0 and 1+alpha > 0; throws
    // pinch_error otherwise with a report of the violated condition.
    double rho0() const;

    std::string to_json() const;
    static ConicDivisor from_json(const std::string& text);

  private:
    std::vector<ConicPoint> points_;
};

}  // namespace pinchlab
