#include "pinchlab/divisor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace pinchlab {

std::string to_string(Criticality c) {
    switch (c) {
        case Criticality::subcritical: return "subcritical";
        case Criticality::critical: return "critical";
        case Criticality::supercritical: return "supercritical";
    }
    return "unknown";
}

ConicDivisor::ConicDivisor(std::vector<ConicPoint> pts) : points_(std::move(pts)) {
    int n_inf = 0;
    for (const auto& p : points_) {
        if (!(p.beta > -1.0 && p.beta < 0.0)) {
            std::ostringstream os;
            os << "conic weight " << p.beta << " outside (-1, 0)";
            throw pinch_error(os.str());
        }
        if (p.infinite) ++n_inf;
    }
    if (n_inf > 1) throw pinch_error("more than one conic point at infinity");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        for (std::size_t j = i + 1; j < points_.size(); ++j) {
            if (points_[i].infinite || points_[j].infinite) continue;
            if ((points_[i].position - points_[j].position).norm() == 0.0)
                throw pinch_error("coincident finite conic points");
        }
    }
    std::stable_sort(points_.begin(), points_.end(),
                     [](const ConicPoint& a, const ConicPoint& b) { return a.beta < b.beta; });
}

ConicDivisor ConicDivisor::from_weights(std::vector<double> betas) {
    std::sort(betas.begin(), betas.end());
    std::vector<ConicPoint> pts;
    pts.reserve(betas.size());
    for (std::size_t i = 0; i < betas.size(); ++i) {
        if (i == 0) {
            pts.push_back(ConicPoint::at_infinity(betas[i]));
        } else {
            // Distinct real positions inside |z| < 1/2.
            double x = 0.4 * (2.0 * static_cast<double>(i) / static_cast<double>(betas.size()) - 1.0);
            pts.emplace_back(Vec2{x, 0.0}, betas[i]);
        }
    }
    return ConicDivisor(std::move(pts));
}

bool ConicDivisor::has_infinite_point() const {
    for (const auto& p : points_)
        if (p.infinite) return true;
    return false;
}

double ConicDivisor::beta_at_infinity() const {
    for (const auto& p : points_)
        if (p.infinite) return p.beta;
    return 0.0;
}

double ConicDivisor::total() const {
    double s = 0.0;
    for (const auto& p : points_) s += p.beta;
    return s;
}

double ConicDivisor::beta1() const {
    if (points_.empty()) return 0.0;
    return points_.front().beta;  // sorted ascending
}

Classification ConicDivisor::classify() const {
    Classification c;
    c.total = total();
    c.beta1 = beta1();
    c.alpha = c.total - c.beta1;
    c.chi = 2.0 + c.total;
    c.threshold = 2.0 * c.beta1;
    if (c.total < c.threshold)
        c.kind = Criticality::subcritical;
    else if (c.total == c.threshold)
        c.kind = Criticality::critical;
    else
        c.kind = Criticality::supercritical;
    // Alternate convention compares total against beta1. The two readings
    // disagree exactly when total lies in (2*beta1, beta1].
    if (c.total > 2.0 * c.beta1 && c.total <= c.beta1) {
        Criticality alt =
            c.total < c.beta1 ? Criticality::subcritical : Criticality::critical;
        c.note = "alternate threshold convention (total vs beta1) would classify this divisor as " +
                 to_string(alt);
    }
    return c;
}

double ConicDivisor::rho0() const {
    double b1 = beta1();
    double a = alpha();
    if (!(chi() > 0.0)) {
        std::ostringstream os;
        os << "rho0 requires 2 + total > 0, got total = " << total();
        throw pinch_error(os.str());
    }
    // <= a round-off margin rather than <= 0: the ratio diverges as
    // 1 + alpha -> 0+, so values inside noise of zero are undefined anyway.
    if (1.0 + a <= 1e-12) {
        std::ostringstream os;
        os << "rho0 undefined: 1 + alpha = " << 1.0 + a
           << " is nonpositive up to round-off (alpha = total - beta1 = " << a << ")";
        throw pinch_error(os.str());
    }
    return sqr(1.0 + b1) / sqr(1.0 + a);
}

std::string ConicDivisor::to_json() const {
    nlohmann::json j;
    j["points"] = nlohmann::json::array();
    for (const auto& p : points_) {
        nlohmann::json q;
        q["re"] = p.infinite ? 0.0 : p.position.x;
        q["im"] = p.infinite ? 0.0 : p.position.y;
        q["infinite"] = p.infinite;
        q["beta"] = p.beta;
        j["points"].push_back(q);
    }
    return j.dump(2);
}

ConicDivisor ConicDivisor::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (!j.contains("points") || !j["points"].is_array())
        throw pinch_error("divisor json: missing \"points\" array");
    std::vector<ConicPoint> pts;
    for (const auto& q : j["points"]) {
        ConicPoint p;
        p.infinite = q.value("infinite", false);
        p.position = Vec2{q.value("re", 0.0), q.value("im", 0.0)};
        if (!q.contains("beta")) throw pinch_error("divisor json: point missing \"beta\"");
        p.beta = q["beta"].get<double>();
        pts.push_back(p);
    }
    return ConicDivisor(std::move(pts));
}

}  // namespace pinchlab
