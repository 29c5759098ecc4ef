#include "pinchlab/factor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace pinchlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// S/(1+S) without overflow for huge S.
double saturate(double S) {
    if (S > 1e15) return 1.0;
    return S / (1.0 + S);
}

}  // namespace

RadialBranch::RadialBranch(double a, double lambda, double c)
    : a_(a), lambda_(lambda), c_(c), m_(2.0 + 2.0 * a) {
    if (!(a > -1.0 && a <= 0.0)) {
        std::ostringstream os;
        os << "radial branch weight " << a << " outside (-1, 0]";
        throw pinch_error(os.str());
    }
    if (!(lambda > 0.0)) throw pinch_error("radial branch requires lambda > 0");
    if (a < 0.0) {
        divisor_ = ConicDivisor({ConicPoint({0.0, 0.0}, a), ConicPoint::at_infinity(a)});
    }
}

double RadialBranch::value_r(double r) const {
    if (r < 0.0) throw pinch_error("negative radius");
    const double head = c_ + std::log(2.0 * (1.0 + a_)) + (1.0 + a_) * std::log(lambda_);
    if (r == 0.0) return a_ == 0.0 ? head : kInf;
    double t = m_ * std::log(lambda_ * r);  // ln S
    if (t > 700.0) return head + a_ * std::log(r) - t;  // log1p(S) = t up to e^{-t}
    return head + a_ * std::log(r) - std::log1p(std::exp(t));
}

double RadialBranch::slope_r(double r) const {
    if (r == 0.0) return a_ == 0.0 ? 0.0 : -kInf;
    double S = std::pow(lambda_ * r, m_);
    return (a_ - m_ * saturate(S)) / r;
}

double RadialBranch::laplacian_r(double r) const {
    if (r == 0.0) return a_ == 0.0 ? -4.0 * lambda_ * lambda_ : -kInf;
    double t = m_ * std::log(lambda_ * r);
    if (std::fabs(t) > 300.0) {
        // S/(1+S)^2 ~ e^{-|t|} on both ends.
        return -m_ * m_ * std::exp(-std::fabs(t)) / (r * r);
    }
    double S = std::exp(t);
    return -m_ * m_ * S / (r * r * (1.0 + S) * (1.0 + S));
}

double RadialBranch::area_to(double r) const {
    double S = std::pow(lambda_ * r, m_);
    return std::exp(2.0 * c_) * 4.0 * kPi * (1.0 + a_) * saturate(S);
}

double RadialBranch::mass_to(double r) const {
    double S = std::pow(lambda_ * r, m_);
    return 4.0 * kPi * (1.0 + a_) * saturate(S);
}

Vec2 RadialBranch::gradient(const Vec2& z) const {
    double r = z.norm();
    if (r == 0.0) return {0.0, 0.0};  // singular centers are excluded by samplers
    double s = slope_r(r);
    return {s * z.x / r, s * z.y / r};
}

std::optional<ConformalFactor::TailMoments> RadialBranch::tail(double R) const {
    double S = std::pow(lambda_ * R, m_);
    double frac = 1.0 - saturate(S);  // 1/(1+S)
    return TailMoments{area_total() * frac, mass_total() * frac};
}

GluedFootball::GluedFootball(double alpha, double beta, Normalization norm)
    : alpha_(alpha),
      beta_(beta),
      inner_(alpha, 1.0,
             norm == Normalization::unit_inner ? 0.0 : -std::log(1.0 + alpha)),
      outer_(beta, 1.0,
             norm == Normalization::unit_inner
                 ? std::log((1.0 + alpha) / (1.0 + beta))
                 : -std::log(1.0 + beta)) {
    if (!(beta > -1.0 && beta <= alpha && alpha <= 0.0))
        throw pinch_error("glued football requires -1 < beta <= alpha <= 0");
    std::vector<ConicPoint> pts;
    if (alpha < 0.0) pts.push_back(ConicPoint({0.0, 0.0}, alpha));
    if (beta < 0.0) pts.push_back(ConicPoint::at_infinity(beta));
    divisor_ = ConicDivisor(std::move(pts));
}

double GluedFootball::value_r(double r) const {
    return r <= 1.0 ? inner_.value_r(r) : outer_.value_r(r);
}

double GluedFootball::slope_r(double r) const {
    return r <= 1.0 ? inner_.slope_r(r) : outer_.slope_r(r);
}

double GluedFootball::laplacian_r(double r) const {
    return r <= 1.0 ? inner_.laplacian_r(r) : outer_.laplacian_r(r);
}

double GluedFootball::curvature_r(double r) const {
    return r <= 1.0 ? inner_.curvature_constant() : outer_.curvature_constant();
}

double GluedFootball::area_to(double r) const {
    if (r <= 1.0) return inner_.area_to(r);
    return inner_.area_to(1.0) + outer_.area_to(r) - outer_.area_to(1.0);
}

double GluedFootball::mass_to(double r) const {
    if (r <= 1.0) return inner_.mass_to(r);
    return inner_.mass_to(1.0) + outer_.mass_to(r) - outer_.mass_to(1.0);
}

double GluedFootball::area_total() const {
    return inner_.area_to(1.0) + outer_.area_total() - outer_.area_to(1.0);
}

double GluedFootball::mass_total() const {
    return inner_.mass_to(1.0) + outer_.mass_total() - outer_.mass_to(1.0);
}

Vec2 GluedFootball::gradient(const Vec2& z) const {
    return z.norm() <= 1.0 ? inner_.gradient(z) : outer_.gradient(z);
}

std::optional<ConformalFactor::TailMoments> GluedFootball::tail(double R) const {
    if (R >= 1.0) return outer_.tail(R);
    TailMoments t;
    t.area = inner_.area_to(1.0) - inner_.area_to(R) + outer_.area_total() -
             outer_.area_to(1.0);
    t.mass = inner_.mass_to(1.0) - inner_.mass_to(R) + outer_.mass_total() -
             outer_.mass_to(1.0);
    return t;
}

Rescaled::Rescaled(std::shared_ptr<const ConformalFactor> base, double lambda, Vec2 k,
                   double c)
    : base_(std::move(base)), lambda_(lambda), k_(k), c_(c) {
    if (!base_) throw pinch_error("rescale of a null factor");
    if (!(lambda > 0.0)) throw pinch_error("rescale requires lambda > 0");
    std::vector<ConicPoint> pts;
    for (const auto& p : base_->divisor().points()) {
        if (p.infinite) {
            pts.push_back(p);
        } else {
            pts.emplace_back(Vec2{(p.position.x + k.x) / lambda, (p.position.y + k.y) / lambda},
                             p.beta);
        }
    }
    divisor_ = ConicDivisor(std::move(pts));
}

double Rescaled::value(const Vec2& z) const {
    return base_->value(pullback(z)) + std::log(lambda_) + c_;
}

Vec2 Rescaled::gradient(const Vec2& z) const {
    Vec2 g = base_->gradient(pullback(z));
    return {lambda_ * g.x, lambda_ * g.y};
}

double Rescaled::laplacian(const Vec2& z) const {
    return lambda_ * lambda_ * base_->laplacian(pullback(z));
}

std::vector<Circle> Rescaled::seams() const {
    std::vector<Circle> out;
    for (const auto& s : base_->seams()) {
        out.push_back(Circle{{(s.center.x + k_.x) / lambda_, (s.center.y + k_.y) / lambda_},
                             s.radius / lambda_});
    }
    return out;
}

bool Rescaled::radially_symmetric() const {
    return base_->radially_symmetric() && k_.x == 0.0 && k_.y == 0.0;
}

double Rescaled::max_sample_radius() const {
    double cap = base_->max_sample_radius();
    if (!std::isfinite(cap)) return cap;
    return std::max(0.0, (cap - k_.norm()) / lambda_);
}

std::optional<ConformalFactor::TailMoments> Rescaled::tail(double R) const {
    if (k_.x != 0.0 || k_.y != 0.0) return std::nullopt;  // off-center tails are not disks upstream
    auto t = base_->tail(lambda_ * R);
    if (!t) return std::nullopt;
    return TailMoments{std::exp(2.0 * c_) * t->area, t->mass};
}

PinchingReport measure_pinching(const ConformalFactor& f, const PinchingConfig& cfg) {
    const auto& div = f.divisor();
    const auto seams = f.seams();
    const double h = cfg.spacing;
    const double excl = cfg.exclusion_cells * h;
    const double seam_excl = cfg.seam_exclusion_cells * h;

    auto excluded = [&](const Vec2& z) {
        for (const auto& p : div.points()) {
            if (p.infinite) continue;
            if ((z - p.position).norm() <= excl) return true;
        }
        for (const auto& s : seams) {
            if (std::fabs((z - s.center).norm() - s.radius) <= seam_excl) return true;
        }
        return false;
    };

    PinchingReport rep;
    rep.config = cfg;
    rep.classification = div.classify();
    try {
        rep.rho0 = div.rho0();
    } catch (const pinch_error&) {
        rep.rho0 = std::numeric_limits<double>::quiet_NaN();
    }

    const double r_cap = f.max_sample_radius();

    bool first = true;
    auto take = [&](const Vec2& z) {
        if (z.norm() > r_cap) return;
        if (excluded(z)) return;
        double kk = f.curvature(z);
        if (!std::isfinite(kk)) {
            ++rep.n_nonfinite;
            return;
        }
        if (first || kk < rep.k_min) {
            rep.k_min = kk;
            rep.argmin = z;
        }
        if (first || kk > rep.k_max) {
            rep.k_max = kk;
            rep.argmax = z;
        }
        first = false;
        ++rep.n_samples;
    };

    const long n = std::lround(2.0 * cfg.box_radius / h);
    for (long j = 0; j <= n; ++j) {
        double y = -cfg.box_radius + h * static_cast<double>(j);
        for (long i = 0; i <= n; ++i) {
            take({-cfg.box_radius + h * static_cast<double>(i), y});
        }
    }

    // Log-radial sweep from the box edge out beyond far_radius; the metric
    // end at infinity is covered up to 100x far_radius.
    double r_lo = std::max(cfg.box_radius, 4.0 * excl);
    double r_hi = std::min(100.0 * cfg.far_radius, r_cap);
    for (int ir = 0; ir <= cfg.n_radial && r_hi > r_lo; ++ir) {
        double s = static_cast<double>(ir) / cfg.n_radial;
        double r = r_lo * std::pow(r_hi / r_lo, s);
        for (int ia = 0; ia < cfg.n_angular; ++ia) {
            double th = 2.0 * kPi * ia / cfg.n_angular;
            take({r * std::cos(th), r * std::sin(th)});
        }
    }

    if (first) throw pinch_error("pinching: every sample point was excluded");
    if (!(rep.k_max > 0.0)) throw pinch_error("pinching: sampled curvature is nowhere positive");
    rep.rho = rep.k_min / rep.k_max;
    return rep;
}

}  // namespace pinchlab
