#include "pinchlab/gridfactor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace pinchlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const BackgroundModel& require_valid(const BackgroundModel& bg) {
    if (!(bg.k0 > 0.0)) throw pinch_error("background model requires k0 > 0");
    if (!(bg.Lambda > 0.0)) throw pinch_error("background model requires Lambda > 0");
    return bg;
}

// 8-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr double kGx[8] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                           -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                           0.7966664774136267,  0.9602898564975363};
constexpr double kGw[8] = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                           0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                           0.2223810344533745, 0.1012285362903763};

}  // namespace

GridSampledFactor::GridSampledFactor(UniformGrid2D u, ConicDivisor div,
                                     std::vector<Circle> seams)
    : u_(std::move(u)), divisor_(std::move(div)), seams_(std::move(seams)) {
    if (u_.size() == 0) throw pinch_error("sampled factor needs a non-empty grid");
    if (!u_.spline_ready()) u_.build_spline();
}

GridSampledFactor GridSampledFactor::sample(const ConformalFactor& src, const GridBox& box) {
    UniformGrid2D g(box);
    for (int j = 0; j < box.ny; ++j) {
        for (int i = 0; i < box.nx; ++i) {
            double v = src.value(g.node(i, j));
            if (!std::isfinite(v)) {
                std::ostringstream os;
                os << "sampling hit a non-finite value at node (" << g.node(i, j).x << ", "
                   << g.node(i, j).y << "); shift the box or spacing off the singular point";
                throw pinch_error(os.str());
            }
            g.set(i, j, v);
        }
    }
    return GridSampledFactor(std::move(g), src.divisor(), src.seams());
}

double GridSampledFactor::max_sample_radius() const {
    const GridBox& b = u_.box();
    double cap = std::min(std::min(-b.x0, b.x1()), std::min(-b.y0, b.y1()));
    return std::max(0.0, cap - 1e-6 * b.h);
}

PinchingReport measure_pinching_nodes(const GridSampledFactor& g, const PinchingConfig& cfg) {
    const GridBox& box = g.grid().box();
    const double h = box.h;
    // 5-point curvature within a few cells of a cone measures the stencil,
    // not the metric; widen the collar to at least the stencil's footprint.
    const double cone_excl = std::max(cfg.exclusion_cells, 4.0) * h;
    const double seam_excl = cfg.seam_exclusion_cells * h;
    const auto& div = g.divisor();
    const auto seams = g.seams();

    PinchingReport rep;
    rep.config = cfg;
    rep.config.spacing = h;
    rep.classification = div.classify();
    try {
        rep.rho0 = div.rho0();
    } catch (const pinch_error&) {
        rep.rho0 = std::numeric_limits<double>::quiet_NaN();
    }

    bool first = true;
    for (int j = 1; j < box.ny - 1; ++j) {
        for (int i = 1; i < box.nx - 1; ++i) {
            Vec2 z = g.grid().node(i, j);
            bool skip = false;
            for (const auto& p : div.points()) {
                if (!p.infinite && (z - p.position).norm() <= cone_excl) {
                    skip = true;
                    break;
                }
            }
            if (!skip) {
                for (const auto& s : seams) {
                    if (std::fabs((z - s.center).norm() - s.radius) <= seam_excl) {
                        skip = true;
                        break;
                    }
                }
            }
            if (skip) continue;
            double kk = g.node_curvature(i, j);
            if (!std::isfinite(kk)) {
                ++rep.n_nonfinite;
                continue;
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
        }
    }
    if (first) throw pinch_error("node pinching: every node was excluded");
    if (!(rep.k_max > 0.0))
        throw pinch_error("node pinching: sampled curvature is nowhere positive");
    rep.rho = rep.k_min / rep.k_max;
    return rep;
}

BackgroundModel BackgroundModel::make(double nu, double k0, double Lambda, double beta_inf) {
    if (!(beta_inf > -1.0 && beta_inf <= 0.0))
        throw pinch_error("background weight at infinity outside (-1, 0]");
    BackgroundModel bg;
    bg.nu = nu;
    bg.k0 = k0;
    bg.Lambda = Lambda;
    bg.beta_inf = beta_inf;
    require_valid(bg);
    bg.c_inf = std::log(2.0 * (1.0 + beta_inf)) - (1.0 + beta_inf) * std::log(Lambda) -
               0.5 * std::log(k0);
    return bg;
}

GridRegularPart::GridRegularPart(UniformGrid2D h, ConicDivisor div, BackgroundModel bg,
                                 std::vector<double> gammas, double correction_radius)
    : h_(std::move(h)),
      divisor_(std::move(div)),
      bg_(require_valid(bg)),
      gammas_(std::move(gammas)),
      r_corr_(correction_radius),
      ext_(bg.beta_inf, bg.Lambda, -0.5 * std::log(bg.k0)) {
    if (h_.size() == 0) throw pinch_error("regular part needs a non-empty grid");
    double binf = divisor_.beta_at_infinity();
    if (std::fabs(binf - bg_.beta_inf) > 1e-12)
        throw pinch_error("background weight at infinity disagrees with the divisor");
    if (std::fabs(bg_.nu - (2.0 + divisor_.total())) > 1e-9)
        throw pinch_error("background decay coefficient nu must equal 2 + total weight");
    double c_formula = std::log(2.0 * (1.0 + bg_.beta_inf)) -
                       (1.0 + bg_.beta_inf) * std::log(bg_.Lambda) - 0.5 * std::log(bg_.k0);
    if (std::fabs(bg_.c_inf - c_formula) > 1e-9)
        throw pinch_error("background c_inf disagrees with the exterior radial model");
    finite_weight_sum_ = divisor_.total() - binf;

    std::vector<const ConicPoint*> finite;
    for (const auto& p : divisor_.points())
        if (!p.infinite) finite.push_back(&p);
    if (gammas_.empty()) gammas_.assign(finite.size(), 0.0);
    if (gammas_.size() != finite.size())
        throw pinch_error("one gamma correction per finite cone point required");
    if (r_corr_ <= 0.0) r_corr_ = 1.0;
    for (const ConicPoint* q : finite) {
        Kernel k;
        k.p = 2.0 + 2.0 * q->beta;
        double R = r_corr_;
        // Match value, slope and second derivative of rho^p at R.
        k.c = k.p * (k.p - 2.0) / 8.0 * std::pow(R, k.p - 4.0);
        k.b = k.p * (4.0 - k.p) / 4.0 * std::pow(R, k.p - 2.0);
        k.a = std::pow(R, k.p) * (1.0 - 0.75 * k.p + k.p * k.p / 8.0);
        kernels_.push_back(k);
    }

    const GridBox& b = h_.box();
    for (double cx : {b.x0, b.x1()}) {
        for (double cy : {b.y0, b.y1()}) {
            box_reach_ = std::max(box_reach_, Vec2{cx, cy}.norm());
        }
    }
    if (!h_.spline_ready()) h_.build_spline();
}

double GridRegularPart::singular_part(const Vec2& z) const {
    double out = 0.0;
    std::size_t gi = 0;
    for (const auto& p : divisor_.points()) {
        if (p.infinite) continue;
        double rho = (z - p.position).norm();
        if (rho == 0.0) return kInf;
        out += p.beta * std::log(rho);
        double g = gammas_[gi];
        const Kernel& k = kernels_[gi];
        ++gi;
        if (g != 0.0 && rho < r_corr_) {
            out += g * (std::pow(rho, k.p) - k.a - (k.b + k.c * rho * rho) * rho * rho);
        }
    }
    return out;
}

Vec2 GridRegularPart::singular_gradient(const Vec2& z) const {
    Vec2 out{0.0, 0.0};
    std::size_t gi = 0;
    for (const auto& p : divisor_.points()) {
        if (p.infinite) continue;
        Vec2 d = z - p.position;
        double rho = d.norm();
        if (rho == 0.0) return {0.0, 0.0};  // singular centers are excluded by samplers
        double slope = p.beta / rho;
        double g = gammas_[gi];
        const Kernel& k = kernels_[gi];
        ++gi;
        if (g != 0.0 && rho < r_corr_) {
            slope += g * (k.p * std::pow(rho, k.p - 1.0) -
                          (2.0 * k.b + 4.0 * k.c * rho * rho) * rho);
        }
        out.x += slope * d.x / rho;
        out.y += slope * d.y / rho;
    }
    return out;
}

double GridRegularPart::singular_laplacian(const Vec2& z) const {
    double out = 0.0;
    std::size_t gi = 0;
    for (const auto& p : divisor_.points()) {
        if (p.infinite) continue;
        double rho = (z - p.position).norm();
        double g = gammas_[gi];
        const Kernel& k = kernels_[gi];
        ++gi;
        if (g == 0.0 || rho >= r_corr_) continue;
        out += g * (k.p * k.p * std::pow(rho, k.p - 2.0) - 4.0 * k.b -
                    16.0 * k.c * rho * rho);
    }
    return out;
}

double GridRegularPart::bg_value(const Vec2& z) const {
    return -0.5 * bg_.nu * std::log1p(z.norm2());
}

Vec2 GridRegularPart::bg_gradient(const Vec2& z) const {
    double f = -bg_.nu / (1.0 + z.norm2());
    return {f * z.x, f * z.y};
}

double GridRegularPart::bg_laplacian(const Vec2& z) const {
    double d = 1.0 + z.norm2();
    return -2.0 * bg_.nu / (d * d);
}

double GridRegularPart::closure_T(double r) const {
    return ext_.value_r(r) - finite_weight_sum_ * std::log(r) +
           0.5 * bg_.nu * std::log1p(r * r) - bg_.c_inf;
}

double GridRegularPart::closure_T_slope(double r) const {
    return ext_.slope_r(r) - finite_weight_sum_ / r + bg_.nu * r / (1.0 + r * r);
}

double GridRegularPart::value(const Vec2& z) const {
    if (inside_box(z)) return singular_part(z) + bg_value(z) + h_.interp(z);
    return singular_part(z) + bg_value(z) + bg_.c_inf + closure_T(z.norm());
}

Vec2 GridRegularPart::gradient(const Vec2& z) const {
    Vec2 g = singular_gradient(z) + bg_gradient(z);
    if (inside_box(z)) return g + h_.interp_gradient(z);
    double r = z.norm();
    double ts = closure_T_slope(r);
    return {g.x + ts * z.x / r, g.y + ts * z.y / r};
}

double GridRegularPart::laplacian(const Vec2& z) const {
    if (inside_box(z)) return singular_laplacian(z) + bg_laplacian(z) + h_.interp_laplacian(z);
    return singular_laplacian(z) + ext_.laplacian_r(z.norm());
}

std::optional<ConformalFactor::TailMoments> GridRegularPart::tail(double R) const {
    if (R < box_reach_) return std::nullopt;  // the closure only covers |z| past the box
    auto ext_tail = ext_.tail(R);
    TailMoments t;
    // Outside the box, -Delta u is exactly the exterior model's radial mass
    // density (the multipole part of P is harmonic there), so the mass tail
    // is closed-form.
    t.mass = ext_tail->mass;
    t.area = ext_tail->area;
    if (finite_weight_sum_ != 0.0) {
        // Area picks up the multipole factor M(z) = prod (|z-z_i|/|z|)^{2 b_i}:
        // integrate e^{2 u_ext} r^2 (Mbar(r) - 1) in log radius, where Mbar is
        // the angular average. Mbar - 1 = O(1/r^2), so the integral converges
        // fast and the remainder past 1e4 R is negligible.
        const int n_seg = 40, n_theta = 48;
        const double s0 = std::log(R), s1 = std::log(1e4 * R);
        double corr = 0.0;
        for (int seg = 0; seg < n_seg; ++seg) {
            double a = s0 + (s1 - s0) * seg / n_seg;
            double b = s0 + (s1 - s0) * (seg + 1) / n_seg;
            double mid = 0.5 * (a + b), halfw = 0.5 * (b - a);
            for (int q = 0; q < 8; ++q) {
                double r = std::exp(mid + halfw * kGx[q]);
                double mbar = 0.0;
                for (int it = 0; it < n_theta; ++it) {
                    double th = 2.0 * kPi * it / n_theta;
                    Vec2 zz{r * std::cos(th), r * std::sin(th)};
                    double e = 0.0;
                    for (const auto& p : divisor_.points()) {
                        if (p.infinite) continue;
                        e += 2.0 * p.beta * std::log((zz - p.position).norm() / r);
                    }
                    mbar += std::expm1(e);
                }
                mbar /= n_theta;
                corr += kGw[q] * halfw * std::exp(2.0 * ext_.value_r(r)) * r * r * mbar;
            }
        }
        t.area += 2.0 * kPi * corr;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Grid files: one line of JSON, then the payload.

namespace {

using nlohmann::json;

json box_to_json(const GridBox& b) {
    return json{{"x0", b.x0}, {"y0", b.y0}, {"h", b.h}, {"nx", b.nx}, {"ny", b.ny}};
}

GridBox box_from_json(const json& j) {
    GridBox b;
    b.x0 = j.at("x0").get<double>();
    b.y0 = j.at("y0").get<double>();
    b.h = j.at("h").get<double>();
    b.nx = j.at("nx").get<int>();
    b.ny = j.at("ny").get<int>();
    return b;
}

void write_payload(std::ofstream& out, const UniformGrid2D& g, bool csv) {
    if (!csv) {
        out.write(reinterpret_cast<const char*>(g.data()),
                  static_cast<std::streamsize>(g.size() * sizeof(double)));
        return;
    }
    const GridBox& b = g.box();
    char buf[40];
    for (int j = 0; j < b.ny; ++j) {
        for (int i = 0; i < b.nx; ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", g.at(i, j));
            out << buf << (i + 1 < b.nx ? "," : "\n");
        }
    }
}

UniformGrid2D read_payload(std::ifstream& in, const GridBox& box, const std::string& kind) {
    UniformGrid2D g(box);
    if (kind == "f64") {
        in.read(reinterpret_cast<char*>(g.data()),
                static_cast<std::streamsize>(g.size() * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != g.size() * sizeof(double))
            throw pinch_error("grid file truncated");
        return g;
    }
    if (kind == "csv") {
        std::string line;
        for (int j = 0; j < box.ny; ++j) {
            if (!std::getline(in, line)) throw pinch_error("grid file truncated");
            const char* s = line.c_str();
            for (int i = 0; i < box.nx; ++i) {
                char* end = nullptr;
                double v = std::strtod(s, &end);
                if (end == s) throw pinch_error("grid file: malformed CSV row");
                g.set(i, j, v);
                s = (*end == ',') ? end + 1 : end;
            }
        }
        return g;
    }
    throw pinch_error("grid file: unknown payload kind '" + kind + "'");
}

json read_header(std::ifstream& in, const std::string& path) {
    if (!in) throw pinch_error("cannot open grid file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw pinch_error("grid file missing header: " + path);
    json j;
    try {
        j = json::parse(header);
    } catch (const std::exception& e) {
        throw pinch_error(std::string("grid file header parse: ") + e.what());
    }
    if (j.value("schema_version", 0) != 1)
        throw pinch_error("grid file: unsupported schema_version");
    return j;
}

}  // namespace

void save_grid_factor(const GridRegularPart& f, const std::string& path, bool csv_payload) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = "regular_part";
    j["box"] = box_to_json(f.regular_grid().box());
    j["divisor"] = json::parse(f.divisor().to_json());
    j["background"] = json{{"nu", f.background().nu},
                           {"k0", f.background().k0},
                           {"c_inf", f.background().c_inf},
                           {"Lambda", f.background().Lambda},
                           {"beta_inf", f.background().beta_inf}};
    j["gammas"] = f.gammas();
    j["correction_radius"] = f.correction_radius();
    j["payload"] = csv_payload ? "csv" : "f64";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw pinch_error("cannot write grid file: " + path);
    out << j.dump() << "\n";
    write_payload(out, f.regular_grid(), csv_payload);
    if (!out.good()) throw pinch_error("write failed: " + path);
}

void save_grid_factor(const GridSampledFactor& f, const std::string& path, bool csv_payload) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = "sampled";
    j["box"] = box_to_json(f.grid().box());
    j["divisor"] = json::parse(f.divisor().to_json());
    json seams = json::array();
    for (const auto& s : f.seams())
        seams.push_back(json{{"cx", s.center.x}, {"cy", s.center.y}, {"r", s.radius}});
    j["seams"] = seams;
    j["payload"] = csv_payload ? "csv" : "f64";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw pinch_error("cannot write grid file: " + path);
    out << j.dump() << "\n";
    write_payload(out, f.grid(), csv_payload);
    if (!out.good()) throw pinch_error("write failed: " + path);
}

GridRegularPart load_grid_regular_part(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    json j = read_header(in, path);
    if (j.value("kind", "") != "regular_part")
        throw pinch_error("grid file is not a regular-part factor: " + path);
    GridBox box = box_from_json(j.at("box"));
    UniformGrid2D g = read_payload(in, box, j.value("payload", "f64"));
    ConicDivisor div = ConicDivisor::from_json(j.at("divisor").dump());
    const json& b = j.at("background");
    BackgroundModel bg;
    bg.nu = b.at("nu").get<double>();
    bg.k0 = b.at("k0").get<double>();
    bg.c_inf = b.at("c_inf").get<double>();
    bg.Lambda = b.at("Lambda").get<double>();
    bg.beta_inf = b.at("beta_inf").get<double>();
    std::vector<double> gammas = j.value("gammas", std::vector<double>{});
    double r_corr = j.value("correction_radius", 0.0);
    return GridRegularPart(std::move(g), std::move(div), bg, std::move(gammas), r_corr);
}

GridSampledFactor load_grid_sampled(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    json j = read_header(in, path);
    if (j.value("kind", "") != "sampled")
        throw pinch_error("grid file is not a sampled factor: " + path);
    GridBox box = box_from_json(j.at("box"));
    UniformGrid2D g = read_payload(in, box, j.value("payload", "f64"));
    ConicDivisor div = ConicDivisor::from_json(j.at("divisor").dump());
    std::vector<Circle> seams;
    for (const auto& s : j.value("seams", json::array())) {
        seams.push_back(Circle{{s.at("cx").get<double>(), s.at("cy").get<double>()},
                               s.at("r").get<double>()});
    }
    return GridSampledFactor(std::move(g), std::move(div), std::move(seams));
}

std::shared_ptr<const ConformalFactor> load_grid_factor(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    json j = read_header(probe, path);
    std::string kind = j.value("kind", "");
    probe.close();
    if (kind == "regular_part")
        return std::make_shared<const GridRegularPart>(load_grid_regular_part(path));
    if (kind == "sampled")
        return std::make_shared<const GridSampledFactor>(load_grid_sampled(path));
    throw pinch_error("grid file: unknown kind '" + kind + "'");
}

}  // namespace pinchlab
