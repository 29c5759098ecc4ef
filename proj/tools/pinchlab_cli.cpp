#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pinchlab/divisor.hpp"
#include "pinchlab/factor.hpp"
#include "pinchlab/grid.hpp"
#include "pinchlab/gridfactor.hpp"
#include "pinchlab/io.hpp"
#include "pinchlab/levelset.hpp"

using namespace pinchlab;

namespace {

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

// Accepts "[-0.8,-0.3,-0.3]" or "-0.8,-0.3,-0.3".
std::vector<double> parse_weight_list(std::string s) {
    if (!s.empty() && s.front() == '[') s.erase(s.begin());
    if (!s.empty() && s.back() == ']') s.pop_back();
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        std::size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw pinch_error("bad weight token: " + tok);
        out.push_back(v);
    }
    if (out.empty()) throw pinch_error("empty weight list");
    return out;
}

ConicDivisor load_divisor(const std::string& weights, const std::string& file) {
    if (!weights.empty() && !file.empty())
        throw pinch_error("give either --divisor or --divisor-file, not both");
    if (!file.empty()) {
        std::ifstream in(file);
        if (!in) throw pinch_error("cannot open divisor file: " + file);
        std::ostringstream buf;
        buf << in.rdbuf();
        return ConicDivisor::from_json(buf.str());
    }
    if (weights.empty()) throw pinch_error("missing --divisor or --divisor-file");
    return ConicDivisor::from_weights(parse_weight_list(weights));
}

void print_classification(const Classification& c) {
    std::printf("classification: %s\n", to_string(c.kind).c_str());
    std::printf("total_weight:   %.17g\n", c.total);
    std::printf("beta1:          %.17g\n", c.beta1);
    std::printf("alpha:          %.17g\n", c.alpha);
    std::printf("chi:            %.17g\n", c.chi);
    if (!c.note.empty()) std::printf("note: %s\n", c.note.c_str());
}

int run_classify(const std::string& weights, const std::string& file) {
    ConicDivisor d = load_divisor(weights, file);
    print_classification(d.classify());
    return 0;
}

int run_rho0(const std::string& weights, const std::string& file) {
    ConicDivisor d = load_divisor(weights, file);
    double r = d.rho0();
    auto c = d.classify();
    std::printf("rho0: %.17g\n", r);
    std::printf("classification: %s\n", to_string(c.kind).c_str());
    if (!c.note.empty()) std::printf("note: %s\n", c.note.c_str());
    return 0;
}

// ---- shared factor selection for profile / verify / curvature ----

struct FactorSelection {
    std::string family;  // "glued" | "radial" | "" when --grid-file is used
    double alpha = 0.0;  // glued: cone weight at the origin
    double beta = -0.5;  // glued: cone weight at infinity
    std::string norm = "unit_inner";
    double weight = -0.5;     // radial: cone weight at the origin
    double scale = 1.0;       // radial: lambda
    double curvature = 1.0;   // radial: constant K > 0
    std::string grid_file;
};

void add_factor_flags(CLI::App* cmd, FactorSelection& s) {
    cmd->add_option("--family", s.family, "closed form family: glued | radial");
    cmd->add_option("--alpha", s.alpha, "glued: cone weight at 0 (default 0)");
    cmd->add_option("--beta", s.beta, "glued: cone weight at infinity (default -0.5)");
    cmd->add_option("--normalization", s.norm, "glued: unit_inner | boundary_zero");
    cmd->add_option("--weight", s.weight, "radial: cone weight at 0 (default -0.5)");
    cmd->add_option("--scale", s.scale, "radial: concentration scale lambda (default 1)");
    cmd->add_option("--curvature", s.curvature, "radial: constant curvature K (default 1)");
    cmd->add_option("--grid-file", s.grid_file, "saved grid factor instead of a family");
}

struct MadeFactor {
    std::shared_ptr<const ConformalFactor> f;
    double knee_radius = 0.0;  // scale anchor for default t grids; 0 = unknown
    double seam_t = kUnset;    // exact seam level, inserted into default grids
    double k_lo = kUnset, k_hi = kUnset;  // curvature bounds when closed form
    std::optional<GridBox> native_box;    // raster stored in a grid file
    nlohmann::json desc;
};

GluedFootball::Normalization parse_norm(const std::string& norm) {
    if (norm == "unit_inner") return GluedFootball::Normalization::unit_inner;
    if (norm == "boundary_zero") return GluedFootball::Normalization::boundary_zero;
    throw pinch_error("unknown normalization: " + norm);
}

MadeFactor make_factor(const FactorSelection& s) {
    int sources = (s.family.empty() ? 0 : 1) + (s.grid_file.empty() ? 0 : 1);
    if (sources != 1)
        throw pinch_error(
            "pick exactly one factor source: --family glued|radial or --grid-file");
    MadeFactor m;
    if (s.family == "glued") {
        auto g = std::make_shared<GluedFootball>(s.alpha, s.beta, parse_norm(s.norm));
        m.knee_radius = g->seams().front().radius;
        m.seam_t = g->value_r(m.knee_radius);
        double ki = g->curvature_r(0.5 * m.knee_radius);
        double ko = g->curvature_r(2.0 * m.knee_radius);
        m.k_lo = std::min(ki, ko);
        m.k_hi = std::max(ki, ko);
        m.f = std::move(g);
        m.desc = {{"family", "glued"},
                  {"alpha", s.alpha},
                  {"beta", s.beta},
                  {"normalization", s.norm}};
    } else if (s.family == "radial") {
        if (!(s.curvature > 0.0)) throw pinch_error("radial family needs --curvature > 0");
        double c = -0.5 * std::log(s.curvature);
        m.f = std::make_shared<RadialBranch>(s.weight, s.scale, c);
        m.knee_radius = 1.0 / s.scale;
        m.k_lo = m.k_hi = s.curvature;
        m.desc = {{"family", "radial"},
                  {"weight", s.weight},
                  {"scale", s.scale},
                  {"curvature", s.curvature}};
    } else if (!s.family.empty()) {
        throw pinch_error("unknown family: " + s.family + " (choose glued or radial)");
    } else {
        std::ifstream in(s.grid_file, std::ios::binary);
        if (!in) throw pinch_error("cannot open grid file: " + s.grid_file);
        std::string header;
        std::getline(in, header);
        in.close();
        auto j = nlohmann::json::parse(header, nullptr, false);
        if (!j.is_discarded() && j.contains("box")) {
            const auto& b = j["box"];
            GridBox nb;
            nb.x0 = b.at("x0").get<double>();
            nb.y0 = b.at("y0").get<double>();
            nb.h = b.at("h").get<double>();
            nb.nx = b.at("nx").get<int>();
            nb.ny = b.at("ny").get<int>();
            m.native_box = nb;
        }
        m.f = load_grid_factor(s.grid_file);
        m.desc = {{"grid_file", s.grid_file}};
    }
    return m;
}

// ---- level-set profile plumbing ----

struct ProfileOptions {
    std::string route = "auto";  // auto | radial | grid
    double t_max = kUnset, t_min = kUnset;
    double t_step = 0.05;
    double box_half = kUnset;  // centered square raster half-width
    double spacing = kUnset;
};

struct ResolvedRun {
    std::string route;
    double t_max = 0.0, t_min = 0.0, t_step = 0.0;
    std::optional<GridBox> box;
};

GridBox centered_box(double half, double h) {
    if (!(half > 0.0) || !(h > 0.0))
        throw pinch_error("raster needs --box > 0 and --spacing > 0");
    GridBox b;
    b.x0 = -half;
    b.y0 = -half;
    b.h = h;
    b.nx = static_cast<int>(std::lround(2.0 * half / h)) + 1;
    b.ny = b.nx;
    return b;
}

LevelSetProfile compute_profile(const MadeFactor& m, const ProfileOptions& po,
                                ResolvedRun& rr) {
    if (po.route != "auto" && po.route != "radial" && po.route != "grid")
        throw pinch_error("unknown route: " + po.route + " (auto | radial | grid)");
    bool grid_route = po.route == "grid" ||
                      (po.route == "auto" && m.knee_radius <= 0.0);
    rr.route = grid_route ? "grid" : "radial";

    std::optional<GridBox> box;
    if (grid_route) {
        bool have_flags = std::isfinite(po.box_half) || std::isfinite(po.spacing);
        if (!have_flags && m.native_box) {
            // largest centered square whose corners stay inside the stored
            // factor's reliable sample disk, on the stored spacing
            double h = m.native_box->h;
            int half_cells = static_cast<int>(std::floor(
                                 m.f->max_sample_radius() / std::sqrt(2.0) / h)) -
                             1;
            if (half_cells < 2)
                throw pinch_error(
                    "stored grid too small for contouring; give --box and "
                    "--spacing");
            box = centered_box(half_cells * h, h);
        } else {
            double half = std::isfinite(po.box_half) ? po.box_half : 4.0;
            double h = std::isfinite(po.spacing) ? po.spacing : 1.0 / 64.0;
            box = centered_box(half, h);
        }
        rr.box = box;
    }

    rr.t_max = po.t_max;
    rr.t_min = po.t_min;
    rr.t_step = po.t_step;
    if (!std::isfinite(rr.t_max) || !std::isfinite(rr.t_min)) {
        if (m.knee_radius <= 0.0)
            throw pinch_error("grid factors need explicit --t-max and --t-min");
        if (grid_route) {
            double reach = std::min(std::min(-box->x0, box->x1()),
                                    std::min(-box->y0, box->y1()));
            if (!(reach > 0.0))
                throw pinch_error("raster does not surround the origin; give "
                                  "--t-max and --t-min explicitly");
            if (!std::isfinite(rr.t_max))
                rr.t_max = m.f->value({std::min(m.knee_radius / 4.0, reach / 8.0), 0.0});
            if (!std::isfinite(rr.t_min)) rr.t_min = m.f->value({reach / 2.0, 0.0});
        } else {
            if (!std::isfinite(rr.t_max)) rr.t_max = m.f->value({m.knee_radius / 16.0, 0.0});
            if (!std::isfinite(rr.t_min)) rr.t_min = m.f->value({m.knee_radius * 1024.0, 0.0});
        }
    }

    std::vector<double> ts = t_grid(rr.t_max, rr.t_min, rr.t_step);
    if (std::isfinite(m.seam_t) && m.seam_t < ts.front() && m.seam_t > ts.back()) {
        auto it = std::lower_bound(ts.begin(), ts.end(), m.seam_t,
                                   std::greater<double>());
        double tol = 1e-12 * (1.0 + std::abs(m.seam_t));
        bool dup = (it != ts.end() && std::abs(*it - m.seam_t) < tol) ||
                   (it != ts.begin() && std::abs(*(it - 1) - m.seam_t) < tol);
        if (!dup) ts.insert(it, m.seam_t);
    }

    if (grid_route) return grid_profile(*m.f, ts, *box);
    return radial_profile(*m.f, ts);
}

nlohmann::json run_config(const MadeFactor& m, const ResolvedRun& rr, int jobs) {
    nlohmann::json cfg = m.desc;
    cfg["route"] = rr.route;
    cfg["t_max"] = rr.t_max;
    cfg["t_min"] = rr.t_min;
    cfg["t_step"] = rr.t_step;
    if (rr.box) {
        cfg["box"] = {{"x0", rr.box->x0},
                      {"y0", rr.box->y0},
                      {"h", rr.box->h},
                      {"nx", rr.box->nx},
                      {"ny", rr.box->ny}};
    }
    cfg["jobs"] = jobs;
    return cfg;
}

void write_profile_artifacts(const LevelSetProfile& p, const std::string& dir) {
    namespace fs = std::filesystem;
    ensure_directory(dir);
    write_text_file((fs::path(dir) / "profile.csv").string(), profile_csv(p));
    std::vector<double> e2tB(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        e2tB[i] = std::exp(2.0 * p.t[i]) * p.B[i];
    write_text_file((fs::path(dir) / "A.svg").string(),
                    svg_line_plot("A(t)", {{"A", p.t, p.A}}));
    write_text_file((fs::path(dir) / "B.svg").string(),
                    svg_line_plot("B(t)", {{"B", p.t, p.B},
                                           {"e^2t B", p.t, e2tB}}));
    write_text_file((fs::path(dir) / "defect.svg").string(),
                    svg_line_plot("isoperimetric defect",
                                  {{"L^2 - 4 pi B", p.t, p.defect}}));
    std::printf("wrote %s\n", (fs::path(dir) / "profile.csv").c_str());
    std::printf("wrote %s, %s, %s\n", (fs::path(dir) / "A.svg").c_str(),
                (fs::path(dir) / "B.svg").c_str(),
                (fs::path(dir) / "defect.svg").c_str());
}

int run_profile(const FactorSelection& fs, const ProfileOptions& po,
                const std::string& out_dir, int jobs, const char* subcommand) {
    MadeFactor m = make_factor(fs);
    ResolvedRun rr;
    LevelSetProfile p = compute_profile(m, po, rr);
    if (out_dir.empty()) {
        std::fputs(profile_csv(p).c_str(), stdout);
        return 0;
    }
    std::printf("route: %s  levels: %zu  t in [%.6g, %.6g]\n", rr.route.c_str(),
                p.size(), rr.t_min, rr.t_max);
    write_profile_artifacts(p, out_dir);
    nlohmann::json cfg = run_config(m, rr, jobs);
    cfg["out"] = out_dir;
    write_manifest(out_dir, subcommand, cfg);
    std::printf("wrote %s\n",
                (std::filesystem::path(out_dir) / "manifest.json").c_str());
    return 0;
}

// ---- verify ----

void print_report(const CheckReport& r) {
    std::printf("%-21s checked=%4d excluded=%3d worst=%+10.3e  %s\n",
                (r.name + ":").c_str(), r.n_checked, r.n_excluded, r.worst,
                r.passed ? "PASS" : "FAIL");
}

nlohmann::json report_json(const CheckReport& r) {
    nlohmann::json lines = nlohmann::json::array();
    for (const auto& l : r.lines)
        lines.push_back({{"t", l.t},
                         {"what", l.what},
                         {"value", l.value},
                         {"margin", l.margin},
                         {"slack", l.slack},
                         {"excluded", l.excluded},
                         {"note", l.note}});
    return {{"name", r.name},     {"n_checked", r.n_checked},
            {"n_excluded", r.n_excluded}, {"worst", r.worst},
            {"passed", r.passed}, {"lines", lines}};
}

int run_verify(const FactorSelection& fs, const ProfileOptions& po, double a,
               double b, const std::string& out_dir, int jobs) {
    MadeFactor m = make_factor(fs);
    if (!std::isfinite(a)) a = m.k_lo;
    if (!std::isfinite(b)) b = m.k_hi;
    if (!std::isfinite(a) || !std::isfinite(b))
        throw pinch_error(
            "curvature bounds unknown for this factor: pass --a and --b");
    if (!(0.0 < a && a <= b)) throw pinch_error("need 0 < --a <= --b");

    ResolvedRun rr;
    LevelSetProfile p = compute_profile(m, po, rr);
    CheckReport sw = verify_sandwich(p, a, b);
    CheckReport ch = verify_isoperimetric_chain(p, p.alpha);
    IntegratedReport ir = integrated_inequality(p, a, b, p.alpha);

    std::printf("curvature bounds: a=%.6g b=%.6g  alpha=%.6g  levels=%zu (%s)\n",
                a, b, p.alpha, p.size(), rr.route.c_str());
    print_report(sw);
    print_report(ch);
    print_report(ir.differential);
    print_report(ir.integrated);
    std::printf("t_cross=%.6g  x=%.9g  implied_ratio_upper=%.9g  rel_gap=%.3e\n",
                ir.t_cross, ir.x, ir.implied_ratio_upper, ir.rel_gap);

    if (!out_dir.empty()) {
        nlohmann::json cfg = run_config(m, rr, jobs);
        cfg["a"] = a;
        cfg["b"] = b;
        cfg["out"] = out_dir;
        nlohmann::json checks;
        checks["schema_version"] = 1;
        checks["a"] = a;
        checks["b"] = b;
        checks["alpha"] = p.alpha;
        checks["reports"] = {report_json(sw), report_json(ch),
                             report_json(ir.differential),
                             report_json(ir.integrated)};
        checks["integrated_summary"] = {{"t_cross", ir.t_cross},
                                        {"x", ir.x},
                                        {"implied_ratio_upper", ir.implied_ratio_upper},
                                        {"rel_gap", ir.rel_gap},
                                        {"passed", ir.passed}};
        ensure_directory(out_dir);
        write_text_file(
            (std::filesystem::path(out_dir) / "checks.json").string(),
            checks.dump(2) + "\n");
        write_manifest(out_dir, "verify", cfg);
        std::printf("wrote %s and manifest.json\n",
                    (std::filesystem::path(out_dir) / "checks.json").c_str());
    }

    bool all = sw.passed && ch.passed && ir.passed;
    if (all) {
        std::printf("verdict: all checks passed\n");
        return 0;
    }
    bool beyond = false;
    for (const CheckReport* r : {&sw, &ch, &ir.differential, &ir.integrated})
        if (r->n_checked > 0 && r->worst < 0.0) beyond = true;
    if (beyond) {
        std::printf("verdict: FAIL (inequality violated beyond slack)\n");
        return 1;
    }
    std::printf("verdict: UNDECIDED (no checkable levels; widen the t grid)\n");
    return 2;
}

// ---- curvature probe ----

int run_curvature(const FactorSelection& fs, double r_probe, double px,
                  double py, bool have_x, double exclusion) {
    MadeFactor m = make_factor(fs);
    bool have_r = std::isfinite(r_probe);
    if (have_r == have_x)
        throw pinch_error("give exactly one probe: --r R or --x X [--y Y]");
    Vec2 z = have_r ? Vec2{r_probe, 0.0} : Vec2{px, py};
    for (const auto& q : m.f->divisor().points()) {
        if (q.infinite || q.beta == 0.0) continue;
        if ((z - q.position).norm() < exclusion)
            throw pinch_error("probe within the exclusion radius of a cone point");
    }
    for (const auto& s : m.f->seams()) {
        if (std::abs((z - s.center).norm() - s.radius) < exclusion)
            throw pinch_error("probe within the exclusion radius of a seam");
    }
    double u = m.f->value(z);
    double K = m.f->curvature(z);
    if (have_r) {
        std::printf("u(%.17g) = %.17g\n", r_probe, u);
        std::printf("K(%.17g) = %.17g\n", r_probe, K);
    } else {
        std::printf("u(%.17g, %.17g) = %.17g\n", px, py, u);
        std::printf("K(%.17g, %.17g) = %.17g\n", px, py, K);
    }
    return 0;
}

// ---- football ----

int run_football(double alpha, double beta, const std::string& norm,
                 double r_probe, bool profile_flag, const ProfileOptions& po,
                 const std::string& out_dir, int jobs) {
    GluedFootball g(alpha, beta, parse_norm(norm));
    FactorSelection fs;
    fs.family = "glued";
    fs.alpha = alpha;
    fs.beta = beta;
    fs.norm = norm;
    if (profile_flag && out_dir.empty()) {
        // bare CSV on stdout so the profile can be piped into a file
        return run_profile(fs, po, out_dir, jobs, "football");
    }
    std::printf("alpha: %.17g  beta: %.17g  normalization: %s\n", alpha, beta,
                norm.c_str());
    std::printf("inner_curvature: %.17g\n", g.curvature_r(0.5));
    std::printf("outer_curvature: %.17g\n", g.curvature_r(2.0));
    std::printf("seam_value: %.17g\n", g.value_r(1.0));
    std::printf("area_total: %.17g\n", g.area_total());
    std::printf("mass_total: %.17g\n", g.mass_total());
    auto rep = measure_pinching(g);
    std::printf("pinching: %.17g\n", rep.rho);
    if (r_probe > 0.0) {
        std::printf("u(%.17g) = %.17g\n", r_probe, g.value_r(r_probe));
        std::printf("K(%.17g) = %.17g\n", r_probe, g.curvature_r(r_probe));
    }
    if (profile_flag) return run_profile(fs, po, out_dir, jobs, "football");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pinchlab: numerical laboratory for conic metrics on the 2-sphere"};
    app.require_subcommand(1);

    int jobs = 1;
    app.add_option("--jobs", jobs,
                   "worker threads for independent levels; outputs are "
                   "identical for any value (this build runs them serially)");

    std::string weights, divisor_file;

    auto* classify = app.add_subcommand("classify", "classify a conic divisor");
    classify->add_option("--divisor", weights, "weight list, e.g. [-0.8,-0.3,-0.3]");
    classify->add_option("--divisor-file", divisor_file, "divisor json file");

    auto* rho0 = app.add_subcommand("rho0", "reference curvature ratio of a divisor");
    rho0->add_option("--divisor", weights, "weight list");
    rho0->add_option("--divisor-file", divisor_file, "divisor json file");

    // flags shared by the level-set subcommands
    FactorSelection fsel;
    ProfileOptions popt;
    std::string out_dir;
    auto add_t_flags = [&](CLI::App* cmd) {
        cmd->add_option("--t-max", popt.t_max, "highest level (default: family-derived)")
            ->default_str("auto");
        cmd->add_option("--t-min", popt.t_min, "lowest level (default: family-derived)")
            ->default_str("auto");
        cmd->add_option("--t-step", popt.t_step, "level spacing (default 0.05)");
    };
    auto add_raster_flags = [&](CLI::App* cmd) {
        cmd->add_option("--route", popt.route,
                        "auto | radial | grid (auto: radial for families, "
                        "grid for grid files)");
        cmd->add_option("--box", popt.box_half,
                        "grid route: raster half-width (default 4)")
            ->default_str("auto");
        cmd->add_option("--spacing", popt.spacing,
                        "grid route: raster spacing (default 1/64)")
            ->default_str("auto");
    };

    double fb_alpha = 0.0, fb_beta = -0.5, fb_probe = -1.0;
    std::string fb_norm = "unit_inner";
    bool fb_profile = false;
    auto* football = app.add_subcommand("football", "glued constant-curvature football");
    football->add_option("--alpha", fb_alpha, "inner cone weight (at 0)");
    football->add_option("--beta", fb_beta, "outer cone weight (at infinity)");
    football->add_option("--normalization", fb_norm, "unit_inner | boundary_zero");
    football->add_option("--probe", fb_probe, "also print u and K at this radius");
    football->add_flag("--profile", fb_profile,
                       "emit the level-set profile (CSV to stdout, or files "
                       "under --out)");
    football->add_option("--out", out_dir, "output directory for profile artifacts");
    add_t_flags(football);

    auto* profile = app.add_subcommand(
        "profile", "level-set profile A,B,L,defect of a conformal factor");
    add_factor_flags(profile, fsel);
    add_t_flags(profile);
    add_raster_flags(profile);
    profile->add_option("--out", out_dir,
                        "output directory (profile.csv, A/B/defect.svg, "
                        "manifest.json); default: CSV to stdout");

    double vb_a = kUnset, vb_b = kUnset;
    auto* verify = app.add_subcommand(
        "verify", "check the level-set inequalities against curvature bounds");
    add_factor_flags(verify, fsel);
    add_t_flags(verify);
    add_raster_flags(verify);
    verify->add_option("--a", vb_a, "curvature lower bound (default: family value)")
        ->default_str("auto");
    verify->add_option("--b", vb_b, "curvature upper bound (default: family value)")
        ->default_str("auto");
    verify->add_option("--out", out_dir, "also write checks.json + manifest.json");

    double cv_r = kUnset, cv_x = 0.0, cv_y = 0.0, cv_excl = 1e-6;
    auto* curvature = app.add_subcommand("curvature", "Gaussian curvature at a point");
    add_factor_flags(curvature, fsel);
    auto* cvx = curvature->add_option("--x", cv_x, "probe point x");
    curvature->add_option("--y", cv_y, "probe point y (default 0)");
    curvature->add_option("--r", cv_r, "probe on the positive real axis");
    curvature->add_option("--exclusion", cv_excl,
                          "minimum distance from cone points and seams "
                          "(default 1e-6)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (jobs < 1) throw pinch_error("--jobs must be >= 1");
        if (classify->parsed()) return run_classify(weights, divisor_file);
        if (rho0->parsed()) return run_rho0(weights, divisor_file);
        if (football->parsed())
            return run_football(fb_alpha, fb_beta, fb_norm, fb_probe, fb_profile,
                                popt, out_dir, jobs);
        if (profile->parsed()) return run_profile(fsel, popt, out_dir, jobs, "profile");
        if (verify->parsed()) return run_verify(fsel, popt, vb_a, vb_b, out_dir, jobs);
        if (curvature->parsed())
            return run_curvature(fsel, cv_r, cv_x, cv_y, cvx->count() > 0, cv_excl);
    } catch (const pinch_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
