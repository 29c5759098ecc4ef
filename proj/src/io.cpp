#include "pinchlab/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace pinchlab {

namespace {

const char* kPalette[] = {"#1f6fb2", "#c34a36", "#2e8b57",
                          "#8a5cb8", "#b8860b", "#444444"};
constexpr int kPaletteSize = 6;

#if defined(__GNUC__)
__attribute__((format(printf, 2, 3)))
#endif
void appendf(std::string& s, const char* fmt, ...) {
    char buf[256];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    s += buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = 0.0, hi = 1.0;
};

// Data range padded by 4%, with degenerate spans widened symmetrically so
// every plot has a usable scale.
Range padded_range(double lo, double hi) {
    if (lo > hi) std::swap(lo, hi);
    double span = hi - lo;
    if (span < 1e-300) {
        double w = std::max(1.0, std::abs(lo)) * 0.1;
        return {lo - w, hi + w};
    }
    return {lo - 0.04 * span, hi + 0.04 * span};
}

// Tick step of the form {1,2,5}x10^k giving roughly `target` intervals.
double nice_step(double span, int target) {
    double raw = span / target;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double frac = raw / mag;
    double nice = frac <= 1.0 ? 1.0 : frac <= 2.0 ? 2.0 : frac <= 5.0 ? 5.0 : 10.0;
    return nice * mag;
}

std::vector<double> ticks(const Range& r, int target) {
    double step = nice_step(r.hi - r.lo, target);
    std::vector<double> out;
    double first = std::ceil(r.lo / step) * step;
    for (double v = first; v <= r.hi + 0.5 * step; v += step) {
        double snapped = std::round(v / step) * step;
        if (std::abs(snapped) < 1e-12 * step) snapped = 0.0;
        out.push_back(snapped);
    }
    return out;
}

}  // namespace

std::string svg_line_plot(const std::string& title,
                          const std::vector<PlotSeries>& series, int width,
                          int height) {
    if (width < 160 || height < 120)
        throw pinch_error("svg_line_plot: plot smaller than 160x120");
    for (const auto& s : series)
        if (s.x.size() != s.y.size())
            throw pinch_error("svg_line_plot: series '" + s.label +
                              "' has mismatched x/y lengths");

    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    double ylo = xlo, yhi = -xlo;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xlo = std::min(xlo, s.x[i]);
            xhi = std::max(xhi, s.x[i]);
            ylo = std::min(ylo, s.y[i]);
            yhi = std::max(yhi, s.y[i]);
        }
    if (!(xlo <= xhi)) {
        xlo = 0.0;
        xhi = 1.0;
        ylo = 0.0;
        yhi = 1.0;
    }
    Range rx = padded_range(xlo, xhi);
    Range ry = padded_range(ylo, yhi);

    const double ml = 64, mr = 16, mt = 30, mb = 40;
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto X = [&](double v) { return ml + (v - rx.lo) / (rx.hi - rx.lo) * pw; };
    auto Y = [&](double v) { return mt + (ry.hi - v) / (ry.hi - ry.lo) * ph; };

    std::string svg;
    svg.reserve(4096);
    appendf(svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
            "height=\"%d\" viewBox=\"0 0 %d %d\">\n",
            width, height, width, height);
    appendf(svg, "<rect width=\"%d\" height=\"%d\" fill=\"#ffffff\"/>\n", width,
            height);
    appendf(svg,
            "<text x=\"%.8g\" y=\"19\" font-family=\"sans-serif\" "
            "font-size=\"14\" text-anchor=\"middle\">%s</text>\n",
            ml + pw / 2, xml_escape(title).c_str());

    for (double v : ticks(rx, 6)) {
        double px = X(v);
        appendf(svg,
                "<line x1=\"%.8g\" y1=\"%.8g\" x2=\"%.8g\" y2=\"%.8g\" "
                "stroke=\"#dddddd\"/>\n",
                px, mt, px, mt + ph);
        appendf(svg,
                "<text x=\"%.8g\" y=\"%.8g\" font-family=\"sans-serif\" "
                "font-size=\"11\" text-anchor=\"middle\">%.6g</text>\n",
                px, mt + ph + 16, v);
    }
    for (double v : ticks(ry, 5)) {
        double py = Y(v);
        appendf(svg,
                "<line x1=\"%.8g\" y1=\"%.8g\" x2=\"%.8g\" y2=\"%.8g\" "
                "stroke=\"#dddddd\"/>\n",
                ml, py, ml + pw, py);
        appendf(svg,
                "<text x=\"%.8g\" y=\"%.8g\" font-family=\"sans-serif\" "
                "font-size=\"11\" text-anchor=\"end\">%.6g</text>\n",
                ml - 6, py + 4, v);
    }
    appendf(svg,
            "<rect x=\"%.8g\" y=\"%.8g\" width=\"%.8g\" height=\"%.8g\" "
            "fill=\"none\" stroke=\"#333333\"/>\n",
            ml, mt, pw, ph);

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kPalette[k % kPaletteSize];
        std::string pts;
        bool open = false;
        auto flush = [&]() {
            if (open && !pts.empty())
                appendf(svg,
                        "<polyline fill=\"none\" stroke=\"%s\" "
                        "stroke-width=\"1.5\" points=\"%s\"/>\n",
                        color, pts.c_str());
            pts.clear();
            open = false;
        };
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                flush();
                continue;
            }
            appendf(pts, "%s%.8g,%.8g", pts.empty() ? "" : " ", X(s.x[i]),
                    Y(s.y[i]));
            open = true;
        }
        flush();
    }

    for (std::size_t k = 0; k < series.size(); ++k) {
        double ly = mt + 14 + 16.0 * static_cast<double>(k);
        appendf(svg,
                "<line x1=\"%.8g\" y1=\"%.8g\" x2=\"%.8g\" y2=\"%.8g\" "
                "stroke=\"%s\" stroke-width=\"1.5\"/>\n",
                ml + pw - 118, ly - 4, ml + pw - 96, ly - 4,
                kPalette[k % kPaletteSize]);
        appendf(svg,
                "<text x=\"%.8g\" y=\"%.8g\" font-family=\"sans-serif\" "
                "font-size=\"11\">%s</text>\n",
                ml + pw - 90, ly, xml_escape(series[k].label).c_str());
    }

    svg += "</svg>\n";
    return svg;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw pinch_error("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw pinch_error("short write: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pinch_error("cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void ensure_directory(const std::string& path) {
    std::error_code ec;
    if (std::filesystem::is_directory(path, ec)) return;
    if (std::filesystem::exists(path, ec))
        throw pinch_error("not a directory: " + path);
    if (!std::filesystem::create_directories(path, ec) || ec)
        throw pinch_error("cannot create directory: " + path);
}

void write_manifest(const std::string& dir, const std::string& subcommand,
                    const nlohmann::json& config) {
    ensure_directory(dir);
    char stamp[32];
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
    nlohmann::json m;
    m["schema_version"] = 1;
    m["tool"] = "pinchlab";
    m["subcommand"] = subcommand;
    m["config"] = config;
    m["written_utc"] = stamp;
    write_text_file((std::filesystem::path(dir) / "manifest.json").string(),
                    m.dump(2) + "\n");
}

}  // namespace pinchlab
