#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "pinchlab/common.hpp"

namespace pinchlab {

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;  // equal length; non-finite y splits the line
};

// Hand-rolled SVG line plot: framed plot area, light gridlines at rounded
// tick values, one polyline per series with a fixed color cycle, legend in
// the top-right corner. Byte-deterministic for equal inputs.
std::string svg_line_plot(const std::string& title,
                          const std::vector<PlotSeries>& series,
                          int width = 640, int height = 420);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// mkdir -p; throws when the path exists and is not a directory.
void ensure_directory(const std::string& path);

// Writes <dir>/manifest.json echoing the resolved configuration of a run:
// {schema_version, tool, subcommand, config, written_utc}. The timestamp is
// the only output field that varies between identical runs; every other
// artifact (CSV/SVG/JSON) is byte-identical for identical configs.
void write_manifest(const std::string& dir, const std::string& subcommand,
                    const nlohmann::json& config);

}  // namespace pinchlab
