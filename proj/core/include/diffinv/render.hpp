#pragma once

#include <string>
#include <vector>

#include "diffinv/field.hpp"

namespace diffinv {

/// One field as an SVG rect-grid heatmap with a fixed diverging colormap.
std::string heatmap_svg(const ParamField& field, GridShape grid, double vmin, double vmax,
                        const std::string& title = "");

/// Several fields tiled into one SVG, `columns` per row.
std::string sample_grid_svg(const std::vector<ParamField>& fields, GridShape grid, int columns, double vmin,
                            double vmax);

/// Binary portable graymap (P5), values clipped to [vmin, vmax].
void write_pgm(const std::string& path, const ParamField& field, GridShape grid, double vmin, double vmax);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace diffinv
