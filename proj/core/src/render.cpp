#include "diffinv/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "diffinv/error.hpp"

namespace diffinv {

namespace {

constexpr int kCell = 12;  // pixels per grid cell

// fixed diverging colormap: blue -> white -> red
void diverging_color(double v, int& r, int& g, int& b) {
  v = std::clamp(v, 0.0, 1.0);
  if (v < 0.5) {
    const double s = v / 0.5;
    r = static_cast<int>(59 + s * (255 - 59));
    g = static_cast<int>(76 + s * (255 - 76));
    b = static_cast<int>(192 + s * (255 - 192));
  } else {
    const double s = (v - 0.5) / 0.5;
    r = static_cast<int>(255 - s * (255 - 180));
    g = static_cast<int>(255 - s * (255 - 4));
    b = static_cast<int>(255 - s * (255 - 38));
  }
}

void emit_field(std::ostringstream& out, const ParamField& f, GridShape grid, int x0, int y0, double vmin,
                double vmax) {
  const double span = vmax > vmin ? vmax - vmin : 1.0;
  for (int row = 0; row < grid.ny; ++row) {
    for (int col = 0; col < grid.nx; ++col) {
      int r, g, b;
      diverging_color((f[static_cast<std::size_t>(grid.index(row, col))] - vmin) / span, r, g, b);
      out << "<rect x=\"" << x0 + col * kCell << "\" y=\"" << y0 + row * kCell << "\" width=\"" << kCell
          << "\" height=\"" << kCell << "\" fill=\"rgb(" << r << ',' << g << ',' << b << ")\"/>\n";
    }
  }
}

}  // namespace

std::string heatmap_svg(const ParamField& field, GridShape grid, double vmin, double vmax, const std::string& title) {
  if (static_cast<int>(field.size()) != grid.size()) throw ShapeError("heatmap_svg: field size mismatch");
  const int header = title.empty() ? 0 : 18;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << grid.nx * kCell << "\" height=\""
      << grid.ny * kCell + header << "\">\n";
  if (!title.empty())
    out << "<text x=\"2\" y=\"13\" font-family=\"monospace\" font-size=\"12\">" << title << "</text>\n";
  emit_field(out, field, grid, 0, header, vmin, vmax);
  out << "</svg>\n";
  return out.str();
}

std::string sample_grid_svg(const std::vector<ParamField>& fields, GridShape grid, int columns, double vmin,
                            double vmax) {
  if (columns < 1) throw ConfigError("sample_grid_svg: need at least one column");
  const int pad = 4;
  const int rows = (static_cast<int>(fields.size()) + columns - 1) / columns;
  const int tile_w = grid.nx * kCell + pad;
  const int tile_h = grid.ny * kCell + pad;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << columns * tile_w << "\" height=\"" << rows * tile_h
      << "\">\n";
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (static_cast<int>(fields[i].size()) != grid.size()) throw ShapeError("sample_grid_svg: field size mismatch");
    const int col = static_cast<int>(i) % columns;
    const int row = static_cast<int>(i) / columns;
    emit_field(out, fields[i], grid, col * tile_w, row * tile_h, vmin, vmax);
  }
  out << "</svg>\n";
  return out.str();
}

void write_pgm(const std::string& path, const ParamField& field, GridShape grid, double vmin, double vmax) {
  if (static_cast<int>(field.size()) != grid.size()) throw ShapeError("write_pgm: field size mismatch");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("write_pgm: cannot open '" + path + "'");
  f << "P5\n" << grid.nx << ' ' << grid.ny << "\n255\n";
  const double span = vmax > vmin ? vmax - vmin : 1.0;
  for (double v : field) {
    const double s = std::clamp((v - vmin) / span, 0.0, 1.0);
    const auto byte = static_cast<std::uint8_t>(std::lround(s * 255.0));
    f.write(reinterpret_cast<const char*>(&byte), 1);
  }
  if (!f) throw IoError("write_pgm: write failed for '" + path + "'");
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("write_text_file: cannot open '" + path + "'");
  f << content;
  if (!f) throw IoError("write_text_file: write failed for '" + path + "'");
}

}  // namespace diffinv
