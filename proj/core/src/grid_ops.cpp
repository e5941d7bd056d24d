#include "diffinv/grid_ops.hpp"

#include <array>
#include <cmath>

#include "diffinv/error.hpp"

namespace diffinv {

std::vector<double> GridOperators::gradient(std::span<const double> u) const {
  const int n = nodes();
  if (static_cast<int>(u.size()) != state_channels * n) throw ShapeError("gradient: state size mismatch");
  std::vector<double> v(static_cast<std::size_t>(2 * state_channels) * n, 0.0);
  for (int c = 0; c < state_channels; ++c) {
    const double* uc = u.data() + static_cast<std::size_t>(c) * n;
    double* vc = v.data() + static_cast<std::size_t>(2 * c) * n;
    for (int r = 0; r < 2 * n; ++r) {
      double acc = 0.0;
      for (int k = g_ptr[r]; k < g_ptr[r + 1]; ++k) acc += g_val[k] * uc[g_col[k]];
      // row 2m   -> dx at node m, stored in channel 2c
      // row 2m+1 -> dy at node m, stored in channel 2c+1
      vc[(r % 2) * n + r / 2] = acc;
    }
  }
  return v;
}

void GridOperators::gradient_transpose_add(std::span<const double> w, std::span<double> out) const {
  const int n = nodes();
  if (static_cast<int>(w.size()) != 2 * state_channels * n) throw ShapeError("gradient_transpose: size mismatch");
  if (static_cast<int>(out.size()) != state_channels * n) throw ShapeError("gradient_transpose: output size mismatch");
  for (int c = 0; c < state_channels; ++c) {
    const double* wc = w.data() + static_cast<std::size_t>(2 * c) * n;
    double* oc = out.data() + static_cast<std::size_t>(c) * n;
    for (int r = 0; r < 2 * n; ++r) {
      const double wr = wc[(r % 2) * n + r / 2];
      if (wr == 0.0) continue;
      for (int k = g_ptr[r]; k < g_ptr[r + 1]; ++k) oc[g_col[k]] += g_val[k] * wr;
    }
  }
}

void GridOperators::apply_fixed_mask(std::span<double> u) const {
  const int n = nodes();
  if (static_cast<int>(u.size()) != state_channels * n) throw ShapeError("apply_fixed_mask: size mismatch");
  for (int c = 0; c < state_channels; ++c)
    for (int i = 0; i < n; ++i)
      if (fixed[i]) u[static_cast<std::size_t>(c) * n + i] = 0.0;
}

GridOperators assemble_operators(int nx, int ny, double h, int state_channels, std::span<const double> traction) {
  if (nx < 3 || ny < 3) throw ConfigError("assemble_operators: grid must be at least 3x3");
  if (h <= 0.0) throw ConfigError("assemble_operators: spacing must be positive");
  if (state_channels < 1 || state_channels > 2) throw ConfigError("assemble_operators: 1 or 2 state channels");

  GridOperators ops;
  ops.grid = GridShape{nx, ny};
  ops.h = h;
  ops.state_channels = state_channels;
  const int n = nx * ny;

  // integration weights: each element spreads h^2/4 onto its four nodes
  ops.i_vec.assign(static_cast<std::size_t>(n), 0.0);
  for (int er = 0; er < ny - 1; ++er)
    for (int ec = 0; ec < nx - 1; ++ec)
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc) ops.i_vec[static_cast<std::size_t>((er + dr) * nx + ec + dc)] += h * h / 4.0;

  // nodal-averaged element-center gradients: build dense stencils per node,
  // then compress to CSR
  std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(2 * n));
  std::vector<int> adjacent(static_cast<std::size_t>(n), 0);
  for (int er = 0; er < ny - 1; ++er)
    for (int ec = 0; ec < nx - 1; ++ec)
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc) adjacent[static_cast<std::size_t>((er + dr) * nx + ec + dc)] += 1;

  for (int er = 0; er < ny - 1; ++er) {
    for (int ec = 0; ec < nx - 1; ++ec) {
      const int nw = er * nx + ec;
      const int ne = nw + 1;
      const int sw = nw + nx;
      const int se = sw + 1;
      // element-center bilinear gradient
      const std::array<std::pair<int, double>, 4> gx{{{ne, 1.0}, {se, 1.0}, {nw, -1.0}, {sw, -1.0}}};
      const std::array<std::pair<int, double>, 4> gy{{{sw, 1.0}, {se, 1.0}, {nw, -1.0}, {ne, -1.0}}};
      for (int node : {nw, ne, sw, se}) {
        const double share = 1.0 / (2.0 * h * adjacent[static_cast<std::size_t>(node)]);
        for (auto [col, val] : gx) rows[static_cast<std::size_t>(2 * node)].emplace_back(col, val * share);
        for (auto [col, val] : gy) rows[static_cast<std::size_t>(2 * node + 1)].emplace_back(col, val * share);
      }
    }
  }
  ops.g_ptr.assign(static_cast<std::size_t>(2 * n) + 1, 0);
  for (int r = 0; r < 2 * n; ++r) {
    auto& row = rows[static_cast<std::size_t>(r)];
    // merge duplicate columns
    std::vector<std::pair<int, double>> merged;
    for (auto [col, val] : row) {
      bool found = false;
      for (auto& m : merged)
        if (m.first == col) {
          m.second += val;
          found = true;
          break;
        }
      if (!found) merged.emplace_back(col, val);
    }
    for (auto [col, val] : merged) {
      ops.g_col.push_back(col);
      ops.g_val.push_back(val);
    }
    ops.g_ptr[static_cast<std::size_t>(r) + 1] = static_cast<int>(ops.g_col.size());
  }

  // fixed top edge
  ops.fixed.assign(static_cast<std::size_t>(n), 0);
  for (int c = 0; c < nx; ++c) ops.fixed[static_cast<std::size_t>(c)] = 1;

  // bottom-edge traction, trapezoid lumping; f^T u approximates minus the
  // traction work
  std::vector<double> trac(static_cast<std::size_t>(state_channels), 1.0);
  if (!traction.empty()) {
    if (static_cast<int>(traction.size()) != state_channels)
      throw ConfigError("assemble_operators: traction size must match state channels");
    trac.assign(traction.begin(), traction.end());
  }
  ops.f_vec.assign(static_cast<std::size_t>(state_channels) * n, 0.0);
  for (int c = 0; c < state_channels; ++c) {
    for (int col = 0; col < nx; ++col) {
      const int node = (ny - 1) * nx + col;
      const double w = (col == 0 || col == nx - 1) ? h / 2.0 : h;
      ops.f_vec[static_cast<std::size_t>(c) * n + node] = -trac[static_cast<std::size_t>(c)] * w;
    }
  }
  return ops;
}

std::vector<int> boundary_observation_nodes(GridShape grid) {
  std::vector<int> nodes;
  for (int r = 1; r < grid.ny; ++r)
    for (int c = 0; c < grid.nx; ++c)
      if (r == grid.ny - 1 || c == 0 || c == grid.nx - 1) nodes.push_back(grid.index(r, c));
  return nodes;
}

}  // namespace diffinv
