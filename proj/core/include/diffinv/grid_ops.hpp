#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diffinv/field.hpp"

namespace diffinv {

/// Bilinear-quadrilateral finite element operators on a uniform grid:
/// nodal-averaged gradient matrix G, integration weights i_vec, boundary
/// load vector f_vec, and the fixed-edge (top row) Dirichlet mask. The load
/// is a uniform traction on the bottom edge; f_vec is signed so that
/// f_vec^T u approximates minus the traction work.
struct GridOperators {
  GridShape grid;
  double h = 0.0;
  int state_channels = 1;

  std::vector<double> i_vec;         ///< per node, sums to the domain area
  std::vector<double> f_vec;         ///< state_channels * N
  std::vector<std::uint8_t> fixed;   ///< 1 on the fixed (top) edge

  // gradient operator for one scalar channel, CSR with 2N rows
  // (row 2n = d/dx at node n, row 2n+1 = d/dy at node n)
  std::vector<int> g_ptr;
  std::vector<int> g_col;
  std::vector<double> g_val;

  int nodes() const { return grid.size(); }

  /// Per-channel gradient: input state_channels * N, output
  /// 2 * state_channels * N with channel order (dx u_c, dy u_c) per c.
  std::vector<double> gradient(std::span<const double> u) const;
  /// out += G^T w, applied per state channel.
  void gradient_transpose_add(std::span<const double> w, std::span<double> out) const;
  /// Zero all state channels on the fixed edge.
  void apply_fixed_mask(std::span<double> u) const;
};

/// Assembles the operators; traction holds one value per state channel,
/// applied uniformly on the bottom edge.
GridOperators assemble_operators(int nx, int ny, double h, int state_channels = 1,
                                 std::span<const double> traction = {});

/// Boundary nodes excluding the fixed (top) edge, ascending node order.
std::vector<int> boundary_observation_nodes(GridShape grid);

}  // namespace diffinv
