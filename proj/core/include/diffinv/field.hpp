#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace diffinv {

/// Regular grid of nodes, row-major storage (row i = 0 is the top edge).
struct GridShape {
  int nx = 0;  ///< nodes per row (columns)
  int ny = 0;  ///< rows

  int size() const { return nx * ny; }
  int index(int row, int col) const { return row * nx + col; }
  bool operator==(const GridShape&) const = default;
};

/// A flattened scalar field on a regular grid; the sampling variable.
using ParamField = std::vector<double>;

/// A collection of fields sharing one grid, plus provenance metadata.
struct SampleSet {
  GridShape grid;
  std::vector<ParamField> fields;
  std::uint64_t seed = 0;
  std::string config_hash;

  int size() const { return static_cast<int>(fields.size()); }
};

}  // namespace diffinv
