#include "diffinv/prior.hpp"

#include <cmath>

#include "diffinv/error.hpp"
#include "diffinv/rng.hpp"

namespace diffinv {

void BlockPriorSpec::validate() const {
  if (grid.nx < 4 || grid.ny < 4) throw ConfigError("BlockPriorSpec: grid too small");
  if (std::abs(p_two + p_left + p_right - 1.0) > 1e-12)
    throw ConfigError("BlockPriorSpec: block probabilities must sum to 1");
  if (p_two < 0.0 || p_left < 0.0 || p_right < 0.0) throw ConfigError("BlockPriorSpec: negative probability");
  if (block_value == background) throw ConfigError("BlockPriorSpec: block value equals background");
  if (min_side < 1 || max_side < min_side) throw ConfigError("BlockPriorSpec: bad block size range");
  // a block must fit inside one half of the bottom rows
  if (max_side > grid.ny - grid.ny / 2 || max_side > grid.nx / 2)
    throw ConfigError("BlockPriorSpec: block size range exceeds the domain");
}

namespace {

// paint one block with its top-left corner uniform in
// rows [ny/2, ny - side], columns [col_lo, col_hi - side]
void paint_block(ParamField& f, const BlockPriorSpec& spec, int col_lo, int col_hi, RngStream& rng) {
  const int side = spec.min_side + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.max_side - spec.min_side + 1)));
  const int row_lo = spec.grid.ny / 2;
  const int row = row_lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.grid.ny - side - row_lo + 1)));
  const int col = col_lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(col_hi - side - col_lo + 1)));
  for (int r = row; r < row + side; ++r)
    for (int c = col; c < col + side; ++c) f[static_cast<std::size_t>(spec.grid.index(r, c))] = spec.block_value;
}

}  // namespace

SampleSet sample_prior(const BlockPriorSpec& spec, int n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw ConfigError("sample_prior: n must be >= 1");
  SampleSet set;
  set.grid = spec.grid;
  set.seed = seed;
  set.fields.reserve(static_cast<std::size_t>(n));
  const int half = spec.grid.nx / 2;
  for (int i = 0; i < n; ++i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    ParamField f(static_cast<std::size_t>(spec.grid.size()), spec.background);
    const double u = rng.uniform();
    if (u < spec.p_two) {
      paint_block(f, spec, 0, half, rng);
      paint_block(f, spec, half, spec.grid.nx, rng);
    } else if (u < spec.p_two + spec.p_left) {
      paint_block(f, spec, 0, half, rng);
    } else {
      paint_block(f, spec, half, spec.grid.nx, rng);
    }
    set.fields.push_back(std::move(f));
  }
  return set;
}

}  // namespace diffinv
