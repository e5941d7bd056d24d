#pragma once

#include <cstdint>

#include "diffinv/field.hpp"

namespace diffinv {

/// Block-inclusion prior: a background-valued field with one or two
/// axis-aligned square blocks in the bottom half of the domain. Two blocks
/// (one per half) with probability p_two, otherwise a single block at the
/// bottom left or bottom right.
struct BlockPriorSpec {
  GridShape grid{16, 16};
  double background = 1.0;
  double block_value = 5.0;
  double p_two = 0.5;
  double p_left = 0.25;
  double p_right = 0.25;
  int min_side = 3;
  int max_side = 6;

  void validate() const;
};

SampleSet sample_prior(const BlockPriorSpec& spec, int n, std::uint64_t seed);

}  // namespace diffinv
