#include <doctest.h>

#include <cmath>
#include <set>

#include "diffinv/error.hpp"
#include "diffinv/prior.hpp"

using namespace diffinv;

TEST_CASE("sample_prior: block count frequencies match the spec probabilities") {
  BlockPriorSpec spec;
  SampleSet set = sample_prior(spec, 10000, 42);
  int two = 0;
  for (const auto& f : set.fields) {
    // count connected block pixels per half to classify
    bool left = false, right = false;
    for (int r = 0; r < spec.grid.ny; ++r)
      for (int c = 0; c < spec.grid.nx; ++c)
        if (f[static_cast<std::size_t>(spec.grid.index(r, c))] == spec.block_value)
          (c < spec.grid.nx / 2 ? left : right) = true;
    if (left && right) ++two;
  }
  const double frac = two / 10000.0;
  CHECK(frac >= 0.48);
  CHECK(frac <= 0.52);
}

TEST_CASE("sample_prior: fields take only the two values, blocks in the bottom half") {
  BlockPriorSpec spec;
  SampleSet set = sample_prior(spec, 500, 7);
  for (const auto& f : set.fields) {
    for (double v : f) CHECK((v == spec.background || v == spec.block_value));
    for (int r = 0; r < spec.grid.ny / 2; ++r)
      for (int c = 0; c < spec.grid.nx; ++c)
        CHECK(f[static_cast<std::size_t>(spec.grid.index(r, c))] == spec.background);
  }
}

TEST_CASE("sample_prior: left-right symmetry of pixel-wise moments") {
  BlockPriorSpec spec;
  const int n = 10000;
  SampleSet set = sample_prior(spec, n, 3);
  std::vector<double> mean(static_cast<std::size_t>(spec.grid.size()), 0.0);
  for (const auto& f : set.fields)
    for (int i = 0; i < spec.grid.size(); ++i) mean[static_cast<std::size_t>(i)] += f[static_cast<std::size_t>(i)];
  for (double& v : mean) v /= n;
  // compare each pixel with its mirror; binomial noise scale ~ 4/sqrt(n)
  for (int r = 0; r < spec.grid.ny; ++r)
    for (int c = 0; c < spec.grid.nx / 2; ++c) {
      const double a = mean[static_cast<std::size_t>(spec.grid.index(r, c))];
      const double b = mean[static_cast<std::size_t>(spec.grid.index(r, spec.grid.nx - 1 - c))];
      CHECK(std::abs(a - b) <= 4.0 * (spec.block_value - spec.background) / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("sample_prior: deterministic per seed") {
  BlockPriorSpec spec;
  SampleSet a = sample_prior(spec, 32, 9);
  SampleSet b = sample_prior(spec, 32, 9);
  SampleSet c = sample_prior(spec, 32, 10);
  CHECK(a.fields == b.fields);
  CHECK(a.fields != c.fields);
}

TEST_CASE("sample_prior: configuration errors") {
  BlockPriorSpec spec;
  spec.max_side = 20;  // cannot fit in a 16x16 half
  CHECK_THROWS_AS(sample_prior(spec, 1, 0), ConfigError);

  BlockPriorSpec bad_p;
  bad_p.p_two = 0.8;  // probabilities no longer sum to one
  CHECK_THROWS_AS(sample_prior(bad_p, 1, 0), ConfigError);

  BlockPriorSpec ok;
  CHECK_THROWS_AS(sample_prior(ok, 0, 0), ConfigError);
}
