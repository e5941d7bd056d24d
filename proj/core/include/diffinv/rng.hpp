#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace diffinv {

/// Seedable random stream with explicit stream splitting: the same
/// (seed, stream) pair always yields the same draw sequence, and distinct
/// stream ids give statistically independent sequences. One stream per
/// chain/worker; instances are not shared between threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform integer on [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal draw.
  double normal();
  void fill_normal(std::span<double> out);

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t state_[4] = {};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// n i.i.d. standard normal entries from the stream.
std::vector<double> gaussian_draw(RngStream& rng, int n);

}  // namespace diffinv
