#pragma once

#include <cstdint>
#include <vector>

#include "diffinv/dense.hpp"
#include "diffinv/forward.hpp"

namespace diffinv {

/// Ensemble Kalman inversion with Tikhonov state augmentation: the extended
/// observation (y, 0) and map (G(mu), sqrt(alpha) mu).
struct EnkiConfig {
  int ensemble = 1024;   ///< J; must exceed the parameter dimension
  int iterations = 100;
  double tikhonov = 1e-2;  ///< alpha
  std::vector<double> prior_mean;
  std::vector<double> prior_std;  ///< diagonal initial covariance
  DenseMatrix prior_cov;          ///< optional full covariance; wins when non-empty
  double sigma_eps = 0.1;
  std::uint64_t seed = 0;
  int workers = 0;

  /// Library-level checks; enforce_ensemble_size additionally applies the
  /// J > N_d requirement (the CLI always does).
  void validate(int n_dim, bool enforce_ensemble_size) const;
};

struct EnkiResult {
  SampleSet ensemble;
  std::vector<double> misfit;  ///< ||y - G(mean)|| after each iteration
};

EnkiResult enki_run(const ForwardModel& fwd, const Observation& obs, const EnkiConfig& cfg, GridShape grid);

}  // namespace diffinv
