#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "diffinv/forward.hpp"
#include "diffinv/score.hpp"
#include "diffinv/tweedie.hpp"

namespace diffinv {

struct SamplerConfig {
  int chains = 256;          ///< N_S
  int steps = 2000;          ///< N_T
  int corrector_steps = 1;   ///< K Langevin steps per time step
  double snr = 0.1;          ///< r; 0.1 for SMLD, 0.36 for DDPM defaults
  ScheduleConfig schedule;   ///< rho/eta schedule for posterior sampling
  std::uint64_t seed = 0;
  double divergence_limit = 1e4;  ///< sampling-space |state| bound
  GridShape grid{0, 0};           ///< output grid shape; {0,0} = flat
  int workers = 0;

  void validate() const;
};

/// Langevin step size 2 (r ||z|| / ||s||)^2.
double langevin_eps(double r, std::span<const double> z, std::span<const double> s);

struct SamplerStats {
  double max_state_abs = 0.0;     ///< max |state| over chains/steps, sampling space
  double max_denoised_abs = 0.0;  ///< max |Tweedie mean| over chains/steps, physical units
  long corrector_skips = 0;       ///< zero-score corrector steps skipped
};

/// Unconditional predictor-corrector sampling from the terminal distribution
/// (VE: N(0, s(T)^2 I); VP: N(0, I)) down to t = 0. Fields are returned in
/// physical units.
SampleSet sample_unconditional(const ScoreModel& score, const SdeSpec& spec, const SamplerConfig& cfg,
                               SamplerStats* stats = nullptr);

/// Posterior score rho(t) J^T (y - H(A(mu0_bar))) + prior score at mu_n, with
/// the Tweedie mean treated as locally linear in mu_n (identity Jacobian
/// convention). Per-coordinate surrogate error variances are added to the
/// observation variance. rho_override replaces the schedule's step size
/// (0 switches the likelihood off).
std::vector<double> posterior_score(const ScoreModel& score, const SdeSpec& spec, const ForwardModel& fwd,
                                    const Observation& obs, std::span<const double> mu_n, double t,
                                    const SamplerConfig& cfg, std::optional<double> rho_override = {});

/// Conditional predictor-corrector sampling from the posterior.
SampleSet sample_posterior(const ScoreModel& score, const SdeSpec& spec, const ForwardModel& fwd,
                           const Observation& obs, const SamplerConfig& cfg, SamplerStats* stats = nullptr,
                           std::optional<double> rho_override = {});

}  // namespace diffinv
