#pragma once

#include <span>
#include <vector>

#include "diffinv/sde.hpp"

namespace diffinv {

enum class RhoMode { Constant, TimeDecreasing };
enum class EtaMode { Off, ExpDecay };

/// Likelihood step-size schedule rho(t) and the VP mean-correction factor
/// eta(t) for posterior denoising.
struct ScheduleConfig {
  RhoMode rho_mode = RhoMode::TimeDecreasing;
  EtaMode eta_mode = EtaMode::Off;
  double sigma_eps = 0.1;  ///< observation noise std, > 0
  double dt = 1e-3;        ///< sampler grid spacing (first grid time t_1)
  double T = 1.0;

  void validate() const;
};

/// Constant mode: 1/sigma_eps^2. Time-decreasing: (dt/t)/sigma_eps^2, defined
/// for t >= dt so that rho(t_1) = 1/sigma_eps^2 exactly.
double rho(double t, const ScheduleConfig& cfg);

/// Off: 1. Exp-decay (VP only): exp(-1/2 int_0^t beta) — the shrinkage factor
/// of the VP kernel mean.
double eta(double t, const SdeSpec& spec, const ScheduleConfig& cfg);

/// Tweedie posterior-mean proxy mu_0_bar = E[mu_0 | mu_n].
/// VE families: mu_n + s(t)^2 score. VP: (eta(t)/m(t)) (mu_n + s(t)^2 score),
/// which collapses to the VE form under exp-decay eta and to the raw 1/m(t)
/// Tweedie mean with eta off.
std::vector<double> posterior_mean(const SdeSpec& spec, std::span<const double> mu_n, double t,
                                   std::span<const double> score, const ScheduleConfig& cfg);

}  // namespace diffinv
