#include "diffinv/tweedie.hpp"

#include <cmath>

#include "diffinv/error.hpp"

namespace diffinv {

void ScheduleConfig::validate() const {
  if (sigma_eps <= 0.0) throw ConfigError("ScheduleConfig: sigma_eps must be positive");
  if (dt <= 0.0) throw ConfigError("ScheduleConfig: dt must be positive");
  if (T <= 0.0) throw ConfigError("ScheduleConfig: T must be positive");
}

double rho(double t, const ScheduleConfig& cfg) {
  cfg.validate();
  const double inv_var = 1.0 / (cfg.sigma_eps * cfg.sigma_eps);
  if (cfg.rho_mode == RhoMode::Constant) return inv_var;
  if (t < cfg.dt * (1.0 - 1e-12)) throw DomainError("rho: t below the first grid time");
  return (cfg.dt / t) * inv_var;
}

double eta(double t, const SdeSpec& spec, const ScheduleConfig& cfg) {
  if (t < 0.0 || t > cfg.T * (1.0 + 1e-12)) throw DomainError("eta: t outside [0, T]");
  if (cfg.eta_mode == EtaMode::Off) return 1.0;
  if (spec.is_ve()) throw ConfigError("eta: exp-decay correction is VP-specific");
  return std::exp(-0.25 * spec.beta_slope * t * t);
}

std::vector<double> posterior_mean(const SdeSpec& spec, std::span<const double> mu_n, double t,
                                   std::span<const double> score, const ScheduleConfig& cfg) {
  if (score.size() != mu_n.size()) throw ShapeError("posterior_mean: score dimension mismatch");
  const KernelParams kp = kernel_params(spec, t);
  const double s2 = kp.std * kp.std;
  std::vector<double> out(mu_n.size());
  for (std::size_t i = 0; i < mu_n.size(); ++i) out[i] = mu_n[i] + s2 * score[i];
  if (!spec.is_ve()) {
    // eta/m(t): 1 under exp-decay, the raw Tweedie expansion 1/m(t) when off
    const double factor = eta(t, spec, cfg) / kp.mean_scale;
    for (double& v : out) v *= factor;
  }
  return out;
}

}  // namespace diffinv
