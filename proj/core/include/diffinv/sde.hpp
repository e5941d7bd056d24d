#pragma once

#include <functional>
#include <span>
#include <vector>

#include "diffinv/rng.hpp"

namespace diffinv {

enum class SdeKind {
  VeGeneral,    ///< d mu = sqrt(d sigma^2/dt) dw, user-supplied sigma(t)
  VeGeometric,  ///< d mu = sigma_hat^t dw
  VpLinear,     ///< d mu = -1/2 beta(t) mu dt + sqrt(beta(t)) dw, beta(t) = beta_slope * t
};

/// One of the three noising SDE families with its parameters.
struct SdeSpec {
  SdeKind kind = SdeKind::VeGeometric;
  double sigma_hat = 25.0;   ///< VE-geometric, > 1
  double beta_slope = 32.0;  ///< VP-linear, > 0
  std::function<double(double)> sigma_fn;  ///< VE-general: strictly increasing sigma(t)
  double terminal_time = 1.0;

  static SdeSpec ve_geometric(double sigma_hat = 25.0, double T = 1.0);
  static SdeSpec vp_linear(double beta_slope = 32.0, double T = 1.0);
  static SdeSpec ve_general(std::function<double(double)> sigma_fn, double T = 1.0);

  bool is_ve() const { return kind != SdeKind::VpLinear; }
  double beta(double t) const { return beta_slope * t; }
  void validate() const;
};

/// Uniform time grid t_n = n * dt, n = 0..steps, with t_steps = T.
struct TimeGrid {
  double T = 1.0;
  int steps = 0;
  double dt = 0.0;

  TimeGrid(double T_, int steps_);
  double t(int n) const { return n == steps ? T : n * dt; }
};

/// Mean scale m(t) and standard deviation s(t) of the closed-form
/// conditional kernel p_0t(mu(t) | mu(0)) = N(m(t) mu(0), s(t)^2 I).
struct KernelParams {
  double mean_scale = 1.0;
  double std = 0.0;
};

std::vector<double> drift(const SdeSpec& spec, std::span<const double> mu, double t);
double diffusion(const SdeSpec& spec, double t);
KernelParams kernel_params(const SdeSpec& spec, double t);

/// One Euler-Maruyama noising step mu_{n-1} -> mu_n, in place, with an
/// explicit noise vector z. VE families use the variance-increment form;
/// VP uses the sqrt(1-beta) contraction form with beta_n = beta(t_n) dt.
void forward_em_step(const SdeSpec& spec, std::span<double> mu, int n, const TimeGrid& grid,
                     std::span<const double> z);
void forward_em_step(const SdeSpec& spec, std::span<double> mu, int n, const TimeGrid& grid, RngStream& rng);

/// One Euler-Maruyama denoising step mu_n -> mu_{n-1}, in place, given the
/// score at (mu_n, t_n) and an explicit noise vector.
void reverse_em_step(const SdeSpec& spec, std::span<double> mu, int n, const TimeGrid& grid,
                     std::span<const double> score, std::span<const double> z);
void reverse_em_step(const SdeSpec& spec, std::span<double> mu, int n, const TimeGrid& grid,
                     std::span<const double> score, RngStream& rng);

/// Draw mu(t) ~ p_0t(.|mu_0) and keep the realized fluctuation for DSM
/// loss assembly: mu_t = m(t) mu_0 + sigma z.
struct Perturbation {
  std::vector<double> mu_t;
  std::vector<double> z;
  double sigma = 0.0;
};
Perturbation perturb(const SdeSpec& spec, std::span<const double> mu0, double t, std::vector<double> z);
Perturbation perturb(const SdeSpec& spec, std::span<const double> mu0, double t, RngStream& rng);

}  // namespace diffinv
