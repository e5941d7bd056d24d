#include "diffinv/sde.hpp"

#include <cmath>

#include "diffinv/error.hpp"

namespace diffinv {

SdeSpec SdeSpec::ve_geometric(double sigma_hat, double T) {
  SdeSpec s;
  s.kind = SdeKind::VeGeometric;
  s.sigma_hat = sigma_hat;
  s.terminal_time = T;
  s.validate();
  return s;
}

SdeSpec SdeSpec::vp_linear(double beta_slope, double T) {
  SdeSpec s;
  s.kind = SdeKind::VpLinear;
  s.beta_slope = beta_slope;
  s.terminal_time = T;
  s.validate();
  return s;
}

SdeSpec SdeSpec::ve_general(std::function<double(double)> sigma_fn, double T) {
  SdeSpec s;
  s.kind = SdeKind::VeGeneral;
  s.sigma_fn = std::move(sigma_fn);
  s.terminal_time = T;
  s.validate();
  return s;
}

void SdeSpec::validate() const {
  if (terminal_time <= 0.0) throw ConfigError("SdeSpec: terminal time must be positive");
  switch (kind) {
    case SdeKind::VeGeometric:
      if (sigma_hat <= 1.0) throw ConfigError("SdeSpec: VE-geometric requires sigma_hat > 1");
      break;
    case SdeKind::VpLinear:
      if (beta_slope <= 0.0) throw ConfigError("SdeSpec: VP-linear requires beta_slope > 0");
      break;
    case SdeKind::VeGeneral:
      if (!sigma_fn) throw ConfigError("SdeSpec: VE-general requires sigma_fn");
      break;
  }
}

TimeGrid::TimeGrid(double T_, int steps_) : T(T_), steps(steps_) {
  if (steps < 1) throw ConfigError("TimeGrid: need at least one step");
  if (T <= 0.0) throw ConfigError("TimeGrid: terminal time must be positive");
  dt = T / steps;
}

namespace {

void check_time(const SdeSpec& spec, double t) {
  if (t < 0.0 || t > spec.terminal_time * (1.0 + 1e-12))
    throw DomainError("time outside [0, T]");
}

double sigma_sq(const SdeSpec& spec, double t) {
  switch (spec.kind) {
    case SdeKind::VeGeneral: {
      const double s = spec.sigma_fn(t);
      return s * s;
    }
    case SdeKind::VeGeometric:
      // sigma(t) = sigma_hat^t / sqrt(2 ln sigma_hat)
      return std::pow(spec.sigma_hat, 2.0 * t) / (2.0 * std::log(spec.sigma_hat));
    case SdeKind::VpLinear:
      break;
  }
  throw DomainError("sigma_sq: not a VE family");
}

}  // namespace

std::vector<double> drift(const SdeSpec& spec, std::span<const double> mu, double t) {
  check_time(spec, t);
  std::vector<double> out(mu.size(), 0.0);
  if (spec.kind == SdeKind::VpLinear) {
    const double c = -0.5 * spec.beta(t);
    for (std::size_t i = 0; i < mu.size(); ++i) out[i] = c * mu[i];
  }
  return out;
}

double diffusion(const SdeSpec& spec, double t) {
  check_time(spec, t);
  switch (spec.kind) {
    case SdeKind::VeGeneral: {
      // central difference of sigma^2
      const double h = 1e-6 * std::max(1.0, spec.terminal_time);
      const double tl = std::max(0.0, t - h);
      const double tr = std::min(spec.terminal_time, t + h);
      return std::sqrt((sigma_sq(spec, tr) - sigma_sq(spec, tl)) / (tr - tl));
    }
    case SdeKind::VeGeometric:
      return std::pow(spec.sigma_hat, t);
    case SdeKind::VpLinear:
      return std::sqrt(spec.beta(t));
  }
  throw DomainError("diffusion: unknown SDE kind");
}

KernelParams kernel_params(const SdeSpec& spec, double t) {
  check_time(spec, t);
  KernelParams p;
  switch (spec.kind) {
    case SdeKind::VeGeneral:
      p.mean_scale = 1.0;
      p.std = std::sqrt(std::max(0.0, sigma_sq(spec, t) - sigma_sq(spec, 0.0)));
      break;
    case SdeKind::VeGeometric: {
      p.mean_scale = 1.0;
      const double var = (std::pow(spec.sigma_hat, 2.0 * t) - 1.0) / (2.0 * std::log(spec.sigma_hat));
      p.std = std::sqrt(std::max(0.0, var));
      break;
    }
    case SdeKind::VpLinear: {
      const double integral = 0.5 * spec.beta_slope * t * t;  // int_0^t beta
      p.mean_scale = std::exp(-0.5 * integral);
      p.std = std::sqrt(std::max(0.0, 1.0 - std::exp(-integral)));
      break;
    }
  }
  return p;
}

void forward_em_step(const SdeSpec& spec, std::span<double> mu, int n, const TimeGrid& grid,
                     std::span<const double> z) {
  if (n < 1 || n > grid.steps) throw DomainError("forward_em_step: step index out of range");
  if (z.size() != mu.size()) throw ShapeError("forward_em_step: noise dimension mismatch");
  const double t_prev = grid.t(n - 1);
  const double t_next = grid.t(n);
  if (spec.is_ve()) {
    const double inc = std::sqrt(std::max(0.0, sigma_sq(spec, t_next) - sigma_sq(spec, t_prev)));
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += inc * z[i];
  } else {
    const double beta_prev = spec.beta(t_prev) * grid.dt;
    if (beta_prev >= 1.0) throw DomainError("forward_em_step: beta_n >= 1, reduce dt");
    const double contract = std::sqrt(1.0 - beta_prev);
    const double noise = std::sqrt(beta_prev);
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = contract * mu[i] + noise * z[i];
  }
}

void forward_em_step(const SdeSpec& spec, std::span<double> mu, int n, const TimeGrid& grid, RngStream& rng) {
  std::vector<double> z = gaussian_draw(rng, static_cast<int>(mu.size()));
  forward_em_step(spec, mu, n, grid, z);
}

void reverse_em_step(const SdeSpec& spec, std::span<double> mu, int n, const TimeGrid& grid,
                     std::span<const double> score, std::span<const double> z) {
  if (n < 1 || n > grid.steps) throw DomainError("reverse_em_step: step index out of range");
  if (score.size() != mu.size()) throw ShapeError("reverse_em_step: score dimension mismatch");
  if (z.size() != mu.size()) throw ShapeError("reverse_em_step: noise dimension mismatch");
  const double t_n = grid.t(n);
  switch (spec.kind) {
    case SdeKind::VeGeneral: {
      const double c = std::max(0.0, sigma_sq(spec, t_n) - sigma_sq(spec, grid.t(n - 1)));
      const double noise = std::sqrt(c);
      for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += c * score[i] + noise * z[i];
      break;
    }
    case SdeKind::VeGeometric: {
      const double c = std::pow(spec.sigma_hat, 2.0 * t_n) * grid.dt;
      const double noise = std::pow(spec.sigma_hat, t_n) * std::sqrt(grid.dt);
      for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += c * score[i] + noise * z[i];
      break;
    }
    case SdeKind::VpLinear: {
      const double beta_n = spec.beta(t_n) * grid.dt;
      if (beta_n >= 1.0) throw DomainError("reverse_em_step: beta_n >= 1, reduce dt");
      const double expand = 1.0 / std::sqrt(1.0 - beta_n);
      const double noise = std::sqrt(beta_n);
      for (std::size_t i = 0; i < mu.size(); ++i)
        mu[i] = expand * mu[i] + beta_n * score[i] + noise * z[i];
      break;
    }
  }
}

void reverse_em_step(const SdeSpec& spec, std::span<double> mu, int n, const TimeGrid& grid,
                     std::span<const double> score, RngStream& rng) {
  std::vector<double> z = gaussian_draw(rng, static_cast<int>(mu.size()));
  reverse_em_step(spec, mu, n, grid, score, z);
}

Perturbation perturb(const SdeSpec& spec, std::span<const double> mu0, double t, std::vector<double> z) {
  check_time(spec, t);
  if (t <= 0.0) throw DomainError("perturb: kernel degenerate at t = 0");
  if (z.size() != mu0.size()) throw ShapeError("perturb: noise dimension mismatch");
  const KernelParams kp = kernel_params(spec, t);
  Perturbation p;
  p.sigma = kp.std;
  p.z = std::move(z);
  p.mu_t.resize(mu0.size());
  for (std::size_t i = 0; i < mu0.size(); ++i)
    p.mu_t[i] = kp.mean_scale * mu0[i] + kp.std * p.z[i];
  return p;
}

Perturbation perturb(const SdeSpec& spec, std::span<const double> mu0, double t, RngStream& rng) {
  return perturb(spec, mu0, t, gaussian_draw(rng, static_cast<int>(mu0.size())));
}

}  // namespace diffinv
