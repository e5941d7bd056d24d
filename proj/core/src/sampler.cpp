#include "diffinv/sampler.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "diffinv/error.hpp"

namespace diffinv {

void SamplerConfig::validate() const {
  if (chains < 1) throw ConfigError("SamplerConfig: chains must be >= 1");
  if (steps < 1) throw ConfigError("SamplerConfig: steps must be >= 1");
  if (corrector_steps < 0) throw ConfigError("SamplerConfig: corrector steps must be >= 0");
  if (snr <= 0.0) throw ConfigError("SamplerConfig: snr must be positive");
  if (divergence_limit <= 0.0) throw ConfigError("SamplerConfig: divergence limit must be positive");
}

double langevin_eps(double r, std::span<const double> z, std::span<const double> s) {
  double zn = 0.0, sn = 0.0;
  for (double v : z) zn += v * v;
  for (double v : s) sn += v * v;
  if (sn == 0.0) throw DomainError("langevin_eps: zero score norm");
  const double ratio = r * std::sqrt(zn / sn);
  return 2.0 * ratio * ratio;
}

namespace {

struct ChainFailure {
  bool failed = false;
  int step = 0;
  double max_abs = 0.0;
};

void check_chain_state(std::span<const double> mu, double limit, int chain, int step, ChainFailure& fail) {
  double m = 0.0;
  for (double v : mu) {
    if (!std::isfinite(v)) {
      fail = {true, step, std::numeric_limits<double>::infinity()};
      return;
    }
    m = std::max(m, std::abs(v));
  }
  if (m > limit) fail = {true, step, m};
  (void)chain;
}

void init_terminal(const SdeSpec& spec, std::span<double> mu, RngStream& rng) {
  if (spec.is_ve()) {
    const double s = kernel_params(spec, spec.terminal_time).std;
    for (double& v : mu) v = s * rng.normal();
  } else {
    for (double& v : mu) v = rng.normal();
  }
}

// likelihood part of the posterior score in sampling space; score_prior is
// the already-evaluated prior score at (mu, t)
std::vector<double> likelihood_term(const ScoreModel& score, const SdeSpec& spec, const ForwardModel& fwd,
                                    const Observation& obs, std::span<const double> mu, double t,
                                    std::span<const double> score_prior, const ScheduleConfig& schedule,
                                    std::optional<double> rho_override, ForwardModel::Ctx& ctx,
                                    double* denoised_max = nullptr) {
  std::vector<double> mu0 = posterior_mean(spec, mu, t, score_prior, schedule);
  const Normalization& nz = score.normalization();
  for (double& v : mu0) v = nz.lo + nz.scale * v;
  if (denoised_max) {
    for (double v : mu0) *denoised_max = std::max(*denoised_max, std::abs(v));
  }
  if (rho_override && *rho_override == 0.0) return std::vector<double>(mu.size(), 0.0);

  std::vector<double> out = fwd.apply(mu0, ctx);
  for (double v : out)
    if (!std::isfinite(v)) throw NumericError("posterior_score: non-finite forward evaluation");
  std::vector<double> resid(out.size());
  if (rho_override) {
    for (std::size_t k = 0; k < out.size(); ++k) resid[k] = *rho_override * (obs.y[k] - out[k]);
  } else {
    // time factor dt/t (clamped at the first grid time) or 1, applied to the
    // variance-weighted residual; surrogate error variances add per
    // coordinate
    const double timefac = schedule.rho_mode == RhoMode::TimeDecreasing
                               ? schedule.dt / std::max(t, schedule.dt)
                               : 1.0;
    const double base_var = schedule.sigma_eps * schedule.sigma_eps;
    for (std::size_t k = 0; k < out.size(); ++k) {
      const double var = base_var + (obs.sigma_model.empty() ? 0.0 : obs.sigma_model[k] * obs.sigma_model[k]);
      resid[k] = timefac * (obs.y[k] - out[k]) / var;
    }
  }
  std::vector<double> g = fwd.vjp_cached(ctx, resid);
  for (double& v : g) v *= nz.scale;
  return g;
}

}  // namespace

std::vector<double> posterior_score(const ScoreModel& score, const SdeSpec& spec, const ForwardModel& fwd,
                                    const Observation& obs, std::span<const double> mu_n, double t,
                                    const SamplerConfig& cfg, std::optional<double> rho_override) {
  if (static_cast<int>(obs.y.size()) != fwd.output_dim()) throw ShapeError("posterior_score: observation size mismatch");
  ScheduleConfig schedule = cfg.schedule;
  schedule.T = spec.terminal_time;
  schedule.dt = spec.terminal_time / cfg.steps;
  Workspace ws;
  ForwardModel::Ctx ctx;
  std::vector<double> s_prior = score.eval(mu_n, t, spec, ws);
  std::vector<double> g = likelihood_term(score, spec, fwd, obs, mu_n, t, s_prior, schedule, rho_override, ctx);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += s_prior[i];
  return g;
}

namespace {

// shared driver for the unconditional and posterior samplers
SampleSet run_sampler(const ScoreModel& score, const SdeSpec& spec, const ForwardModel* fwd, const Observation* obs,
                      const SamplerConfig& cfg, SamplerStats* stats, std::optional<double> rho_override) {
  cfg.validate();
  spec.validate();
  const int dim = score.dimension();
  const TimeGrid grid(spec.terminal_time, cfg.steps);
  ScheduleConfig schedule = cfg.schedule;
  schedule.T = spec.terminal_time;
  schedule.dt = grid.dt;
  if (fwd) {
    schedule.validate();
    if (static_cast<int>(obs->y.size()) != fwd->output_dim())
      throw ShapeError("sample_posterior: observation size mismatch");
  }

  SampleSet set;
  set.grid = cfg.grid.size() > 0 ? cfg.grid : GridShape{dim, 1};
  if (set.grid.size() != dim) throw ShapeError("sampler: grid/model dimension mismatch");
  set.seed = cfg.seed;
  set.fields.assign(static_cast<std::size_t>(cfg.chains), ParamField(static_cast<std::size_t>(dim)));

  std::vector<ChainFailure> failures(static_cast<std::size_t>(cfg.chains));
  double max_state = 0.0, max_denoised = 0.0;
  long skips = 0;
  const int nthreads = cfg.workers > 0 ? cfg.workers : omp_get_max_threads();

  // level-synchronous loop: chains advance together so the Langevin step
  // size can use the ensemble-averaged score norm, which keeps the step
  // position-independent (a per-state 1/||s||^2 step biases the stationary
  // law and has an infinite-mean tail at low dimension)
  std::vector<std::vector<double>> states(static_cast<std::size_t>(cfg.chains));
  std::vector<RngStream> rngs;
  rngs.reserve(static_cast<std::size_t>(cfg.chains));
  for (int chain = 0; chain < cfg.chains; ++chain) {
    rngs.emplace_back(cfg.seed, static_cast<std::uint64_t>(chain));
    states[static_cast<std::size_t>(chain)].resize(static_cast<std::size_t>(dim));
    init_terminal(spec, states[static_cast<std::size_t>(chain)], rngs.back());
  }
  std::vector<std::vector<double>> score_buf(static_cast<std::size_t>(cfg.chains));
  std::vector<double> norm_buf(static_cast<std::size_t>(cfg.chains), 0.0);
  std::vector<Workspace> tws(static_cast<std::size_t>(nthreads));
  std::vector<ForwardModel::Ctx> tctx(static_cast<std::size_t>(nthreads));

  // evaluate the (posterior) score of every live chain at time t
  auto eval_scores = [&](double t, double& denoised_max) {
    double dmax = 0.0;
#pragma omp parallel num_threads(nthreads) reduction(max : dmax)
    {
      const int th = omp_get_thread_num();
      double local = 0.0;
#pragma omp for schedule(dynamic)
      for (int chain = 0; chain < cfg.chains; ++chain) {
        if (failures[static_cast<std::size_t>(chain)].failed) continue;
        auto& sc = score_buf[static_cast<std::size_t>(chain)];
        sc = score.eval(states[static_cast<std::size_t>(chain)], t, spec, tws[static_cast<std::size_t>(th)]);
        if (fwd) {
          std::vector<double> lik =
              likelihood_term(score, spec, *fwd, *obs, states[static_cast<std::size_t>(chain)], t, sc, schedule,
                              rho_override, tctx[static_cast<std::size_t>(th)], stats ? &local : nullptr);
          for (int i = 0; i < dim; ++i) sc[static_cast<std::size_t>(i)] += lik[static_cast<std::size_t>(i)];
        }
        double s2 = 0.0;
        for (double v : sc) s2 += v * v;
        norm_buf[static_cast<std::size_t>(chain)] = s2;
      }
      dmax = local;
    }
    denoised_max = std::max(denoised_max, dmax);
  };

  for (int n = cfg.steps; n >= 1; --n) {
    const double t_n = grid.t(n);
    // predictor: reverse SDE step with the (posterior) score at t_n
    eval_scores(t_n, max_denoised);
#pragma omp parallel num_threads(nthreads)
    {
      std::vector<double> z(static_cast<std::size_t>(dim));
#pragma omp for schedule(static)
      for (int chain = 0; chain < cfg.chains; ++chain) {
        ChainFailure& fail = failures[static_cast<std::size_t>(chain)];
        if (fail.failed) continue;
        auto& mu = states[static_cast<std::size_t>(chain)];
        rngs[static_cast<std::size_t>(chain)].fill_normal(z);
        reverse_em_step(spec, mu, n, grid, score_buf[static_cast<std::size_t>(chain)], z);
        check_chain_state(mu, cfg.divergence_limit, chain, n, fail);
      }
    }

    // corrector: Langevin steps at t_{n-1} on the current iterates
    const double t_c = grid.t(n - 1);
    for (int j = 0; j < cfg.corrector_steps; ++j) {
      eval_scores(t_c, max_denoised);
      // ensemble-averaged norms, reduced in chain order for determinism
      double s2_sum = 0.0;
      long live = 0;
      for (int chain = 0; chain < cfg.chains; ++chain) {
        if (failures[static_cast<std::size_t>(chain)].failed) continue;
        s2_sum += norm_buf[static_cast<std::size_t>(chain)];
        ++live;
      }
      if (live == 0) break;
      if (s2_sum == 0.0) {
        ++skips;  // zero score everywhere: skip the corrector step
        continue;
      }
      const double eps = 2.0 * cfg.snr * cfg.snr * dim / (s2_sum / live);
      const double noise = std::sqrt(2.0 * eps);
#pragma omp parallel num_threads(nthreads)
      {
        std::vector<double> z(static_cast<std::size_t>(dim));
#pragma omp for schedule(static)
        for (int chain = 0; chain < cfg.chains; ++chain) {
          ChainFailure& fail = failures[static_cast<std::size_t>(chain)];
          if (fail.failed) continue;
          auto& mu = states[static_cast<std::size_t>(chain)];
          const auto& sc = score_buf[static_cast<std::size_t>(chain)];
          rngs[static_cast<std::size_t>(chain)].fill_normal(z);
          for (int i = 0; i < dim; ++i)
            mu[static_cast<std::size_t>(i)] +=
                eps * sc[static_cast<std::size_t>(i)] + noise * z[static_cast<std::size_t>(i)];
          check_chain_state(mu, cfg.divergence_limit, chain, n, fail);
        }
      }
    }
    if (stats) {
      for (int chain = 0; chain < cfg.chains; ++chain) {
        if (failures[static_cast<std::size_t>(chain)].failed) continue;
        for (double v : states[static_cast<std::size_t>(chain)]) max_state = std::max(max_state, std::abs(v));
      }
    }
  }

  // de-normalize into physical units
  const Normalization& nz = score.normalization();
  for (int chain = 0; chain < cfg.chains; ++chain) {
    ParamField& out = set.fields[static_cast<std::size_t>(chain)];
    const auto& mu = states[static_cast<std::size_t>(chain)];
    for (int i = 0; i < dim; ++i) out[static_cast<std::size_t>(i)] = nz.lo + nz.scale * mu[static_cast<std::size_t>(i)];
  }

  for (int chain = 0; chain < cfg.chains; ++chain) {
    const ChainFailure& f = failures[static_cast<std::size_t>(chain)];
    if (f.failed)
      throw DivergenceError("sampler: chain diverged (max |state| = " + std::to_string(f.max_abs) + ")", chain,
                            f.step, f.max_abs);
  }
  if (stats) {
    stats->max_state_abs = max_state;
    stats->max_denoised_abs = max_denoised;
    stats->corrector_skips = skips;
  }
  return set;
}

}  // namespace

SampleSet sample_unconditional(const ScoreModel& score, const SdeSpec& spec, const SamplerConfig& cfg,
                               SamplerStats* stats) {
  return run_sampler(score, spec, nullptr, nullptr, cfg, stats, {});
}

SampleSet sample_posterior(const ScoreModel& score, const SdeSpec& spec, const ForwardModel& fwd,
                           const Observation& obs, const SamplerConfig& cfg, SamplerStats* stats,
                           std::optional<double> rho_override) {
  return run_sampler(score, spec, &fwd, &obs, cfg, stats, rho_override);
}

}  // namespace diffinv
