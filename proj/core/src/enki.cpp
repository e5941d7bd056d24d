#include "diffinv/enki.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "diffinv/error.hpp"
#include "diffinv/rng.hpp"

namespace diffinv {

void EnkiConfig::validate(int n_dim, bool enforce_ensemble_size) const {
  if (ensemble < 2) throw ConfigError("EnkiConfig: ensemble size must be >= 2");
  if (enforce_ensemble_size && ensemble <= n_dim)
    throw ConfigError("EnkiConfig: ensemble size must exceed the parameter dimension");
  if (iterations < 1) throw ConfigError("EnkiConfig: iterations must be >= 1");
  if (tikhonov < 0.0) throw ConfigError("EnkiConfig: negative Tikhonov weight");
  if (sigma_eps < 0.0) throw ConfigError("EnkiConfig: negative sigma_eps");
  if (static_cast<int>(prior_mean.size()) != n_dim) throw ShapeError("EnkiConfig: prior mean dimension mismatch");
  if (prior_cov.rows() == 0 && static_cast<int>(prior_std.size()) != n_dim)
    throw ShapeError("EnkiConfig: prior std dimension mismatch");
  if (prior_cov.rows() != 0 && (prior_cov.rows() != n_dim || prior_cov.cols() != n_dim))
    throw ShapeError("EnkiConfig: prior covariance dimension mismatch");
}

EnkiResult enki_run(const ForwardModel& fwd, const Observation& obs, const EnkiConfig& cfg, GridShape grid) {
  const int n_dim = fwd.input_dim();
  const int n_obs = fwd.output_dim();
  if (static_cast<int>(obs.y.size()) != n_obs) throw ShapeError("enki_run: observation size mismatch");
  cfg.validate(n_dim, false);
  const int j_size = cfg.ensemble;
  const int n_ext = n_obs + n_dim;
  const double alpha_sqrt = std::sqrt(cfg.tikhonov);
  const int nthreads = cfg.workers > 0 ? cfg.workers : omp_get_max_threads();

  // initial ensemble from N(prior_mean, prior_cov)
  std::vector<std::vector<double>> members(static_cast<std::size_t>(j_size));
  {
    std::unique_ptr<CholeskyFactor> chol;
    if (cfg.prior_cov.rows() > 0) chol = std::make_unique<CholeskyFactor>(cfg.prior_cov);
    for (int j = 0; j < j_size; ++j) {
      RngStream rng(cfg.seed, static_cast<std::uint64_t>(j));
      std::vector<double> z = gaussian_draw(rng, n_dim);
      auto& m = members[static_cast<std::size_t>(j)];
      m.assign(cfg.prior_mean.begin(), cfg.prior_mean.end());
      if (chol) {
        const DenseMatrix& l = chol->lower();
        for (int r = 0; r < n_dim; ++r) {
          double acc = 0.0;
          for (int c = 0; c <= r; ++c) acc += l(r, c) * z[static_cast<std::size_t>(c)];
          m[static_cast<std::size_t>(r)] += acc;
        }
      } else {
        for (int r = 0; r < n_dim; ++r) m[static_cast<std::size_t>(r)] += cfg.prior_std[static_cast<std::size_t>(r)] * z[static_cast<std::size_t>(r)];
      }
    }
  }

  EnkiResult result;
  result.misfit.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
  std::vector<std::vector<double>> g_ext(static_cast<std::size_t>(j_size), std::vector<double>(static_cast<std::size_t>(n_ext)));

  auto mean_misfit = [&]() {
    std::vector<double> mean_now(static_cast<std::size_t>(n_dim), 0.0);
    for (int j = 0; j < j_size; ++j)
      for (int k = 0; k < n_dim; ++k)
        mean_now[static_cast<std::size_t>(k)] += members[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    for (double& v : mean_now) v /= j_size;
    std::vector<double> pred = fwd.apply(mean_now);
    double misfit = 0.0;
    for (int k = 0; k < n_obs; ++k) {
      const double r = obs.y[static_cast<std::size_t>(k)] - pred[static_cast<std::size_t>(k)];
      misfit += r * r;
    }
    return std::sqrt(misfit);
  };
  result.misfit.push_back(mean_misfit());

  for (int it = 0; it < cfg.iterations; ++it) {
    // extended forward map per member
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
    for (int j = 0; j < j_size; ++j) {
      auto& gj = g_ext[static_cast<std::size_t>(j)];
      std::vector<double> out = fwd.apply(members[static_cast<std::size_t>(j)]);
      for (int k = 0; k < n_obs; ++k) gj[static_cast<std::size_t>(k)] = out[static_cast<std::size_t>(k)];
      for (int k = 0; k < n_dim; ++k)
        gj[static_cast<std::size_t>(n_obs + k)] = alpha_sqrt * members[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    }

    std::vector<double> mu_mean(static_cast<std::size_t>(n_dim), 0.0), g_mean(static_cast<std::size_t>(n_ext), 0.0);
    for (int j = 0; j < j_size; ++j) {
      for (int k = 0; k < n_dim; ++k) mu_mean[static_cast<std::size_t>(k)] += members[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
      for (int k = 0; k < n_ext; ++k) g_mean[static_cast<std::size_t>(k)] += g_ext[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    }
    for (double& v : mu_mean) v /= j_size;
    for (double& v : g_mean) v /= j_size;

    // ensemble cross-covariances
    DenseMatrix c_muy(n_dim, n_ext), c_yy(n_ext, n_ext);
    for (int j = 0; j < j_size; ++j) {
      const auto& m = members[static_cast<std::size_t>(j)];
      const auto& g = g_ext[static_cast<std::size_t>(j)];
      for (int a = 0; a < n_dim; ++a) {
        const double da = m[static_cast<std::size_t>(a)] - mu_mean[static_cast<std::size_t>(a)];
        if (da == 0.0) continue;
        double* row = &c_muy(a, 0);
#pragma omp simd
        for (int b = 0; b < n_ext; ++b) row[b] += da * (g[static_cast<std::size_t>(b)] - g_mean[static_cast<std::size_t>(b)]);
      }
      for (int a = 0; a < n_ext; ++a) {
        const double da = g[static_cast<std::size_t>(a)] - g_mean[static_cast<std::size_t>(a)];
        if (da == 0.0) continue;
        double* row = &c_yy(a, 0);
#pragma omp simd
        for (int b = 0; b < n_ext; ++b) row[b] += da * (g[static_cast<std::size_t>(b)] - g_mean[static_cast<std::size_t>(b)]);
      }
    }
    const double inv = 1.0 / (j_size - 1);
    for (double& v : c_muy.data()) v *= inv;
    for (double& v : c_yy.data()) v *= inv;

    // (C_yy + sigma^2 I), with a floor when sigma is too small to regularize
    std::unique_ptr<CholeskyFactor> chol;
    double lift = cfg.sigma_eps * cfg.sigma_eps;
    for (int attempt = 0; attempt < 40; ++attempt) {
      DenseMatrix a = c_yy;
      for (int k = 0; k < n_ext; ++k) a(k, k) += lift;
      try {
        chol = std::make_unique<CholeskyFactor>(a);
        break;
      } catch (const SolverError&) {
        lift = std::max(lift * 10.0, 1e-12);
      }
    }
    if (!chol) throw SolverError("enki_run: could not regularize the ensemble covariance");

    // perturbed-observation update per member
#pragma omp parallel for schedule(static) num_threads(nthreads)
    for (int j = 0; j < j_size; ++j) {
      RngStream rng(cfg.seed, static_cast<std::uint64_t>(it + 1) * j_size + j);
      std::vector<double> d(static_cast<std::size_t>(n_ext));
      for (int k = 0; k < n_ext; ++k) {
        const double target = k < n_obs ? obs.y[static_cast<std::size_t>(k)] : 0.0;
        d[static_cast<std::size_t>(k)] = target + cfg.sigma_eps * rng.normal() - g_ext[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
      }
      chol->solve_in_place(d);
      auto& m = members[static_cast<std::size_t>(j)];
      for (int a = 0; a < n_dim; ++a) {
        const double* row = &c_muy(a, 0);
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (int b = 0; b < n_ext; ++b) acc += row[b] * d[static_cast<std::size_t>(b)];
        m[static_cast<std::size_t>(a)] += acc;
      }
    }

    result.misfit.push_back(mean_misfit());
  }

  result.ensemble.grid = grid.size() > 0 ? grid : GridShape{n_dim, 1};
  result.ensemble.seed = cfg.seed;
  result.ensemble.fields = std::move(members);
  return result;
}

}  // namespace diffinv
