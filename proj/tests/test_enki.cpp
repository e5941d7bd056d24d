#include <doctest.h>

#include <cmath>
#include <vector>

#include "diffinv/enki.hpp"
#include "diffinv/error.hpp"

using namespace diffinv;

namespace {

struct LinearProblem {
  DenseMatrix h;
  Observation obs;
  ForwardModel fwd;
  std::vector<double> ridge_solution;  // (H^T H + alpha I)^{-1} H^T y
};

LinearProblem make_linear(int dim, int n_obs, double alpha, double noise, std::uint64_t seed) {
  RngStream rng(seed);
  LinearProblem p{DenseMatrix(n_obs, dim), {}, ForwardModel::linear(DenseMatrix(1, 1)), {}};
  for (double& v : p.h.data()) v = rng.normal();
  p.fwd = ForwardModel::linear(p.h);
  std::vector<double> mu_true = gaussian_draw(rng, dim);
  p.obs.y = p.h.apply(mu_true);
  for (double& v : p.obs.y) v += noise * rng.normal();
  p.obs.sigma_eps = std::max(noise, 1e-8);

  DenseMatrix normal(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      double acc = i == j ? alpha : 0.0;
      for (int k = 0; k < n_obs; ++k) acc += p.h(k, i) * p.h(k, j);
      normal(i, j) = acc;
    }
  }
  std::vector<double> hty(static_cast<std::size_t>(dim), 0.0);
  for (int k = 0; k < n_obs; ++k)
    for (int i = 0; i < dim; ++i) hty[static_cast<std::size_t>(i)] += p.h(k, i) * p.obs.y[static_cast<std::size_t>(k)];
  p.ridge_solution = CholeskyFactor(normal).solve(hty);
  return p;
}

std::vector<double> ensemble_mean(const SampleSet& s) {
  std::vector<double> m(static_cast<std::size_t>(s.grid.size()), 0.0);
  for (const auto& f : s.fields)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += f[i];
  for (double& v : m) v /= s.size();
  return m;
}

}  // namespace

TEST_CASE("enki_run: converges to the regularized least-squares solution") {
  const int dim = 8;
  const double alpha = 0.1;
  LinearProblem p = make_linear(dim, 4, alpha, 0.0, 5);

  EnkiConfig cfg;
  cfg.ensemble = 1024;
  cfg.iterations = 50;
  cfg.tikhonov = alpha;
  cfg.prior_mean.assign(dim, 0.0);
  cfg.prior_std.assign(dim, 1.0);
  cfg.sigma_eps = 1e-4;
  cfg.seed = 3;
  EnkiResult res = enki_run(p.fwd, p.obs, cfg, GridShape{dim, 1});

  auto mean = ensemble_mean(res.ensemble);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < dim; ++i) {
    num += (mean[static_cast<std::size_t>(i)] - p.ridge_solution[static_cast<std::size_t>(i)]) *
           (mean[static_cast<std::size_t>(i)] - p.ridge_solution[static_cast<std::size_t>(i)]);
    den += p.ridge_solution[static_cast<std::size_t>(i)] * p.ridge_solution[static_cast<std::size_t>(i)];
  }
  CHECK(std::sqrt(num / den) <= 0.05);
}

TEST_CASE("enki_run: misfit decreases monotonically on an attainable linear problem") {
  LinearProblem p = make_linear(6, 6, 1e-8, 0.0, 9);
  EnkiConfig cfg;
  cfg.ensemble = 256;
  cfg.iterations = 30;
  cfg.tikhonov = 1e-8;
  cfg.prior_mean.assign(6, 0.0);
  cfg.prior_std.assign(6, 1.0);
  cfg.sigma_eps = 1e-6;
  cfg.seed = 4;
  EnkiResult res = enki_run(p.fwd, p.obs, cfg, GridShape{6, 1});
  REQUIRE(res.misfit.size() == 31);  // initial misfit plus one entry per iteration
  // strictly decreasing until the perturbed-observation noise floor
  const double floor = 1e-6;
  for (std::size_t k = 1; k < res.misfit.size() && res.misfit[k - 1] > floor; ++k)
    CHECK(res.misfit[k] <= res.misfit[k - 1] * (1.0 + 1e-9));
  CHECK(res.misfit.back() < 0.001 * res.misfit.front());
}

TEST_CASE("enki_run: iterates stay in the affine span of the initial ensemble") {
  const int dim = 16, j_size = 4;
  LinearProblem p = make_linear(dim, 3, 0.01, 0.0, 11);
  EnkiConfig cfg;
  cfg.ensemble = j_size;
  cfg.iterations = 10;
  cfg.tikhonov = 0.01;
  cfg.prior_mean.assign(dim, 0.0);
  cfg.prior_std.assign(dim, 1.0);
  cfg.sigma_eps = 0.01;
  cfg.seed = 7;

  // reconstruct the initial ensemble deviations
  std::vector<std::vector<double>> init(static_cast<std::size_t>(j_size));
  for (int j = 0; j < j_size; ++j) {
    RngStream rng(cfg.seed, static_cast<std::uint64_t>(j));
    init[static_cast<std::size_t>(j)] = gaussian_draw(rng, dim);
  }
  std::vector<double> init_mean(static_cast<std::size_t>(dim), 0.0);
  for (const auto& m : init)
    for (int i = 0; i < dim; ++i) init_mean[static_cast<std::size_t>(i)] += m[static_cast<std::size_t>(i)] / j_size;
  // orthonormal basis of the deviation span
  std::vector<std::vector<double>> basis;
  for (const auto& m : init) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i)
      v[static_cast<std::size_t>(i)] = m[static_cast<std::size_t>(i)] - init_mean[static_cast<std::size_t>(i)];
    for (const auto& b : basis) {
      double dot = 0.0;
      for (int i = 0; i < dim; ++i) dot += v[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
      for (int i = 0; i < dim; ++i) v[static_cast<std::size_t>(i)] -= dot * b[static_cast<std::size_t>(i)];
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    if (nrm > 1e-20) {
      nrm = std::sqrt(nrm);
      for (double& x : v) x /= nrm;
      basis.push_back(std::move(v));
    }
  }

  EnkiResult res = enki_run(p.fwd, p.obs, cfg, GridShape{dim, 1});
  for (const auto& member : res.ensemble.fields) {
    std::vector<double> dev(static_cast<std::size_t>(dim));
    double nrm = 0.0;
    for (int i = 0; i < dim; ++i) {
      dev[static_cast<std::size_t>(i)] = member[static_cast<std::size_t>(i)] - init_mean[static_cast<std::size_t>(i)];
      nrm += dev[static_cast<std::size_t>(i)] * dev[static_cast<std::size_t>(i)];
    }
    for (const auto& b : basis) {
      double dot = 0.0;
      for (int i = 0; i < dim; ++i) dot += dev[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
      for (int i = 0; i < dim; ++i) dev[static_cast<std::size_t>(i)] -= dot * b[static_cast<std::size_t>(i)];
    }
    double resid = 0.0;
    for (double x : dev) resid += x * x;
    CHECK(std::sqrt(resid) <= 1e-8 * std::max(1.0, std::sqrt(nrm)));
  }
}

TEST_CASE("enki_run: deterministic per seed") {
  LinearProblem p = make_linear(5, 3, 0.1, 0.01, 13);
  EnkiConfig cfg;
  cfg.ensemble = 32;
  cfg.iterations = 5;
  cfg.tikhonov = 0.1;
  cfg.prior_mean.assign(5, 0.0);
  cfg.prior_std.assign(5, 1.0);
  cfg.sigma_eps = 0.01;
  cfg.seed = 21;
  EnkiResult a = enki_run(p.fwd, p.obs, cfg, GridShape{5, 1});
  EnkiResult b = enki_run(p.fwd, p.obs, cfg, GridShape{5, 1});
  CHECK(a.ensemble.fields == b.ensemble.fields);
  CHECK(a.misfit == b.misfit);
}

TEST_CASE("enki config validation enforces the ensemble-size requirement") {
  EnkiConfig cfg;
  cfg.ensemble = 100;
  cfg.prior_mean.assign(256, 0.0);
  cfg.prior_std.assign(256, 1.0);
  CHECK_THROWS_AS(cfg.validate(256, true), ConfigError);
  CHECK_NOTHROW(cfg.validate(256, false));
  cfg.ensemble = 1024;
  CHECK_NOTHROW(cfg.validate(256, true));
}
