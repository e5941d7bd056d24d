#include <doctest.h>

#include <cmath>
#include <vector>

#include "diffinv/error.hpp"
#include "diffinv/score.hpp"

using namespace diffinv;

namespace {

double log_density_gaussian(std::span<const double> mu, std::span<const double> m0, const DenseMatrix& cov,
                            const SdeSpec& spec, double t) {
  // noised density N(m(t) m0, m(t)^2 C0 + s(t)^2 I), up to a constant
  KernelParams kp = kernel_params(spec, t);
  const int n = static_cast<int>(mu.size());
  DenseMatrix c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c(i, j) = kp.mean_scale * kp.mean_scale * cov(i, j) + (i == j ? kp.std * kp.std : 0.0);
  CholeskyFactor f(c);
  std::vector<double> d(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) d[i] = mu[i] - kp.mean_scale * m0[i];
  std::vector<double> x = f.solve(d);
  double q = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) q += d[i] * x[i];
  return -0.5 * q;
}

}  // namespace

TEST_CASE("analytic gaussian score: standard normal limit at t -> 0") {
  auto spec = SdeSpec::ve_geometric(25.0);
  auto model = ScoreModel::analytic_gaussian({0.0, 0.0}, DenseMatrix::identity(2));
  auto s = model.eval(std::vector<double>{2.0, 0.0}, 1e-9, spec);
  CHECK(s[0] == doctest::Approx(-2.0).epsilon(1e-6));
  CHECK(s[1] == doctest::Approx(0.0));
}

TEST_CASE("analytic gaussian score: noised variance at t = 1") {
  auto spec = SdeSpec::ve_geometric(25.0);
  auto model = ScoreModel::analytic_gaussian({0.0, 0.0}, DenseMatrix::identity(2));
  const double s2 = (std::pow(25.0, 2.0) - 1.0) / (2.0 * std::log(25.0));
  auto s = model.eval(std::vector<double>{1.0, -2.0}, 1.0, spec);
  CHECK(s[0] == doctest::Approx(-1.0 / (1.0 + s2)));
  CHECK(s[1] == doctest::Approx(2.0 / (1.0 + s2)));
}

TEST_CASE("single-component mixture equals the gaussian score") {
  auto spec = SdeSpec::vp_linear(32.0);
  RngStream rng(2);
  std::vector<double> mean{0.3, -0.7, 1.1};
  DenseMatrix cov(3, 3);
  for (int i = 0; i < 3; ++i) cov(i, i) = 0.49;
  auto gauss = ScoreModel::analytic_gaussian(mean, cov);
  auto gmm = ScoreModel::analytic_gmm({1.0}, {mean}, {0.49});
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> mu = gaussian_draw(rng, 3);
    const double t = 0.05 + 0.9 * rng.uniform();
    auto a = gauss.eval(mu, t, spec);
    auto b = gmm.eval(mu, t, spec);
    for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("analytic gaussian score integrates the log-density") {
  RngStream rng(5);
  DenseMatrix a(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = rng.normal();
  DenseMatrix cov = matmul(a.transpose(), a);
  for (int i = 0; i < 3; ++i) cov(i, i) += 0.5;
  std::vector<double> m0{0.2, -0.4, 0.9};
  auto model = ScoreModel::analytic_gaussian(m0, cov);
  for (auto spec : {SdeSpec::ve_geometric(25.0), SdeSpec::vp_linear(32.0)}) {
    std::vector<double> mu = gaussian_draw(rng, 3);
    const double t = 0.4;
    auto s = model.eval(mu, t, spec);
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
      auto mup = mu, mum = mu;
      mup[i] += h;
      mum[i] -= h;
      const double fd =
          (log_density_gaussian(mup, m0, cov, spec, t) - log_density_gaussian(mum, m0, cov, spec, t)) / (2.0 * h);
      CHECK(std::abs(fd - s[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("mixture score integrates the mixture log-density") {
  auto spec = SdeSpec::ve_geometric(25.0);
  auto model = ScoreModel::analytic_gmm({0.3, 0.7}, {{0.5, 0.5}, {-0.5, -0.5}}, {0.01, 0.04});
  RngStream rng(6);
  auto log_density = [&](std::span<const double> mu, double t) {
    KernelParams kp = kernel_params(spec, t);
    const double w[2] = {0.3, 0.7};
    const double c2[2] = {0.01, 0.04};
    const double mx[2] = {0.5, -0.5};
    double acc = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double var = kp.mean_scale * kp.mean_scale * c2[c] + kp.std * kp.std;
      double q = 0.0;
      for (int i = 0; i < 2; ++i) {
        const double d = mu[i] - kp.mean_scale * mx[c];
        q += d * d;
      }
      acc += w[c] * std::exp(-0.5 * q / var) / var;  // dim 2: var^{-d/2} = 1/var
    }
    return std::log(acc);
  };
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> mu = gaussian_draw(rng, 2);
    const double t = 0.1 + 0.8 * rng.uniform();
    auto s = model.eval(mu, t, spec);
    const double h = 1e-6;
    for (int i = 0; i < 2; ++i) {
      auto mup = mu, mum = mu;
      mup[i] += h;
      mum[i] -= h;
      const double fd = (log_density(mup, t) - log_density(mum, t)) / (2.0 * h);
      CHECK(std::abs(fd - s[i]) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("DSM objective is minimized by the analytic score") {
  auto spec = SdeSpec::ve_geometric(25.0);
  auto model = ScoreModel::analytic_gaussian({0.0}, DenseMatrix::identity(1));
  RngStream rng(8);
  const double t = 0.5;
  KernelParams kp = kernel_params(spec, t);
  const int n = 20000;
  double loss_exact = 0.0, loss_perturbed = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> mu0{rng.normal()};
    Perturbation p = perturb(spec, mu0, t, rng);
    auto s = model.eval(p.mu_t, t, spec);
    const double r_exact = kp.std * s[0] + p.z[0];
    const double r_pert = kp.std * (s[0] + 0.3) + p.z[0];
    loss_exact += r_exact * r_exact;
    loss_perturbed += r_pert * r_pert;
  }
  CHECK(loss_exact < loss_perturbed);
}

TEST_CASE("learned model clamps t below the floor") {
  RngStream rng(10);
  Network net = make_mlp_score_net(2, 8);
  net.init_weights(rng);
  auto spec = SdeSpec::ve_geometric(25.0);
  auto model = ScoreModel::learned(std::move(net), spec, Normalization{}, 0.05);
  std::vector<double> mu{0.4, -0.2};
  auto a = model.eval(mu, 0.01, spec);
  auto b = model.eval(mu, 0.05, spec);
  CHECK(a == b);
}

TEST_CASE("learned model rejects a mismatched family") {
  RngStream rng(10);
  Network net = make_mlp_score_net(2, 8);
  net.init_weights(rng);
  auto model = ScoreModel::learned(std::move(net), SdeSpec::ve_geometric(25.0), Normalization{}, 1e-3);
  std::vector<double> mu{0.0, 0.0};
  CHECK_THROWS_AS(model.eval(mu, 0.5, SdeSpec::vp_linear(32.0)), ConfigError);
}

TEST_CASE("dsm_train: precondition errors") {
  auto spec = SdeSpec::ve_geometric(25.0);
  SampleSet data;
  data.grid = GridShape{1, 1};
  data.fields = {{0.5}};
  DsmConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(dsm_train(data, spec, make_mlp_score_net(1, 4), cfg), ConfigError);
  SampleSet empty;
  DsmConfig cfg1;
  CHECK_THROWS_AS(dsm_train(empty, spec, make_mlp_score_net(1, 4), cfg1), ConfigError);
}

TEST_CASE("dsm_train: 1-D standard normal score within 10% relative L2") {
  auto spec = SdeSpec::ve_geometric(25.0);
  RngStream rng(12);
  SampleSet data;
  data.grid = GridShape{1, 1};
  for (int i = 0; i < 4096; ++i) data.fields.push_back({rng.normal()});

  Network net = make_mlp_score_net(1, 64);
  net.init_weights(rng);
  DsmConfig cfg;
  cfg.epochs = 120;  // 64 steps/epoch at batch 64
  cfg.seed = 3;
  DsmResult res = dsm_train(data, spec, std::move(net), cfg);

  // the analytic oracle for the normalized data: N((0 - lo)/scale, 1/scale^2)
  const auto& nz = res.model.normalization();
  DenseMatrix cov_norm(1, 1);
  cov_norm(0, 0) = 1.0 / (nz.scale * nz.scale);
  auto ref = ScoreModel::analytic_gaussian({-nz.lo / nz.scale}, cov_norm);

  double err_sum = 0.0;
  int t_count = 0;
  for (double t = 0.1; t <= 1.0 + 1e-9; t += 0.1) {
    KernelParams kp = kernel_params(spec, t);
    const double band = 3.0 * std::sqrt(1.0 / (nz.scale * nz.scale) + kp.std * kp.std);
    const double center = -nz.lo / nz.scale;
    double num = 0.0, den = 0.0;
    for (int i = -30; i <= 30; ++i) {
      std::vector<double> mu{center + band * i / 30.0};
      auto s_learn = res.model.eval(mu, t, spec);
      auto s_ref = ref.eval(mu, t, spec);
      num += (s_learn[0] - s_ref[0]) * (s_learn[0] - s_ref[0]);
      den += s_ref[0] * s_ref[0];
    }
    err_sum += std::sqrt(num / den);
    ++t_count;
  }
  const double avg_rel_err = err_sum / t_count;
  CHECK(avg_rel_err <= 0.10);
}

TEST_CASE("dsm_train: 2-D mixture score cosine similarity >= 0.95") {
  auto spec = SdeSpec::ve_geometric(25.0);
  RngStream rng(14);
  SampleSet data;
  data.grid = GridShape{2, 1};
  for (int i = 0; i < 4096; ++i) {
    const double sgn = rng.uniform() < 0.5 ? 1.0 : -1.0;
    data.fields.push_back({sgn * 0.5 + 0.1 * rng.normal(), sgn * 0.5 + 0.1 * rng.normal()});
  }

  Network net = make_mlp_score_net(2, 64);
  net.init_weights(rng);
  DsmConfig cfg;
  cfg.epochs = 150;
  cfg.seed = 4;
  DsmResult res = dsm_train(data, spec, std::move(net), cfg);
  const auto& nz = res.model.normalization();

  // analytic mixture in normalized coordinates
  auto to_norm = [&](double x) { return (x - nz.lo) / nz.scale; };
  const double var_norm = 0.01 / (nz.scale * nz.scale);
  auto gmm = ScoreModel::analytic_gmm({0.5, 0.5}, {{to_norm(0.5), to_norm(0.5)}, {to_norm(-0.5), to_norm(-0.5)}},
                                      {var_norm, var_norm});

  double cos_sum = 0.0;
  int count = 0;
  RngStream trng(77);
  for (int i = 0; i < 300; ++i) {
    const double sgn = trng.uniform() < 0.5 ? 1.0 : -1.0;
    std::vector<double> mu0{to_norm(sgn * 0.5 + 0.1 * trng.normal()), to_norm(sgn * 0.5 + 0.1 * trng.normal())};
    const double t = 0.1 + 0.9 * trng.uniform();
    Perturbation p = perturb(spec, mu0, t, trng);
    auto a = res.model.eval(p.mu_t, t, spec);
    auto b = gmm.eval(p.mu_t, t, spec);
    const double na = std::sqrt(a[0] * a[0] + a[1] * a[1]);
    const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1]);
    if (na == 0.0 || nb == 0.0) continue;
    cos_sum += (a[0] * b[0] + a[1] * b[1]) / (na * nb);
    ++count;
  }
  CHECK(cos_sum / count >= 0.95);
}
