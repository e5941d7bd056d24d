#include <doctest.h>

#include <cmath>
#include <vector>

#include "diffinv/error.hpp"
#include "diffinv/sde.hpp"

using namespace diffinv;

TEST_CASE("drift: VE families have none, VP contracts") {
  auto ve = SdeSpec::ve_geometric(25.0);
  std::vector<double> mu{1.0, -2.0};
  for (double d : drift(ve, mu, 0.5)) CHECK(d == 0.0);

  auto vp = SdeSpec::vp_linear(32.0);
  std::vector<double> ones{1.0, 1.0};
  auto d = drift(vp, ones, 0.25);
  CHECK(d[0] == doctest::Approx(-4.0));
  CHECK(d[1] == doctest::Approx(-4.0));

  std::vector<double> zeros{0.0, 0.0};
  for (double v : drift(vp, zeros, 0.7)) CHECK(v == 0.0);

  CHECK_THROWS_AS(drift(vp, ones, 1.5), DomainError);
  CHECK_THROWS_AS(drift(vp, ones, -0.1), DomainError);
}

TEST_CASE("diffusion: closed forms") {
  auto ve = SdeSpec::ve_geometric(25.0);
  CHECK(diffusion(ve, 0.0) == doctest::Approx(1.0));
  CHECK(diffusion(ve, 1.0) == doctest::Approx(25.0));

  auto vp = SdeSpec::vp_linear(32.0);
  CHECK(diffusion(vp, 0.5) == doctest::Approx(4.0));

  // VE-general via finite difference of sigma^2
  auto veg = SdeSpec::ve_general([](double t) { return 1.0 + t; });
  // d/dt (1+t)^2 = 2(1+t)
  CHECK(diffusion(veg, 0.5) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-5));
}

TEST_CASE("kernel_params: closed forms") {
  for (auto spec : {SdeSpec::ve_geometric(25.0), SdeSpec::vp_linear(32.0)}) {
    KernelParams p0 = kernel_params(spec, 0.0);
    CHECK(p0.mean_scale == doctest::Approx(1.0));
    CHECK(p0.std == doctest::Approx(0.0));
  }

  auto ve = SdeSpec::ve_geometric(25.0);
  KernelParams pv = kernel_params(ve, 1.0);
  CHECK(pv.mean_scale == 1.0);
  CHECK(pv.std * pv.std == doctest::Approx(624.0 / (2.0 * std::log(25.0))).epsilon(1e-12));
  CHECK(pv.std == doctest::Approx(9.845).epsilon(1e-3));

  auto vp = SdeSpec::vp_linear(32.0);
  KernelParams pp = kernel_params(vp, 1.0);
  CHECK(pp.mean_scale == doctest::Approx(std::exp(-8.0)));
  CHECK(pp.std * pp.std == doctest::Approx(1.0 - std::exp(-16.0)));
}

TEST_CASE("forward_em_step: zero-noise forms") {
  TimeGrid grid(1.0, 1000);
  std::vector<double> z(2, 0.0);

  auto ve = SdeSpec::ve_geometric(25.0);
  std::vector<double> mu{0.3, -1.2};
  auto mu0 = mu;
  forward_em_step(ve, mu, 501, grid, z);
  CHECK(mu == mu0);

  auto vp = SdeSpec::vp_linear(32.0);
  mu = mu0;
  forward_em_step(vp, mu, 501, grid, z);  // t_{n-1} = 0.5, beta = 32*0.5*1e-3
  const double c = std::sqrt(1.0 - 0.016);
  CHECK(mu[0] == doctest::Approx(c * mu0[0]));
  CHECK(mu[1] == doctest::Approx(c * mu0[1]));

  CHECK_THROWS_AS(forward_em_step(vp, mu, 0, grid, z), DomainError);
  CHECK_THROWS_AS(forward_em_step(vp, mu, 1001, grid, z), DomainError);
}

TEST_CASE("forward_em_step: DDPM step-size guard") {
  auto vp = SdeSpec::vp_linear(32.0);
  TimeGrid grid(1.0, 8);  // beta(t) dt reaches 4 at late steps
  std::vector<double> mu{1.0};
  std::vector<double> z{0.0};
  CHECK_THROWS_AS(forward_em_step(vp, mu, 8, grid, z), DomainError);
}

TEST_CASE("forward_em_step: Monte Carlo moments match the kernel") {
  // Moment agreement is measured on the scale of the noised distribution,
  // max(|mean|, std): the VP mean at t = 1 is e^-8 of the data scale and the
  // discrete sqrt(1-beta) contraction carries an O(sum beta^2) offset there.
  const int paths = 20000;
  const int nt = 500;
  TimeGrid grid(1.0, nt);
  for (auto spec : {SdeSpec::ve_geometric(25.0), SdeSpec::vp_linear(32.0)}) {
    RngStream rng(99, spec.kind == SdeKind::VpLinear ? 1 : 0);
    const double mu0 = 100.0;
    double sum = 0.0, sumsq = 0.0;
    std::vector<double> x(1);
    for (int p = 0; p < paths; ++p) {
      x[0] = mu0;
      for (int n = 1; n <= nt; ++n) forward_em_step(spec, x, n, grid, rng);
      sum += x[0];
      sumsq += x[0] * x[0];
    }
    const double mean = sum / paths;
    const double var = sumsq / paths - mean * mean;
    KernelParams kp = kernel_params(spec, 1.0);
    const double scale = std::max(std::abs(kp.mean_scale * mu0), kp.std);
    CHECK(std::abs(mean - kp.mean_scale * mu0) <= 0.02 * scale);
    CHECK(std::sqrt(var) == doctest::Approx(kp.std).epsilon(0.02));
  }
}

TEST_CASE("reverse_em_step: zero-score zero-noise forms") {
  TimeGrid grid(1.0, 1000);
  std::vector<double> z(2, 0.0), score(2, 0.0);

  auto ve = SdeSpec::ve_geometric(25.0);
  std::vector<double> mu{0.4, 2.0};
  auto mu0 = mu;
  reverse_em_step(ve, mu, 500, grid, score, z);
  CHECK(mu == mu0);

  auto vp = SdeSpec::vp_linear(32.0);
  mu = mu0;
  reverse_em_step(vp, mu, 500, grid, score, z);  // beta_n = 32*0.5*1e-3 = 0.016
  CHECK(mu[0] == doctest::Approx(mu0[0] / std::sqrt(0.984)));

  std::vector<double> bad(3, 0.0);
  CHECK_THROWS_AS(reverse_em_step(vp, mu, 500, grid, bad, z), ShapeError);
}

TEST_CASE("reverse_em_step: full denoising pass recovers a standard normal") {
  // 1-D standard-normal data; noised density is N(0, m^2 + s^2) with
  // analytic score -mu / (m^2 + s^2).
  const int paths = 40000;
  const int nt = 1000;
  TimeGrid grid(1.0, nt);
  for (auto spec : {SdeSpec::ve_geometric(25.0), SdeSpec::vp_linear(32.0)}) {
    RngStream rng(7, spec.kind == SdeKind::VpLinear ? 1 : 0);
    KernelParams kt = kernel_params(spec, 1.0);
    const double term_std = std::sqrt(kt.mean_scale * kt.mean_scale + kt.std * kt.std);
    double sum = 0.0, sumsq = 0.0;
    std::vector<double> x(1), score(1);
    for (int p = 0; p < paths; ++p) {
      x[0] = term_std * rng.normal();
      for (int n = nt; n >= 1; --n) {
        KernelParams kp = kernel_params(spec, grid.t(n));
        const double v = kp.mean_scale * kp.mean_scale + kp.std * kp.std;
        score[0] = -x[0] / v;
        reverse_em_step(spec, x, n, grid, score, rng);
      }
      sum += x[0];
      sumsq += x[0] * x[0];
    }
    const double mean = sum / paths;
    const double var = sumsq / paths - mean * mean;
    CHECK(std::abs(mean) <= 0.03);
    CHECK(var == doctest::Approx(1.0).epsilon(0.03));
  }
}

TEST_CASE("perturb: forced noise and closed-form moments") {
  auto ve = SdeSpec::ve_geometric(25.0);
  std::vector<double> mu0{2.0, -3.0};

  SUBCASE("zero noise gives the kernel mean") {
    auto p = perturb(ve, mu0, 0.7, std::vector<double>{0.0, 0.0});
    KernelParams kp = kernel_params(ve, 0.7);
    CHECK(p.mu_t[0] == doctest::Approx(kp.mean_scale * mu0[0]));
    CHECK(p.sigma == doctest::Approx(kp.std));
  }

  SUBCASE("degenerate kernel at t = 0") {
    RngStream rng(1);
    CHECK_THROWS_AS(perturb(ve, mu0, 0.0, rng), DomainError);
  }

  SUBCASE("VE std at t = 1") {
    RngStream rng(17);
    std::vector<double> zero{0.0};
    const int n = 100000;
    double sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
      auto p = perturb(ve, zero, 1.0, rng);
      sumsq += p.mu_t[0] * p.mu_t[0];
    }
    CHECK(std::sqrt(sumsq / n) == doctest::Approx(9.845).epsilon(0.01));
  }

  SUBCASE("VP mean contraction at t = 1") {
    auto vp = SdeSpec::vp_linear(32.0);
    RngStream rng(18);
    std::vector<double> big{1000.0};
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      auto p = perturb(vp, big, 1.0, rng);
      sum += p.mu_t[0];
    }
    CHECK(sum / n == doctest::Approx(1000.0 * std::exp(-8.0)).epsilon(0.05));
  }
}

TEST_CASE("VE mean invariance under noising") {
  auto ve = SdeSpec::ve_geometric(25.0);
  RngStream rng(5);
  std::vector<double> mu0{3.0};
  const int paths = 20000;
  for (double t : {0.3, 1.0}) {
    double sum = 0.0;
    for (int p = 0; p < paths; ++p) sum += perturb(ve, mu0, t, rng).mu_t[0];
    KernelParams kp = kernel_params(ve, t);
    CHECK(std::abs(sum / paths - mu0[0]) <= 4.0 * kp.std / std::sqrt(static_cast<double>(paths)));
  }
}

TEST_CASE("VP variance stays bounded by one") {
  auto vp = SdeSpec::vp_linear(32.0);
  for (int i = 0; i <= 1000; ++i) {
    KernelParams kp = kernel_params(vp, i / 1000.0);
    CHECK(kp.std * kp.std <= 1.0 + 1e-12);
  }
}

TEST_CASE("VE-general uses its own printed kernel") {
  // sigma(t) = sigma_hat^t / sqrt(2 ln sigma_hat): the general-VE variance
  // sigma^2(t) - sigma^2(0) differs from the geometric family's printed
  // (sigma_hat^{2t} - 1) / (2 ln sigma_hat) by the sigma^2(0) offset.
  const double sh = 25.0;
  auto veg = SdeSpec::ve_general([sh](double t) { return std::pow(sh, t) / std::sqrt(2.0 * std::log(sh)); });
  auto geo = SdeSpec::ve_geometric(sh);
  KernelParams pg = kernel_params(veg, 1.0);
  KernelParams pgeo = kernel_params(geo, 1.0);
  const double lg = 2.0 * std::log(sh);
  CHECK(pg.std * pg.std == doctest::Approx((sh * sh - 1.0) / lg));
  CHECK(pgeo.std * pgeo.std == doctest::Approx((sh * sh - 1.0) / lg));
  // both agree here since sigma^2(0) = 1/(2 ln sigma_hat) matches the -1 shift
}

TEST_CASE("SdeSpec validation") {
  CHECK_THROWS_AS(SdeSpec::ve_geometric(0.9), ConfigError);
  CHECK_THROWS_AS(SdeSpec::vp_linear(-1.0), ConfigError);
  CHECK_THROWS_AS(TimeGrid(1.0, 0), ConfigError);
}
