#include "diffinv/forward.hpp"

#include <algorithm>
#include <cmath>

#include "diffinv/error.hpp"

namespace diffinv {

void Observation::validate(GridShape grid) const {
  if (y.empty()) throw ConfigError("Observation: empty observation vector");
  if (sigma_eps <= 0.0) throw ConfigError("Observation: sigma_eps must be positive");
  if (!sigma_model.empty() && sigma_model.size() != y.size())
    throw ShapeError("Observation: sigma_model size mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(grid.size()), false);
  for (int idx : node_indices) {
    if (idx < 0 || idx >= grid.size()) throw ShapeError("Observation: node index out of range");
    if (seen[static_cast<std::size_t>(idx)]) throw ConfigError("Observation: duplicate node index");
    seen[static_cast<std::size_t>(idx)] = true;
    const int r = idx / grid.nx, c = idx % grid.nx;
    if (r != 0 && r != grid.ny - 1 && c != 0 && c != grid.nx - 1)
      throw ConfigError("Observation: node not on the boundary");
  }
}

namespace {

// hyper-elastic density per unit Young's modulus and its derivative w.r.t.
// the deformation-gradient channels (F11, F12, F21, F22)
struct HyperPoint {
  double value;      // f_a at E = 1
  double dv[4];      // d f_a / dF at E = 1
};

HyperPoint hyper_density_unit(const double f[4], double nu) {
  const double det = f[0] * f[3] - f[1] * f[2];
  if (det <= 0.0) throw DomainError("energy: inadmissible deformation, det F <= 0");
  const double mu_l = 1.0 / (2.0 * (1.0 + nu));               // Lame mu at E = 1
  const double lam = nu / ((1.0 + nu) * (1.0 - 2.0 * nu));    // Lame lambda at E = 1
  const double tr = f[0] * f[0] + f[1] * f[1] + f[2] * f[2] + f[3] * f[3];
  const double ld = std::log(det);
  HyperPoint p;
  p.value = 0.5 * mu_l * (tr - 2.0) - mu_l * ld + 0.5 * lam * ld * ld;
  // F^{-T} in channel order (11, 12, 21, 22)
  const double finvt[4] = {f[3] / det, -f[2] / det, -f[1] / det, f[0] / det};
  const double coef = lam * ld - mu_l;
  for (int i = 0; i < 4; ++i) p.dv[i] = mu_l * f[i] + coef * finvt[i];
  return p;
}

// 4x4 second derivative of the unit-modulus density at one node
void hyper_hessian_unit(const double f[4], double nu, double out[4][4]) {
  const double det = f[0] * f[3] - f[1] * f[2];
  const double mu_l = 1.0 / (2.0 * (1.0 + nu));
  const double lam = nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const double ld = std::log(det);
  // F^{-1} as a 2x2
  const double fi[2][2] = {{f[3] / det, -f[1] / det}, {-f[2] / det, f[0] / det}};
  const double finvt[4] = {fi[0][0], fi[1][0], fi[0][1], fi[1][1]};  // (F^{-1})_{ji}
  const double coef = lam * ld - mu_l;
  auto idx = [](int i, int j) { return 2 * i + j; };
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) out[a][b] = (a == b ? mu_l : 0.0) + lam * finvt[a] * finvt[b];
  // + coef * d(F^{-T})_{ij}/dF_{kl} = -coef (F^{-1})_{jk} (F^{-1})_{li}
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) out[idx(i, j)][idx(k, l)] -= coef * fi[j][k] * fi[l][i];
}

std::vector<double> density_grad(std::span<const double> v, std::span<const double> mu, const GridOperators& ops,
                                 EnergyKind kind) {
  const int n = ops.nodes();
  std::vector<double> w(v.size());
  if (kind.type == EnergyKind::Type::Dirichlet) {
    for (int i = 0; i < n; ++i) {
      const double c = ops.i_vec[static_cast<std::size_t>(i)] * mu[static_cast<std::size_t>(i)];
      w[static_cast<std::size_t>(i)] = c * v[static_cast<std::size_t>(i)];
      w[static_cast<std::size_t>(n + i)] = c * v[static_cast<std::size_t>(n + i)];
    }
  } else {
    for (int i = 0; i < n; ++i) {
      double f[4];
      for (int c = 0; c < 4; ++c) f[c] = v[static_cast<std::size_t>(c) * n + i] + (c == 0 || c == 3 ? 1.0 : 0.0);
      HyperPoint p = hyper_density_unit(f, kind.nu);
      const double ci = ops.i_vec[static_cast<std::size_t>(i)] * mu[static_cast<std::size_t>(i)];
      for (int c = 0; c < 4; ++c) w[static_cast<std::size_t>(c) * n + i] = ci * p.dv[c];
    }
  }
  return w;
}

void check_state(std::span<const double> u, std::span<const double> mu, const GridOperators& ops, EnergyKind kind) {
  if (kind.state_channels() != ops.state_channels)
    throw ConfigError("energy: operator/state channel mismatch");
  if (static_cast<int>(u.size()) != ops.state_channels * ops.nodes()) throw ShapeError("energy: state size mismatch");
  if (static_cast<int>(mu.size()) != ops.nodes()) throw ShapeError("energy: parameter size mismatch");
}

}  // namespace

double energy(std::span<const double> u, std::span<const double> mu, const GridOperators& ops, EnergyKind kind) {
  check_state(u, mu, ops, kind);
  const int n = ops.nodes();
  std::vector<double> v = ops.gradient(u);
  double acc = 0.0;
  if (kind.type == EnergyKind::Type::Dirichlet) {
    for (int i = 0; i < n; ++i) {
      const double gx = v[static_cast<std::size_t>(i)];
      const double gy = v[static_cast<std::size_t>(n + i)];
      acc += ops.i_vec[static_cast<std::size_t>(i)] * 0.5 * mu[static_cast<std::size_t>(i)] * (gx * gx + gy * gy);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      double f[4];
      for (int c = 0; c < 4; ++c) f[c] = v[static_cast<std::size_t>(c) * n + i] + (c == 0 || c == 3 ? 1.0 : 0.0);
      acc += ops.i_vec[static_cast<std::size_t>(i)] * mu[static_cast<std::size_t>(i)] * hyper_density_unit(f, kind.nu).value;
    }
  }
  for (std::size_t i = 0; i < u.size(); ++i) acc += ops.f_vec[i] * u[i];
  return acc;
}

std::vector<double> energy_grad_u(std::span<const double> u, std::span<const double> mu, const GridOperators& ops,
                                  EnergyKind kind) {
  check_state(u, mu, ops, kind);
  std::vector<double> v = ops.gradient(u);
  std::vector<double> w = density_grad(v, mu, ops, kind);
  std::vector<double> g(u.size(), 0.0);
  ops.gradient_transpose_add(w, g);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += ops.f_vec[i];
  ops.apply_fixed_mask(g);
  return g;
}

namespace {

// matrix-free PCG for the Dirichlet-energy optimality system
std::vector<double> solve_dirichlet(std::span<const double> mu, const GridOperators& ops) {
  const int n = ops.nodes();
  auto apply_k = [&](std::span<const double> x, std::vector<double>& out) {
    std::vector<double> v = ops.gradient(x);
    for (int i = 0; i < n; ++i) {
      const double c = ops.i_vec[static_cast<std::size_t>(i)] * mu[static_cast<std::size_t>(i)];
      v[static_cast<std::size_t>(i)] *= c;
      v[static_cast<std::size_t>(n + i)] *= c;
    }
    std::fill(out.begin(), out.end(), 0.0);
    ops.gradient_transpose_add(v, out);
    ops.apply_fixed_mask(out);
  };

  // Jacobi preconditioner from the assembled diagonal
  std::vector<double> diag(static_cast<std::size_t>(n), 0.0);
  for (int r = 0; r < 2 * n; ++r) {
    const double c = ops.i_vec[static_cast<std::size_t>(r / 2)] * mu[static_cast<std::size_t>(r / 2)];
    for (int k = ops.g_ptr[r]; k < ops.g_ptr[r + 1]; ++k)
      diag[static_cast<std::size_t>(ops.g_col[k])] += c * ops.g_val[k] * ops.g_val[k];
  }
  for (double& d : diag) d = d > 0.0 ? 1.0 / d : 1.0;

  std::vector<double> b(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(i)] = -ops.f_vec[static_cast<std::size_t>(i)];
  ops.apply_fixed_mask(b);
  double bnorm = 0.0;
  for (double x : b) bnorm += x * x;
  bnorm = std::sqrt(bnorm);
  std::vector<double> u(static_cast<std::size_t>(n), 0.0);
  if (bnorm == 0.0) return u;

  std::vector<double> r = b, z(static_cast<std::size_t>(n)), p(static_cast<std::size_t>(n)), kp(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] = diag[static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(i)];
  p = z;
  double rz = 0.0;
  for (int i = 0; i < n; ++i) rz += r[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];

  const int max_iter = 20 * n;
  for (int it = 0; it < max_iter; ++it) {
    apply_k(p, kp);
    double pkp = 0.0;
    for (int i = 0; i < n; ++i) pkp += p[static_cast<std::size_t>(i)] * kp[static_cast<std::size_t>(i)];
    if (pkp <= 0.0) throw SolverError("solve_pde: operator lost positive definiteness");
    const double alpha = rz / pkp;
    double rnorm = 0.0;
    for (int i = 0; i < n; ++i) {
      u[static_cast<std::size_t>(i)] += alpha * p[static_cast<std::size_t>(i)];
      r[static_cast<std::size_t>(i)] -= alpha * kp[static_cast<std::size_t>(i)];
      rnorm += r[static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(i)];
    }
    if (std::sqrt(rnorm) <= 1e-10 * bnorm) return u;
    double rz_new = 0.0;
    for (int i = 0; i < n; ++i) {
      z[static_cast<std::size_t>(i)] = diag[static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(i)];
      rz_new += r[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(i)] + beta * p[static_cast<std::size_t>(i)];
  }
  throw SolverError("solve_pde: CG did not reach the residual tolerance");
}

// dense Hessian of the hyper-elastic energy with fixed dofs pinned
DenseMatrix hyper_hessian(std::span<const double> u, std::span<const double> mu, const GridOperators& ops, double nu) {
  const int n = ops.nodes();
  const int dofs = 2 * n;
  std::vector<double> v = ops.gradient(u);
  DenseMatrix hess(dofs, dofs);
  // per node: H += i_n mu_n J_n^T S_n J_n, with J_n the 4 gradient rows
  std::vector<std::pair<int, double>> entries[4];
  for (int i = 0; i < n; ++i) {
    double f[4];
    for (int c = 0; c < 4; ++c) f[c] = v[static_cast<std::size_t>(c) * n + i] + (c == 0 || c == 3 ? 1.0 : 0.0);
    double s[4][4];
    hyper_hessian_unit(f, nu, s);
    const double ci = ops.i_vec[static_cast<std::size_t>(i)] * mu[static_cast<std::size_t>(i)];
    // gradient channel c = 2*e + d acts on state channel e via G row 2i + d
    for (int c = 0; c < 4; ++c) {
      const int e = c / 2, d = c % 2;
      const int row = 2 * i + d;
      entries[c].clear();
      for (int k = ops.g_ptr[row]; k < ops.g_ptr[row + 1]; ++k)
        entries[c].emplace_back(e * n + ops.g_col[k], ops.g_val[k]);
    }
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const double sab = ci * s[a][b];
        if (sab == 0.0) continue;
        for (auto [pa, va] : entries[a])
          for (auto [pb, vb] : entries[b]) hess(pa, pb) += sab * va * vb;
      }
  }
  // pin fixed dofs
  for (int e = 0; e < 2; ++e)
    for (int i = 0; i < n; ++i)
      if (ops.fixed[static_cast<std::size_t>(i)]) {
        const int d = e * n + i;
        for (int j = 0; j < dofs; ++j) {
          hess(d, j) = 0.0;
          hess(j, d) = 0.0;
        }
        hess(d, d) = 1.0;
      }
  return hess;
}

std::vector<double> solve_hyperelastic(std::span<const double> mu, const GridOperators& ops, EnergyKind kind) {
  const int dofs = 2 * ops.nodes();
  std::vector<double> u(static_cast<std::size_t>(dofs), 0.0);
  double e_cur = energy(u, mu, ops, kind);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> g = energy_grad_u(u, mu, ops, kind);
    double gnorm = 0.0;
    for (double x : g) gnorm += x * x;
    gnorm = std::sqrt(gnorm);
    if (gnorm <= 1e-8) return u;

    DenseMatrix hess = hyper_hessian(u, mu, ops, kind.nu);
    // Levenberg-style diagonal lift retries if the factorization fails
    std::vector<double> step;
    double lift = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      try {
        DenseMatrix h2 = hess;
        if (lift > 0.0)
          for (int i = 0; i < dofs; ++i) h2(i, i) += lift;
        step = CholeskyFactor(h2).solve(g);
        break;
      } catch (const SolverError&) {
        lift = lift == 0.0 ? 1e-8 : lift * 100.0;
        if (attempt == 7) throw;
      }
    }
    double gdot = 0.0;
    for (int i = 0; i < dofs; ++i) gdot += g[static_cast<std::size_t>(i)] * step[static_cast<std::size_t>(i)];

    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= 1e-10) {
      std::vector<double> trial = u;
      for (int i = 0; i < dofs; ++i) trial[static_cast<std::size_t>(i)] -= alpha * step[static_cast<std::size_t>(i)];
      try {
        const double e_trial = energy(trial, mu, ops, kind);
        if (e_trial <= e_cur - 1e-4 * alpha * gdot) {
          u = std::move(trial);
          e_cur = e_trial;
          accepted = true;
          break;
        }
      } catch (const DomainError&) {
        // det F <= 0 along the step: shrink
      }
      alpha *= 0.5;
    }
    if (!accepted) throw SolverError("solve_pde: line search failed");
  }
  throw SolverError("solve_pde: Newton did not converge in 50 iterations");
}

}  // namespace

std::vector<double> solve_pde(std::span<const double> mu, const GridOperators& ops, EnergyKind kind) {
  if (static_cast<int>(mu.size()) != ops.nodes()) throw ShapeError("solve_pde: parameter size mismatch");
  if (kind.state_channels() != ops.state_channels) throw ConfigError("solve_pde: operator/state channel mismatch");
  for (double v : mu)
    if (!(v > 0.0)) throw DomainError("solve_pde: parameter must be positive everywhere");
  if (kind.type == EnergyKind::Type::Dirichlet) return solve_dirichlet(mu, ops);
  return solve_hyperelastic(mu, ops, kind);
}

std::vector<double> observe(std::span<const double> u, std::span<const int> node_indices, const GridOperators& ops) {
  const int n = ops.nodes();
  if (static_cast<int>(u.size()) != ops.state_channels * n) throw ShapeError("observe: state size mismatch");
  std::vector<double> y;
  y.reserve(node_indices.size() * static_cast<std::size_t>(ops.state_channels));
  for (int idx : node_indices) {
    if (idx < 0 || idx >= n) throw ShapeError("observe: node index out of range");
    for (int c = 0; c < ops.state_channels; ++c) y.push_back(u[static_cast<std::size_t>(c) * n + idx]);
  }
  return y;
}

ForwardModel ForwardModel::linear(DenseMatrix h) {
  ForwardModel m;
  m.kind_ = Kind::Linear;
  m.h_ = std::move(h);
  return m;
}

ForwardModel ForwardModel::elliptic(GridOperators ops, EnergyKind kind, std::vector<int> obs_nodes) {
  if (kind.state_channels() != ops.state_channels) throw ConfigError("ForwardModel: operator/state channel mismatch");
  ForwardModel m;
  m.kind_ = Kind::Elliptic;
  m.ops_ = std::make_shared<GridOperators>(std::move(ops));
  m.energy_kind_ = kind;
  m.obs_nodes_ = std::move(obs_nodes);
  return m;
}

ForwardModel ForwardModel::surrogate(Network net, GridOperators ops, std::vector<int> obs_nodes, Normalization in_norm) {
  if (net.input_shape().size() != ops.grid.size()) throw ShapeError("ForwardModel: network input/grid mismatch");
  if (net.output_shape().size() != ops.state_channels * ops.grid.size())
    throw ShapeError("ForwardModel: network output/state mismatch");
  ForwardModel m;
  m.kind_ = Kind::Surrogate;
  m.net_ = std::make_shared<Network>(std::move(net));
  m.ops_ = std::make_shared<GridOperators>(std::move(ops));
  m.obs_nodes_ = std::move(obs_nodes);
  m.in_norm_ = in_norm;
  return m;
}

int ForwardModel::input_dim() const {
  return kind_ == Kind::Linear ? h_.cols() : ops_->grid.size();
}

int ForwardModel::output_dim() const {
  return kind_ == Kind::Linear ? h_.rows() : static_cast<int>(obs_nodes_.size()) * ops_->state_channels;
}

const GridOperators& ForwardModel::ops() const {
  if (!ops_) throw StateError("ForwardModel: no grid operators for this variant");
  return *ops_;
}

const Network& ForwardModel::net() const {
  if (!net_) throw StateError("ForwardModel: not a surrogate");
  return *net_;
}

std::vector<double> ForwardModel::apply(std::span<const double> mu, Ctx& ctx) const {
  if (static_cast<int>(mu.size()) != input_dim()) throw ShapeError("ForwardModel::apply: input size mismatch");
  switch (kind_) {
    case Kind::Linear:
      ctx.valid = false;
      return h_.apply(mu);
    case Kind::Elliptic: {
      ctx.mu.assign(mu.begin(), mu.end());
      ctx.u = solve_pde(mu, *ops_, energy_kind_);
      ctx.valid = true;
      return observe(ctx.u, obs_nodes_, *ops_);
    }
    case Kind::Surrogate: {
      ctx.mu.resize(mu.size());
      for (std::size_t i = 0; i < mu.size(); ++i) ctx.mu[i] = (mu[i] - in_norm_.lo) / in_norm_.scale;
      auto out = net_->forward(ctx.mu, {}, ctx.ws);
      ctx.u.assign(out.begin(), out.end());
      ops_->apply_fixed_mask(ctx.u);
      ctx.valid = true;
      return observe(ctx.u, obs_nodes_, *ops_);
    }
  }
  throw StateError("ForwardModel: unknown kind");
}

std::vector<double> ForwardModel::apply(std::span<const double> mu) const {
  Ctx ctx;
  return apply(mu, ctx);
}

std::vector<double> ForwardModel::vjp_cached(Ctx& ctx, std::span<const double> residual) const {
  if (static_cast<int>(residual.size()) != output_dim()) throw ShapeError("ForwardModel::vjp: residual size mismatch");
  switch (kind_) {
    case Kind::Linear:
      return h_.apply_transpose(residual);
    case Kind::Elliptic: {
      if (!ctx.valid) throw StateError("ForwardModel::vjp: no cached forward state");
      const int n = ops_->nodes();
      // scatter the residual onto the state dofs
      std::vector<double> rhs(static_cast<std::size_t>(ops_->state_channels) * n, 0.0);
      for (std::size_t k = 0; k < obs_nodes_.size(); ++k)
        for (int c = 0; c < ops_->state_channels; ++c)
          rhs[static_cast<std::size_t>(c) * n + obs_nodes_[k]] =
              residual[k * static_cast<std::size_t>(ops_->state_channels) + c];
      ops_->apply_fixed_mask(rhs);

      std::vector<double> lambda;
      if (energy_kind_.type == EnergyKind::Type::Dirichlet) {
        // K is symmetric: solve K lambda = P^T r with CG on a shifted load
        // (reuse the Dirichlet solver by temporarily treating rhs as -f)
        GridOperators tmp = *ops_;
        for (std::size_t i = 0; i < rhs.size(); ++i) tmp.f_vec[i] = -rhs[i];
        lambda = solve_pde(ctx.mu, tmp, energy_kind_);
      } else {
        DenseMatrix hess = hyper_hessian(ctx.u, ctx.mu, *ops_, energy_kind_.nu);
        lambda = CholeskyFactor(hess).solve(rhs);
      }

      // g_m = -i_m (G lambda)_m . (d f_a / d v at E = 1)_m
      std::vector<double> gl = ops_->gradient(lambda);
      std::vector<double> gu = ops_->gradient(ctx.u);
      std::vector<double> g(static_cast<std::size_t>(n), 0.0);
      if (energy_kind_.type == EnergyKind::Type::Dirichlet) {
        for (int i = 0; i < n; ++i)
          g[static_cast<std::size_t>(i)] =
              -ops_->i_vec[static_cast<std::size_t>(i)] *
              (gl[static_cast<std::size_t>(i)] * gu[static_cast<std::size_t>(i)] +
               gl[static_cast<std::size_t>(n + i)] * gu[static_cast<std::size_t>(n + i)]);
      } else {
        for (int i = 0; i < n; ++i) {
          double f[4];
          for (int c = 0; c < 4; ++c) f[c] = gu[static_cast<std::size_t>(c) * n + i] + (c == 0 || c == 3 ? 1.0 : 0.0);
          HyperPoint p = hyper_density_unit(f, energy_kind_.nu);
          double acc = 0.0;
          for (int c = 0; c < 4; ++c) acc += gl[static_cast<std::size_t>(c) * n + i] * p.dv[c];
          g[static_cast<std::size_t>(i)] = -ops_->i_vec[static_cast<std::size_t>(i)] * acc;
        }
      }
      return g;
    }
    case Kind::Surrogate: {
      if (!ctx.valid) throw StateError("ForwardModel::vjp: no cached forward state");
      const int n = ops_->nodes();
      std::vector<double> cot(static_cast<std::size_t>(ops_->state_channels) * n, 0.0);
      for (std::size_t k = 0; k < obs_nodes_.size(); ++k)
        for (int c = 0; c < ops_->state_channels; ++c)
          cot[static_cast<std::size_t>(c) * n + obs_nodes_[k]] =
              residual[k * static_cast<std::size_t>(ops_->state_channels) + c];
      ops_->apply_fixed_mask(cot);
      std::vector<double> din = net_->backward_input(cot, ctx.ws);
      for (double& v : din) v /= in_norm_.scale;
      return din;
    }
  }
  throw StateError("ForwardModel: unknown kind");
}

std::vector<double> ForwardModel::vjp(std::span<const double> mu, std::span<const double> residual) const {
  Ctx ctx;
  if (kind_ != Kind::Linear) apply(mu, ctx);
  return vjp_cached(ctx, residual);
}

}  // namespace diffinv
