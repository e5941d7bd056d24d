#pragma once

#include <memory>
#include <span>
#include <vector>

#include "diffinv/dense.hpp"
#include "diffinv/grid_ops.hpp"
#include "diffinv/network.hpp"
#include "diffinv/score.hpp"

namespace diffinv {

/// Discrete energy family: quadratic Dirichlet energy with conductivity mu,
/// or the compressible neo-Hookean hyper-elastic energy with Young's modulus
/// mu and fixed Poisson ratio nu.
struct EnergyKind {
  enum class Type { Dirichlet, Hyperelastic };
  Type type = Type::Dirichlet;
  double nu = 0.3;

  static EnergyKind dirichlet() { return EnergyKind{Type::Dirichlet, 0.0}; }
  static EnergyKind hyperelastic(double nu = 0.3) { return EnergyKind{Type::Hyperelastic, nu}; }
  int state_channels() const { return type == Type::Dirichlet ? 1 : 2; }
};

/// Noisy partial observation of the state at boundary nodes.
struct Observation {
  std::vector<double> y;
  std::vector<int> node_indices;     ///< observed nodes, fixed order
  double sigma_eps = 0.1;            ///< observation noise std
  std::vector<double> sigma_model;   ///< optional per-coordinate surrogate error std

  void validate(GridShape grid) const;
};

/// Discrete action: i^T f_a(G u, mu) + f^T u.
double energy(std::span<const double> u, std::span<const double> mu, const GridOperators& ops, EnergyKind kind);

/// Gradient of the energy w.r.t. the state, fixed-edge rows zeroed; this is
/// the optimality system the solver drives to zero.
std::vector<double> energy_grad_u(std::span<const double> u, std::span<const double> mu, const GridOperators& ops,
                                  EnergyKind kind);

/// State minimizing the energy under the fixed-edge constraint. Dirichlet:
/// preconditioned CG to relative residual 1e-10. Hyperelastic: Newton with
/// backtracking line search, gradient norm <= 1e-8.
std::vector<double> solve_pde(std::span<const double> mu, const GridOperators& ops, EnergyKind kind);

/// Extract the state at observed nodes (all state channels, node-major).
std::vector<double> observe(std::span<const double> u, std::span<const int> node_indices, const GridOperators& ops);

/// Forward map H(A(mu)) with a vector-Jacobian product: a linear-operator
/// oracle, the true elliptic solver with adjoint gradients, or the neural
/// surrogate.
class ForwardModel {
 public:
  enum class Kind { Linear, Elliptic, Surrogate };

  ForwardModel() = default;  ///< empty model; only assignment is valid

  static ForwardModel linear(DenseMatrix h);
  static ForwardModel elliptic(GridOperators ops, EnergyKind kind, std::vector<int> obs_nodes);
  static ForwardModel surrogate(Network net, GridOperators ops, std::vector<int> obs_nodes, Normalization in_norm);

  Kind kind() const { return kind_; }
  int input_dim() const;
  int output_dim() const;
  const GridOperators& ops() const;
  const std::vector<int>& obs_nodes() const { return obs_nodes_; }
  const Normalization& input_normalization() const { return in_norm_; }
  const Network& net() const;

  std::vector<double> apply(std::span<const double> mu) const;
  std::vector<double> vjp(std::span<const double> mu, std::span<const double> residual) const;

  /// Context-reusing variants for hot loops: apply() caches the state /
  /// activations in ctx, vjp_cached() reuses them for the same mu.
  struct Ctx {
    std::vector<double> mu, u;
    Workspace ws;
    bool valid = false;
  };
  std::vector<double> apply(std::span<const double> mu, Ctx& ctx) const;
  std::vector<double> vjp_cached(Ctx& ctx, std::span<const double> residual) const;

 private:
  Kind kind_ = Kind::Linear;
  DenseMatrix h_;
  std::shared_ptr<const GridOperators> ops_;
  EnergyKind energy_kind_;
  std::vector<int> obs_nodes_;
  std::shared_ptr<const Network> net_;
  Normalization in_norm_;
};

}  // namespace diffinv
