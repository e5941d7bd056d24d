#pragma once

#include <cstdint>
#include <vector>

#include "diffinv/forward.hpp"

namespace diffinv {

/// Supervised pairs (mu, u_pde) from the true solver.
struct PairedSet {
  std::vector<ParamField> mu;
  std::vector<std::vector<double>> u;
};

struct SurrogateTrainConfig {
  int pre_epochs = 200;   ///< supervised pre-training epochs
  int semi_epochs = 100;  ///< semi-supervised (MSE + energy) epochs
  int batch = 64;
  double lr = 1e-3;
  double ul_weight = 1.0;  ///< weight of the energy term
  std::uint64_t seed = 0;
  int workers = 0;
};

struct SurrogateTrainResult {
  ForwardModel model;
  std::vector<double> pre_loss;   ///< per pre-training epoch
  std::vector<double> semi_loss;  ///< per semi-supervised epoch
};

/// Two-phase training of the physics-informed surrogate: supervised MSE
/// pre-training on the paired set, then semi-supervised training adding the
/// discrete energy of unpaired fields as an unsupervised loss. semi_epochs=0
/// gives the plain supervised baseline.
SurrogateTrainResult surrogate_train(const PairedSet& sl, const std::vector<ParamField>& ul, Network net,
                                     const GridOperators& ops, EnergyKind kind, std::vector<int> obs_nodes,
                                     const SurrogateTrainConfig& cfg);

/// Per-coordinate RMS observation error of a forward model against reference
/// pairs; feeds Observation::sigma_model.
std::vector<double> observation_rmse(const ForwardModel& model, const PairedSet& held_out,
                                     const GridOperators& ops, std::span<const int> obs_nodes);

}  // namespace diffinv
