#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "diffinv/dense.hpp"
#include "diffinv/field.hpp"
#include "diffinv/network.hpp"
#include "diffinv/sde.hpp"

namespace diffinv {

/// Affine map between the model's sampling space and physical units:
/// physical = lo + scale * normalized.
struct Normalization {
  double lo = 0.0;
  double scale = 1.0;
};

/// Score model s(mu, t) ~ grad_mu ln p_t(mu): analytic Gaussian / Gaussian
/// mixture oracles, or a DSM-trained network. Learned models operate in
/// their own normalized sampling space; analytic models have the identity
/// normalization.
class ScoreModel {
 public:
  enum class Variant { AnalyticGaussian, AnalyticGmm, Learned };

  ScoreModel() = default;  ///< empty model; only assignment is valid

  static ScoreModel analytic_gaussian(std::vector<double> mean, DenseMatrix cov);
  /// Isotropic mixture components N(mean_i, var_i * I) with positive weights
  /// summing to one.
  static ScoreModel analytic_gmm(std::vector<double> weights, std::vector<std::vector<double>> means,
                                 std::vector<double> variances);
  static ScoreModel learned(Network net, SdeSpec trained_spec, Normalization norm, double t_floor = 1e-3);

  Variant variant() const { return variant_; }
  int dimension() const { return dim_; }
  const Normalization& normalization() const { return norm_; }
  /// Learned models evaluate at max(t, t_floor); exact equality below the
  /// floor is guaranteed.
  double t_floor() const { return t_floor_; }
  const Network& net() const;
  const SdeSpec& trained_spec() const;

  /// Score of the noised density at time t, in the model's sampling space.
  std::vector<double> eval(std::span<const double> mu, double t, const SdeSpec& spec, Workspace& ws) const;
  std::vector<double> eval(std::span<const double> mu, double t, const SdeSpec& spec) const;

 private:
  Variant variant_ = Variant::AnalyticGaussian;
  int dim_ = 0;
  Normalization norm_;
  double t_floor_ = 0.0;
  // AnalyticGaussian
  std::vector<double> mean_;
  std::vector<double> eig_values_;
  DenseMatrix eig_vectors_;
  // AnalyticGmm
  std::vector<double> gmm_weights_;
  std::vector<std::vector<double>> gmm_means_;
  std::vector<double> gmm_vars_;
  // Learned
  std::shared_ptr<const Network> net_;
  SdeSpec trained_spec_;
};

std::vector<double> eval_score(const ScoreModel& model, std::span<const double> mu, double t, const SdeSpec& spec);

struct DsmConfig {
  int epochs = 40;
  int batch = 64;
  double lr = 2e-4;
  double t_floor = 1e-3;  ///< training-time floor for t ~ U(t_floor, T)
  std::uint64_t seed = 0;
  int workers = 0;  ///< OpenMP threads, 0 = runtime default
};

struct DsmResult {
  ScoreModel model;
  std::vector<double> epoch_loss;  ///< losses of the epochs run in this call
  AdamState adam;
  long steps_done = 0;
};

/// Optimizer state carried across training runs for deterministic resumes.
struct DsmWarmStart {
  AdamState adam;
  long start_step = 0;
};

/// Denoising score matching: fits the network to -z/sigma_0t across noise
/// levels with the sigma^2 temporal weighting, on [0,1]-normalized data.
/// cfg.epochs is the total epoch count; a warm start skips the epochs
/// already covered and continues with the saved optimizer state, giving
/// bit-identical results to an uninterrupted run.
DsmResult dsm_train(const SampleSet& data, const SdeSpec& spec, Network net, const DsmConfig& cfg,
                    const DsmWarmStart* warm = nullptr);

}  // namespace diffinv
