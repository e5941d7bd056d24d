#include "diffinv/score.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "diffinv/error.hpp"

namespace diffinv {

ScoreModel ScoreModel::analytic_gaussian(std::vector<double> mean, DenseMatrix cov) {
  if (cov.rows() != cov.cols() || cov.rows() != static_cast<int>(mean.size()))
    throw ShapeError("ScoreModel: mean/covariance dimensions differ");
  ScoreModel m;
  m.variant_ = Variant::AnalyticGaussian;
  m.dim_ = static_cast<int>(mean.size());
  m.mean_ = std::move(mean);
  SymEig eig = sym_eig(cov);
  for (double v : eig.values)
    if (v < -1e-10 * std::max(1.0, eig.values.front()))
      throw DomainError("ScoreModel: covariance not PSD");
  m.eig_values_ = std::move(eig.values);
  m.eig_vectors_ = std::move(eig.vectors);
  return m;
}

ScoreModel ScoreModel::analytic_gmm(std::vector<double> weights, std::vector<std::vector<double>> means,
                                    std::vector<double> variances) {
  if (weights.empty() || weights.size() != means.size() || weights.size() != variances.size())
    throw ShapeError("ScoreModel: mixture component counts differ");
  double wsum = 0.0;
  for (double w : weights) {
    if (w <= 0.0) throw ConfigError("ScoreModel: mixture weights must be positive");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw ConfigError("ScoreModel: mixture weights must sum to 1");
  for (double v : variances)
    if (v <= 0.0) throw ConfigError("ScoreModel: mixture variances must be positive");
  ScoreModel m;
  m.variant_ = Variant::AnalyticGmm;
  m.dim_ = static_cast<int>(means.front().size());
  for (const auto& mu : means)
    if (static_cast<int>(mu.size()) != m.dim_) throw ShapeError("ScoreModel: mixture mean dimensions differ");
  m.gmm_weights_ = std::move(weights);
  m.gmm_means_ = std::move(means);
  m.gmm_vars_ = std::move(variances);
  return m;
}

ScoreModel ScoreModel::learned(Network net, SdeSpec trained_spec, Normalization norm, double t_floor) {
  trained_spec.validate();
  ScoreModel m;
  m.variant_ = Variant::Learned;
  m.dim_ = net.input_shape().size();
  m.norm_ = norm;
  m.t_floor_ = t_floor;
  m.net_ = std::make_shared<Network>(std::move(net));
  m.trained_spec_ = std::move(trained_spec);
  return m;
}

const Network& ScoreModel::net() const {
  if (!net_) throw StateError("ScoreModel: not a learned model");
  return *net_;
}

const SdeSpec& ScoreModel::trained_spec() const {
  if (variant_ != Variant::Learned) throw StateError("ScoreModel: not a learned model");
  return trained_spec_;
}

std::vector<double> ScoreModel::eval(std::span<const double> mu, double t, const SdeSpec& spec, Workspace& ws) const {
  if (static_cast<int>(mu.size()) != dim_) throw ShapeError("eval_score: field dimension mismatch");
  if (t < 0.0 || t > spec.terminal_time * (1.0 + 1e-12)) throw DomainError("eval_score: t outside [0, T]");
  const KernelParams kp = kernel_params(spec, t);
  const double m = kp.mean_scale;
  const double s2 = kp.std * kp.std;

  switch (variant_) {
    case Variant::AnalyticGaussian: {
      // -(m^2 C0 + s^2 I)^{-1} (mu - m m0) via the cached eigendecomposition
      std::vector<double> d(mu.size());
      for (std::size_t i = 0; i < mu.size(); ++i) d[i] = mu[i] - m * mean_[i];
      std::vector<double> y = eig_vectors_.apply_transpose(d);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] /= (m * m * eig_values_[i] + s2);
      std::vector<double> out = eig_vectors_.apply(y);
      for (double& v : out) v = -v;
      return out;
    }
    case Variant::AnalyticGmm: {
      const std::size_t k = gmm_weights_.size();
      std::vector<double> logp(k);
      double logp_max = -1e300;
      for (std::size_t c = 0; c < k; ++c) {
        const double var = m * m * gmm_vars_[c] + s2;
        double q = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
          const double d = mu[i] - m * gmm_means_[c][i];
          q += d * d;
        }
        logp[c] = std::log(gmm_weights_[c]) - 0.5 * q / var - 0.5 * dim_ * std::log(var);
        logp_max = std::max(logp_max, logp[c]);
      }
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) total += std::exp(logp[c] - logp_max);
      std::vector<double> out(mu.size(), 0.0);
      for (std::size_t c = 0; c < k; ++c) {
        const double gamma = std::exp(logp[c] - logp_max) / total;
        const double var = m * m * gmm_vars_[c] + s2;
        for (std::size_t i = 0; i < mu.size(); ++i) out[i] -= gamma * (mu[i] - m * gmm_means_[c][i]) / var;
      }
      return out;
    }
    case Variant::Learned: {
      if (spec.kind != trained_spec_.kind)
        throw ConfigError("eval_score: model trained for a different SDE family");
      const double tc = std::max(t, t_floor_);
      const KernelParams kpc = kernel_params(trained_spec_, tc);
      // the network sees the state standardized by the noise magnitude
      const double in_scale = 1.0 / std::sqrt(1.0 + kpc.std * kpc.std);
      std::vector<double> x(mu.size());
      for (std::size_t i = 0; i < mu.size(); ++i) x[i] = in_scale * mu[i];
      auto raw = net_->forward(x, tc, ws);
      std::vector<double> out(raw.begin(), raw.end());
      const double inv_sigma = 1.0 / kpc.std;
      for (double& v : out) v *= inv_sigma;
      return out;
    }
  }
  throw StateError("eval_score: unknown variant");
}

std::vector<double> ScoreModel::eval(std::span<const double> mu, double t, const SdeSpec& spec) const {
  Workspace ws;
  return eval(mu, t, spec, ws);
}

std::vector<double> eval_score(const ScoreModel& model, std::span<const double> mu, double t, const SdeSpec& spec) {
  return model.eval(mu, t, spec);
}

DsmResult dsm_train(const SampleSet& data, const SdeSpec& spec, Network net, const DsmConfig& cfg,
                    const DsmWarmStart* warm) {
  spec.validate();
  if (data.fields.empty()) throw ConfigError("dsm_train: empty data set");
  if (cfg.epochs < 1) throw ConfigError("dsm_train: epochs must be >= 1");
  if (cfg.batch < 1) throw ConfigError("dsm_train: batch must be >= 1");
  const int dim = net.input_shape().size();
  for (const auto& f : data.fields)
    if (static_cast<int>(f.size()) != dim) throw ShapeError("dsm_train: field/network shape mismatch");

  // normalize the data to [0, 1]
  double lo = data.fields[0][0], hi = lo;
  for (const auto& f : data.fields)
    for (double v : f) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  Normalization norm{lo, hi > lo ? hi - lo : 1.0};
  std::vector<std::vector<double>> fields(data.fields.size());
  for (std::size_t i = 0; i < data.fields.size(); ++i) {
    fields[i].resize(data.fields[i].size());
    for (std::size_t j = 0; j < fields[i].size(); ++j) fields[i][j] = (data.fields[i][j] - norm.lo) / norm.scale;
  }

  const int n = static_cast<int>(fields.size());
  const int steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const double T = spec.terminal_time;

  AdamState adam = warm ? warm->adam : AdamState(net);
  const int nthreads = cfg.workers > 0 ? cfg.workers : omp_get_max_threads();
  std::vector<GradBuffers> tgrads(static_cast<std::size_t>(nthreads));
  std::vector<Workspace> tws(static_cast<std::size_t>(nthreads));
  for (auto& g : tgrads) g = net.make_grads();

  DsmResult result;
  result.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));

  long step = warm ? warm->start_step : 0;
  const int start_epoch = static_cast<int>(step / steps_per_epoch);
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s, ++step) {
      double loss = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : loss) num_threads(nthreads)
      for (int b = 0; b < cfg.batch; ++b) {
        const int th = omp_get_thread_num();
        RngStream rng(cfg.seed, static_cast<std::uint64_t>(step) * cfg.batch + b);
        const auto& mu0 = fields[rng.uniform_int(static_cast<std::uint64_t>(n))];
        const double t = cfg.t_floor + (T - cfg.t_floor) * rng.uniform();
        Perturbation p = perturb(spec, mu0, t, rng);
        const double in_scale = 1.0 / std::sqrt(1.0 + p.sigma * p.sigma);
        for (double& v : p.mu_t) v *= in_scale;
        auto out = net.forward(p.mu_t, t, tws[static_cast<std::size_t>(th)]);
        // noise-prediction residual: net ~ -z, so the sigma^2-weighted DSM
        // loss becomes ||net + z||^2
        std::vector<double> cot(out.size());
        double l = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
          const double r = out[i] + p.z[i];
          l += r * r;
          cot[i] = 2.0 * r / cfg.batch;
        }
        loss += l / cfg.batch;
        net.backward(cot, tws[static_cast<std::size_t>(th)], tgrads[static_cast<std::size_t>(th)]);
      }
      if (!std::isfinite(loss))
        throw NumericError("dsm_train: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(s));
      for (auto& g : tgrads) {
        net.grads().add(g);
        g.zero();
      }
      adam_step(net, adam, cfg.lr);
      epoch_loss += loss;
    }
    result.epoch_loss.push_back(epoch_loss / steps_per_epoch);
  }

  result.adam = std::move(adam);
  result.steps_done = step;
  result.model = ScoreModel::learned(std::move(net), spec, norm, cfg.t_floor);
  return result;
}

}  // namespace diffinv
