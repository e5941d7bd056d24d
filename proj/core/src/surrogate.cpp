#include "diffinv/surrogate.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "diffinv/error.hpp"
#include "diffinv/rng.hpp"

namespace diffinv {

namespace {

struct BatchLoss {
  double value = 0.0;
};

}  // namespace

SurrogateTrainResult surrogate_train(const PairedSet& sl, const std::vector<ParamField>& ul, Network net,
                                     const GridOperators& ops, EnergyKind kind, std::vector<int> obs_nodes,
                                     const SurrogateTrainConfig& cfg) {
  if (sl.mu.empty()) throw ConfigError("surrogate_train: supervised set is empty");
  if (sl.mu.size() != sl.u.size()) throw ShapeError("surrogate_train: paired set sizes differ");
  if (cfg.pre_epochs < 0 || cfg.semi_epochs < 0) throw ConfigError("surrogate_train: negative epoch count");
  if (cfg.semi_epochs > 0 && ul.empty()) throw ConfigError("surrogate_train: semi-supervised phase needs unpaired data");
  const int n = ops.nodes();
  const int state_size = ops.state_channels * n;
  if (net.input_shape().size() != n) throw ShapeError("surrogate_train: network input/grid mismatch");
  if (net.output_shape().size() != state_size) throw ShapeError("surrogate_train: network output/state mismatch");
  for (const auto& f : sl.mu)
    if (static_cast<int>(f.size()) != n) throw ShapeError("surrogate_train: field size mismatch");
  for (const auto& u : sl.u)
    if (static_cast<int>(u.size()) != state_size) throw ShapeError("surrogate_train: state size mismatch");
  for (const auto& f : ul)
    if (static_cast<int>(f.size()) != n) throw ShapeError("surrogate_train: unpaired field size mismatch");

  // input normalization from everything the network will see
  double lo = sl.mu[0][0], hi = lo;
  for (const auto& f : sl.mu)
    for (double v : f) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  for (const auto& f : ul)
    for (double v : f) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const Normalization in_norm{lo, hi > lo ? hi - lo : 1.0};

  std::vector<std::vector<double>> sl_in(sl.mu.size());
  for (std::size_t i = 0; i < sl.mu.size(); ++i) {
    sl_in[i].resize(sl.mu[i].size());
    for (std::size_t j = 0; j < sl_in[i].size(); ++j) sl_in[i][j] = (sl.mu[i][j] - in_norm.lo) / in_norm.scale;
  }
  std::vector<std::vector<double>> ul_in(ul.size());
  for (std::size_t i = 0; i < ul.size(); ++i) {
    ul_in[i].resize(ul[i].size());
    for (std::size_t j = 0; j < ul_in[i].size(); ++j) ul_in[i][j] = (ul[i][j] - in_norm.lo) / in_norm.scale;
  }

  AdamState adam(net);
  const int nthreads = cfg.workers > 0 ? cfg.workers : omp_get_max_threads();
  std::vector<GradBuffers> tgrads(static_cast<std::size_t>(nthreads));
  std::vector<Workspace> tws(static_cast<std::size_t>(nthreads));
  for (auto& g : tgrads) g = net.make_grads();

  SurrogateTrainResult result;
  const int n_sl = static_cast<int>(sl.mu.size());
  const int steps_per_epoch = (n_sl + cfg.batch - 1) / cfg.batch;

  // supervised item: MSE against the PDE solution, fixed edge masked
  auto supervised_item = [&](int idx, int th, double weight) {
    auto out = net.forward(sl_in[static_cast<std::size_t>(idx)], {}, tws[static_cast<std::size_t>(th)]);
    std::vector<double> masked(out.begin(), out.end());
    ops.apply_fixed_mask(masked);
    const auto& target = sl.u[static_cast<std::size_t>(idx)];
    std::vector<double> cot(masked.size());
    double l = 0.0;
    for (std::size_t i = 0; i < masked.size(); ++i) {
      const double r = masked[i] - target[i];
      l += r * r;
      cot[i] = 2.0 * weight * r;
    }
    ops.apply_fixed_mask(cot);
    net.backward(cot, tws[static_cast<std::size_t>(th)], tgrads[static_cast<std::size_t>(th)]);
    return l;
  };

  // unsupervised item: discrete energy of the predicted state
  auto energy_item = [&](int idx, int th, double weight) {
    auto out = net.forward(ul_in[static_cast<std::size_t>(idx)], {}, tws[static_cast<std::size_t>(th)]);
    std::vector<double> u(out.begin(), out.end());
    ops.apply_fixed_mask(u);
    const auto& mu = ul[static_cast<std::size_t>(idx)];
    const double e = energy(u, mu, ops, kind);
    std::vector<double> cot = energy_grad_u(u, mu, ops, kind);
    for (double& v : cot) v *= weight;
    net.backward(cot, tws[static_cast<std::size_t>(th)], tgrads[static_cast<std::size_t>(th)]);
    return e;
  };

  long step = 0;
  for (int epoch = 0; epoch < cfg.pre_epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s, ++step) {
      double loss = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : loss) num_threads(nthreads)
      for (int b = 0; b < cfg.batch; ++b) {
        RngStream rng(cfg.seed, static_cast<std::uint64_t>(step) * cfg.batch + b);
        const int idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_sl)));
        loss += supervised_item(idx, omp_get_thread_num(), 1.0 / cfg.batch) / cfg.batch;
      }
      if (!std::isfinite(loss)) throw NumericError("surrogate_train: non-finite loss in pre-training epoch " + std::to_string(epoch));
      for (auto& g : tgrads) {
        net.grads().add(g);
        g.zero();
      }
      adam_step(net, adam, cfg.lr);
      epoch_loss += loss;
    }
    result.pre_loss.push_back(epoch_loss / steps_per_epoch);
  }

  const int n_ul = static_cast<int>(ul.size());
  for (int epoch = 0; epoch < cfg.semi_epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s, ++step) {
      double loss = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : loss) num_threads(nthreads)
      for (int b = 0; b < 2 * cfg.batch; ++b) {
        RngStream rng(cfg.seed, static_cast<std::uint64_t>(step) * 2 * cfg.batch + b);
        const int th = omp_get_thread_num();
        if (b < cfg.batch) {
          const int idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_sl)));
          loss += supervised_item(idx, th, 1.0 / cfg.batch) / cfg.batch;
        } else {
          const int idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_ul)));
          loss += energy_item(idx, th, cfg.ul_weight / cfg.batch) * cfg.ul_weight / cfg.batch;
        }
      }
      if (!std::isfinite(loss)) throw NumericError("surrogate_train: non-finite loss in semi-supervised epoch " + std::to_string(epoch));
      for (auto& g : tgrads) {
        net.grads().add(g);
        g.zero();
      }
      adam_step(net, adam, cfg.lr);
      epoch_loss += loss;
    }
    result.semi_loss.push_back(epoch_loss / steps_per_epoch);
  }

  result.model = ForwardModel::surrogate(std::move(net), ops, std::move(obs_nodes), in_norm);
  return result;
}

std::vector<double> observation_rmse(const ForwardModel& model, const PairedSet& held_out,
                                     const GridOperators& ops, std::span<const int> obs_nodes) {
  if (held_out.mu.empty()) throw ConfigError("observation_rmse: empty reference set");
  std::vector<double> acc(obs_nodes.size() * static_cast<std::size_t>(ops.state_channels), 0.0);
  for (std::size_t i = 0; i < held_out.mu.size(); ++i) {
    std::vector<double> pred = model.apply(held_out.mu[i]);
    std::vector<double> ref = observe(held_out.u[i], obs_nodes, ops);
    for (std::size_t k = 0; k < acc.size(); ++k) {
      const double d = pred[k] - ref[k];
      acc[k] += d * d;
    }
  }
  for (double& v : acc) v = std::sqrt(v / static_cast<double>(held_out.mu.size()));
  return acc;
}

}  // namespace diffinv
