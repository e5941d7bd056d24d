#include "diffinv/metrics.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "diffinv/error.hpp"

namespace diffinv {

namespace {

struct Moments {
  std::vector<double> mean;
  DenseMatrix cov;
};

Moments sample_moments(const SampleSet& s) {
  const int n = s.size();
  const int d = s.grid.size();
  Moments m;
  m.mean.assign(static_cast<std::size_t>(d), 0.0);
  for (const auto& f : s.fields)
    for (int i = 0; i < d; ++i) m.mean[static_cast<std::size_t>(i)] += f[static_cast<std::size_t>(i)];
  for (double& v : m.mean) v /= n;
  m.cov = DenseMatrix(d, d);
  std::vector<double> c(static_cast<std::size_t>(d));
  for (const auto& f : s.fields) {
    for (int i = 0; i < d; ++i) c[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i)] - m.mean[static_cast<std::size_t>(i)];
    for (int i = 0; i < d; ++i) {
      const double ci = c[static_cast<std::size_t>(i)];
      if (ci == 0.0) continue;
      double* row = &m.cov(i, 0);
#pragma omp simd
      for (int j = 0; j < d; ++j) row[j] += ci * c[static_cast<std::size_t>(j)];
    }
  }
  const double inv = 1.0 / (n - 1);
  for (double& v : m.cov.data()) v *= inv;
  return m;
}

}  // namespace

double fid(const SampleSet& a, const SampleSet& b) {
  if (!(a.grid == b.grid)) throw ShapeError("fid: sample sets on different grids");
  if (a.size() < 2 || b.size() < 2) throw ConfigError("fid: need at least two samples per set");
  const int d = a.grid.size();
  Moments ma = sample_moments(a);
  Moments mb = sample_moments(b);
  // shrinkage keeps rank-deficient empirical covariances inside the PSD cone
  for (int i = 0; i < d; ++i) {
    ma.cov(i, i) += 1e-8;
    mb.cov(i, i) += 1e-8;
  }
  double mean_term = 0.0;
  for (int i = 0; i < d; ++i) {
    const double dm = ma.mean[static_cast<std::size_t>(i)] - mb.mean[static_cast<std::size_t>(i)];
    mean_term += dm * dm;
  }
  // Tr(C_A + C_B - 2 (C_A^(1/2) C_B C_A^(1/2))^(1/2))
  DenseMatrix ra = matrix_sqrt_psd(ma.cov);
  DenseMatrix m = matmul(matmul(ra, mb.cov), ra);
  // symmetrize roundoff before the second square root
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double v = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = v;
      m(j, i) = v;
    }
  DenseMatrix cross = matrix_sqrt_psd(m);
  return mean_term + ma.cov.trace() + mb.cov.trace() - 2.0 * cross.trace();
}

PosteriorSummary summarize(const SampleSet& samples, const ForwardModel& fwd, const Observation& obs,
                           double d_neighbor) {
  const int n = samples.size();
  if (n < 1) throw ConfigError("summarize: empty sample set");
  const int d = samples.grid.size();

  PosteriorSummary out;
  // empirical mean / covariance / std
  out.mean.assign(static_cast<std::size_t>(d), 0.0);
  for (const auto& f : samples.fields)
    for (int i = 0; i < d; ++i) out.mean[static_cast<std::size_t>(i)] += f[static_cast<std::size_t>(i)];
  for (double& v : out.mean) v /= n;
  out.covariance = DenseMatrix(d, d);
  if (n > 1) {
    std::vector<double> c(static_cast<std::size_t>(d));
    for (const auto& f : samples.fields) {
      for (int i = 0; i < d; ++i) c[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i)] - out.mean[static_cast<std::size_t>(i)];
      for (int i = 0; i < d; ++i) {
        const double ci = c[static_cast<std::size_t>(i)];
        if (ci == 0.0) continue;
        double* row = &out.covariance(i, 0);
#pragma omp simd
        for (int j = 0; j < d; ++j) row[j] += ci * c[static_cast<std::size_t>(j)];
      }
    }
    const double inv = 1.0 / (n - 1);
    for (double& v : out.covariance.data()) v *= inv;
  }
  out.std_dev.assign(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < d; ++i) out.std_dev[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, out.covariance(i, i)));

  // per-sample squared observation misfit
  out.misfits.assign(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < n; ++k) {
    std::vector<double> pred = fwd.apply(samples.fields[static_cast<std::size_t>(k)]);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double r = obs.y[i] - pred[i];
      acc += r * r;
    }
    out.misfits[static_cast<std::size_t>(k)] = acc;
  }
  out.mlaps_index = 0;
  for (int k = 1; k < n; ++k)
    if (out.misfits[static_cast<std::size_t>(k)] < out.misfits[static_cast<std::size_t>(out.mlaps_index)]) out.mlaps_index = k;

  // CTM: closest to the mean
  out.ctm_index = 0;
  double best = -1.0;
  for (int k = 0; k < n; ++k) {
    double acc = 0.0;
    const auto& f = samples.fields[static_cast<std::size_t>(k)];
    for (int i = 0; i < d; ++i) {
      const double r = f[static_cast<std::size_t>(i)] - out.mean[static_cast<std::size_t>(i)];
      acc += r * r;
    }
    if (best < 0.0 || acc < best) {
      best = acc;
      out.ctm_index = k;
    }
  }

  // MAP: most neighbors within d_neighbor (ties to the lowest index)
  std::vector<double> dist2(static_cast<std::size_t>(n) * n, 0.0);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      double acc = 0.0;
      const auto& fa = samples.fields[static_cast<std::size_t>(a)];
      const auto& fb = samples.fields[static_cast<std::size_t>(b)];
      for (int i = 0; i < d; ++i) {
        const double r = fa[static_cast<std::size_t>(i)] - fb[static_cast<std::size_t>(i)];
        acc += r * r;
      }
      dist2[static_cast<std::size_t>(a) * n + b] = acc;
      dist2[static_cast<std::size_t>(b) * n + a] = acc;
    }
  if (d_neighbor <= 0.0) {
    std::vector<double> pairs;
    pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) pairs.push_back(dist2[static_cast<std::size_t>(a) * n + b]);
    if (pairs.empty()) {
      d_neighbor = 1.0;
    } else {
      std::nth_element(pairs.begin(), pairs.begin() + pairs.size() / 2, pairs.end());
      d_neighbor = 0.5 * std::sqrt(pairs[pairs.size() / 2]);
    }
  }
  out.d_neighbor = d_neighbor;
  out.map_index = 0;
  int best_count = -1;
  for (int a = 0; a < n; ++a) {
    int count = 0;
    for (int b = 0; b < n; ++b)
      if (dist2[static_cast<std::size_t>(a) * n + b] < d_neighbor * d_neighbor) ++count;
    if (count > best_count) {
      best_count = count;
      out.map_index = a;
    }
  }

  out.mlaps = samples.fields[static_cast<std::size_t>(out.mlaps_index)];
  out.ctm = samples.fields[static_cast<std::size_t>(out.ctm_index)];
  out.map_point = samples.fields[static_cast<std::size_t>(out.map_index)];
  return out;
}

double block_iou(std::span<const double> a, std::span<const double> b, double threshold) {
  if (a.size() != b.size()) throw ShapeError("block_iou: field sizes differ");
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool ma = a[i] > threshold;
    const bool mb = b[i] > threshold;
    inter += (ma && mb) ? 1 : 0;
    uni += (ma || mb) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace diffinv
