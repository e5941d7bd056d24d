#pragma once

#include <span>
#include <vector>

#include "diffinv/dense.hpp"
#include "diffinv/field.hpp"
#include "diffinv/forward.hpp"

namespace diffinv {

/// Frechet distance d^2 between the Gaussian moment matches of two sample
/// sets, with the symmetric-congruence matrix square root for the cross term.
double fid(const SampleSet& a, const SampleSet& b);

/// Posterior-sample summaries: minimum-misfit member (MLAPS), member closest
/// to the mean (CTM), member with the most neighbors within d_neighbor (MAP),
/// and empirical mean / std / covariance.
struct PosteriorSummary {
  ParamField mlaps, ctm, map_point, mean, std_dev;
  DenseMatrix covariance;
  double d_neighbor = 0.0;
  int mlaps_index = -1, ctm_index = -1, map_index = -1;
  std::vector<double> misfits;  ///< squared observation misfit per sample
};

/// d_neighbor <= 0 selects the default of half the median pairwise distance.
PosteriorSummary summarize(const SampleSet& samples, const ForwardModel& fwd, const Observation& obs,
                           double d_neighbor = 0.0);

/// Intersection-over-union of the {value > threshold} masks; 1 when both
/// masks are empty.
double block_iou(std::span<const double> a, std::span<const double> b, double threshold);

}  // namespace diffinv
