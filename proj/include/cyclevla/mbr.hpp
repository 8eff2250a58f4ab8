#pragma once

/**
 * Consensus selection over sampled action chunks.
 *
 * A hypothesis set holds N chunks sampled from the same start state.  Each
 * chunk is summarized by a 6H feature vector (per step: cumulative position
 * xyz then cumulative orientation rpy, step-major).  Selection picks the
 * hypothesis with minimum mean distance to the whole set ("standard"), or
 * the medoid of the densest neighborhood pocket ("density").
 *
 * Determinism notes: risks are row means accumulated in index order, and
 * every tie anywhere breaks toward the lowest index.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "cyclevla/core.hpp"

namespace cyclevla::mbr {

/// Flattened trajectory summary, size 6 * chunk length.
struct TrajectoryFeature {
  std::vector<double> values;
};

/// N chunks from a shared start state, with cached features.
struct HypothesisSet {
  core::RobotState start_state;
  std::vector<core::ActionChunk> chunks;
  std::vector<TrajectoryFeature> features;
};

enum class DistanceMetric { kL1, kL2, kLinf, kCosine, kCorrelation };

enum class SelectionMode { kStandard, kDensity };

struct MbrResult {
  int selected_index = 0;
  std::vector<double> risks;                       // mean distance to the set, self included
  std::vector<std::vector<double>> distance_matrix;  // N x N, symmetric, zero diagonal
  SelectionMode mode = SelectionMode::kStandard;
};

DistanceMetric metric_from_name(const std::string& name);  // l1 l2 linf cos corr
std::string metric_name(DistanceMetric m);
SelectionMode mode_from_name(const std::string& name);  // standard density
std::string mode_name(SelectionMode m);

/// Cumulative pose features for one chunk from `start`:
/// [pos_1, rot_1, pos_2, rot_2, ...], 6 * chunk length values.
TrajectoryFeature extract_features(const core::RobotState& start, const core::ActionChunk& chunk);

/// Build a HypothesisSet and populate features.  All chunks must share the
/// length `chunk_size`; throws std::invalid_argument otherwise.
HypothesisSet make_hypothesis_set(const core::RobotState& start,
                                  std::vector<core::ActionChunk> chunks,
                                  std::size_t chunk_size);

/// Distance between two equal-length feature vectors.
///
/// Cosine and correlation are dissimilarities (1 - similarity, range
/// [0, 2]).  Degenerate vectors (zero norm for cosine, zero variance for
/// correlation): both degenerate -> 0, exactly one degenerate -> 1.
double feature_distance(const TrajectoryFeature& a, const TrajectoryFeature& b,
                        DistanceMetric metric);

/// Full N x N matrix.  With normalize = true, features are z-scored per
/// dimension across the set first (zero-variance dimensions drop to 0);
/// default off: components keep their native scales.
std::vector<std::vector<double>> pairwise_distances(const HypothesisSet& set,
                                                    DistanceMetric metric,
                                                    bool normalize = false);

/// argmin_i (1/N) sum_j d(i, j); ties to the lowest index.
/// Throws std::invalid_argument on an empty set.
MbrResult select_standard(const HypothesisSet& set, DistanceMetric metric,
                          bool normalize = false);

/// Neighborhood size for the density variant: max(2, min(4, floor(sqrt(n)))).
/// Throws std::invalid_argument for n < 2.
int adaptive_r(int n);

/// Density variant: the hypothesis with the smallest r-NN radius anchors a
/// pocket of itself plus its r nearest neighbors; the pocket member with
/// the smallest mean distance to the other members is selected.  With
/// n == 2 the radius is undefined and selection falls back to
/// select_standard.
MbrResult select_density(const HypothesisSet& set, DistanceMetric metric,
                         bool normalize = false);

/// Dispatch on mode.
MbrResult select(const HypothesisSet& set, DistanceMetric metric, SelectionMode mode,
                 bool normalize = false);

}  // namespace cyclevla::mbr
