#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cyclevla/mbr.hpp"
#include "cyclevla/rng.hpp"

using namespace cyclevla;
using mbr::DistanceMetric;
using mbr::HypothesisSet;
using mbr::SelectionMode;
using mbr::TrajectoryFeature;

// ==========================================================================
// independent reference implementations
// ==========================================================================

namespace {

double ref_distance(const std::vector<double>& a, const std::vector<double>& b,
                    DistanceMetric metric) {
  const std::size_t n = a.size();
  switch (metric) {
    case DistanceMetric::kL1: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
      return s;
    }
    case DistanceMetric::kL2: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      return std::sqrt(s);
    }
    case DistanceMetric::kLinf: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s = std::max(s, std::abs(a[i] - b[i]));
      return s;
    }
    case DistanceMetric::kCosine: {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      const bool da = na == 0.0, db = nb == 0.0;
      if (da && db) return 0.0;
      if (da || db) return 1.0;
      return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
    }
    case DistanceMetric::kCorrelation: {
      double ma = 0.0, mb = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
      }
      ma /= static_cast<double>(n);
      mb /= static_cast<double>(n);
      double dot = 0.0, va = 0.0, vb = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        dot += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
      }
      const bool da = va == 0.0, db = vb == 0.0;
      if (da && db) return 0.0;
      if (da || db) return 1.0;
      return 1.0 - dot / (std::sqrt(va) * std::sqrt(vb));
    }
  }
  return 0.0;
}

std::vector<std::vector<double>> ref_matrix(const HypothesisSet& set, DistanceMetric metric) {
  const std::size_t n = set.features.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) d[i][j] = ref_distance(set.features[i].values, set.features[j].values, metric);
  return d;
}

/// Brute-force standard rule: mean distance to the whole set, self term
/// included, lowest index on ties.
int ref_select_standard(const std::vector<std::vector<double>>& d) {
  const std::size_t n = d.size();
  int best = 0;
  double best_risk = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double risk = 0.0;
    for (std::size_t j = 0; j < n; ++j) risk += d[i][j];
    risk /= static_cast<double>(n);
    if (i == 0 || risk < best_risk) {
      best_risk = risk;
      best = static_cast<int>(i);
    }
  }
  return best;
}

/// Exhaustive density rule: r-NN radii, densest center, pocket medoid.
int ref_select_density(const std::vector<std::vector<double>>& d, int r) {
  const int n = static_cast<int>(d.size());
  auto sorted_neighbors = [&](int i) {
    std::vector<std::pair<double, int>> nb;
    for (int j = 0; j < n; ++j)
      if (j != i) nb.emplace_back(d[i][j], j);
    std::sort(nb.begin(), nb.end());
    return nb;
  };

  int center = -1;
  double best_radius = 0.0;
  for (int i = 0; i < n; ++i) {
    const double radius = sorted_neighbors(i)[static_cast<std::size_t>(r - 1)].first;
    if (center < 0 || radius < best_radius) {
      best_radius = radius;
      center = i;
    }
  }

  std::vector<int> pocket{center};
  const auto nb = sorted_neighbors(center);
  for (int j = 0; j < r; ++j) pocket.push_back(nb[static_cast<std::size_t>(j)].second);

  int best = -1;
  double best_mean = 0.0;
  for (const int i : pocket) {
    double s = 0.0;
    for (const int j : pocket)
      if (j != i) s += d[i][j];
    const double mean = s / static_cast<double>(pocket.size() - 1);
    if (best < 0 || mean < best_mean || (mean == best_mean && i < best)) {
      best_mean = mean;
      best = i;
    }
  }
  return best;
}

HypothesisSet random_set(rng::Stream& stream, int n, int h) {
  std::vector<core::ActionChunk> chunks;
  for (int i = 0; i < n; ++i) {
    core::ActionChunk chunk;
    chunk.origin_seed = stream.next_u64();
    for (int t = 0; t < h; ++t) {
      core::ActionStep step;
      for (int c = 0; c < 3; ++c) {
        step.dpos[c] = (stream.next_double() - 0.5) * 0.1;
        step.drot[c] = (stream.next_double() - 0.5) * 0.05;
      }
      step.gripper = stream.next_double() < 0.5 ? 0.0 : 1.0;
      chunk.steps.push_back(step);
    }
    chunks.push_back(std::move(chunk));
  }
  core::RobotState start;
  for (int c = 0; c < 3; ++c) start.pos[c] = (stream.next_double() - 0.5) * 0.4;
  return mbr::make_hypothesis_set(start, std::move(chunks), static_cast<std::size_t>(h));
}

}  // namespace

// ==========================================================================
// features
// ==========================================================================

TEST_CASE("extract_features is the cumulative pose, step-major") {
  core::RobotState start;
  start.pos = {0.01, 0.0, 0.0};
  core::ActionChunk chunk;
  core::ActionStep a;
  a.dpos = {0.1, 0.0, 0.0};
  a.drot = {0.0, 0.0, 0.1};
  core::ActionStep b;
  b.dpos = {0.0, 0.2, 0.0};
  b.drot = {0.05, 0.0, 0.1};
  chunk.steps = {a, b};

  const TrajectoryFeature f = mbr::extract_features(start, chunk);
  REQUIRE(f.values.size() == 12);
  const std::vector<double> expected{0.11, 0.0, 0.0, 0.0,  0.0, 0.1,
                                     0.11, 0.2, 0.0, 0.05, 0.0, 0.2};
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(f.values[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("make_hypothesis_set enforces uniform chunk length") {
  rng::Stream stream(3);
  auto set = random_set(stream, 4, 5);
  CHECK(set.features.size() == 4);
  CHECK(set.features[0].values.size() == 30);

  std::vector<core::ActionChunk> ragged = set.chunks;
  ragged[2].steps.pop_back();
  CHECK_THROWS_AS(mbr::make_hypothesis_set(set.start_state, ragged, 5), std::invalid_argument);
}

// ==========================================================================
// distances
// ==========================================================================

TEST_CASE("feature_distance matches hand-computed values") {
  TrajectoryFeature a{{1.0, 2.0, 3.0, 4.0}};
  TrajectoryFeature b{{2.0, 2.0, 1.0, 8.0}};
  // diffs: -1, 0, 2, -4
  CHECK(mbr::feature_distance(a, b, DistanceMetric::kL1) == doctest::Approx(7.0));
  CHECK(mbr::feature_distance(a, b, DistanceMetric::kL2) == doctest::Approx(std::sqrt(21.0)));
  CHECK(mbr::feature_distance(a, b, DistanceMetric::kLinf) == doctest::Approx(4.0));
  // cosine: dot = 2 + 4 + 3 + 32 = 41; |a| = sqrt(30), |b| = sqrt(73)
  CHECK(mbr::feature_distance(a, b, DistanceMetric::kCosine) ==
        doctest::Approx(1.0 - 41.0 / (std::sqrt(30.0) * std::sqrt(73.0))));
  // correlation via the reference implementation (computed independently)
  CHECK(mbr::feature_distance(a, b, DistanceMetric::kCorrelation) ==
        doctest::Approx(ref_distance(a.values, b.values, DistanceMetric::kCorrelation)));
}

TEST_CASE("degenerate vectors follow the both-0 / one-1 rule") {
  TrajectoryFeature zero{{0.0, 0.0, 0.0}};
  TrajectoryFeature flat{{2.0, 2.0, 2.0}};  // zero variance, nonzero norm
  TrajectoryFeature live{{1.0, 2.0, 3.0}};

  CHECK(mbr::feature_distance(zero, zero, DistanceMetric::kCosine) == 0.0);
  CHECK(mbr::feature_distance(zero, live, DistanceMetric::kCosine) == 1.0);
  CHECK(mbr::feature_distance(flat, flat, DistanceMetric::kCorrelation) == 0.0);
  CHECK(mbr::feature_distance(flat, live, DistanceMetric::kCorrelation) == 1.0);
  CHECK(mbr::feature_distance(zero, flat, DistanceMetric::kCorrelation) == 0.0);
}

TEST_CASE("pairwise matrix is symmetric with a zero diagonal") {
  rng::Stream stream(17);
  const auto set = random_set(stream, 6, 4);
  for (const auto metric : {DistanceMetric::kL1, DistanceMetric::kL2, DistanceMetric::kLinf,
                            DistanceMetric::kCosine, DistanceMetric::kCorrelation}) {
    const auto d = mbr::pairwise_distances(set, metric);
    const auto ref = ref_matrix(set, metric);
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(d[i][i] == 0.0);
      for (std::size_t j = 0; j < d.size(); ++j) {
        CHECK(d[i][j] == doctest::Approx(d[j][i]).epsilon(1e-12));
        CHECK(d[i][j] == doctest::Approx(ref[i][j]).epsilon(1e-9));
      }
    }
  }
}

// ==========================================================================
// standard selection
// ==========================================================================

TEST_CASE("select_standard agrees with the brute-force oracle") {
  rng::Stream stream(2024);
  const DistanceMetric metrics[] = {DistanceMetric::kL1, DistanceMetric::kL2,
                                    DistanceMetric::kLinf, DistanceMetric::kCosine,
                                    DistanceMetric::kCorrelation};
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(stream.next_below(7));
    const int h = 1 + static_cast<int>(stream.next_below(8));
    const auto set = random_set(stream, n, h);
    const auto metric = metrics[stream.next_below(5)];
    const auto res = mbr::select_standard(set, metric);
    CHECK(res.selected_index == ref_select_standard(ref_matrix(set, metric)));
    // risk vector matches the row means of the reported matrix
    for (int i = 0; i < n; ++i) {
      double row = 0.0;
      for (int j = 0; j < n; ++j) row += res.distance_matrix[i][j];
      CHECK(res.risks[i] == doctest::Approx(row / n).epsilon(1e-12));
    }
  }
}

TEST_CASE("standard ties break to the lowest index") {
  // two identical pairs: indices 0/1 and 2/3 are duplicates, all
  // cross-pair distances equal, so risks tie across all four
  core::ActionStep right;
  right.dpos = {0.1, 0.0, 0.0};
  core::ActionStep left;
  left.dpos = {-0.1, 0.0, 0.0};
  core::ActionChunk cr, cl;
  cr.steps = {right};
  cl.steps = {left};
  const auto set = mbr::make_hypothesis_set(core::RobotState{}, {cr, cr, cl, cl}, 1);
  const auto res = mbr::select_standard(set, DistanceMetric::kL2);
  CHECK(res.selected_index == 0);
  CHECK(res.risks[0] == doctest::Approx(res.risks[2]));
}

TEST_CASE("select rejects an empty set") {
  HypothesisSet set;
  CHECK_THROWS_AS(mbr::select_standard(set, DistanceMetric::kL2), std::invalid_argument);
}

// ==========================================================================
// density selection
// ==========================================================================

TEST_CASE("adaptive_r follows max(2, min(4, floor(sqrt(n))))") {
  CHECK(mbr::adaptive_r(4) == 2);
  CHECK(mbr::adaptive_r(8) == 2);
  CHECK(mbr::adaptive_r(16) == 4);
  CHECK(mbr::adaptive_r(32) == 4);
  CHECK(mbr::adaptive_r(64) == 4);
  CHECK(mbr::adaptive_r(2) == 2);
  CHECK(mbr::adaptive_r(9) == 3);
  CHECK(mbr::adaptive_r(15) == 3);
  CHECK(mbr::adaptive_r(100) == 4);
  CHECK_THROWS_AS(mbr::adaptive_r(1), std::invalid_argument);
}

TEST_CASE("select_density agrees with exhaustive enumeration") {
  rng::Stream stream(515);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 3 + static_cast<int>(stream.next_below(14));  // 3..16
    const int h = 1 + static_cast<int>(stream.next_below(6));
    const auto set = random_set(stream, n, h);
    const auto metric =
        stream.next_double() < 0.5 ? DistanceMetric::kL2 : DistanceMetric::kL1;
    const auto res = mbr::select_density(set, metric);
    const int r = mbr::adaptive_r(n);
    if (n - 1 < r) {
      CHECK(res.selected_index == ref_select_standard(ref_matrix(set, metric)));
    } else {
      CHECK(res.selected_index == ref_select_density(ref_matrix(set, metric), r));
    }
  }
}

TEST_CASE("two hypotheses fall back to the standard rule") {
  rng::Stream stream(88);
  const auto set = random_set(stream, 2, 4);
  const auto res = mbr::select_density(set, DistanceMetric::kL2);
  CHECK(res.mode == SelectionMode::kDensity);
  CHECK(res.selected_index == mbr::select_standard(set, DistanceMetric::kL2).selected_index);
}

TEST_CASE("density picks the cluster over a lone global-mean minimizer") {
  // Five points on a line: a tight cluster at {0, 0.01, 0.02} and two far
  // outliers at 1.0 and 2.0.  Standard risk can be dragged by outliers; the
  // density pocket must stay inside the cluster.
  auto chunk_at = [](double x) {
    core::ActionChunk c;
    core::ActionStep s;
    s.dpos = {x, 0.0, 0.0};
    c.steps = {s};
    return c;
  };
  const auto set = mbr::make_hypothesis_set(
      core::RobotState{},
      {chunk_at(0.0), chunk_at(0.01), chunk_at(0.02), chunk_at(1.0), chunk_at(2.0)}, 1);
  const auto res = mbr::select_density(set, DistanceMetric::kL2);
  CHECK(res.selected_index == 1);  // cluster midpoint
}

// ==========================================================================
// normalization and naming
// ==========================================================================

TEST_CASE("z-scoring rescales the distance geometry") {
  // dimension 0 carries huge variance that drowns dimension 1 unless
  // normalization levels them
  auto chunk2 = [](double x, double y) {
    core::ActionChunk c;
    core::ActionStep s;
    s.dpos = {x, y, 0.0};
    c.steps = {s};
    return c;
  };
  const auto set = mbr::make_hypothesis_set(
      core::RobotState{},
      {chunk2(0.0, 0.0), chunk2(100.0, 1.0), chunk2(105.0, 1.1), chunk2(110.0, 1.2)}, 1);
  const auto raw = mbr::select_standard(set, DistanceMetric::kL2, false);
  const auto scaled = mbr::select_standard(set, DistanceMetric::kL2, true);
  CHECK(raw.selected_index == 2);  // raw scale: the middle of the large arm
  CHECK(scaled.selected_index == 2);
  // normalized distances live on a different scale
  CHECK(raw.distance_matrix[0][1] != doctest::Approx(scaled.distance_matrix[0][1]));
}

TEST_CASE("names round-trip") {
  for (const auto metric : {DistanceMetric::kL1, DistanceMetric::kL2, DistanceMetric::kLinf,
                            DistanceMetric::kCosine, DistanceMetric::kCorrelation}) {
    CHECK(mbr::metric_from_name(mbr::metric_name(metric)) == metric);
  }
  CHECK(mbr::mode_from_name("standard") == SelectionMode::kStandard);
  CHECK(mbr::mode_from_name("density") == SelectionMode::kDensity);
  CHECK_THROWS_AS(mbr::metric_from_name("manhattan"), std::invalid_argument);
  CHECK_THROWS_AS(mbr::mode_from_name("mean"), std::invalid_argument);
}

TEST_CASE("select dispatches on mode") {
  rng::Stream stream(4242);
  const auto set = random_set(stream, 8, 4);
  CHECK(mbr::select(set, DistanceMetric::kL2, SelectionMode::kStandard).selected_index ==
        mbr::select_standard(set, DistanceMetric::kL2).selected_index);
  CHECK(mbr::select(set, DistanceMetric::kL2, SelectionMode::kDensity).selected_index ==
        mbr::select_density(set, DistanceMetric::kL2).selected_index);
}
