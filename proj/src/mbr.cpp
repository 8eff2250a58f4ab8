#include "cyclevla/mbr.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cyclevla::mbr {

DistanceMetric metric_from_name(const std::string& name) {
  if (name == "l1") return DistanceMetric::kL1;
  if (name == "l2") return DistanceMetric::kL2;
  if (name == "linf") return DistanceMetric::kLinf;
  if (name == "cos") return DistanceMetric::kCosine;
  if (name == "corr") return DistanceMetric::kCorrelation;
  throw std::invalid_argument("unknown metric: " + name);
}

std::string metric_name(DistanceMetric m) {
  switch (m) {
    case DistanceMetric::kL1: return "l1";
    case DistanceMetric::kL2: return "l2";
    case DistanceMetric::kLinf: return "linf";
    case DistanceMetric::kCosine: return "cos";
    case DistanceMetric::kCorrelation: return "corr";
  }
  return "l2";
}

SelectionMode mode_from_name(const std::string& name) {
  if (name == "standard") return SelectionMode::kStandard;
  if (name == "density") return SelectionMode::kDensity;
  throw std::invalid_argument("unknown selection mode: " + name);
}

std::string mode_name(SelectionMode m) {
  return m == SelectionMode::kStandard ? "standard" : "density";
}

TrajectoryFeature extract_features(const core::RobotState& start,
                                   const core::ActionChunk& chunk) {
  TrajectoryFeature f;
  f.values.reserve(chunk.steps.size() * 6);
  for (const core::RobotState& s : core::integrate_chunk(start, chunk)) {
    f.values.push_back(s.pos[0]);
    f.values.push_back(s.pos[1]);
    f.values.push_back(s.pos[2]);
    f.values.push_back(s.rot[0]);
    f.values.push_back(s.rot[1]);
    f.values.push_back(s.rot[2]);
  }
  return f;
}

HypothesisSet make_hypothesis_set(const core::RobotState& start,
                                  std::vector<core::ActionChunk> chunks,
                                  std::size_t chunk_size) {
  for (const auto& c : chunks) {
    if (c.steps.size() != chunk_size) {
      throw std::invalid_argument("hypothesis chunk length " + std::to_string(c.steps.size()) +
                                  " does not match chunk size " + std::to_string(chunk_size));
    }
  }
  HypothesisSet set;
  set.start_state = start;
  set.chunks = std::move(chunks);
  set.features.reserve(set.chunks.size());
  for (const auto& c : set.chunks) set.features.push_back(extract_features(start, c));
  return set;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  const bool da = (na == 0.0);
  const bool db = (nb == 0.0);
  if (da && db) return 0.0;
  if (da || db) return 1.0;
  return 1.0 - dot(a, b) / (na * nb);
}

double correlation_distance(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xa = a[i] - ma;
    const double xb = b[i] - mb;
    saa += xa * xa;
    sbb += xb * xb;
    sab += xa * xb;
  }
  const bool da = (saa == 0.0);
  const bool db = (sbb == 0.0);
  if (da && db) return 0.0;
  if (da || db) return 1.0;
  return 1.0 - sab / std::sqrt(saa * sbb);
}

}  // namespace

double feature_distance(const TrajectoryFeature& a, const TrajectoryFeature& b,
                        DistanceMetric metric) {
  if (a.values.size() != b.values.size()) {
    throw std::invalid_argument("feature length mismatch");
  }
  if (a.values.empty()) throw std::invalid_argument("empty feature vector");
  switch (metric) {
    case DistanceMetric::kL1: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.values.size(); ++i) {
        s += std::abs(a.values[i] - b.values[i]);
      }
      return s;
    }
    case DistanceMetric::kL2: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        s += d * d;
      }
      return std::sqrt(s);
    }
    case DistanceMetric::kLinf: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.values.size(); ++i) {
        s = std::max(s, std::abs(a.values[i] - b.values[i]));
      }
      return s;
    }
    case DistanceMetric::kCosine:
      return cosine_distance(a.values, b.values);
    case DistanceMetric::kCorrelation:
      return correlation_distance(a.values, b.values);
  }
  throw std::invalid_argument("unknown metric");
}

namespace {

std::vector<TrajectoryFeature> zscore(const std::vector<TrajectoryFeature>& feats) {
  const std::size_t n = feats.size();
  const std::size_t d = feats[0].values.size();
  std::vector<TrajectoryFeature> out(n);
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (const auto& f : feats) {
    for (std::size_t i = 0; i < d; ++i) mean[i] += f.values[i];
  }
  for (std::size_t i = 0; i < d; ++i) mean[i] /= static_cast<double>(n);
  for (const auto& f : feats) {
    for (std::size_t i = 0; i < d; ++i) {
      const double x = f.values[i] - mean[i];
      var[i] += x * x;
    }
  }
  for (std::size_t i = 0; i < d; ++i) var[i] = std::sqrt(var[i] / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    out[k].values.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      out[k].values[i] = (var[i] > 0.0) ? (feats[k].values[i] - mean[i]) / var[i] : 0.0;
    }
  }
  return out;
}

std::vector<double> row_mean(const std::vector<std::vector<double>>& m) {
  const std::size_t n = m.size();
  std::vector<double> risks(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += m[i][j];  // fixed index order
    risks[i] = s / static_cast<double>(n);
  }
  return risks;
}

int argmin_lowest(const std::vector<double>& v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace

std::vector<std::vector<double>> pairwise_distances(const HypothesisSet& set,
                                                    DistanceMetric metric, bool normalize) {
  if (set.features.size() != set.chunks.size()) {
    throw std::invalid_argument("hypothesis set: features not populated");
  }
  const std::size_t n = set.features.size();
  if (n == 0) throw std::invalid_argument("hypothesis set: empty");
  const std::vector<TrajectoryFeature>* feats = &set.features;
  std::vector<TrajectoryFeature> scratch;
  if (normalize) {
    scratch = zscore(set.features);
    feats = &scratch;
  }
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = feature_distance((*feats)[i], (*feats)[j], metric);
      m[i][j] = d;
      m[j][i] = d;
    }
  }
  return m;
}

MbrResult select_standard(const HypothesisSet& set, DistanceMetric metric, bool normalize) {
  MbrResult r;
  r.mode = SelectionMode::kStandard;
  r.distance_matrix = pairwise_distances(set, metric, normalize);
  r.risks = row_mean(r.distance_matrix);
  r.selected_index = argmin_lowest(r.risks);
  return r;
}

int adaptive_r(int n) {
  if (n < 2) throw std::invalid_argument("adaptive_r: need at least 2 hypotheses");
  int k = static_cast<int>(std::sqrt(static_cast<double>(n)));
  while ((k + 1) * (k + 1) <= n) ++k;  // guard against sqrt rounding down
  while (k * k > n) --k;
  return std::max(2, std::min(4, k));
}

MbrResult select_density(const HypothesisSet& set, DistanceMetric metric, bool normalize) {
  const int n = static_cast<int>(set.chunks.size());
  if (n < 2) throw std::invalid_argument("select_density: need at least 2 hypotheses");
  const int r = adaptive_r(n);
  if (n - 1 < r) {
    // Too few neighbors for an r-NN radius; degrade to the standard rule.
    MbrResult fallback = select_standard(set, metric, normalize);
    fallback.mode = SelectionMode::kDensity;
    return fallback;
  }

  MbrResult res;
  res.mode = SelectionMode::kDensity;
  res.distance_matrix = pairwise_distances(set, metric, normalize);
  res.risks = row_mean(res.distance_matrix);

  // Neighbor ordering is by (distance, index) so ties are deterministic.
  auto neighbors_sorted = [&](int i) {
    std::vector<std::pair<double, int>> nb;
    nb.reserve(n - 1);
    for (int j = 0; j < n; ++j) {
      if (j != i) nb.emplace_back(res.distance_matrix[i][j], j);
    }
    std::sort(nb.begin(), nb.end());
    return nb;
  };

  int center = 0;
  double best_radius = 0.0;
  for (int i = 0; i < n; ++i) {
    const double radius = neighbors_sorted(i)[r - 1].first;
    if (i == 0 || radius < best_radius) {
      best_radius = radius;
      center = i;
    }
  }

  std::vector<int> pocket{center};
  const auto nb = neighbors_sorted(center);
  for (int j = 0; j < r; ++j) pocket.push_back(nb[j].second);

  int selected = pocket[0];
  double best_mean = 0.0;
  bool first = true;
  for (const int i : pocket) {
    double s = 0.0;
    for (const int j : pocket) {
      if (j != i) s += res.distance_matrix[i][j];
    }
    const double mean = s / static_cast<double>(pocket.size() - 1);
    // Pocket is ordered center-then-by-(distance,index); for equal means we
    // still want the lowest hypothesis index, so compare on (mean, index).
    if (first || mean < best_mean || (mean == best_mean && i < selected)) {
      best_mean = mean;
      selected = i;
      first = false;
    }
  }
  res.selected_index = selected;
  return res;
}

MbrResult select(const HypothesisSet& set, DistanceMetric metric, SelectionMode mode,
                 bool normalize) {
  return mode == SelectionMode::kStandard ? select_standard(set, metric, normalize)
                                          : select_density(set, metric, normalize);
}

}  // namespace cyclevla::mbr
