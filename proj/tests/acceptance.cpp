// Acceptance gate: one line per criterion, nonzero exit when any fails.
//
// Each criterion is verified against an independent reference computation
// (brute-force enumeration, triple-loop estimators, hand truth tables) or a
// committed fixture, never against the implementation's own intermediate
// values.  Runtime budgets are enforced where a criterion carries one.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclevla/controller.hpp"
#include "cyclevla/core.hpp"
#include "cyclevla/eval.hpp"
#include "cyclevla/mbr.hpp"
#include "cyclevla/oracle.hpp"
#include "cyclevla/rng.hpp"
#include "cyclevla/segmenter.hpp"
#include "cyclevla/sim.hpp"

#ifndef TEST_DATA_DIR
#error "TEST_DATA_DIR must point at the tests/ directory"
#endif

using namespace cyclevla;

namespace {

// --------------------------------------------------------------------------
// tiny check framework
// --------------------------------------------------------------------------

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& msg) {
  if (!cond) throw Failure(msg);
}

template <typename T>
std::string str(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  expect(in.good(), "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --------------------------------------------------------------------------
// reference implementations (independent of src/)
// --------------------------------------------------------------------------

double ref_distance(const std::vector<double>& a, const std::vector<double>& b,
                    mbr::DistanceMetric metric) {
  const std::size_t n = a.size();
  switch (metric) {
    case mbr::DistanceMetric::kL1: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
      return s;
    }
    case mbr::DistanceMetric::kL2: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      return std::sqrt(s);
    }
    case mbr::DistanceMetric::kLinf: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s = std::max(s, std::abs(a[i] - b[i]));
      return s;
    }
    case mbr::DistanceMetric::kCosine: {
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
    case mbr::DistanceMetric::kCorrelation: {
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

std::vector<std::vector<double>> ref_matrix(const mbr::HypothesisSet& set,
                                            mbr::DistanceMetric metric) {
  const std::size_t n = set.features.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) {
        d[i][j] = ref_distance(set.features[i].values, set.features[j].values, metric);
      }
    }
  }
  return d;
}

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

int ref_select_density(const std::vector<std::vector<double>>& d, int r) {
  const int n = static_cast<int>(d.size());
  auto sorted_neighbors = [&](int i) {
    std::vector<std::pair<double, int>> nb;
    for (int j = 0; j < n; ++j) {
      if (j != i) nb.emplace_back(d[i][j], j);
    }
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
    for (const int j : pocket) {
      if (j != i) s += d[i][j];
    }
    const double mean = s / static_cast<double>(pocket.size() - 1);
    if (best < 0 || mean < best_mean || (mean == best_mean && i < best)) {
      best_mean = mean;
      best = i;
    }
  }
  return best;
}

mbr::HypothesisSet random_set(rng::Stream& stream, int n, int h) {
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

constexpr mbr::DistanceMetric kAllMetrics[] = {
    mbr::DistanceMetric::kL1, mbr::DistanceMetric::kL2, mbr::DistanceMetric::kLinf,
    mbr::DistanceMetric::kCosine, mbr::DistanceMetric::kCorrelation};

// Independent debounce rule, tracked with indices instead of counters.
std::vector<bool> confirm_reference(const std::vector<bool>& signal) {
  std::vector<bool> confirmed;
  int last_high = -1;
  for (int i = 0; i < static_cast<int>(signal.size()); ++i) {
    if (!signal[i]) {
      confirmed.push_back(false);
      continue;
    }
    const bool second_in_a_row = last_high == i - 1 && last_high >= 0;
    const bool resighted = last_high >= 0 && (i - last_high - 1) >= 2;
    confirmed.push_back(second_in_a_row || resighted);
    last_high = i;
  }
  return confirmed;
}

// Independent statement of the threshold grid search.
double ref_trans_threshold(const core::TrajectoryLog& log, const segmenter::Thresholds& init,
                           int window) {
  struct Candidate {
    double value;
    double score;
    double dist;
  };
  std::vector<Candidate> cands;
  for (int i = 0; i < 50; ++i) {
    const double raw = (init.trans - 0.01) + 0.02 * static_cast<double>(i) / 49.0;
    const double value = std::max(raw, 1e-4);
    segmenter::Thresholds th = init;
    th.trans = value;
    int overlaps = 0;
    int stops = 0;
    for (const segmenter::MovementLabel& l : segmenter::extract_primitives(log, th, window)) {
      if (l.has_translation() && l.grip != 0) ++overlaps;
      if (l.is_stop()) ++stops;
    }
    cands.push_back({value, 1.0 * overlaps + 2.5 * stops, std::abs(value - init.trans)});
  }
  const auto best =
      std::min_element(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score < b.score;
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.value < b.value;
      });
  return best->value;
}

// Replays an episode trace against the queue-discipline and budget
// invariants; returns counters used by the conformance criterion.
struct TraceStats {
  int steps = 0;
  int reverses = 0;
  int hypothesis_batches = 0;
  int restored = 0;
};

TraceStats check_trace(const controller::EpisodeOutcome& out,
                       const controller::EpisodeConfig& cfg) {
  TraceStats stats;
  int queue = 0;
  int vlm_this_visit = 0;
  int prev_t = 0;
  expect(!out.trace.empty(), "empty trace");
  for (std::size_t i = 0; i < out.trace.size(); ++i) {
    const controller::TraceEvent& ev = out.trace[i];
    const std::string at = " at event " + str(i) + " (" + ev.kind + ")";
    expect(ev.t >= prev_t, "time went backwards" + at);
    prev_t = ev.t;
    if (ev.kind == "sample") {
      expect(queue == 0, "single draw on a non-empty queue" + at);
      expect(ev.queue_before == cfg.chunk_size, "sample queue depth" + at);
      queue = cfg.chunk_size;
    } else if (ev.kind == "hypotheses") {
      if (out.mode != "always_mbr") expect(queue == 0, "batch on a non-empty queue" + at);
      queue = 0;
      expect(ev.queue_before == 0, "batch queue depth" + at);
      expect(ev.value == cfg.samples, "batch size" + at);
      expect(i + 1 < out.trace.size() && out.trace[i + 1].kind == "mbr",
             "hypotheses not followed by a selection" + at);
      stats.hypothesis_batches += 1;
    } else if (ev.kind == "mbr") {
      expect(ev.queue_before == 0, "selection queue depth" + at);
      expect(ev.value >= 0 && ev.value < cfg.samples, "selected index out of range" + at);
      queue = cfg.chunk_size;
    } else if (ev.kind == "step") {
      expect(queue >= 1, "step from an empty queue" + at);
      queue -= 1;
      expect(ev.queue_before == queue, "step queue depth" + at);
      stats.steps += 1;
    } else if (ev.kind == "vlm") {
      expect(ev.queue_before == queue, "query queue depth" + at);
      vlm_this_visit += 1;
      expect(vlm_this_visit <= 1, "planner queried twice in one visit" + at);
    } else if (ev.kind == "decision") {
      expect(ev.queue_before == queue, "decision queue depth" + at);
      const bool ends = i + 1 < out.trace.size() && out.trace[i + 1].kind == "terminate";
      if (ev.value == 1 && !ends) queue = 0;
    } else if (ev.kind == "reverse") {
      expect(queue == 0 && ev.queue_before == 0, "reverse with queued actions" + at);
      stats.reverses += 1;
    } else if (ev.kind == "restored") {
      expect(ev.queue_before == 0, "restore queue depth" + at);
      stats.restored += 1;
      vlm_this_visit = 0;
    } else if (ev.kind == "advance") {
      queue = 0;
      expect(ev.queue_before == 0, "advance queue depth" + at);
      vlm_this_visit = 0;
    } else if (ev.kind == "terminate") {
      expect(ev.queue_before == queue, "terminate queue depth" + at);
      expect(i == out.trace.size() - 1, "terminate is not the last event" + at);
    } else {
      throw Failure("unknown trace kind '" + ev.kind + "'" + at);
    }
  }
  expect(out.trace.back().kind == "terminate", "missing terminate event");
  expect(stats.steps + stats.reverses == out.steps_used, "step accounting mismatch");

  std::map<int, int> per_target;
  for (const auto& bt : out.backtracks) {
    expect(bt.to_subtask <= bt.from_subtask, "backtrack went forward");
    per_target[bt.to_subtask] += 1;
    expect(bt.retry_number == per_target[bt.to_subtask], "retry numbering");
  }
  for (const auto& [target, count] : per_target) {
    expect(count <= cfg.max_retries,
           "retry budget exceeded on subtask " + str(target));
  }
  return stats;
}

// --------------------------------------------------------------------------
// shared expensive computation (used by criteria 3 and 4)
// --------------------------------------------------------------------------

const eval::SweepReport& shared_sweep(double* elapsed_out = nullptr) {
  static std::optional<eval::SweepReport> report;
  static double elapsed = 0.0;
  if (!report) {
    eval::SweepSpec spec;
    spec.n_values = {4, 8, 16, 32, 64};
    spec.metrics = {mbr::DistanceMetric::kL2, mbr::DistanceMetric::kCosine,
                    mbr::DistanceMetric::kCorrelation};
    spec.episodes = 200;
    spec.horizon_chunks = 6;
    spec.chunk_size = 8;
    spec.random_trials = 100;
    spec.bootstrap_resamples = 1000;
    spec.seed = 42;
    const auto t0 = std::chrono::steady_clock::now();
    report = eval::run_sweep(spec);
    elapsed = seconds_since(t0);
  }
  if (elapsed_out) *elapsed_out = elapsed;
  return *report;
}

const eval::SweepCell& sweep_cell(const eval::SweepReport& r, int n,
                                  mbr::DistanceMetric metric) {
  for (const auto& cell : r.cells) {
    if (cell.n == n && cell.metric == metric) return cell;
  }
  throw Failure("sweep cell (" + str(n) + ", " + mbr::metric_name(metric) + ") missing");
}

// --------------------------------------------------------------------------
// criteria
// --------------------------------------------------------------------------

// 1. Standard selection vs. brute-force risk minimization; < 5 s.
void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  rng::Stream stream(2025);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(stream.next_below(7));  // 2..8
    const int h = 1 + static_cast<int>(stream.next_below(8));  // 1..8
    const auto metric = kAllMetrics[trial % 5];
    const mbr::HypothesisSet set = random_set(stream, n, h);
    const int expected = ref_select_standard(ref_matrix(set, metric));
    const int got = mbr::select(set, metric, mbr::SelectionMode::kStandard, false).selected_index;
    expect(got == expected, "trial " + str(trial) + " (" + mbr::metric_name(metric) +
                                "): got " + str(got) + ", brute force " + str(expected));
  }
  const double elapsed = seconds_since(t0);
  expect(elapsed < 5.0, "runtime " + str(elapsed) + " s exceeds the 5 s budget");
}

// 2. adaptive_r values and density selection vs. exhaustive enumeration.
void criterion_2() {
  const int expected_r[] = {2, 2, 4, 4, 4};
  const int n_values[] = {4, 8, 16, 32, 64};
  for (int i = 0; i < 5; ++i) {
    const int r = mbr::adaptive_r(n_values[i]);
    expect(r == expected_r[i],
           "adaptive_r(" + str(n_values[i]) + ") = " + str(r) + ", want " + str(expected_r[i]));
  }
  for (int n = 2; n <= 100; ++n) {
    int isqrt = 1;
    while ((isqrt + 1) * (isqrt + 1) <= n) ++isqrt;
    const int want = std::max(2, std::min(4, isqrt));
    expect(mbr::adaptive_r(n) == want, "adaptive_r(" + str(n) + ") formula mismatch");
  }

  rng::Stream stream(4242);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + static_cast<int>(stream.next_below(9));  // 2..10
    const int h = 1 + static_cast<int>(stream.next_below(6));  // 1..6
    const auto metric = kAllMetrics[trial % 5];
    const mbr::HypothesisSet set = random_set(stream, n, h);
    const auto d = ref_matrix(set, metric);
    const int r = mbr::adaptive_r(n);
    const int expected =
        (n - 1 < r) ? ref_select_standard(d) : ref_select_density(d, r);
    const int got = mbr::select(set, metric, mbr::SelectionMode::kDensity, false).selected_index;
    expect(got == expected, "trial " + str(trial) + " (n=" + str(n) + ", " +
                                mbr::metric_name(metric) + "): got " + str(got) +
                                ", enumeration " + str(expected));
  }
}

// 3. Consensus selection lifts success over random draws; plateau shape; < 5 min.
void criterion_3() {
  double elapsed = 0.0;
  const eval::SweepReport& report = shared_sweep(&elapsed);
  expect(elapsed < 300.0, "sweep took " + str(elapsed) + " s, budget is 300 s");

  const auto delta_l2 = [&](int n) {
    return sweep_cell(report, n, mbr::DistanceMetric::kL2).delta;
  };
  const eval::SweepCell& n8 = sweep_cell(report, 8, mbr::DistanceMetric::kL2);
  expect(n8.delta >= 0.05,
         "delta at N=8 is " + str(n8.delta) + ", want >= 0.05");
  expect(n8.delta_ci[0] > 0.0,
         "95% CI lower bound " + str(n8.delta_ci[0]) + " does not exclude 0");
  for (const int n : {4, 8, 16, 32, 64}) {
    expect(delta_l2(n) >= 0.0, "delta at N=" + str(n) + " is negative: " + str(delta_l2(n)));
  }
  const double early = delta_l2(8) - delta_l2(4);
  const double late = delta_l2(32) - delta_l2(16);
  expect(late <= early + 0.02, "no plateau: late gain " + str(late) +
                                   " > early gain " + str(early) + " + 0.02");
}

// 4. L2 features match or beat cosine and correlation at N=8.
void criterion_4() {
  const eval::SweepReport& report = shared_sweep();
  const double l2 = sweep_cell(report, 8, mbr::DistanceMetric::kL2).p_mbr;
  const double cos = sweep_cell(report, 8, mbr::DistanceMetric::kCosine).p_mbr;
  const double corr = sweep_cell(report, 8, mbr::DistanceMetric::kCorrelation).p_mbr;
  expect(l2 >= cos - 0.01, "L2 " + str(l2) + " below cosine " + str(cos) + " - 0.01");
  expect(l2 >= corr - 0.01, "L2 " + str(l2) + " below correlation " + str(corr) + " - 0.01");
}

// 5. Success estimator equals the reference triple loop bitwise.
void criterion_5() {
  rng::Stream stream(515151);
  for (int trial = 0; trial < 100; ++trial) {
    const int episodes = 1 + static_cast<int>(stream.next_below(6));
    const int n = 2 + static_cast<int>(stream.next_below(9));
    eval::OutcomeMatrix m;
    for (int e = 0; e < episodes; ++e) {
      const int points = 1 + static_cast<int>(stream.next_below(8));
      std::vector<std::vector<std::uint8_t>> rows;
      std::vector<int> bounds;
      for (int t = 0; t < points; ++t) {
        bounds.push_back(t * 8);
        std::vector<std::uint8_t> row;
        for (int i = 0; i < n; ++i) row.push_back(stream.next_double() < 0.4 ? 1 : 0);
        rows.push_back(std::move(row));
      }
      m.z.push_back(std::move(rows));
      m.boundaries.push_back(std::move(bounds));
    }

    const eval::SelectorFn selector =
        (trial % 2 == 0)
            ? eval::make_random_selector(static_cast<std::uint64_t>(trial))
            : eval::SelectorFn([](int e, int t, int count) { return (e * 5 + t * 11) % count; });

    double acc = 0.0;
    for (std::size_t e = 0; e < m.z.size(); ++e) {
      double hits = 0.0;
      for (std::size_t t = 0; t < m.z[e].size(); ++t) {
        const int count = static_cast<int>(m.z[e][t].size());
        hits += m.z[e][t][static_cast<std::size_t>(
            selector(static_cast<int>(e), static_cast<int>(t), count))];
      }
      acc += hits / static_cast<double>(m.z[e].size());
    }
    const double expected = acc / static_cast<double>(m.z.size());
    const double got = eval::estimate_psucc(m, selector);
    expect(got == expected, "trial " + str(trial) + ": estimator " + str(got) +
                                " != reference " + str(expected));
  }

  // All-ones tensor scores exactly 1.0.
  eval::OutcomeMatrix ones;
  ones.z = {{{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}, {{1, 1, 1}}};
  ones.boundaries = {{0, 8, 16}, {0}};
  for (int trial = 0; trial < 5; ++trial) {
    expect(eval::estimate_psucc(ones, eval::make_random_selector(
                                          static_cast<std::uint64_t>(trial))) == 1.0,
           "all-ones tensor did not score exactly 1.0");
  }
}

// 6. Byte-identical episodes plus full trace conformance.
void criterion_6() {
  int episodes_with_backtracks = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    sim::Scenario sc = sim::make_pick_place_scenario(seed);
    sc.policy.p_fail = 0.45;
    controller::EpisodeConfig cfg;
    cfg.seed = 1000 + seed;

    const controller::EpisodeOutcome a =
        controller::run_scenario_episode(sc, cfg, oracle::ScriptedPlannerConfig{});
    const controller::EpisodeOutcome b =
        controller::run_scenario_episode(sc, cfg, oracle::ScriptedPlannerConfig{});
    expect(controller::outcome_to_json(a).dump() == controller::outcome_to_json(b).dump(),
           "episode " + str(seed) + " is not byte-reproducible");

    const TraceStats stats = check_trace(a, cfg);
    // In the full mode a consensus batch happens exactly once per completed
    // backtrack restore, and nowhere else.
    expect(stats.hypothesis_batches == stats.restored,
           "episode " + str(seed) + ": " + str(stats.hypothesis_batches) +
               " consensus batches for " + str(stats.restored) + " restores");
    if (!a.backtracks.empty()) episodes_with_backtracks += 1;
  }
  expect(episodes_with_backtracks > 0,
         "no episode in the pool exercised the backtrack path");
}

// 7. Confirm debouncer vs. exhaustive truth table (length <= 6).
void criterion_7() {
  for (int len = 1; len <= 6; ++len) {
    for (int bits = 0; bits < (1 << len); ++bits) {
      std::vector<bool> signal(static_cast<std::size_t>(len));
      for (int i = 0; i < len; ++i) signal[static_cast<std::size_t>(i)] = (bits >> i) & 1;
      const std::vector<bool> expected = confirm_reference(signal);
      controller::ConfirmState state;
      for (int i = 0; i < len; ++i) {
        const bool got = controller::confirm_update(state, signal[static_cast<std::size_t>(i)]);
        expect(got == expected[static_cast<std::size_t>(i)],
               "pattern " + str(bits) + " length " + str(len) + " step " + str(i));
      }
    }
  }
  // Isolated highs (gap exactly 1, never consecutive) never confirm.
  controller::ConfirmState state;
  for (int i = 0; i < 64; ++i) {
    expect(!controller::confirm_update(state, i % 2 == 0), "isolated high confirmed");
  }
}

// 8. Reverse execution restores the gripper to within 1e-6 per component.
void criterion_8() {
  rng::Stream stream(888);
  for (int trial = 0; trial < 1000; ++trial) {
    sim::WorldState w;  // no objects: pure gripper kinematics
    w.gripper.pos = {0.0, 0.0, 0.25};
    w.gripper.gripper_width = 1.0;
    const core::RobotState snapshot = w.gripper;

    const int m = 1 + static_cast<int>(stream.next_below(64));
    std::vector<core::ActionStep> executed;
    std::vector<double> pre_width;
    for (int i = 0; i < m; ++i) {
      core::ActionStep step;
      for (int c = 0; c < 3; ++c) {
        step.dpos[c] = (stream.next_double() - 0.5) * 0.02;
        step.drot[c] = (stream.next_double() - 0.5) * 0.4;
      }
      step.gripper = stream.next_double() < 0.5 ? 0.0 : 1.0;
      pre_width.push_back(w.gripper.gripper_width);
      w = sim::env_step(w, step);
      executed.push_back(step);
    }

    for (int i = m - 1; i >= 0; --i) {
      core::ActionStep rs = core::reverse_step(executed[static_cast<std::size_t>(i)]);
      rs.gripper = pre_width[static_cast<std::size_t>(i)];
      w = sim::env_step(w, rs);
    }

    for (int c = 0; c < 3; ++c) {
      expect(std::abs(w.gripper.pos[c] - snapshot.pos[c]) <= 1e-6,
             "trial " + str(trial) + ": position component " + str(c) + " off by " +
                 str(std::abs(w.gripper.pos[c] - snapshot.pos[c])));
      expect(std::abs(core::circle_diff(w.gripper.rot[c], snapshot.rot[c])) <= 1e-6,
             "trial " + str(trial) + ": rotation component " + str(c) + " off");
    }
    expect(std::abs(w.gripper.gripper_width - snapshot.gripper_width) <= 1e-6,
           "trial " + str(trial) + ": gripper width off");
  }
}

// 9. Correction-mode ordering on failing policies (200 paired episodes).
void criterion_9() {
  const std::vector<sim::Scenario> scenarios = sim::make_scenarios(42, 200);
  controller::EpisodeConfig base;
  const eval::RecoveryReport report =
      eval::run_recovery_comparison(scenarios, base, oracle::ScriptedPlannerConfig{});
  expect(report.rows.size() == 4, "expected four rows");
  std::map<std::string, double> rate;
  for (const auto& row : report.rows) rate[row.mode] = row.success_rate;

  expect(rate.at("full") - rate.at("no_correction") >= 0.05,
         "full " + str(rate.at("full")) + " vs no_correction " +
             str(rate.at("no_correction")) + ": gain below +0.05");
  expect(rate.at("always_mbr") >= rate.at("full"),
         "always_mbr " + str(rate.at("always_mbr")) + " below full " + str(rate.at("full")));
  expect(rate.at("failure_cutoff") <= rate.at("no_correction"),
         "failure_cutoff " + str(rate.at("failure_cutoff")) + " above no_correction " +
             str(rate.at("no_correction")));
}

// 10. Segmentation: exact on clean demos, <= 5 steps mean error under noise,
//     and the threshold grid search matches brute force everywhere.
void criterion_10() {
  std::vector<core::TrajectoryLog> all_logs;

  // Clean demos: recovered boundaries must equal the construction exactly.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const sim::SegmentationDemo demo =
        sim::make_segmentation_demo(seed, sim::DemoNoise{}, /*two_stage_grasp=*/seed % 7 == 3);
    const core::SubtaskPlan plan = segmenter::decompose_log(
        demo.log, demo.subtask_instructions, segmenter::BoundaryOracleFn{});
    expect(plan.subtasks.size() == demo.truth.subtasks.size(),
           "clean demo " + str(seed) + ": subtask count mismatch");
    for (std::size_t k = 0; k < plan.subtasks.size(); ++k) {
      expect(plan.subtasks[k].start == demo.truth.subtasks[k].start &&
                 plan.subtasks[k].end == demo.truth.subtasks[k].end,
             "clean demo " + str(seed) + ": boundary " + str(k) + " is [" +
                 str(plan.subtasks[k].start) + "," + str(plan.subtasks[k].end) + "], truth [" +
                 str(demo.truth.subtasks[k].start) + "," + str(demo.truth.subtasks[k].end) + "]");
    }
    all_logs.push_back(demo.log);
  }

  // Gripper noise: jittered transitions and sub-threshold wobbles.
  double abs_error = 0.0;
  int boundaries = 0;
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    sim::DemoNoise noise;
    noise.max_jump_jitter = 3;
    noise.wobble_count = 2;
    noise.seed = seed * 13 + 1;
    const sim::SegmentationDemo demo = sim::make_segmentation_demo(seed, noise, false);
    const core::SubtaskPlan plan = segmenter::decompose_log(
        demo.log, demo.subtask_instructions, segmenter::BoundaryOracleFn{});
    expect(plan.subtasks.size() == demo.truth.subtasks.size(),
           "noisy demo " + str(seed) + ": subtask count mismatch");
    for (std::size_t k = 1; k < plan.subtasks.size(); ++k) {
      abs_error += std::abs(plan.subtasks[k].start - demo.truth.subtasks[k].start);
      boundaries += 1;
    }
    all_logs.push_back(demo.log);
  }
  const double mean_error = abs_error / static_cast<double>(boundaries);
  expect(mean_error <= 5.0,
         "mean boundary error " + str(mean_error) + " steps exceeds 5");

  // Grid search equals the brute-force minimizer on every log seen above.
  for (std::size_t i = 0; i < all_logs.size(); ++i) {
    const segmenter::Thresholds init;
    const segmenter::Thresholds tuned =
        segmenter::optimize_trans_threshold(all_logs[i], init, 4);
    const double expected = ref_trans_threshold(all_logs[i], init, 4);
    expect(tuned.trans == expected, "log " + str(i) + ": grid search " + str(tuned.trans) +
                                        " != brute force " + str(expected));
  }
}

// 11. Dataset emission: one 8x-weighted terminal record per subtask,
//     progress nondecreasing on the 0.1 grid.
void criterion_11() {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const sim::SegmentationDemo demo =
        sim::make_segmentation_demo(seed, sim::DemoNoise{}, seed % 7 == 3);
    const core::SubtaskPlan plan = segmenter::decompose_log(
        demo.log, demo.subtask_instructions, segmenter::BoundaryOracleFn{});
    const segmenter::LabeledDataset ds = segmenter::emit_dataset(plan, demo.log);
    expect(ds.records.size() == demo.log.executed.size(),
           "demo " + str(seed) + ": record count != log length");

    std::size_t row = 0;
    for (std::size_t k = 0; k < plan.subtasks.size(); ++k) {
      const core::Subtask& sub = plan.subtasks[k];
      int stop_records = 0;
      double prev_progress = -1.0;
      for (int t = sub.start; t <= sub.end; ++t, ++row) {
        const segmenter::DatasetRecord& rec = ds.records[row];
        expect(rec.step == t, "demo " + str(seed) + ": record step mismatch");
        expect(rec.instruction == sub.instruction,
               "demo " + str(seed) + ": record instruction mismatch");
        const double p = rec.target.progress;
        const double grid = std::llround(p * 10.0);
        expect(std::abs(p * 10.0 - grid) <= 1e-9,
               "demo " + str(seed) + ": progress " + str(p) + " off the 0.1 grid");
        expect(p >= prev_progress - 1e-12,
               "demo " + str(seed) + ": progress decreased within subtask " + str(k));
        prev_progress = p;
        if (rec.target.stop == 1.0) {
          stop_records += 1;
          expect(t == sub.end, "demo " + str(seed) + ": stop=1 before the final step");
          expect(rec.weight == 8.0, "demo " + str(seed) + ": terminal record weight " +
                                        str(rec.weight) + ", want 8");
          expect(p == 1.0, "demo " + str(seed) + ": terminal progress " + str(p));
        } else {
          expect(rec.target.stop == 0.0, "demo " + str(seed) + ": non-binary stop");
          expect(rec.weight == 1.0, "demo " + str(seed) + ": non-terminal weight");
        }
      }
      expect(stop_records == 1, "demo " + str(seed) + ": subtask " + str(k) + " has " +
                                    str(stop_records) + " stop records, want exactly 1");
    }
  }
}

// 12. Prompts match golden files; the planner parser round-trips valid
//     decisions and rejects every mutated fixture.
void criterion_12() {
  const std::string base = std::string(TEST_DATA_DIR);
  expect(oracle::kSubtaskProposalTemplate == slurp(base + "/golden/prompt_subtask_proposal.txt"),
         "subtask proposal template drifted from its golden file");
  expect(oracle::kBoundaryTemplate == slurp(base + "/golden/prompt_boundary.txt"),
         "boundary template drifted from its golden file");
  expect(oracle::kPlannerTemplate == slurp(base + "/golden/prompt_planner.txt"),
         "planner template drifted from its golden file");

  const std::vector<std::string> subtasks = {
      "Move the gripper above the target object",
      "Close the gripper to grasp the target object",
      "Move the gripper to the goal position",
      "Open the gripper to release the target object"};
  const int current = 2;

  // Round-trip a spread of valid decisions through format -> parse.
  for (const auto kind : {oracle::DecisionKind::kTransit, oracle::DecisionKind::kBacktrack}) {
    const std::vector<int> targets =
        kind == oracle::DecisionKind::kTransit ? std::vector<int>{2, 3}
                                               : std::vector<int>{0, 1, 2};
    for (const int target : targets) {
      for (const std::string likelihood : {"high", "medium", "low"}) {
        oracle::PlannerDecision d;
        d.kind = kind;
        d.next_subtask = subtasks[static_cast<std::size_t>(target)];
        d.reason = "the wrist view shows the block seated in the gripper\nand the "
                   "front view agrees";
        d.front_evidence = {"block centered over the tray", "gripper closed"};
        d.wrist_evidence = {"fingers in contact with the block"};
        d.assessment.success_likelihood = likelihood;
        d.assessment.key_risks = "slip during transport";
        d.assessment.view_agreement = "agree";
        d.assessment.decision_basis = "object pose relative to the goal";
        const std::string text = oracle::format_planner_decision(d);
        const oracle::PlannerDecision back =
            oracle::parse_planner_response(text, subtasks, current);
        expect(back == d, "round-trip mismatch for kind=" + oracle::kind_to_string(kind) +
                              " target=" + str(target) + " likelihood=" + likelihood);
      }
    }
  }

  // The valid fixture parses; every mutated fixture is rejected.
  const oracle::PlannerDecision valid = oracle::parse_planner_response(
      slurp(base + "/fixtures/planner_valid.txt"), subtasks, current);
  expect(valid.kind == oracle::DecisionKind::kBacktrack &&
             valid.next_subtask == subtasks[1],
         "valid fixture parsed to the wrong decision");

  const std::vector<std::string> mutants = {
      "planner_missing_type.txt",     "planner_missing_next.txt",
      "planner_missing_reason.txt",   "planner_unknown_subtask.txt",
      "planner_transit_backward.txt", "planner_backtrack_forward.txt",
      "planner_duplicate_field.txt",  "planner_bad_likelihood.txt",
      "planner_bad_type.txt"};
  for (const auto& name : mutants) {
    bool threw = false;
    try {
      oracle::parse_planner_response(slurp(base + "/fixtures/" + name), subtasks, current);
    } catch (const oracle::ParseError&) {
      threw = true;
    }
    expect(threw, "mutated fixture " + name + " was accepted");
  }
}

// 13. Runtime shares: sum to 100 +/- 0.1 and match hand-computed fixtures.
void criterion_13() {
  auto outcome = [](double vlm, double roll, double sampling, double mbr_t, double back) {
    controller::EpisodeOutcome o;
    o.component_timings = {{"vlm", vlm},
                           {"action_rollout", roll},
                           {"sampling", sampling},
                           {"mbr", mbr_t},
                           {"backtrack", back}};
    return o;
  };
  // Hand-computed: totals {10, 50, 15, 15, 10} over a grand total of 100.
  const std::vector<controller::EpisodeOutcome> fixture = {
      outcome(10.0, 30.0, 5.0, 5.0, 0.0), outcome(0.0, 20.0, 10.0, 10.0, 10.0)};
  const eval::RuntimeShares shares = eval::report_runtime_shares(fixture);
  const std::map<std::string, double> expected = {{"vlm", 10.0},
                                                  {"action_rollout", 50.0},
                                                  {"sampling", 15.0},
                                                  {"mbr", 15.0},
                                                  {"backtrack", 10.0}};
  double sum = 0.0;
  for (const auto& [key, want] : expected) {
    const double got = shares.percentages.at(key);
    expect(std::abs(got - want) <= 1e-9,
           "share " + key + " = " + str(got) + ", hand-computed " + str(want));
    sum += got;
  }
  expect(std::abs(sum - 100.0) <= 0.1, "fixture shares sum to " + str(sum));

  // And on real episodes.
  std::vector<controller::EpisodeOutcome> outcomes;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    sim::Scenario sc = sim::make_pick_place_scenario(seed);
    controller::EpisodeConfig cfg;
    cfg.seed = seed;
    outcomes.push_back(
        controller::run_scenario_episode(sc, cfg, oracle::ScriptedPlannerConfig{}));
  }
  const eval::RuntimeShares real = eval::report_runtime_shares(outcomes);
  double real_sum = 0.0;
  for (const auto& [key, pct] : real.percentages) {
    (void)key;
    real_sum += pct;
  }
  expect(std::abs(real_sum - 100.0) <= 0.1,
         "episode shares sum to " + str(real_sum));
}

}  // namespace

int main() {
  struct Criterion {
    const char* label;
    void (*fn)();
  };
  const std::vector<Criterion> criteria = {
      {"standard consensus selection matches brute-force risk (1000 sets)", criterion_1},
      {"adaptive r values and density selection match exhaustive enumeration", criterion_2},
      {"consensus selection lifts success over random draws, with plateau", criterion_3},
      {"L2 features match or beat cosine and correlation at N=8", criterion_4},
      {"success estimator equals the reference triple loop bitwise", criterion_5},
      {"episodes are byte-reproducible and traces obey the discipline", criterion_6},
      {"confirm debouncer matches the exhaustive truth table", criterion_7},
      {"reverse execution restores the gripper to within 1e-6", criterion_8},
      {"correction modes order as designed on failing policies", criterion_9},
      {"segmentation exact on clean demos, within 5 steps under noise", criterion_10},
      {"datasets carry one 8x terminal record per subtask, gridded progress", criterion_11},
      {"prompts match golden files; parser round-trips and rejects mutants", criterion_12},
      {"runtime shares sum to 100% and match hand-computed fixtures", criterion_13},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string verdict = "PASS";
    std::string detail;
    try {
      criteria[i].fn();
    } catch (const std::exception& e) {
      verdict = "FAIL";
      detail = e.what();
      failed += 1;
    }
    std::printf("[%2zu] %-68s %s%s%s\n", i + 1, criteria[i].label, verdict.c_str(),
                detail.empty() ? "" : "  -- ", detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed),
              criteria.size());
  return failed == 0 ? 0 : 1;
}
