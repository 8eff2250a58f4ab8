#pragma once

/**
 * Evaluation harness: the per-chunk success estimator, paired MBR-vs-random
 * sweeps over hypothesis counts and distance metrics, recovery-mode
 * comparisons, and runtime-share accounting.
 *
 * The pipeline is record -> label -> select -> estimate.  For each episode
 * the recorder runs N independent stochastic rollouts of the same scenario,
 * slices them at a fixed chunk grid, and labels every slice against its own
 * rollout's world (did the chunk advance the active subtask?).  Both
 * selectors then consume the identical tensor, so any probability delta is
 * attributable to selection alone.
 *
 * Everything is counter-seeded: re-running a sweep, adding trials, or adding
 * cells never perturbs previously computed numbers.
 */

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cyclevla/controller.hpp"
#include "cyclevla/json_io.hpp"
#include "cyclevla/mbr.hpp"
#include "cyclevla/oracle.hpp"
#include "cyclevla/sim.hpp"

namespace cyclevla::eval {

// ==========================================================================
// outcome tensor
// ==========================================================================

/// Per-chunk success labels for E recorded episodes: z[e][t][n] says whether
/// hypothesis n at decision point t of episode e advanced its subtask.
struct OutcomeMatrix {
  std::vector<std::vector<std::vector<std::uint8_t>>> z;
  std::vector<std::vector<int>> boundaries;  // per episode: {0, H, 2H, ...}
};

/// Throws std::invalid_argument unless: at least one episode, every episode
/// has at least one decision point, the hypothesis count is uniform, and
/// each boundary list matches its episode and forms a 0-based arithmetic
/// grid with positive spacing.
void validate_matrix(const OutcomeMatrix& m);

/// Chooses a hypothesis index in [0, n) for decision point (e, t).
using SelectorFn = std::function<int(int episode, int decision, int n)>;

/// Counter-keyed uniform choice: hash(e, t, trial) -> [0, n).  Draws are a
/// pure function of the key, so adding trials or cells never shifts
/// existing ones.
SelectorFn make_random_selector(std::uint64_t trial);

/// Success probability of the selector's choices: the exact double mean
/// over decision points within each episode, then over episodes.  No
/// weighting by episode length beyond the inner mean.
double estimate_psucc(const OutcomeMatrix& m, const SelectorFn& selector);

/// The inner means estimate_psucc averages, one per episode (exposed for
/// pairing and bootstrap work).
std::vector<double> per_episode_means(const OutcomeMatrix& m, const SelectorFn& selector);

// ==========================================================================
// rollout recording
// ==========================================================================

struct RecorderConfig {
  int hypotheses = 8;      // N parallel rollouts per episode
  int horizon_chunks = 6;  // decision points per episode
  int chunk_size = 8;      // H
};

/// One episode's recorded hypotheses.  chunks[t][n] is rollout n's chunk at
/// decision point t; features[t][n] is its descriptor taken from a shared
/// canonical origin state (the rollouts have diverged by t > 0, so
/// descriptors are comparable only as pure motion summaries).
struct RecordedEpisode {
  std::vector<std::vector<core::ActionChunk>> chunks;
  std::vector<std::vector<mbr::TrajectoryFeature>> features;
  std::vector<std::vector<std::uint8_t>> labels;
  std::vector<int> boundaries;
};

/// Run N independent stochastic rollouts of the scenario with no correction
/// machinery: each rollout keeps its own world, advances its subtask
/// pointer whenever the geometric predicate fires (clamped to the last
/// subtask), and samples a fresh chunk at every grid point with seed
/// mix(scenario.seed, t, n).  Labels come from sim::label_hypothesis at the
/// slice start.
RecordedEpisode record_episode(const sim::Scenario& scenario, const RecorderConfig& cfg);

/// Stack per-episode recordings into the tensor estimate_psucc consumes.
OutcomeMatrix build_outcome_matrix(const std::vector<RecordedEpisode>& episodes);

/// Consensus selector over the recorded descriptors: selections are
/// precomputed for every (e, t) at construction.
SelectorFn make_mbr_selector(const std::vector<RecordedEpisode>& episodes,
                             mbr::DistanceMetric metric, mbr::SelectionMode mode,
                             bool normalize = false);

// ==========================================================================
// sweeps
// ==========================================================================

struct SweepSpec {
  std::vector<int> n_values{8};  // each must be one of {4, 8, 16, 32, 64}
  std::vector<mbr::DistanceMetric> metrics{mbr::DistanceMetric::kL2};
  int episodes = 200;
  std::vector<sim::Scenario> tasks;  // empty -> generated from `seed`
  bool paired_seeds = true;          // same episodes for every cell
  mbr::SelectionMode mode = mbr::SelectionMode::kDensity;
  int horizon_chunks = 6;
  int chunk_size = 8;
  int random_trials = 100;       // trials averaged into the random baseline
  int bootstrap_resamples = 1000;
  std::uint64_t seed = 0;
};

void validate_spec(const SweepSpec& spec);

struct SweepCell {
  int n = 0;
  mbr::DistanceMetric metric = mbr::DistanceMetric::kL2;
  double p_random = 0.0;  // trial-averaged
  double p_mbr = 0.0;
  double delta = 0.0;     // p_mbr - p_random
  std::array<double, 2> delta_ci{0.0, 0.0};  // bootstrap 95% over episodes
  int episodes = 0;
};

struct SweepReport {
  std::vector<SweepCell> cells;  // n-major, metric-minor, spec order
  int episodes = 0;
  int horizon_chunks = 0;
  int chunk_size = 0;
  int random_trials = 0;
  int bootstrap_resamples = 0;
  std::string mode;
  bool paired = true;
  std::uint64_t seed = 0;
};

/// Record once per hypothesis count, evaluate every metric on the same
/// recordings (so all cells of a row are paired by construction), average
/// the random baseline over counter-keyed trials, and bootstrap the
/// per-episode deltas.  Deterministic given the spec.
SweepReport run_sweep(const SweepSpec& spec);

// ==========================================================================
// recovery comparison
// ==========================================================================

struct RecoveryRow {
  std::string mode;
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_backtracks = 0.0;
  double mean_steps = 0.0;
};

struct RecoveryReport {
  std::vector<RecoveryRow> rows;  // no_correction, full, always_mbr, failure_cutoff
};

/// Run every scenario under all four correction modes with paired seeds
/// (cfg.seed = scenario.seed for each mode).
RecoveryReport run_recovery_comparison(const std::vector<sim::Scenario>& scenarios,
                                       const controller::EpisodeConfig& base,
                                       const oracle::ScriptedPlannerConfig& planner_cfg);

// ==========================================================================
// runtime shares
// ==========================================================================

struct RuntimeShares {
  std::map<std::string, double> durations;    // summed per component
  std::map<std::string, double> percentages;  // of the grand total
  std::vector<std::string> warnings;
};

/// Sum the five component timings across outcomes and convert to
/// percentages.  A component missing from some outcome contributes zero and
/// is recorded as a warning; unknown keys are ignored with a warning.
/// Throws std::invalid_argument on an empty list or an all-zero total.
RuntimeShares report_runtime_shares(const std::vector<controller::EpisodeOutcome>& outcomes);

// ==========================================================================
// report rendering
// ==========================================================================

io::Json sweep_report_to_json(const SweepReport& r);
std::string sweep_report_to_text(const SweepReport& r);   // aligned columns
std::string sweep_report_to_csv(const SweepReport& r);

io::Json recovery_report_to_json(const RecoveryReport& r);
std::string recovery_report_to_text(const RecoveryReport& r);

io::Json runtime_shares_to_json(const RuntimeShares& r);
std::string runtime_shares_to_text(const RuntimeShares& r);

}  // namespace cyclevla::eval
