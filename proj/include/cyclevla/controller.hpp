#pragma once

/**
 * The CycleVLA inference loop: per-subtask Monitor/Complete phases,
 * debounced stop/progress confirmation, planner-triggered transit or
 * backtrack, reverse-execution restore with retry budgets, and
 * MBR-decoded retry chunks.
 *
 * Episodes are deterministic: all randomness flows from the episode seed
 * (hypothesis seed i at step t is mix(seed, t, i)), the planner callback
 * is pure given (world, query_key), and component timings come from a
 * fixed cost model in synthetic units, never the wall clock.  Identical
 * (seed, config, planner) reproduce a byte-identical serialized outcome.
 *
 * Subtask indices are 0-based everywhere in this codebase.
 */

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cyclevla/core.hpp"
#include "cyclevla/json_io.hpp"
#include "cyclevla/mbr.hpp"
#include "cyclevla/oracle.hpp"
#include "cyclevla/sim.hpp"

namespace cyclevla::controller {

// ==========================================================================
// configuration
// ==========================================================================

enum class CorrectionMode {
  kFull,           // planner queries, backtrack + MBR retries
  kNoCorrection,   // no planner; high progress goes straight to Complete
  kAlwaysMbr,      // every chunk MBR-selected; no planner, no backtracks
  kFailureCutoff,  // planner queries; predicted failure terminates episode
};

CorrectionMode correction_from_name(const std::string& name);
std::string correction_name(CorrectionMode mode);

/// Synthetic per-unit costs (arbitrary time units, NOT wall clock) so that
/// component timings are exactly reproducible.
struct CostModel {
  double vlm_query = 10.0;      // per planner query
  double rollout_step = 1.0;    // per executed forward step (incl. its share of inference)
  double sample_chunk = 1.0;    // per chunk drawn in an N-hypothesis batch
  double mbr_distance = 0.01;   // per pairwise feature distance
  double backtrack_step = 1.0;  // per reverse-executed step
};

struct EpisodeConfig {
  double tau_p = 0.9;                // progress threshold triggering the planner
  int chunk_size = 8;                // H
  int samples = 8;                   // N hypotheses per MBR draw
  int max_retries = 3;               // R per subtask
  int t_max = 512;                   // step budget, reverse steps included
  double stop_binarize = 0.5;        // stop head high iff >= this
  mbr::DistanceMetric metric = mbr::DistanceMetric::kL2;
  mbr::SelectionMode mbr_mode = mbr::SelectionMode::kDensity;
  bool normalize_features = false;
  CorrectionMode correction = CorrectionMode::kFull;
  CostModel cost;
  std::uint64_t seed = 0;
};

/// Throws std::invalid_argument on out-of-range values.
void validate_config(const EpisodeConfig& cfg);

// ==========================================================================
// confirm debouncer
// ==========================================================================

/// Counters for one monitored signal.  Confirmation fires on two
/// consecutive high signals, or on a high signal recurring after at least
/// two low-signal steps since the last high.
struct ConfirmState {
  bool first_seen = false;
  int consec = 0;
  int gap = 0;
};

/// Advance the debouncer by one signal; returns whether the condition is
/// confirmed at this step.
bool confirm_update(ConfirmState& state, bool high);

// ==========================================================================
// planner callback
// ==========================================================================

struct PlannerResult {
  oracle::PlannerDecision decision;
  bool parse_failed = false;  // raw output was unusable; treated as transit
};

/// Pure decision source given the world snapshot; query_key is unique per
/// planner call within an episode.
using PlannerFn = std::function<PlannerResult(const sim::WorldState& world, int current,
                                              std::uint64_t query_key)>;

PlannerFn make_scripted_planner(sim::TaskScript script, oracle::ScriptedPlannerConfig cfg);

// ==========================================================================
// outcome records
// ==========================================================================

struct DecisionRecord {
  int t = 0;        // step count when the planner was queried
  int subtask = 0;  // k at query time
  oracle::PlannerDecision decision;
  bool parse_failed = false;
  bool applied_backtrack = false;  // false for transit or exhausted budget
  int target = -1;                 // resolved backtrack target, -1 otherwise
};

struct BacktrackRecord {
  int from_subtask = 0;
  int to_subtask = 0;
  int t_start = 0;         // step count when the restore began
  int steps_reversed = 0;  // also the number of budget steps consumed
  int retry_number = 0;    // retries[to_subtask] after increment
};

/// Flat event log; the trace validator in the tests replays it against the
/// queue-discipline and budget invariants.  kinds:
///   sample      one chunk drawn (value = queued steps)
///   hypotheses  N chunks drawn for MBR (value = N)
///   mbr         selection done (value = selected index)
///   step        one forward step executed
///   vlm         planner queried (value = query index)
///   decision    planner decision applied (value = 1 backtrack, 0 transit)
///   reverse     one reverse step executed
///   restored    restore finished (value = steps reversed)
///   advance     k incremented (value = new k)
///   terminate   episode ended (value = 1 success, 0 failure)
struct TraceEvent {
  int t = 0;
  int subtask = 0;
  std::string kind;
  int queue_before = 0;
  int value = 0;
};

struct EpisodeOutcome {
  bool success = false;
  std::string failure_cause;  // "" | "timeout" | "predicted_failure" | error text
  int steps_used = 0;
  int planner_queries = 0;
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<BacktrackRecord> backtracks;
  std::vector<DecisionRecord> decisions;
  // Keys: vlm, action_rollout, sampling, mbr, backtrack (always all five).
  std::map<std::string, double> component_timings;
  std::vector<TraceEvent> trace;
  std::vector<std::string> warnings;  // clamped values, parse fallbacks, ...
  core::TrajectoryLog log;
};

/// Stable ordered serialization (the byte-identity surface).
io::Json outcome_to_json(const EpisodeOutcome& outcome);

// ==========================================================================
// episode state (exposed for step-level tests)
// ==========================================================================

enum class Phase { kMonitor, kComplete };

struct EpisodeState {
  int k = 0;
  Phase phase = Phase::kMonitor;
  std::deque<core::ActionStep> queue;
  std::uint64_t queue_origin_seed = 0;  // seed of the chunk the queue came from
  std::vector<int> retries;
  int t = 0;
  ConfirmState confirm;
  bool planner_called_this_visit = false;
  // Refreshed at every visit-begin of a subtask, so a restore rewinds only
  // the latest visit's suffix.
  std::vector<core::RobotState> start_states;
  std::vector<int> start_steps;  // log index where the latest visit began
};

// ==========================================================================
// episode driver
// ==========================================================================

/// Run Alg.-1-style inference to success, step exhaustion, or subtask-list
/// completion.  The planner callback is only consulted in kFull and
/// kFailureCutoff modes.  The environment is consumed (left at its final
/// state).
EpisodeOutcome run_episode(sim::Environment& env, sim::Policy& policy,
                           const PlannerFn& planner, const EpisodeConfig& cfg);

/// Convenience wrapper: builds the environment, mock policy, and scripted
/// planner from a scenario, forcing the policy/planner seeds to keep paired
/// runs honest (policy seed = scenario seed unless overridden in cfg).
EpisodeOutcome run_scenario_episode(const sim::Scenario& scenario, const EpisodeConfig& cfg,
                                    const oracle::ScriptedPlannerConfig& planner_cfg);

}  // namespace cyclevla::controller
