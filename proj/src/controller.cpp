#include "cyclevla/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cyclevla/rng.hpp"

namespace cyclevla::controller {

using io::Json;

// ==========================================================================
// configuration
// ==========================================================================

CorrectionMode correction_from_name(const std::string& name) {
  if (name == "full") return CorrectionMode::kFull;
  if (name == "no_correction") return CorrectionMode::kNoCorrection;
  if (name == "always_mbr") return CorrectionMode::kAlwaysMbr;
  if (name == "failure_cutoff") return CorrectionMode::kFailureCutoff;
  throw std::invalid_argument("unknown correction mode: " + name);
}

std::string correction_name(CorrectionMode mode) {
  switch (mode) {
    case CorrectionMode::kFull: return "full";
    case CorrectionMode::kNoCorrection: return "no_correction";
    case CorrectionMode::kAlwaysMbr: return "always_mbr";
    case CorrectionMode::kFailureCutoff: return "failure_cutoff";
  }
  return "full";
}

void validate_config(const EpisodeConfig& cfg) {
  if (!(cfg.tau_p > 0.0 && cfg.tau_p <= 1.0))
    throw std::invalid_argument("episode config: tau_p must be in (0, 1]");
  if (cfg.chunk_size < 1) throw std::invalid_argument("episode config: chunk_size must be >= 1");
  if (cfg.samples < 2) throw std::invalid_argument("episode config: samples must be >= 2");
  if (cfg.max_retries < 0)
    throw std::invalid_argument("episode config: max_retries must be >= 0");
  if (cfg.t_max <= 0) throw std::invalid_argument("episode config: t_max must be positive");
  if (!(cfg.stop_binarize > 0.0 && cfg.stop_binarize <= 1.0))
    throw std::invalid_argument("episode config: stop_binarize must be in (0, 1]");
}

// ==========================================================================
// confirm debouncer
// ==========================================================================

bool confirm_update(ConfirmState& state, bool high) {
  if (high) {
    state.consec += 1;
    const bool confirmed = state.consec >= 2 || (state.first_seen && state.gap >= 2);
    state.gap = 0;
    state.first_seen = true;
    return confirmed;
  }
  if (state.first_seen) {
    state.gap += 1;
    state.consec = 0;
  }
  return false;
}

// ==========================================================================
// planner callback
// ==========================================================================

PlannerFn make_scripted_planner(sim::TaskScript script, oracle::ScriptedPlannerConfig cfg) {
  return [script = std::move(script), cfg](const sim::WorldState& world, int current,
                                           std::uint64_t query_key) {
    PlannerResult res;
    res.decision = oracle::scripted_planner(world, script, current, cfg, query_key);
    return res;
  };
}

// ==========================================================================
// serialization
// ==========================================================================

namespace {

Json decision_to_json(const DecisionRecord& r) {
  Json j;
  j["t"] = r.t;
  j["subtask"] = r.subtask;
  j["next_subtask"] = r.decision.next_subtask;
  j["kind"] = oracle::kind_to_string(r.decision.kind);
  j["reason"] = r.decision.reason;
  j["parse_failed"] = r.parse_failed;
  j["applied_backtrack"] = r.applied_backtrack;
  j["target"] = r.target;
  return j;
}

Json backtrack_to_json(const BacktrackRecord& r) {
  Json j;
  j["from_subtask"] = r.from_subtask;
  j["to_subtask"] = r.to_subtask;
  j["t_start"] = r.t_start;
  j["steps_reversed"] = r.steps_reversed;
  j["retry_number"] = r.retry_number;
  return j;
}

Json trace_to_json(const TraceEvent& e) {
  Json j;
  j["t"] = e.t;
  j["subtask"] = e.subtask;
  j["kind"] = e.kind;
  j["queue_before"] = e.queue_before;
  j["value"] = e.value;
  return j;
}

}  // namespace

Json outcome_to_json(const EpisodeOutcome& o) {
  Json j;
  j["success"] = o.success;
  j["failure_cause"] = o.failure_cause;
  j["steps_used"] = o.steps_used;
  j["planner_queries"] = o.planner_queries;
  j["mode"] = o.mode;
  j["seed"] = o.seed;
  Json bts = Json::array();
  for (const auto& b : o.backtracks) bts.push_back(backtrack_to_json(b));
  j["backtracks"] = bts;
  Json decs = Json::array();
  for (const auto& d : o.decisions) decs.push_back(decision_to_json(d));
  j["decisions"] = decs;
  Json timings;
  for (const auto& [key, value] : o.component_timings) timings[key] = value;
  j["component_timings"] = timings;
  Json trace = Json::array();
  for (const auto& e : o.trace) trace.push_back(trace_to_json(e));
  j["trace"] = trace;
  j["warnings"] = o.warnings;
  j["log"] = io::to_json(o.log);
  return j;
}

// ==========================================================================
// episode driver
// ==========================================================================

namespace {

constexpr const char* kTimingKeys[] = {"vlm", "action_rollout", "sampling", "mbr", "backtrack"};

struct Driver {
  sim::Environment& env;
  sim::Policy& policy;
  const PlannerFn& planner;
  const EpisodeConfig& cfg;

  EpisodeState st;
  EpisodeOutcome out;
  std::vector<std::string> instructions;

  Driver(sim::Environment& e, sim::Policy& p, const PlannerFn& pl, const EpisodeConfig& c)
      : env(e), policy(p), planner(pl), cfg(c) {
    const int num = env.num_subtasks();
    st.retries.assign(static_cast<std::size_t>(num), 0);
    st.start_states.assign(static_cast<std::size_t>(num), core::RobotState{});
    st.start_steps.assign(static_cast<std::size_t>(num), 0);
    for (const auto& s : env.script().subtasks) instructions.push_back(s.instruction);
    out.mode = correction_name(cfg.correction);
    out.seed = cfg.seed;
    for (const char* key : kTimingKeys) out.component_timings[key] = 0.0;
    out.log.states.push_back(env.world().gripper);
    out.log.subtask_index_per_step.emplace();
  }

  void trace(const std::string& kind, int value) {
    out.trace.push_back(TraceEvent{st.t, st.k, kind, static_cast<int>(st.queue.size()), value});
  }

  void bill(const char* component, double amount) { out.component_timings[component] += amount; }

  void begin_visit(int k) {
    env.begin_subtask(k);
    st.start_states[static_cast<std::size_t>(k)] = env.world().gripper;
    st.start_steps[static_cast<std::size_t>(k)] = static_cast<int>(out.log.size());
    st.confirm = ConfirmState{};
    st.planner_called_this_visit = false;
  }

  void enqueue_chunk(const core::ActionChunk& chunk) {
    for (const auto& step : chunk.steps) st.queue.push_back(step);
    st.queue_origin_seed = chunk.origin_seed;
  }

  // Draw N hypotheses at the current state and enqueue the MBR consensus.
  void mbr_refill() {
    std::vector<core::ActionChunk> chunks;
    chunks.reserve(static_cast<std::size_t>(cfg.samples));
    for (int i = 0; i < cfg.samples; ++i) {
      chunks.push_back(policy.sample(env.world(), st.k,
                                     rng::mix(cfg.seed, static_cast<std::uint64_t>(st.t),
                                              static_cast<std::uint64_t>(i))));
    }
    bill("sampling", cfg.cost.sample_chunk * cfg.samples);
    trace("hypotheses", cfg.samples);
    const auto set = mbr::make_hypothesis_set(env.world().gripper, std::move(chunks),
                                              static_cast<std::size_t>(cfg.chunk_size));
    const mbr::MbrResult sel = mbr::select(set, cfg.metric, cfg.mbr_mode,
                                           cfg.normalize_features);
    bill("mbr", cfg.cost.mbr_distance * (cfg.samples * (cfg.samples - 1) / 2.0));
    trace("mbr", sel.selected_index);
    enqueue_chunk(set.chunks[static_cast<std::size_t>(sel.selected_index)]);
  }

  void single_refill() {
    const core::ActionChunk chunk = policy.sample(
        env.world(), st.k, rng::mix(cfg.seed, static_cast<std::uint64_t>(st.t), 0));
    if (static_cast<int>(chunk.steps.size()) != cfg.chunk_size)
      throw std::runtime_error("policy returned a chunk of unexpected length");
    enqueue_chunk(chunk);
    trace("sample", static_cast<int>(chunk.steps.size()));
  }

  // Reverse-execute the log suffix recorded since subtask j's latest visit
  // began.  Returns false if the step budget ran out mid-restore.
  bool restore_to(int j) {
    const int start = st.start_steps[static_cast<std::size_t>(j)];
    const int m = static_cast<int>(out.log.size()) - start;
    BacktrackRecord rec;
    rec.from_subtask = st.k;
    rec.to_subtask = j;
    rec.t_start = st.t;
    rec.retry_number = st.retries[static_cast<std::size_t>(j)];

    for (int i = m - 1; i >= 0; --i) {
      if (st.t >= cfg.t_max) {
        rec.steps_reversed = m - 1 - i;
        out.backtracks.push_back(rec);
        return false;
      }
      const std::size_t idx = static_cast<std::size_t>(start + i);
      core::ActionStep rs = core::reverse_step(out.log.executed[idx]);
      rs.gripper = out.log.states[idx].gripper_width;  // restore the pre-step width
      rs.stop = 0.0;
      rs.progress = 0.0;
      env.apply(rs);
      out.log.executed.push_back(rs);
      out.log.states.push_back(env.world().gripper);
      out.log.subtask_index_per_step->push_back(st.k);
      st.t += 1;
      bill("backtrack", cfg.cost.backtrack_step);
      trace("reverse", start + i);
    }
    rec.steps_reversed = m;
    out.backtracks.push_back(rec);

    const core::RobotState& snap = st.start_states[static_cast<std::size_t>(j)];
    const core::RobotState& cur = env.world().gripper;
    for (int c = 0; c < 3; ++c) {
      if (std::abs(cur.pos[c] - snap.pos[c]) > 1e-6 ||
          std::abs(core::circle_diff(cur.rot[c], snap.rot[c])) > 1e-6)
        throw std::logic_error("backtrack restore missed the snapshot pose");
    }
    if (std::abs(cur.gripper_width - snap.gripper_width) > 1e-6)
      throw std::logic_error("backtrack restore missed the snapshot gripper width");
    trace("restored", m);
    return true;
  }

  // Planner query plus the Alg. 1 backtrack-or-complete branch.  Returns
  // false when the episode must terminate (cutoff mode or budget death).
  bool planner_branch() {
    if (st.planner_called_this_visit)
      throw std::logic_error("planner queried twice in one subtask visit");
    st.planner_called_this_visit = true;

    const std::uint64_t query_key = static_cast<std::uint64_t>(out.planner_queries);
    trace("vlm", out.planner_queries);
    out.planner_queries += 1;
    bill("vlm", cfg.cost.vlm_query);

    PlannerResult res;
    try {
      res = planner(env.world(), st.k, query_key);
    } catch (const oracle::ParseError& e) {
      res.parse_failed = true;
      res.decision.kind = oracle::DecisionKind::kTransit;
      res.decision.next_subtask = instructions[static_cast<std::size_t>(st.k)];
      res.decision.reason = std::string("unparseable planner output: ") + e.what();
      out.warnings.push_back("planner parse failure treated as transit at t=" +
                             std::to_string(st.t));
    }

    DecisionRecord rec;
    rec.t = st.t;
    rec.subtask = st.k;
    rec.decision = res.decision;
    rec.parse_failed = res.parse_failed;

    int target = -1;
    if (!res.parse_failed) {
      const auto it =
          std::find(instructions.begin(), instructions.end(), res.decision.next_subtask);
      if (it == instructions.end()) {
        out.warnings.push_back("planner named an unknown subtask; treated as transit at t=" +
                               std::to_string(st.t));
        res.decision.kind = oracle::DecisionKind::kTransit;
      } else {
        target = static_cast<int>(it - instructions.begin());
      }
    }

    const bool wants_backtrack =
        res.decision.kind == oracle::DecisionKind::kBacktrack && target >= 0 && target <= st.k;

    if (wants_backtrack && cfg.correction == CorrectionMode::kFailureCutoff) {
      rec.target = target;
      out.decisions.push_back(rec);
      trace("decision", 1);
      out.failure_cause = "predicted_failure";
      return false;
    }

    if (wants_backtrack && st.retries[static_cast<std::size_t>(target)] < cfg.max_retries) {
      st.retries[static_cast<std::size_t>(target)] += 1;
      rec.applied_backtrack = true;
      rec.target = target;
      out.decisions.push_back(rec);
      trace("decision", 1);
      st.queue.clear();
      if (!restore_to(target)) {
        out.failure_cause = "timeout";
        return false;
      }
      st.k = target;
      st.phase = Phase::kMonitor;
      begin_visit(target);
      mbr_refill();
      return true;
    }

    // transit, unknown target, or exhausted budget: force completion
    rec.target = res.decision.kind == oracle::DecisionKind::kBacktrack ? target : -1;
    out.decisions.push_back(rec);
    trace("decision", 0);
    st.phase = Phase::kComplete;
    st.confirm = ConfirmState{};
    return true;
  }

  EpisodeOutcome run() {
    const int num = env.num_subtasks();
    begin_visit(0);

    bool terminated = false;
    while (st.k < num && st.t < cfg.t_max) {
      if (st.queue.empty()) {
        if (cfg.correction == CorrectionMode::kAlwaysMbr) mbr_refill();
        else single_refill();
      }

      core::ActionStep action = st.queue.front();
      st.queue.pop_front();
      double stop = action.stop;
      double progress = action.progress;
      if (stop < 0.0 || stop > 1.0 || progress < 0.0 || progress > 1.0) {
        out.warnings.push_back("stop/progress out of [0,1] clamped at t=" +
                               std::to_string(st.t));
        stop = std::clamp(stop, 0.0, 1.0);
        progress = std::clamp(progress, 0.0, 1.0);
      }

      env.apply(action);
      out.log.executed.push_back(action);
      out.log.states.push_back(env.world().gripper);
      out.log.subtask_index_per_step->push_back(st.k);
      st.t += 1;
      bill("action_rollout", cfg.cost.rollout_step);
      trace("step", 0);

      if (env.task_succeeded()) {
        out.success = true;
        terminated = true;
        break;
      }

      if (st.phase == Phase::kMonitor && confirm_update(st.confirm, progress >= cfg.tau_p)) {
        switch (cfg.correction) {
          case CorrectionMode::kNoCorrection:
            st.phase = Phase::kComplete;
            st.confirm = ConfirmState{};
            break;
          case CorrectionMode::kAlwaysMbr:
            // Consensus replacement of the completion chunk at every
            // high-progress transition; no planner involved.
            st.queue.clear();
            mbr_refill();
            st.phase = Phase::kComplete;
            st.confirm = ConfirmState{};
            break;
          case CorrectionMode::kFull:
          case CorrectionMode::kFailureCutoff:
            if (!planner_branch()) {
              terminated = true;
            }
            break;
        }
        if (terminated) break;
      } else if (st.phase == Phase::kComplete &&
                 confirm_update(st.confirm, stop >= cfg.stop_binarize)) {
        st.k += 1;
        st.phase = Phase::kMonitor;
        st.queue.clear();
        trace("advance", st.k);
        if (st.k < num) begin_visit(st.k);
      }
    }

    if (!out.success && out.failure_cause.empty())
      out.failure_cause = st.t >= cfg.t_max ? "timeout" : "subtasks_exhausted";
    out.steps_used = st.t;
    trace("terminate", out.success ? 1 : 0);
    return std::move(out);
  }
};

}  // namespace

EpisodeOutcome run_episode(sim::Environment& env, sim::Policy& policy,
                           const PlannerFn& planner, const EpisodeConfig& cfg) {
  validate_config(cfg);
  if ((cfg.correction == CorrectionMode::kFull ||
       cfg.correction == CorrectionMode::kFailureCutoff) &&
      !planner)
    throw std::invalid_argument("run_episode: this correction mode requires a planner");
  Driver driver(env, policy, planner, cfg);
  return driver.run();
}

EpisodeOutcome run_scenario_episode(const sim::Scenario& scenario, const EpisodeConfig& cfg,
                                    const oracle::ScriptedPlannerConfig& planner_cfg) {
  sim::Environment env(scenario.world, scenario.script);
  sim::MockPolicyConfig policy_cfg = scenario.policy;
  policy_cfg.chunk_size = cfg.chunk_size;
  sim::MockPolicy policy(scenario.script, policy_cfg);
  const PlannerFn planner = make_scripted_planner(scenario.script, planner_cfg);
  return run_episode(env, policy, planner, cfg);
}

}  // namespace cyclevla::controller
