#include "cyclevla/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cyclevla/rng.hpp"

namespace cyclevla::sim {

std::string kind_name(SubtaskKind k) {
  switch (k) {
    case SubtaskKind::kReach: return "reach";
    case SubtaskKind::kGrasp: return "grasp";
    case SubtaskKind::kTransport: return "transport";
    case SubtaskKind::kRelease: return "release";
  }
  return "reach";
}

SubtaskKind kind_from_name(const std::string& name) {
  if (name == "reach") return SubtaskKind::kReach;
  if (name == "grasp") return SubtaskKind::kGrasp;
  if (name == "transport") return SubtaskKind::kTransport;
  if (name == "release") return SubtaskKind::kRelease;
  throw std::invalid_argument("unknown subtask kind: " + name);
}

namespace {

int held_index(const WorldState& w) {
  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    if (w.objects[i].held) return static_cast<int>(i);
  }
  return -1;
}

const SubtaskSpec& spec_at(const TaskScript& script, int k) {
  if (k < 0 || k >= static_cast<int>(script.subtasks.size())) {
    throw std::invalid_argument("subtask index out of range: " + std::to_string(k));
  }
  return script.subtasks[k];
}

const GoalRegion& target_of(const WorldState& w, const SubtaskSpec& s) {
  auto it = w.targets.find(s.target_id);
  if (it == w.targets.end()) {
    throw std::invalid_argument("unknown goal region: " + s.target_id);
  }
  return it->second;
}

const SimObject& object_of(const WorldState& w, const SubtaskSpec& s) {
  const SimObject* obj = find_object(w, s.object_id);
  if (!obj) throw std::invalid_argument("unknown object: " + s.object_id);
  return *obj;
}

}  // namespace

WorldState env_step(const WorldState& world, const core::ActionStep& step) {
  WorldState out = world;
  out.gripper = core::apply_step(world.gripper, step);
  for (int c = 0; c < 3; ++c) {
    out.gripper.pos[c] = std::clamp(out.gripper.pos[c], out.box_min[c], out.box_max[c]);
  }
  int held = held_index(out);
  if (held >= 0) out.objects[held].pos = out.gripper.pos;

  const bool close_cmd = step.gripper >= 0.5;
  if (close_cmd) {
    if (held < 0) {
      int best = -1;
      double best_d = out.grasp_radius;
      for (std::size_t i = 0; i < out.objects.size(); ++i) {
        const double d = core::dist(out.objects[i].pos, out.gripper.pos);
        if (d <= best_d) {
          best_d = d;
          best = static_cast<int>(i);
        }
      }
      if (best >= 0) {
        out.objects[best].held = true;
        out.objects[best].pos = out.gripper.pos;
      }
    }
  } else if (held >= 0) {
    out.objects[held].held = false;  // drop in place
  }
  return out;
}

const SimObject* find_object(const WorldState& world, const std::string& id) {
  for (const auto& obj : world.objects) {
    if (obj.id == id) return &obj;
  }
  return nullptr;
}

double goal_distance(const WorldState& world, const TaskScript& script, int k) {
  const SubtaskSpec& s = spec_at(script, k);
  switch (s.kind) {
    case SubtaskKind::kReach:
    case SubtaskKind::kGrasp:
      return core::dist(world.gripper.pos, object_of(world, s).pos);
    case SubtaskKind::kTransport:
      return core::dist(world.gripper.pos, target_of(world, s).center);
    case SubtaskKind::kRelease: {
      const SimObject& obj = object_of(world, s);
      const GoalRegion& goal = target_of(world, s);
      if (subtask_done(world, script, k)) return 0.0;
      if (obj.held) return core::dist(world.gripper.pos, goal.center);
      return core::dist(obj.pos, goal.center);
    }
  }
  return 0.0;
}

bool subtask_done(const WorldState& world, const TaskScript& script, int k) {
  const SubtaskSpec& s = spec_at(script, k);
  switch (s.kind) {
    case SubtaskKind::kReach:
      return core::dist(world.gripper.pos, object_of(world, s).pos) <= script.reach_tolerance;
    case SubtaskKind::kGrasp:
      return object_of(world, s).held;
    case SubtaskKind::kTransport:
      return object_of(world, s).held &&
             core::dist(world.gripper.pos, target_of(world, s).center) <=
                 script.transport_tolerance;
    case SubtaskKind::kRelease: {
      const SimObject& obj = object_of(world, s);
      const GoalRegion& goal = target_of(world, s);
      return !obj.held && core::dist(obj.pos, goal.center) <= goal.radius;
    }
  }
  return false;
}

bool task_success(const WorldState& world, const TaskScript& script) {
  bool any_release = false;
  for (std::size_t k = 0; k < script.subtasks.size(); ++k) {
    if (script.subtasks[k].kind == SubtaskKind::kRelease) {
      any_release = true;
      if (!subtask_done(world, script, static_cast<int>(k))) return false;
    }
  }
  if (any_release) return true;
  if (script.subtasks.empty()) return false;
  return subtask_done(world, script, static_cast<int>(script.subtasks.size()) - 1);
}

// ==========================================================================
// policies
// ==========================================================================

namespace {

// Progress is scaled against the distance recorded at subtask activation.
// The floor keeps the head stable when a subtask starts on top of its goal
// (release, mostly): without it, millimeter noise would swing the ratio.
constexpr double kMinProgressRef = 0.05;

core::Vec3 aim_point(const WorldState& w, const TaskScript& script, int k) {
  const SubtaskSpec& s = spec_at(script, k);
  switch (s.kind) {
    case SubtaskKind::kReach:
    case SubtaskKind::kGrasp:
      return object_of(w, s).pos;
    case SubtaskKind::kTransport:
    case SubtaskKind::kRelease:
      return target_of(w, s).center;
  }
  return w.gripper.pos;
}

double arrive_tolerance(const TaskScript& script, SubtaskKind kind) {
  switch (kind) {
    case SubtaskKind::kReach: return script.reach_tolerance;
    case SubtaskKind::kGrasp: return script.grasp_radius * 0.75;
    case SubtaskKind::kTransport: return script.transport_tolerance;
    case SubtaskKind::kRelease: return script.transport_tolerance;
  }
  return script.reach_tolerance;
}

/// What the controller believes its goal and completion are, given where it
/// is aiming (the true goal, or a displaced one in failure mode).
struct Belief {
  core::Vec3 aim;
  double dist = 0.0;
  bool done = false;
};

Belief evaluate_belief(const WorldState& w, const TaskScript& script, int k,
                       const std::optional<core::Vec3>& override_aim) {
  const SubtaskSpec& s = spec_at(script, k);
  Belief b;
  b.aim = override_aim ? *override_aim : aim_point(w, script, k);
  b.dist = core::dist(w.gripper.pos, b.aim);
  const double tol = arrive_tolerance(script, s.kind);
  const bool closed = w.gripper.gripper_width >= 0.5;
  switch (s.kind) {
    case SubtaskKind::kReach:
      b.done = b.dist <= tol;
      break;
    case SubtaskKind::kGrasp:
      b.done = closed && b.dist <= script.grasp_radius;
      break;
    case SubtaskKind::kTransport:
      b.done = b.dist <= tol;
      break;
    case SubtaskKind::kRelease:
      b.done = !closed && b.dist <= tol;
      break;
  }
  return b;
}

/// Proportional step toward the believed goal.  Gripper command depends on
/// the subtask kind and on whether we are within closing/opening range.
core::ActionStep control_step(const WorldState& w, const TaskScript& script, int k,
                              const Belief& b, double step_len) {
  const SubtaskSpec& s = spec_at(script, k);
  core::ActionStep a;
  const core::Vec3 to_goal = core::sub(b.aim, w.gripper.pos);
  const double d = core::norm(to_goal);
  const double tol = arrive_tolerance(script, s.kind);
  const bool move = d > 1e-12 && d > ((s.kind == SubtaskKind::kReach) ? 0.0 : tol * 0.25);
  if (move && !b.done) {
    a.dpos = core::scale(to_goal, std::min(step_len, d) / d);
  }
  switch (s.kind) {
    case SubtaskKind::kReach:
      a.gripper = 0.0;
      break;
    case SubtaskKind::kGrasp:
      a.gripper = (d <= script.grasp_radius * 0.75) ? 1.0 : 0.0;
      break;
    case SubtaskKind::kTransport:
      a.gripper = 1.0;
      break;
    case SubtaskKind::kRelease:
      a.gripper = (d <= tol) ? 0.0 : 1.0;
      break;
  }
  return a;
}

double bin_progress(double raw) {
  const double clamped = std::clamp(raw, 0.0, 1.0);
  return std::floor(clamped * 10.0) / 10.0;
}

core::ActionChunk rollout_chunk(const WorldState& world, const TaskScript& script, int k,
                                const MockPolicyConfig& cfg, rng::Stream* noise,
                                const std::optional<core::Vec3>& override_aim,
                                std::uint64_t origin_seed) {
  if (cfg.chunk_size < 1) throw std::invalid_argument("chunk_size must be >= 1");
  if (cfg.step_len <= 0.0) throw std::invalid_argument("step_len must be positive");
  spec_at(script, k);  // range check

  double ref = kMinProgressRef;
  if (k < static_cast<int>(world.progress_ref.size()) && world.progress_ref[k] > 0.0) {
    ref = std::max(world.progress_ref[k], kMinProgressRef);
  } else {
    const Belief start = evaluate_belief(world, script, k, override_aim);
    ref = std::max(start.dist, kMinProgressRef);
  }

  core::ActionChunk chunk;
  chunk.origin_seed = origin_seed;
  chunk.steps.reserve(cfg.chunk_size);
  WorldState sim = world;
  for (int i = 0; i < cfg.chunk_size; ++i) {
    const Belief before = evaluate_belief(sim, script, k, override_aim);
    core::ActionStep a = control_step(sim, script, k, before, cfg.step_len);
    if (noise && cfg.noise_sigma > 0.0) {
      for (int c = 0; c < 3; ++c) {
        a.dpos[c] += cfg.noise_sigma * noise->next_gaussian_clipped(3.0);
      }
      for (int c = 0; c < 3; ++c) {
        a.drot[c] += cfg.noise_sigma * noise->next_gaussian_clipped(3.0);
      }
    }
    sim = env_step(sim, a);
    const Belief after = evaluate_belief(sim, script, k, override_aim);
    double raw = after.done ? 1.0 : 1.0 - after.dist / ref;
    if (noise && cfg.progress_noise > 0.0) {
      raw += cfg.progress_noise * noise->next_gaussian_clipped(3.0);
    }
    a.progress = after.done ? 1.0 : bin_progress(raw);
    a.stop = after.done ? 1.0 : 0.0;
    chunk.steps.push_back(a);
  }
  return chunk;
}

}  // namespace

core::ActionChunk expert_chunk(const WorldState& world, const TaskScript& script, int k,
                               const MockPolicyConfig& cfg) {
  return rollout_chunk(world, script, k, cfg, nullptr, std::nullopt, 0);
}

core::ActionChunk mock_policy_sample(const WorldState& world, const TaskScript& script, int k,
                                     const MockPolicyConfig& cfg, std::uint64_t seed) {
  rng::Stream stream(rng::mix(cfg.seed, seed));
  std::optional<core::Vec3> override_aim;
  if (stream.next_double() < cfg.p_fail) {
    // Failure mode: pursue a goal displaced in a seed-derived direction.
    // Directions vary per seed, so failures scatter while successes cluster.
    core::Vec3 dir{0.0, 0.0, 0.0};
    double n = 0.0;
    while (n < 1e-9) {
      for (int c = 0; c < 3; ++c) dir[c] = stream.next_gaussian();
      n = core::norm(dir);
    }
    const core::Vec3 base = aim_point(world, script, k);
    override_aim = core::add(base, core::scale(dir, cfg.failure_offset / n));
  }
  return rollout_chunk(world, script, k, cfg, &stream, override_aim, seed);
}

bool label_hypothesis(const WorldState& world, const TaskScript& script, int k,
                      const core::ActionChunk& chunk, const MockPolicyConfig& cfg) {
  WorldState end = world;
  for (const auto& step : chunk.steps) end = env_step(end, step);
  if (subtask_done(end, script, k)) return true;

  const double d0 = goal_distance(world, script, k);
  core::ActionChunk ideal = expert_chunk(world, script, k, expert_config(cfg));
  WorldState expert_end = world;
  for (const auto& step : ideal.steps) expert_end = env_step(expert_end, step);
  const double expert_gain = d0 - goal_distance(expert_end, script, k);
  if (expert_gain <= 1e-12) return false;  // expert cannot improve and the predicate is not met
  const double gain = d0 - goal_distance(end, script, k);
  return gain >= script.mid_chunk_gain_fraction * expert_gain;
}

MockPolicyConfig expert_config(const MockPolicyConfig& base) {
  MockPolicyConfig cfg = base;
  cfg.noise_sigma = 0.0;
  cfg.p_fail = 0.0;
  cfg.progress_noise = 0.0;
  return cfg;
}

// ==========================================================================
// environment wrapper
// ==========================================================================

Environment::Environment(WorldState world, TaskScript script)
    : world_(std::move(world)), script_(std::move(script)) {
  if (script_.subtasks.empty()) throw std::invalid_argument("task script has no subtasks");
  int held = 0;
  for (const auto& obj : world_.objects) held += obj.held ? 1 : 0;
  if (held > 1) throw std::invalid_argument("world starts with more than one held object");
  world_.grasp_radius = script_.grasp_radius;
  world_.progress_ref.resize(script_.subtasks.size(), 0.0);
}

void Environment::begin_subtask(int k) {
  spec_at(script_, k);
  world_.progress_ref[k] = std::max(goal_distance(world_, script_, k), kMinProgressRef);
}

// ==========================================================================
// scenarios
// ==========================================================================

Scenario make_pick_place_scenario(std::uint64_t seed) {
  rng::Stream st(rng::mix(0x5ce7a210u, seed));
  auto jitter = [&](double a) { return (st.next_double() * 2.0 - 1.0) * a; };

  Scenario sc;
  sc.seed = seed;

  sc.script.instruction = "pick up the block and place it on the goal tray";
  sc.script.subtasks = {
      {"Move the gripper above the block", SubtaskKind::kReach, "block", ""},
      {"Close the gripper to grasp the block", SubtaskKind::kGrasp, "block", ""},
      {"Move the gripper to the goal tray", SubtaskKind::kTransport, "block", "tray"},
      {"Open the gripper to release the block", SubtaskKind::kRelease, "block", "tray"},
  };

  WorldState w;
  w.gripper.pos = {0.0, 0.0, 0.2};
  w.gripper.gripper_width = 0.0;
  w.objects.push_back({"block", {0.25 + jitter(0.05), 0.10 + jitter(0.05), 0.02}, false});
  w.targets["tray"] = {{-0.20 + jitter(0.05), 0.25 + jitter(0.05), 0.02}, 0.04};
  w.rng_seed = seed;
  w.grasp_radius = sc.script.grasp_radius;
  sc.world = std::move(w);

  sc.policy = MockPolicyConfig{};
  sc.policy.seed = rng::mix(seed, 1);
  return sc;
}

std::vector<Scenario> make_scenarios(std::uint64_t master_seed, int count) {
  std::vector<Scenario> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.push_back(make_pick_place_scenario(rng::mix(master_seed, static_cast<std::uint64_t>(i))));
  }
  return out;
}

// ==========================================================================
// segmentation demos
// ==========================================================================

namespace {

struct WidthEdit {
  int state_index;  // first affected state
  int span;         // number of states affected
  double delta;
};

}  // namespace

SegmentationDemo make_segmentation_demo(std::uint64_t seed, const DemoNoise& noise,
                                        bool two_stage_grasp) {
  rng::Stream st(rng::mix(0xde305eedu, rng::mix(seed, noise.seed)));
  auto uniform_int = [&](int lo, int hi) {  // inclusive
    return lo + static_cast<int>(st.next_below(static_cast<std::uint64_t>(hi - lo + 1)));
  };

  constexpr int kWindow = 4;
  const int approach_len = uniform_int(14, 22);   // nominal close jump step
  const int carry_len = uniform_int(16, 24);      // nominal distance between jumps
  const int tail = uniform_int(0, 3);             // steps after the open jump
  const int stage_gap = two_stage_grasp ? 5 : 0;  // plateau between the two close jumps

  const int b0 = approach_len;                 // nominal close jump (second stage at b0+stage_gap)
  const int c0 = b0 + stage_gap + carry_len;   // nominal open jump
  const int total = c0 + tail + 1;             // executed steps

  // Ground truth comes from the nominal construction; jitter below moves
  // the actual transitions, which is exactly the boundary error the
  // pipeline is measured against.
  SegmentationDemo demo;
  demo.subtask_instructions = {
      "Move the gripper above the block",
      "Close the gripper to grasp the block",
      "Move the gripper to the goal tray",
      "Open the gripper to release the block",
  };
  demo.truth.subtasks = {
      {demo.subtask_instructions[0], 0, b0 - kWindow},
      {demo.subtask_instructions[1], b0 - kWindow + 1, b0 + stage_gap},
      {demo.subtask_instructions[2], b0 + stage_gap + 1, c0 - kWindow},
      {demo.subtask_instructions[3], c0 - kWindow + 1, total - 1},
  };

  int b = b0;
  int c = c0;
  if (noise.max_jump_jitter > 0) {
    b += uniform_int(-noise.max_jump_jitter, noise.max_jump_jitter);
    c += uniform_int(-noise.max_jump_jitter, noise.max_jump_jitter);
    // Keep the construction well formed: the opening idle phase and the
    // carry phase must stay nonempty, and the open jump must stay within
    // `kWindow` of the end or a trailing idle segment would appear.
    b = std::clamp(b, kWindow + 1, b0 + noise.max_jump_jitter);
    c = std::clamp(c, std::max(b + stage_gap + 5, total - kWindow), total - 1);
  }

  // Base width profile over states 0..total: open, closed after jump(s),
  // open again after the release jump.  Executed step i moves state i to
  // state i+1, so a jump "at step j" appears at state j+1.
  std::vector<double> width(total + 1, 0.0);
  std::vector<double> command(total, 0.0);
  for (int s_idx = 0; s_idx <= total; ++s_idx) {
    if (two_stage_grasp) {
      if (s_idx > b + stage_gap && s_idx <= c) width[s_idx] = 1.0;
      else if (s_idx > b && s_idx <= c) width[s_idx] = 0.5;
    } else {
      if (s_idx > b && s_idx <= c) width[s_idx] = 1.0;
    }
  }
  for (int i = 0; i < total; ++i) command[i] = width[i + 1];

  // Injected sensor noise on the width column.
  std::vector<WidthEdit> edits;
  auto safe_slot = [&](int margin) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int p = uniform_int(kWindow + 1, total - kWindow - 2);
      const bool near_jump = std::abs(p - b) < margin ||
                             std::abs(p - (b + stage_gap)) < margin ||
                             std::abs(p - c) < margin;
      if (!near_jump) return p;
    }
    return -1;
  };
  for (int i = 0; i < noise.wobble_count; ++i) {
    const int p = safe_slot(kWindow + 3);
    if (p >= 0) edits.push_back({p, 2, 0.012});
  }
  for (int i = 0; i < noise.glitch_count; ++i) {
    const int p = safe_slot(kWindow + 3);
    if (p >= 0) edits.push_back({p, 2, 0.029});  // only the lowest vote threshold sees this
  }
  for (const WidthEdit& e : edits) {
    for (int s_idx = e.state_index; s_idx < e.state_index + e.span && s_idx <= total; ++s_idx) {
      width[s_idx] = std::clamp(width[s_idx] + e.delta, 0.0, 1.0);
    }
  }

  // Motion: approach direction, then carry direction, no rotation.
  const core::Vec3 approach_dir{0.015, 0.010, -0.008};
  const core::Vec3 carry_dir{-0.012, 0.011, 0.004};
  core::TrajectoryLog log;
  core::RobotState state;
  state.pos = {0.30, -0.20, 0.15};
  state.gripper_width = width[0];
  log.states.push_back(state);
  std::vector<int> subtask_col(total, 0);
  for (int i = 0; i < total; ++i) {
    core::ActionStep a;
    if (i < b) a.dpos = approach_dir;
    else if (i > b + stage_gap && i < c - 1) a.dpos = carry_dir;
    if (noise.motion_jitter > 0.0) {
      for (int ch = 0; ch < 3; ++ch) {
        a.dpos[ch] += noise.motion_jitter * (st.next_double() * 2.0 - 1.0);
      }
    }
    a.gripper = command[i];
    core::RobotState next;
    next.pos = core::add(state.pos, a.dpos);
    next.rot = state.rot;
    next.gripper_width = width[i + 1];
    log.executed.push_back(a);
    log.states.push_back(next);
    state = next;
    for (std::size_t kk = 0; kk < demo.truth.subtasks.size(); ++kk) {
      const auto& sx = demo.truth.subtasks[kk];
      if (i >= sx.start && i <= sx.end) subtask_col[i] = static_cast<int>(kk);
    }
  }
  log.subtask_index_per_step = subtask_col;
  demo.log = std::move(log);
  return demo;
}

}  // namespace cyclevla::sim
