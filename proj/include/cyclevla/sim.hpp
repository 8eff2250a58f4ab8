#pragma once

/**
 * Synthetic tabletop world.
 *
 * A point gripper moves in 3-D over a table with point objects and disk
 * goal regions.  Tasks are scripted as reach / grasp / transport / release
 * subtasks with geometric completion predicates.  Two policies exist:
 *
 *  - a noise-free scripted expert (proportional controller toward the
 *    active goal, emits calibrated stop/progress heads), and
 *  - a stochastic mock policy that, per sampled chunk, either follows the
 *    expert with small noise (probability 1 - p_fail) or pursues a goal
 *    displaced by failure_offset in a seed-derived direction.
 *
 * Successes therefore cluster tightly while failures scatter, which is the
 * geometry consensus selection needs; every claim about selection or
 * recovery is testable against this world with exact seeds.
 *
 * There are no orientation goals: expert rotation deltas are zero, but the
 * mock policy jitters rotation too, so orientation components of
 * trajectory features stay informative.
 */

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cyclevla/core.hpp"

namespace cyclevla::sim {

// ==========================================================================
// world
// ==========================================================================

struct SimObject {
  std::string id;
  core::Vec3 pos{0.0, 0.0, 0.0};
  bool held = false;
};

struct GoalRegion {
  core::Vec3 center{0.0, 0.0, 0.0};
  double radius = 0.04;
};

struct WorldState {
  core::RobotState gripper;
  std::vector<SimObject> objects;
  std::map<std::string, GoalRegion> targets;
  std::uint64_t rng_seed = 0;
  double grasp_radius = 0.02;
  core::Vec3 box_min{-10.0, -10.0, -10.0};
  core::Vec3 box_max{10.0, 10.0, 10.0};
  // Reference distance per subtask, recorded when the subtask becomes
  // active; progress heads are scaled against it.  0 = not yet recorded.
  std::vector<double> progress_ref;
};

enum class SubtaskKind { kReach, kGrasp, kTransport, kRelease };

std::string kind_name(SubtaskKind k);
SubtaskKind kind_from_name(const std::string& name);

struct SubtaskSpec {
  std::string instruction;
  SubtaskKind kind = SubtaskKind::kReach;
  std::string object_id;
  std::string target_id;  // transport / release only
};

struct TaskScript {
  std::string instruction;
  std::vector<SubtaskSpec> subtasks;
  double grasp_radius = 0.02;
  double reach_tolerance = 0.015;
  double transport_tolerance = 0.03;
  // A mid-subtask chunk counts as successful if it closes at least this
  // fraction of the distance the expert would close from the same state.
  double mid_chunk_gain_fraction = 0.5;
};

struct MockPolicyConfig {
  double noise_sigma = 0.002;    // per-step translation/rotation noise, clipped at 3 sigma
  double p_fail = 0.3;           // per-chunk probability of pursuing a displaced goal
  double failure_offset = 0.1;   // displacement magnitude, meters
  double progress_noise = 0.02;  // jitter on the emitted progress head
  std::uint64_t seed = 0;
  int chunk_size = 8;
  double step_len = 0.02;  // max translation per step
};

// ==========================================================================
// dynamics and predicates
// ==========================================================================

/// One step of world dynamics: move the gripper (clamped to the workspace
/// box), drag a held object along, then resolve the binarized gripper
/// command (close grasps the nearest object within grasp_radius; open
/// releases in place).  At most one object is held.
WorldState env_step(const WorldState& world, const core::ActionStep& step);

const SimObject* find_object(const WorldState& world, const std::string& id);

/// Distance the active subtask still has to close (to the true goal).
double goal_distance(const WorldState& world, const TaskScript& script, int k);

/// Geometric completion predicate for subtask k (0-based).
bool subtask_done(const WorldState& world, const TaskScript& script, int k);

/// Episode-level success: every release subtask ends with its object inside
/// the goal region and not held.  Scripts without a release subtask fall
/// back to the last subtask's predicate.
bool task_success(const WorldState& world, const TaskScript& script);

// ==========================================================================
// policies
// ==========================================================================

/// Noise-free proportional controller toward the subtask goal; emits
/// progress = 1 - dist/ref floored to the 0.1 grid and stop = 1 once the
/// goal condition is met (then holds position with zero motion).
core::ActionChunk expert_chunk(const WorldState& world, const TaskScript& script, int k,
                               const MockPolicyConfig& cfg);

/// Stochastic sampler: expert plus clipped Gaussian noise, or (with
/// probability p_fail) the same controller aimed at a goal displaced by
/// failure_offset in a seed-derived direction.  Deterministic in
/// (world, script, k, cfg, seed).
core::ActionChunk mock_policy_sample(const WorldState& world, const TaskScript& script, int k,
                                     const MockPolicyConfig& cfg, std::uint64_t seed);

/// Would executing this chunk from `world` advance subtask k?  True if the
/// subtask predicate holds afterwards, or if the chunk closes at least
/// mid_chunk_gain_fraction of the distance the expert would close.
bool label_hypothesis(const WorldState& world, const TaskScript& script, int k,
                      const core::ActionChunk& chunk, const MockPolicyConfig& cfg);

/// Chunk source used by the controller and the evaluation harness.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual core::ActionChunk sample(const WorldState& world, int subtask_index,
                                   std::uint64_t seed) = 0;
};

class MockPolicy : public Policy {
 public:
  MockPolicy(TaskScript script, MockPolicyConfig cfg)
      : script_(std::move(script)), cfg_(cfg) {}
  core::ActionChunk sample(const WorldState& world, int subtask_index,
                           std::uint64_t seed) override {
    return mock_policy_sample(world, script_, subtask_index, cfg_, seed);
  }
  const MockPolicyConfig& config() const { return cfg_; }

 private:
  TaskScript script_;
  MockPolicyConfig cfg_;
};

/// Same controller with noise and failures switched off.
MockPolicyConfig expert_config(const MockPolicyConfig& base);

// ==========================================================================
// environment wrapper
// ==========================================================================

/// Mutable world + script pair with the per-subtask activation bookkeeping
/// the progress head needs.
class Environment {
 public:
  Environment(WorldState world, TaskScript script);

  const WorldState& world() const { return world_; }
  const TaskScript& script() const { return script_; }
  int num_subtasks() const { return static_cast<int>(script_.subtasks.size()); }

  void apply(const core::ActionStep& step) { world_ = env_step(world_, step); }
  bool task_succeeded() const { return task_success(world_, script_); }
  bool done(int k) const { return subtask_done(world_, script_, k); }

  /// Record the reference distance for subtask k at activation time.
  void begin_subtask(int k);

 private:
  WorldState world_;
  TaskScript script_;
};

// ==========================================================================
// scenarios
// ==========================================================================

struct Scenario {
  TaskScript script;
  WorldState world;
  MockPolicyConfig policy;
  std::uint64_t seed = 0;
};

/// Pick-and-place with placements randomized by seed: reach, grasp,
/// transport, release over one object and one goal region.
Scenario make_pick_place_scenario(std::uint64_t seed);

std::vector<Scenario> make_scenarios(std::uint64_t master_seed, int count);

// ==========================================================================
// segmentation demos
// ==========================================================================

/// Spec for a synthetic demonstration with known phase boundaries, built
/// directly as a trajectory log (gripper transitions at scripted steps,
/// translation motion in between).  Ground truth is emitted alongside.
struct DemoNoise {
  int max_jump_jitter = 0;        // shift each gripper transition by up to this many steps
  int wobble_count = 0;           // sub-threshold width wobbles (never change labels)
  int glitch_count = 0;           // marginal glitches that exactly one vote threshold sees
  double motion_jitter = 0.0;     // per-step translation noise, meters
  std::uint64_t seed = 0;
};

struct SegmentationDemo {
  core::TrajectoryLog log;
  core::SubtaskPlan truth;
  std::vector<std::string> subtask_instructions;
};

/// Four-phase demo (approach / grasp / carry / release) with randomized
/// phase lengths.  `two_stage_grasp` splits the close transition in two
/// width jumps separated by a short plateau, which the idle filter must
/// merge back into one segment.
SegmentationDemo make_segmentation_demo(std::uint64_t seed, const DemoNoise& noise,
                                        bool two_stage_grasp = false);

}  // namespace cyclevla::sim
