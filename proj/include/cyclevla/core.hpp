#pragma once

/**
 * Core action and state types shared by every other module.
 *
 * Conventions, fixed once here:
 *  - positions are meters, rotations are Euler angles (roll, pitch, yaw)
 *    in radians, each component wrapped independently to (-pi, pi];
 *  - an ActionStep is a delta: the successor state adds dpos / drot to the
 *    current pose;
 *  - the gripper command is a scalar in [0, 1] with 1 = close; applying a
 *    step binarizes it at 0.5 and sets gripper_width to exactly 0 or 1
 *    (instantaneous gripper, no actuation dynamics);
 *  - all numerics are IEEE double.
 */

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cyclevla::core {

using Vec3 = std::array<double, 3>;

inline constexpr double kPi = 3.14159265358979323846;

// ==========================================================================
// small vector helpers
// ==========================================================================

inline Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double norm(const Vec3& a);
double dist(const Vec3& a, const Vec3& b);

/// Wrap an angle to (-pi, pi].  -pi maps to +pi.
double wrap_angle(double a);

/// Shortest signed difference a - b on the circle, in (-pi, pi].
double circle_diff(double a, double b);

// ==========================================================================
// types
// ==========================================================================

/// One policy output step.  dpos/drot are deltas; gripper is a command
/// (1 = close); stop and progress are auxiliary heads in [0, 1].
struct ActionStep {
  Vec3 dpos{0.0, 0.0, 0.0};
  Vec3 drot{0.0, 0.0, 0.0};
  double gripper = 0.0;
  double stop = 0.0;
  double progress = 0.0;
};

/// H consecutive steps sampled as one unit, plus the seed that produced
/// them (kept for reproducibility audits).
struct ActionChunk {
  std::vector<ActionStep> steps;
  std::uint64_t origin_seed = 0;
};

/// Robot pose plus gripper opening state.  gripper_width is 0 or 1 for
/// states produced by apply_step; ingested external logs may carry
/// intermediate values (sensor readings are not binarized).
struct RobotState {
  Vec3 pos{0.0, 0.0, 0.0};
  Vec3 rot{0.0, 0.0, 0.0};
  double gripper_width = 0.0;
};

/// A named slice of a trajectory: instruction plus inclusive [start, end]
/// step indices.
struct Subtask {
  std::string instruction;
  int start = 0;
  int end = 0;
};

/// Ordered subtasks tiling a trajectory, plus any repair warnings emitted
/// while the plan was built.
struct SubtaskPlan {
  std::vector<Subtask> subtasks;
  std::vector<std::string> warnings;
};

/// Recorded execution: states.size() == executed.size() + 1, and states[i+1]
/// is apply_step(states[i], executed[i]).  subtask_index_per_step optionally
/// tags each executed step with the subtask that was active.
struct TrajectoryLog {
  std::vector<RobotState> states;
  std::vector<ActionStep> executed;
  std::optional<std::vector<int>> subtask_index_per_step;

  std::size_t size() const { return executed.size(); }
};

// ==========================================================================
// ops
// ==========================================================================

bool is_finite(const ActionStep& s);
bool is_finite(const RobotState& s);

/// Successor state: pos += dpos, rot wrapped per component,
/// gripper_width = (gripper >= 0.5) ? 1 : 0.  Throws std::invalid_argument
/// on non-finite input.
RobotState apply_step(const RobotState& state, const ActionStep& step);

/// Motion inverse: negated dpos/drot.  gripper, stop and progress are kept
/// as metadata; reverse execution decides the gripper command separately.
ActionStep reverse_step(const ActionStep& step);

/// States after each step of the chunk, starting from `state` (the start
/// state itself is not included; result.size() == chunk.steps.size()).
std::vector<RobotState> integrate_chunk(const RobotState& state, const ActionChunk& chunk);

/// Structural + numeric consistency of a log.  Pose consistency is checked
/// to 1e-9 per component.  With check_gripper = false the gripper_width
/// column is exempt from the apply_step consistency check (continuous
/// sensors in ingested logs); lengths and finiteness are always enforced.
/// Throws std::invalid_argument with a description on the first violation.
void validate_log(const TrajectoryLog& log, bool check_gripper = true);

/// Check that plan subtasks tile [0, total_steps): start_0 == 0, each
/// start is previous end + 1, last end == total_steps - 1, all nonempty.
/// Throws std::invalid_argument on violation.
void validate_tiling(const SubtaskPlan& plan, std::size_t total_steps);

}  // namespace cyclevla::core
