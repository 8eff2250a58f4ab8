#include "cyclevla/core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cyclevla::core {

double norm(const Vec3& a) {
  return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

double dist(const Vec3& a, const Vec3& b) { return norm(sub(a, b)); }

double wrap_angle(double a) {
  // fmod lands in (-2pi, 2pi); shift into (0, 2pi] then back.
  double y = std::fmod(a + kPi, 2.0 * kPi);
  if (y <= 0.0) y += 2.0 * kPi;
  return y - kPi;
}

double circle_diff(double a, double b) { return wrap_angle(a - b); }

bool is_finite(const ActionStep& s) {
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(s.dpos[i]) || !std::isfinite(s.drot[i])) return false;
  }
  return std::isfinite(s.gripper) && std::isfinite(s.stop) && std::isfinite(s.progress);
}

bool is_finite(const RobotState& s) {
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(s.pos[i]) || !std::isfinite(s.rot[i])) return false;
  }
  return std::isfinite(s.gripper_width);
}

RobotState apply_step(const RobotState& state, const ActionStep& step) {
  if (!is_finite(state)) throw std::invalid_argument("apply_step: non-finite state");
  if (!is_finite(step)) throw std::invalid_argument("apply_step: non-finite step");
  RobotState out;
  out.pos = add(state.pos, step.dpos);
  for (int i = 0; i < 3; ++i) out.rot[i] = wrap_angle(state.rot[i] + step.drot[i]);
  out.gripper_width = (step.gripper >= 0.5) ? 1.0 : 0.0;
  return out;
}

ActionStep reverse_step(const ActionStep& step) {
  ActionStep out = step;
  out.dpos = scale(step.dpos, -1.0);
  out.drot = scale(step.drot, -1.0);
  return out;
}

std::vector<RobotState> integrate_chunk(const RobotState& state, const ActionChunk& chunk) {
  std::vector<RobotState> out;
  out.reserve(chunk.steps.size());
  RobotState cur = state;
  for (const ActionStep& step : chunk.steps) {
    cur = apply_step(cur, step);
    out.push_back(cur);
  }
  return out;
}

void validate_log(const TrajectoryLog& log, bool check_gripper) {
  if (log.states.size() != log.executed.size() + 1) {
    throw std::invalid_argument("trajectory log: states.size() must be executed.size() + 1, got " +
                                std::to_string(log.states.size()) + " vs " +
                                std::to_string(log.executed.size()));
  }
  if (log.subtask_index_per_step &&
      log.subtask_index_per_step->size() != log.executed.size()) {
    throw std::invalid_argument("trajectory log: subtask index column length mismatch");
  }
  for (const RobotState& s : log.states) {
    if (!is_finite(s)) throw std::invalid_argument("trajectory log: non-finite state");
  }
  constexpr double kTol = 1e-9;
  for (std::size_t i = 0; i < log.executed.size(); ++i) {
    const RobotState next = apply_step(log.states[i], log.executed[i]);
    const RobotState& ref = log.states[i + 1];
    for (int c = 0; c < 3; ++c) {
      if (std::abs(next.pos[c] - ref.pos[c]) > kTol ||
          std::abs(circle_diff(next.rot[c], ref.rot[c])) > kTol) {
        throw std::invalid_argument("trajectory log: step " + std::to_string(i) +
                                    " is inconsistent with recorded states");
      }
    }
    if (check_gripper && std::abs(next.gripper_width - ref.gripper_width) > kTol) {
      throw std::invalid_argument("trajectory log: step " + std::to_string(i) +
                                  " gripper width inconsistent with command");
    }
  }
}

void validate_tiling(const SubtaskPlan& plan, std::size_t total_steps) {
  if (plan.subtasks.empty()) throw std::invalid_argument("subtask plan: empty");
  int expected_start = 0;
  for (std::size_t k = 0; k < plan.subtasks.size(); ++k) {
    const Subtask& s = plan.subtasks[k];
    if (s.start != expected_start) {
      throw std::invalid_argument("subtask plan: subtask " + std::to_string(k) +
                                  " starts at " + std::to_string(s.start) + ", expected " +
                                  std::to_string(expected_start));
    }
    if (s.end < s.start) {
      throw std::invalid_argument("subtask plan: subtask " + std::to_string(k) + " is empty");
    }
    expected_start = s.end + 1;
  }
  if (expected_start != static_cast<int>(total_steps)) {
    throw std::invalid_argument("subtask plan: covers " + std::to_string(expected_start) +
                                " steps, trajectory has " + std::to_string(total_steps));
  }
}

}  // namespace cyclevla::core
