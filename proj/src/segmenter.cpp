#include "cyclevla/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cyclevla::segmenter {

namespace {

int threshold_sign(double delta, double threshold) {
  if (delta > threshold) return 1;
  if (delta < -threshold) return -1;
  return 0;
}

// Window delta between states[t + window] and states[t]; assumes bounds
// were checked by the caller.
MovementLabel window_label(const core::TrajectoryLog& log, int t, int window,
                           const Thresholds& th) {
  const core::RobotState& a = log.states[static_cast<std::size_t>(t)];
  const core::RobotState& b = log.states[static_cast<std::size_t>(t + window)];
  MovementLabel out;
  out.trans_x = threshold_sign(b.pos[0] - a.pos[0], th.trans);
  out.trans_y = threshold_sign(b.pos[1] - a.pos[1], th.trans);
  out.trans_z = threshold_sign(b.pos[2] - a.pos[2], th.trans);
  out.tilt = threshold_sign(core::circle_diff(b.rot[1], a.rot[1]), th.rot);
  out.rotate = threshold_sign(core::circle_diff(b.rot[2], a.rot[2]), th.rot);
  // width grows toward 1 = closed, so a positive delta is a close (-1).
  out.grip = -threshold_sign(b.gripper_width - a.gripper_width, th.grip);
  return out;
}

void check_window(const core::TrajectoryLog& log, int window) {
  if (window < 1) throw std::invalid_argument("segmenter: window must be >= 1");
  if (log.states.size() != log.size() + 1)
    throw std::invalid_argument("segmenter: log.states must have size()+1 entries");
  if (log.size() < static_cast<std::size_t>(window) + 1)
    throw std::invalid_argument("segmenter: log too short for the labeling window");
}

int round_half_away(double v) {
  return static_cast<int>(v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5));
}

}  // namespace

// ==========================================================================
// label formatting
// ==========================================================================

std::string label_to_string(const MovementLabel& label) {
  std::vector<std::string> parts;
  if (label.has_translation()) {
    std::string move = "move";
    if (label.trans_x != 0) move += label.trans_x > 0 ? " forward" : " backward";
    if (label.trans_y != 0) move += label.trans_y > 0 ? " left" : " right";
    if (label.trans_z != 0) move += label.trans_z > 0 ? " up" : " down";
    parts.push_back(move);
  }
  if (label.tilt != 0) parts.push_back(label.tilt > 0 ? "tilt up" : "tilt down");
  if (label.rotate != 0)
    parts.push_back(label.rotate > 0 ? "rotate counterclockwise" : "rotate clockwise");
  if (label.grip != 0) parts.push_back(label.grip < 0 ? "close gripper" : "open gripper");
  if (parts.empty()) return "stop";
  std::string out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out += ", " + parts[i];
  return out;
}

// ==========================================================================
// ingest conversions
// ==========================================================================

double normalize_gripper(double finger1, double finger2) {
  if (!std::isfinite(finger1) || !std::isfinite(finger2))
    throw std::invalid_argument("normalize_gripper: non-finite finger position");
  return std::clamp(std::abs(finger1 - finger2) / 0.04, 0.0, 1.0);
}

core::Vec3 axis_angle_to_euler(const core::Vec3& aa) {
  const double angle = core::norm(aa);
  if (angle < 1e-12) return {0.0, 0.0, 0.0};
  const double x = aa[0] / angle, y = aa[1] / angle, z = aa[2] / angle;
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  // Rotation matrix from Rodrigues, then ZYX (yaw-pitch-roll) extraction.
  const double r00 = t * x * x + c;
  const double r10 = t * x * y + s * z;
  const double r20 = t * x * z - s * y;
  const double r21 = t * y * z + s * x;
  const double r22 = t * z * z + c;
  const double pitch = std::asin(std::clamp(-r20, -1.0, 1.0));
  double roll, yaw;
  if (std::abs(r20) < 1.0 - 1e-9) {
    roll = std::atan2(r21, r22);
    yaw = std::atan2(r10, r00);
  } else {
    // Gimbal lock (pitch = +-pi/2): yaw is unrecoverable, fold it into roll.
    const double r01 = t * x * y - s * z;
    const double r02 = t * x * z + s * y;
    yaw = 0.0;
    roll = (r20 < 0.0) ? std::atan2(r01, r02) : std::atan2(-r01, -r02);
  }
  return {core::wrap_angle(roll), core::wrap_angle(pitch), core::wrap_angle(yaw)};
}

// ==========================================================================
// primitives
// ==========================================================================

std::vector<MovementLabel> extract_primitives(const core::TrajectoryLog& log,
                                              const Thresholds& th, int window) {
  check_window(log, window);
  const int steps = static_cast<int>(log.size());
  const int last_computable = steps - window;  // states[t + window] exists up to here
  std::vector<MovementLabel> labels(static_cast<std::size_t>(steps));
  for (int t = 0; t <= last_computable; ++t)
    labels[static_cast<std::size_t>(t)] = window_label(log, t, window, th);
  for (int t = last_computable + 1; t < steps; ++t)
    labels[static_cast<std::size_t>(t)] = labels[static_cast<std::size_t>(last_computable)];
  return labels;
}

Thresholds optimize_trans_threshold(const core::TrajectoryLog& log, const Thresholds& init,
                                    int window) {
  check_window(log, window);
  constexpr int kGridPoints = 50;
  constexpr double kSpan = 0.01;
  constexpr double kFloor = 1e-4;

  double best_value = init.trans;
  double best_score = 0.0;
  double best_dist = 0.0;
  bool first = true;
  for (int i = 0; i < kGridPoints; ++i) {
    const double raw =
        (init.trans - kSpan) + (2.0 * kSpan) * static_cast<double>(i) / (kGridPoints - 1);
    const double value = std::max(raw, kFloor);
    Thresholds th = init;
    th.trans = value;
    const auto labels = extract_primitives(log, th, window);
    int overlaps = 0;
    int stops = 0;
    for (const auto& l : labels) {
      if (l.has_translation() && l.grip != 0) ++overlaps;
      if (l.is_stop()) ++stops;
    }
    const double score = 1.0 * overlaps + 2.5 * stops;
    const double dist = std::abs(value - init.trans);
    const bool better =
        first || score < best_score ||
        (score == best_score && (dist < best_dist || (dist == best_dist && value < best_value)));
    if (better) {
      best_value = value;
      best_score = score;
      best_dist = dist;
      first = false;
    }
  }
  Thresholds out = init;
  out.trans = best_value;
  return out;
}

// ==========================================================================
// gripper segments
// ==========================================================================

std::vector<GripperSegment> detect_gripper_segments(const core::TrajectoryLog& log,
                                                    int window) {
  check_window(log, window);
  constexpr std::array<double, 3> kVoteThresholds{0.028, 0.030, 0.032};
  const int steps = static_cast<int>(log.size());
  const int last_computable = steps - window;

  std::vector<int> per_step(static_cast<std::size_t>(steps), 0);
  for (int t = 0; t <= last_computable; ++t) {
    const double delta = log.states[static_cast<std::size_t>(t + window)].gripper_width -
                         log.states[static_cast<std::size_t>(t)].gripper_width;
    double sum = 0.0;
    for (double th : kVoteThresholds) sum += threshold_sign(delta, th);
    // width delta sign -> action label: closing (positive) is -1.
    per_step[static_cast<std::size_t>(t)] = -round_half_away(sum / 3.0);
  }
  for (int t = last_computable + 1; t < steps; ++t)
    per_step[static_cast<std::size_t>(t)] = per_step[static_cast<std::size_t>(last_computable)];

  std::vector<GripperSegment> segments;
  for (int t = 0; t < steps; ++t) {
    if (!segments.empty() && segments.back().label == per_step[static_cast<std::size_t>(t)]) {
      segments.back().end = t;
    } else {
      segments.push_back(GripperSegment{t, t, per_step[static_cast<std::size_t>(t)]});
    }
  }
  return segments;
}

std::vector<GripperSegment> filter_idle_segments(std::vector<GripperSegment> segments) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 1; i + 1 < segments.size(); ++i) {
      const GripperSegment& left = segments[i - 1];
      const GripperSegment& mid = segments[i];
      const GripperSegment& right = segments[i + 1];
      if (mid.label != 0 || left.label == 0 || left.label != right.label) continue;
      if (left.length() + right.length() <= mid.length()) continue;
      GripperSegment merged{left.start, right.end, left.label};
      segments[i - 1] = merged;
      segments.erase(segments.begin() + static_cast<std::ptrdiff_t>(i),
                     segments.begin() + static_cast<std::ptrdiff_t>(i + 2));
      changed = true;
      break;  // restart the scan from the left
    }
  }
  return segments;
}

// ==========================================================================
// downsampling + alignment
// ==========================================================================

int DownsampledPrimitives::project(int ds_index) const {
  const long long raw = static_cast<long long>(ds_index) * stride;
  const long long hi = static_cast<long long>(original_len) - 1;
  return static_cast<int>(std::clamp(raw, 0LL, hi));
}

DownsampledPrimitives downsample_primitives(const std::vector<MovementLabel>& labels,
                                            int max_len) {
  if (max_len < 1) throw std::invalid_argument("downsample_primitives: max_len must be >= 1");
  DownsampledPrimitives out;
  out.original_len = static_cast<int>(labels.size());
  if (out.original_len <= max_len) {
    out.stride = 1;
    out.labels = labels;
    return out;
  }
  out.stride = (out.original_len + max_len - 1) / max_len;
  for (int i = 0; i < out.original_len; i += out.stride)
    out.labels.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

namespace {

core::SubtaskPlan plan_from_ranges(const std::vector<std::string>& subtasks,
                                   const std::vector<std::array<int, 2>>& spans) {
  core::SubtaskPlan plan;
  for (std::size_t k = 0; k < subtasks.size(); ++k)
    plan.subtasks.push_back(core::Subtask{subtasks[k], spans[k][0], spans[k][1]});
  return plan;
}

}  // namespace

core::SubtaskPlan align_subtasks(const std::vector<std::string>& subtasks,
                                 const std::vector<GripperSegment>& segments,
                                 const core::TrajectoryLog& log,
                                 const BoundaryOracleFn& boundary_oracle, const Thresholds& th,
                                 int window, int max_primitive_len) {
  if (subtasks.empty()) throw std::invalid_argument("align_subtasks: no subtasks");
  const int steps = static_cast<int>(log.size());

  if (subtasks.size() == segments.size()) {
    std::vector<std::array<int, 2>> spans;
    for (const auto& seg : segments) spans.push_back({seg.start, seg.end});
    core::SubtaskPlan plan = plan_from_ranges(subtasks, spans);
    core::validate_tiling(plan, log.size());
    return plan;
  }

  // Counts disagree: ask the boundary oracle over downsampled primitives.
  if (!boundary_oracle)
    throw std::runtime_error(
        "subtask alignment unavailable: segment/subtask count mismatch and no boundary "
        "oracle configured");
  const auto labels = extract_primitives(log, th, window);
  const auto ds = downsample_primitives(labels, max_primitive_len);
  std::vector<std::string> primitive_strings;
  primitive_strings.reserve(ds.labels.size());
  for (const auto& l : ds.labels) primitive_strings.push_back(label_to_string(l));

  std::vector<std::array<int, 2>> ranges;
  try {
    ranges = boundary_oracle(subtasks, primitive_strings);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("subtask alignment unavailable: ") + e.what());
  }

  const int ds_len = static_cast<int>(ds.labels.size());
  if (ranges.size() != subtasks.size())
    throw std::runtime_error("subtask alignment unavailable: oracle returned " +
                             std::to_string(ranges.size()) + " ranges for " +
                             std::to_string(subtasks.size()) + " subtasks");
  for (const auto& r : ranges)
    if (r[0] > r[1] || r[0] < 0 || r[1] >= ds_len)
      throw std::runtime_error("subtask alignment unavailable: oracle range [" +
                               std::to_string(r[0]) + ", " + std::to_string(r[1]) +
                               "] is invalid for " + std::to_string(ds_len) + " primitives");

  // Repair overlaps (midpoint split, warn); reject gaps outright.
  std::vector<std::string> warnings;
  for (std::size_t k = 0; k + 1 < ranges.size(); ++k) {
    const int end = ranges[k][1];
    const int next_start = ranges[k + 1][0];
    if (next_start > end + 1)
      throw std::runtime_error("subtask alignment unavailable: gap between subtask " +
                               std::to_string(k) + " and " + std::to_string(k + 1));
    if (next_start <= end) {
      const int mid = (next_start + end) / 2;
      const int new_end = std::clamp(mid, ranges[k][0], ranges[k + 1][1] - 1);
      warnings.push_back("overlap between subtask " + std::to_string(k) + " and " +
                         std::to_string(k + 1) + " repaired at primitive " +
                         std::to_string(new_end));
      ranges[k][1] = new_end;
      ranges[k + 1][0] = new_end + 1;
    }
  }

  // Project interior cuts back to step indices; outer endpoints pin to the
  // full trajectory regardless of what the oracle said.
  std::vector<std::array<int, 2>> spans(subtasks.size());
  spans.front()[0] = 0;
  spans.back()[1] = steps - 1;
  for (std::size_t k = 1; k < subtasks.size(); ++k) {
    const int cut = ds.project(ranges[k][0]);
    spans[k][0] = cut;
    spans[k - 1][1] = cut - 1;
  }
  for (std::size_t k = 0; k + 1 < subtasks.size(); ++k)
    if (spans[k][1] < spans[k][0])
      throw std::runtime_error(
          "subtask alignment unavailable: projected boundaries collapse subtask " +
          std::to_string(k));

  core::SubtaskPlan plan = plan_from_ranges(subtasks, spans);
  plan.warnings = std::move(warnings);
  core::validate_tiling(plan, log.size());
  return plan;
}

// ==========================================================================
// dataset emission
// ==========================================================================

LabeledDataset emit_dataset(const core::SubtaskPlan& plan, const core::TrajectoryLog& log) {
  core::validate_tiling(plan, log.size());
  LabeledDataset out;
  out.records.reserve(log.size());
  for (const auto& sub : plan.subtasks) {
    const int span = sub.end - sub.start + 1;
    for (int t = sub.start; t <= sub.end; ++t) {
      DatasetRecord rec;
      rec.step = t;
      rec.target = log.executed[static_cast<std::size_t>(t)];
      rec.instruction = sub.instruction;
      if (t == sub.end) {
        rec.target.stop = 1.0;
        rec.target.progress = 1.0;
        rec.weight = 8.0;
      } else {
        rec.target.stop = 0.0;
        rec.target.progress =
            std::floor(10.0 * static_cast<double>(t - sub.start) / static_cast<double>(span)) /
            10.0;
        rec.weight = 1.0;
      }
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

core::SubtaskPlan decompose_log(const core::TrajectoryLog& log,
                                const std::vector<std::string>& subtasks,
                                const BoundaryOracleFn& boundary_oracle, const Thresholds& init,
                                int window, int max_primitive_len) {
  core::validate_log(log, /*check_gripper=*/false);
  const Thresholds tuned = optimize_trans_threshold(log, init, window);
  const auto segments = filter_idle_segments(detect_gripper_segments(log, window));
  return align_subtasks(subtasks, segments, log, boundary_oracle, tuned, window,
                        max_primitive_len);
}

}  // namespace cyclevla::segmenter
