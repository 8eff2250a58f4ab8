#pragma once

/**
 * Demonstration decomposition: turn a raw trajectory log into per-step
 * movement primitives, gripper action segments, subtask boundaries, and
 * finally a step-labeled training dataset.
 *
 * Pipeline (each stage is independently callable and tested):
 *
 *   extract_primitives   sliding-window state differences -> word labels
 *   optimize_trans_threshold  grid search that minimizes label pathologies
 *   detect_gripper_segments   multi-threshold voting -> close/open/idle runs
 *   filter_idle_segments      debounce idle runs between consistent flanks
 *   align_subtasks            segments (or a boundary oracle) -> SubtaskPlan
 *   emit_dataset              plan + log -> 9-dim step targets
 *
 * Axis vocabulary: +x forward / -x backward, +y left / -y right,
 * +z up / -z down; pitch = "tilt" (+ up), yaw = "rotate"
 * (+ counterclockwise); roll has no word and is ignored.  The gripper
 * width convention is 1 = closed, so a positive width delta reads as
 * "close gripper" (label -1) and a negative one as "open gripper" (+1).
 */

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cyclevla/core.hpp"

namespace cyclevla::segmenter {

struct Thresholds {
  double trans = 0.02;   // meters over the window
  double rot = 0.0075;   // radians over the window
  double grip = 0.03;    // width fraction over the window
};

inline constexpr int kDefaultWindow = 4;
inline constexpr int kMaxPrimitiveLen = 100;

/// Per-step movement description; each component is -1, 0 or +1.
struct MovementLabel {
  int trans_x = 0;  // +forward / -backward
  int trans_y = 0;  // +left / -right
  int trans_z = 0;  // +up / -down
  int tilt = 0;     // pitch: +up / -down
  int rotate = 0;   // yaw: +counterclockwise / -clockwise
  int grip = 0;     // -1 close / +1 open

  bool is_stop() const {
    return trans_x == 0 && trans_y == 0 && trans_z == 0 && tilt == 0 && rotate == 0 &&
           grip == 0;
  }
  bool has_translation() const { return trans_x != 0 || trans_y != 0 || trans_z != 0; }
  bool operator==(const MovementLabel&) const = default;
};

/// "move forward left, tilt up, rotate clockwise, close gripper" or "stop".
std::string label_to_string(const MovementLabel& label);

/// Maximal run of steps sharing one gripper action; label -1 close,
/// 0 idle, +1 open.  Segments returned by detection tile [0, steps).
struct GripperSegment {
  int start = 0;
  int end = 0;  // inclusive
  int label = 0;
  int length() const { return end - start + 1; }
  bool operator==(const GripperSegment&) const = default;
};

struct DatasetRecord {
  int step = 0;  // observation reference: index into the source log
  core::ActionStep target;
  std::string instruction;
  double weight = 1.0;
};

struct LabeledDataset {
  std::vector<DatasetRecord> records;
};

struct DownsampledPrimitives {
  std::vector<MovementLabel> labels;
  int stride = 1;
  int original_len = 0;

  /// Map a downsampled boundary back to an original step index.
  int project(int ds_index) const;
};

/// Boundary oracle callback: given subtask instructions and the downsampled
/// primitive strings, return one inclusive [start, end] index range per
/// subtask, in downsampled index space.  Throwing signals oracle failure.
using BoundaryOracleFn = std::function<std::vector<std::array<int, 2>>(
    const std::vector<std::string>& subtasks, const std::vector<std::string>& primitives)>;

// ==========================================================================
// ingest conversions
// ==========================================================================

/// Two finger positions -> width fraction in [0, 1] of the 0.04 m span.
double normalize_gripper(double finger1, double finger2);

/// Axis-angle (direction * angle) -> roll/pitch/yaw Euler angles.
core::Vec3 axis_angle_to_euler(const core::Vec3& axis_angle);

// ==========================================================================
// pipeline stages
// ==========================================================================

/// One label per executed step.  label[t] compares states[t + window] with
/// states[t]; the final steps where that window runs past the end reuse the
/// last computable label.  Requires log.size() > window.
std::vector<MovementLabel> extract_primitives(const core::TrajectoryLog& log,
                                              const Thresholds& th,
                                              int window = kDefaultWindow);

/// Grid search over 50 equally spaced translation thresholds spanning
/// [trans - 0.01, trans + 0.01] (clamped below at 1e-4), scoring
/// 1.0 * (steps labeled with both translation and gripper words)
/// + 2.5 * (steps labeled stop).  Ties prefer the value closest to the
/// initial threshold, then the smaller value.  Only `trans` changes.
Thresholds optimize_trans_threshold(const core::TrajectoryLog& log, const Thresholds& init,
                                    int window = kDefaultWindow);

/// Width deltas voted at thresholds {0.028, 0.030, 0.032}; the mean vote is
/// rounded half away from zero to a single label per step, then merged into
/// maximal runs.
std::vector<GripperSegment> detect_gripper_segments(const core::TrajectoryLog& log,
                                                    int window = kDefaultWindow);

/// Remove idle runs flanked by same-label non-idle segments whose combined
/// length exceeds the idle run's; merge left-to-right until fixpoint.
/// Total covered length never changes.
std::vector<GripperSegment> filter_idle_segments(std::vector<GripperSegment> segments);

/// Identity when len <= max_len, else stride ceil(len / max_len) keeping
/// indices 0, stride, 2*stride, ...
DownsampledPrimitives downsample_primitives(const std::vector<MovementLabel>& labels,
                                            int max_len = kMaxPrimitiveLen);

/// Subtask count == segment count: subtask k takes segment k's range.
/// Otherwise the boundary oracle is consulted over downsampled primitives
/// and its ranges are validated (gaps are an error; overlaps are repaired
/// by clamping to the midpoint, recorded as a warning) and projected back.
/// Oracle failure is rethrown as std::runtime_error("subtask alignment
/// unavailable: ...").
core::SubtaskPlan align_subtasks(const std::vector<std::string>& subtasks,
                                 const std::vector<GripperSegment>& segments,
                                 const core::TrajectoryLog& log,
                                 const BoundaryOracleFn& boundary_oracle,
                                 const Thresholds& th = Thresholds{},
                                 int window = kDefaultWindow,
                                 int max_primitive_len = kMaxPrimitiveLen);

/// Step targets for training: per subtask span, the executed deltas plus
/// gripper command, stop = 1 on the final step only, progress floored to
/// the 0.1 grid with the final step forced to 1.0 and weighted 8x.
LabeledDataset emit_dataset(const core::SubtaskPlan& plan, const core::TrajectoryLog& log);

/// Convenience pipeline: optimize thresholds, detect + filter gripper
/// segments, align, and return the plan (warnings preserved).
core::SubtaskPlan decompose_log(const core::TrajectoryLog& log,
                                const std::vector<std::string>& subtasks,
                                const BoundaryOracleFn& boundary_oracle,
                                const Thresholds& init = Thresholds{},
                                int window = kDefaultWindow,
                                int max_primitive_len = kMaxPrimitiveLen);

}  // namespace cyclevla::segmenter
