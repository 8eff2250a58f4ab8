#pragma once

/**
 * JSON (de)serialization for the public types, plus JSONL file helpers.
 *
 * All emission goes through nlohmann::ordered_json so that key order (and
 * therefore the serialized bytes) is stable across runs.  Doubles are
 * written with the library's shortest-round-trip formatter; parsing is
 * exact, so write -> read -> write is a fixed point.
 */

#include <string>
#include <vector>

#include "json.hpp"

#include "cyclevla/core.hpp"
#include "cyclevla/sim.hpp"

namespace cyclevla::io {

using Json = nlohmann::ordered_json;

// --- core ---------------------------------------------------------------

Json to_json(const core::ActionStep& s);
Json to_json(const core::ActionChunk& c);
Json to_json(const core::RobotState& s);
Json to_json(const core::Subtask& s);
Json to_json(const core::SubtaskPlan& p);
Json to_json(const core::TrajectoryLog& log);

core::ActionStep action_step_from_json(const Json& j);
core::ActionChunk action_chunk_from_json(const Json& j);
core::RobotState robot_state_from_json(const Json& j);
core::Subtask subtask_from_json(const Json& j);
core::SubtaskPlan subtask_plan_from_json(const Json& j);
core::TrajectoryLog trajectory_log_from_json(const Json& j);

// --- sim -------------------------------------------------------------------

Json to_json(const sim::WorldState& w);
Json to_json(const sim::TaskScript& s);
Json to_json(const sim::MockPolicyConfig& c);
Json to_json(const sim::Scenario& s);

/// Readers accept terse hand-written bundles: absent fields keep the struct
/// defaults, so a scenario line only has to spell out what it overrides.
sim::WorldState world_state_from_json(const Json& j);
sim::TaskScript task_script_from_json(const Json& j);
sim::MockPolicyConfig policy_config_from_json(const Json& j);
sim::Scenario scenario_from_json(const Json& j);

// --- files ---------------------------------------------------------------

/// Parse one JSON value per non-empty line.  Throws std::runtime_error with
/// the offending line number on malformed input.
std::vector<Json> read_jsonl(const std::string& path);

/// Write one compact JSON value per line.
void write_jsonl(const std::string& path, const std::vector<Json>& rows);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace cyclevla::io
