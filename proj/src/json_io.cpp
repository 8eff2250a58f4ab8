#include "cyclevla/json_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cyclevla::io {

namespace {

Json vec3_to_json(const core::Vec3& v) { return Json::array({v[0], v[1], v[2]}); }

core::Vec3 vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Json to_json(const core::ActionStep& s) {
  Json j;
  j["dpos"] = vec3_to_json(s.dpos);
  j["drot"] = vec3_to_json(s.drot);
  j["gripper"] = s.gripper;
  j["stop"] = s.stop;
  j["progress"] = s.progress;
  return j;
}

core::ActionStep action_step_from_json(const Json& j) {
  core::ActionStep s;
  s.dpos = vec3_from_json(j.at("dpos"));
  s.drot = vec3_from_json(j.at("drot"));
  s.gripper = j.at("gripper").get<double>();
  s.stop = j.at("stop").get<double>();
  s.progress = j.at("progress").get<double>();
  return s;
}

Json to_json(const core::ActionChunk& c) {
  Json steps = Json::array();
  for (const auto& s : c.steps) steps.push_back(to_json(s));
  Json j;
  j["steps"] = std::move(steps);
  j["origin_seed"] = c.origin_seed;
  return j;
}

core::ActionChunk action_chunk_from_json(const Json& j) {
  core::ActionChunk c;
  for (const auto& s : j.at("steps")) c.steps.push_back(action_step_from_json(s));
  c.origin_seed = j.value("origin_seed", std::uint64_t{0});
  return c;
}

Json to_json(const core::RobotState& s) {
  Json j;
  j["pos"] = vec3_to_json(s.pos);
  j["rot"] = vec3_to_json(s.rot);
  j["gripper_width"] = s.gripper_width;
  return j;
}

core::RobotState robot_state_from_json(const Json& j) {
  core::RobotState s;
  s.pos = vec3_from_json(j.at("pos"));
  s.rot = vec3_from_json(j.at("rot"));
  s.gripper_width = j.at("gripper_width").get<double>();
  return s;
}

Json to_json(const core::Subtask& s) {
  Json j;
  j["instruction"] = s.instruction;
  j["start"] = s.start;
  j["end"] = s.end;
  return j;
}

core::Subtask subtask_from_json(const Json& j) {
  core::Subtask s;
  s.instruction = j.at("instruction").get<std::string>();
  s.start = j.at("start").get<int>();
  s.end = j.at("end").get<int>();
  return s;
}

Json to_json(const core::SubtaskPlan& p) {
  Json subtasks = Json::array();
  for (const auto& s : p.subtasks) subtasks.push_back(to_json(s));
  Json j;
  j["subtasks"] = std::move(subtasks);
  j["warnings"] = p.warnings;
  return j;
}

core::SubtaskPlan subtask_plan_from_json(const Json& j) {
  core::SubtaskPlan p;
  for (const auto& s : j.at("subtasks")) p.subtasks.push_back(subtask_from_json(s));
  if (j.contains("warnings")) p.warnings = j.at("warnings").get<std::vector<std::string>>();
  return p;
}

Json to_json(const core::TrajectoryLog& log) {
  Json states = Json::array();
  for (const auto& s : log.states) states.push_back(to_json(s));
  Json executed = Json::array();
  for (const auto& s : log.executed) executed.push_back(to_json(s));
  Json j;
  j["states"] = std::move(states);
  j["executed"] = std::move(executed);
  if (log.subtask_index_per_step) j["subtasks"] = *log.subtask_index_per_step;
  return j;
}

core::TrajectoryLog trajectory_log_from_json(const Json& j) {
  core::TrajectoryLog log;
  for (const auto& s : j.at("states")) log.states.push_back(robot_state_from_json(s));
  for (const auto& s : j.at("executed")) log.executed.push_back(action_step_from_json(s));
  if (j.contains("subtasks")) {
    log.subtask_index_per_step = j.at("subtasks").get<std::vector<int>>();
  }
  return log;
}

Json to_json(const sim::WorldState& w) {
  Json objects = Json::array();
  for (const auto& o : w.objects) {
    Json jo;
    jo["id"] = o.id;
    jo["pos"] = vec3_to_json(o.pos);
    jo["held"] = o.held;
    objects.push_back(std::move(jo));
  }
  Json targets;
  for (const auto& [id, region] : w.targets) {
    Json jr;
    jr["center"] = vec3_to_json(region.center);
    jr["radius"] = region.radius;
    targets[id] = std::move(jr);
  }
  Json j;
  j["gripper"] = to_json(w.gripper);
  j["objects"] = std::move(objects);
  j["targets"] = std::move(targets);
  j["rng_seed"] = w.rng_seed;
  j["grasp_radius"] = w.grasp_radius;
  j["box_min"] = vec3_to_json(w.box_min);
  j["box_max"] = vec3_to_json(w.box_max);
  j["progress_ref"] = w.progress_ref;
  return j;
}

sim::WorldState world_state_from_json(const Json& j) {
  sim::WorldState w;
  if (j.contains("gripper")) w.gripper = robot_state_from_json(j.at("gripper"));
  if (j.contains("objects")) {
    for (const auto& jo : j.at("objects")) {
      sim::SimObject o;
      o.id = jo.at("id").get<std::string>();
      o.pos = vec3_from_json(jo.at("pos"));
      o.held = jo.value("held", false);
      w.objects.push_back(std::move(o));
    }
  }
  if (j.contains("targets")) {
    for (const auto& [id, jr] : j.at("targets").items()) {
      sim::GoalRegion region;
      region.center = vec3_from_json(jr.at("center"));
      region.radius = jr.value("radius", region.radius);
      w.targets[id] = region;
    }
  }
  w.rng_seed = j.value("rng_seed", w.rng_seed);
  w.grasp_radius = j.value("grasp_radius", w.grasp_radius);
  if (j.contains("box_min")) w.box_min = vec3_from_json(j.at("box_min"));
  if (j.contains("box_max")) w.box_max = vec3_from_json(j.at("box_max"));
  if (j.contains("progress_ref"))
    w.progress_ref = j.at("progress_ref").get<std::vector<double>>();
  return w;
}

Json to_json(const sim::TaskScript& s) {
  Json subtasks = Json::array();
  for (const auto& st : s.subtasks) {
    Json js;
    js["instruction"] = st.instruction;
    js["kind"] = sim::kind_name(st.kind);
    js["object_id"] = st.object_id;
    js["target_id"] = st.target_id;
    subtasks.push_back(std::move(js));
  }
  Json j;
  j["instruction"] = s.instruction;
  j["subtasks"] = std::move(subtasks);
  j["grasp_radius"] = s.grasp_radius;
  j["reach_tolerance"] = s.reach_tolerance;
  j["transport_tolerance"] = s.transport_tolerance;
  j["mid_chunk_gain_fraction"] = s.mid_chunk_gain_fraction;
  return j;
}

sim::TaskScript task_script_from_json(const Json& j) {
  sim::TaskScript s;
  s.instruction = j.value("instruction", s.instruction);
  if (j.contains("subtasks")) {
    for (const auto& js : j.at("subtasks")) {
      sim::SubtaskSpec st;
      st.instruction = js.at("instruction").get<std::string>();
      st.kind = sim::kind_from_name(js.at("kind").get<std::string>());
      st.object_id = js.value("object_id", std::string());
      st.target_id = js.value("target_id", std::string());
      s.subtasks.push_back(std::move(st));
    }
  }
  s.grasp_radius = j.value("grasp_radius", s.grasp_radius);
  s.reach_tolerance = j.value("reach_tolerance", s.reach_tolerance);
  s.transport_tolerance = j.value("transport_tolerance", s.transport_tolerance);
  s.mid_chunk_gain_fraction = j.value("mid_chunk_gain_fraction", s.mid_chunk_gain_fraction);
  return s;
}

Json to_json(const sim::MockPolicyConfig& c) {
  Json j;
  j["noise_sigma"] = c.noise_sigma;
  j["p_fail"] = c.p_fail;
  j["failure_offset"] = c.failure_offset;
  j["progress_noise"] = c.progress_noise;
  j["seed"] = c.seed;
  j["chunk_size"] = c.chunk_size;
  j["step_len"] = c.step_len;
  return j;
}

sim::MockPolicyConfig policy_config_from_json(const Json& j) {
  sim::MockPolicyConfig c;
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.p_fail = j.value("p_fail", c.p_fail);
  c.failure_offset = j.value("failure_offset", c.failure_offset);
  c.progress_noise = j.value("progress_noise", c.progress_noise);
  c.seed = j.value("seed", c.seed);
  c.chunk_size = j.value("chunk_size", c.chunk_size);
  c.step_len = j.value("step_len", c.step_len);
  return c;
}

Json to_json(const sim::Scenario& s) {
  Json j;
  j["script"] = to_json(s.script);
  j["world"] = to_json(s.world);
  j["policy"] = to_json(s.policy);
  j["seed"] = s.seed;
  return j;
}

sim::Scenario scenario_from_json(const Json& j) {
  sim::Scenario s;
  s.script = task_script_from_json(j.at("script"));
  s.world = world_state_from_json(j.at("world"));
  if (j.contains("policy")) s.policy = policy_config_from_json(j.at("policy"));
  s.seed = j.value("seed", s.seed);
  return s;
}

std::vector<Json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::string& path, const std::vector<Json>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& row : rows) out << row.dump() << '\n';
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
}

}  // namespace cyclevla::io
