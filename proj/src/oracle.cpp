#include "cyclevla/oracle.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "cyclevla/json_io.hpp"
#include "cyclevla/rng.hpp"

namespace cyclevla::oracle {

using io::Json;

#include "prompt_templates.inc"

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void replace_token(std::string& text, const std::string& token, const std::string& value) {
  const std::size_t pos = text.find(token);
  if (pos == std::string::npos)
    throw std::logic_error("prompt template is missing token " + token);
  text.replace(pos, token.size(), value);
}

std::string join_subtask_list(const std::vector<std::string>& subtasks) {
  Json arr = Json::array();
  for (const auto& s : subtasks) arr.push_back(s);
  return arr.dump();
}

std::string format_meters(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::string kind_to_string(DecisionKind k) {
  return k == DecisionKind::kTransit ? "transit" : "backtrack";
}

DecisionKind kind_from_string(const std::string& s) {
  const std::string v = lower(trim(s));
  if (v == "transit") return DecisionKind::kTransit;
  if (v == "backtrack") return DecisionKind::kBacktrack;
  throw ParseError("decision type must be transit or backtrack, got '" + s + "'", s);
}

// ==========================================================================
// config
// ==========================================================================

OracleClientConfig decomposer_defaults() {
  OracleClientConfig cfg;
  cfg.model = "gpt-4.1";
  cfg.temperature = 0.2;
  return cfg;
}

OracleClientConfig planner_defaults() {
  OracleClientConfig cfg;
  cfg.model = "gpt-5.2";
  cfg.temperature = 1.0;
  return cfg;
}

void validate_config(const OracleClientConfig& cfg) {
  if (!(cfg.temperature >= 0.0 && cfg.temperature <= 2.0))
    throw std::invalid_argument("oracle config: temperature must be in [0, 2]");
  if (cfg.max_retries < 0)
    throw std::invalid_argument("oracle config: max_retries must be >= 0");
  if (cfg.timeout_sec <= 0.0)
    throw std::invalid_argument("oracle config: timeout must be positive");
  if (cfg.endpoint.empty()) throw std::invalid_argument("oracle config: empty endpoint");
  if (cfg.model.empty()) throw std::invalid_argument("oracle config: empty model");
}

// ==========================================================================
// rendering
// ==========================================================================

std::string render_subtask_prompt(const std::string& instruction) {
  if (trim(instruction).empty())
    throw std::invalid_argument("render_subtask_prompt: empty instruction");
  std::string out = kSubtaskProposalTemplate;
  replace_token(out, "{language_instruction}", instruction);
  return out;
}

std::string render_boundary_prompt(const std::string& instruction,
                                   const std::vector<std::string>& subtasks,
                                   const std::vector<std::string>& primitives) {
  if (trim(instruction).empty())
    throw std::invalid_argument("render_boundary_prompt: empty instruction");
  if (subtasks.empty()) throw std::invalid_argument("render_boundary_prompt: no subtasks");
  if (primitives.empty()) throw std::invalid_argument("render_boundary_prompt: no primitives");
  std::string features = "{";
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    if (i) features += ", ";
    features += std::to_string(i) + ": " + Json(primitives[i]).dump();
  }
  features += "}";
  std::string out = kBoundaryTemplate;
  replace_token(out, "{language_instruction}", instruction);
  replace_token(out, "{subtasks}", join_subtask_list(subtasks));
  replace_token(out, "{trajectory_features}", features);
  return out;
}

PlannerRequest render_planner_prompt(const std::string& instruction,
                                     const std::vector<std::string>& subtasks,
                                     const std::string& current,
                                     const std::vector<ImageRef>& views) {
  if (trim(instruction).empty())
    throw std::invalid_argument("render_planner_prompt: empty instruction");
  if (std::find(subtasks.begin(), subtasks.end(), current) == subtasks.end())
    throw std::invalid_argument("render_planner_prompt: current subtask '" + current +
                                "' is not in the subtask list");
  const ImageRef* front = nullptr;
  const ImageRef* wrist = nullptr;
  for (const auto& v : views) {
    if (v.tag == "FRONT" && !front) front = &v;
    else if (v.tag == "WRIST" && !wrist) wrist = &v;
    else throw std::invalid_argument("render_planner_prompt: unexpected view tag '" + v.tag + "'");
  }
  if (!front || !wrist || views.size() != 2)
    throw std::invalid_argument(
        "render_planner_prompt: exactly one FRONT and one WRIST view required");

  PlannerRequest req;
  req.prompt = kPlannerTemplate;
  replace_token(req.prompt, "{language_instruction}", instruction);
  replace_token(req.prompt, "{subtasks}", join_subtask_list(subtasks));
  replace_token(req.prompt, "{current_subtask}", current);
  req.front = *front;
  req.wrist = *wrist;
  return req;
}

// ==========================================================================
// planner response parsing
// ==========================================================================

namespace {

// Key prefix match at the start of a trimmed line; returns the value after
// the colon or nullopt.
std::optional<std::string> key_value(const std::string& line, const std::string& key) {
  if (lower(line.substr(0, key.size())) != key) return std::nullopt;
  std::size_t pos = key.size();
  // allow whitespace before the colon
  while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
  if (pos >= line.size() || line[pos] != ':') return std::nullopt;
  return trim(line.substr(pos + 1));
}

std::string strip_bullet(const std::string& line) {
  std::string t = trim(line);
  if (!t.empty() && t[0] == '-') t = trim(t.substr(1));
  return t;
}

bool is_fence(const std::string& line) { return trim(line).substr(0, 3) == "```"; }

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

}  // namespace

PlannerDecision parse_planner_response(const std::string& text,
                                       const std::vector<std::string>& subtasks,
                                       int current_index) {
  if (subtasks.empty()) throw std::invalid_argument("parse_planner_response: no subtasks");
  if (current_index < 0 || current_index >= static_cast<int>(subtasks.size()))
    throw std::invalid_argument("parse_planner_response: current index out of range");

  std::optional<std::string> next, kind_text, reason;
  std::vector<std::string> front, wrist;
  PlannerAssessment assessment;
  enum class Section { kNone, kReason, kFront, kWrist, kAssessment };
  Section section = Section::kNone;

  auto set_once = [&](std::optional<std::string>& slot, const std::string& value,
                      const char* name) {
    if (slot)
      throw ParseError(std::string("duplicate field '") + name + "' in planner response", text);
    slot = value;
  };

  for (const std::string& raw_line : split_lines(text)) {
    if (is_fence(raw_line)) continue;
    const std::string line = trim(raw_line);
    if (line.empty()) continue;

    if (auto v = key_value(line, "next_subtask")) {
      set_once(next, *v, "next_subtask");
      section = Section::kNone;
    } else if (auto v = key_value(line, "type")) {
      set_once(kind_text, *v, "type");
      section = Section::kNone;
    } else if (auto v = key_value(line, "reason")) {
      set_once(reason, *v, "reason");
      section = Section::kReason;
    } else if (key_value(line, "front_view_evidence")) {
      section = Section::kFront;
    } else if (key_value(line, "wrist_view_evidence")) {
      section = Section::kWrist;
    } else if (key_value(line, "assessment")) {
      section = Section::kAssessment;
    } else if (section == Section::kFront || section == Section::kWrist) {
      const std::string bullet = strip_bullet(line);
      if (!bullet.empty()) (section == Section::kFront ? front : wrist).push_back(bullet);
    } else if (section == Section::kAssessment) {
      const std::string entry = strip_bullet(line);
      if (auto v = key_value(entry, "success_likelihood")) assessment.success_likelihood = *v;
      else if (auto v2 = key_value(entry, "key_risks")) assessment.key_risks = *v2;
      else if (auto v3 = key_value(entry, "view_agreement")) assessment.view_agreement = *v3;
      else if (auto v4 = key_value(entry, "decision_basis")) assessment.decision_basis = *v4;
      // unknown assessment lines are ignored (models editorialize)
    } else if (section == Section::kReason && reason) {
      *reason += "\n" + line;
    }
    // anything else outside a section is commentary; skip it
  }

  if (!next || next->empty()) throw ParseError("missing field 'next_subtask'", text);
  if (!kind_text || kind_text->empty()) throw ParseError("missing field 'type'", text);
  if (!reason || reason->empty()) throw ParseError("missing field 'reason'", text);

  PlannerDecision d;
  d.next_subtask = *next;
  d.kind = kind_from_string(*kind_text);
  d.reason = *reason;
  d.front_evidence = std::move(front);
  d.wrist_evidence = std::move(wrist);
  d.assessment = std::move(assessment);

  const auto it = std::find(subtasks.begin(), subtasks.end(), d.next_subtask);
  if (it == subtasks.end())
    throw ParseError("next_subtask '" + d.next_subtask + "' is not in the subtask list", text);
  const int target = static_cast<int>(it - subtasks.begin());
  if (d.kind == DecisionKind::kTransit && target != current_index &&
      target != current_index + 1)
    throw ParseError("transit may only name the current or immediately following subtask",
                     text);
  if (d.kind == DecisionKind::kBacktrack && target > current_index)
    throw ParseError("backtrack may not name a later subtask", text);

  if (!d.assessment.success_likelihood.empty()) {
    const std::string v = lower(d.assessment.success_likelihood);
    if (v != "high" && v != "medium" && v != "low")
      throw ParseError("success_likelihood must be high, medium or low", text);
  }
  if (!d.assessment.view_agreement.empty()) {
    const std::string v = lower(d.assessment.view_agreement);
    if (v.substr(0, 5) != "agree" && v.substr(0, 7) != "partial" && v.substr(0, 8) != "disagree")
      throw ParseError("view_agreement must start with agree, partial or disagree", text);
  }
  return d;
}

std::string format_planner_decision(const PlannerDecision& d) {
  std::string out;
  out += "next_subtask: " + d.next_subtask + "\n";
  out += "type: " + kind_to_string(d.kind) + "\n";
  out += "reason: " + d.reason + "\n";
  if (!d.front_evidence.empty()) {
    out += "\nfront_view_evidence:\n";
    for (const auto& e : d.front_evidence) out += "  - " + e + "\n";
  }
  if (!d.wrist_evidence.empty()) {
    out += "\nwrist_view_evidence:\n";
    for (const auto& e : d.wrist_evidence) out += "  - " + e + "\n";
  }
  const PlannerAssessment& a = d.assessment;
  if (!a.success_likelihood.empty() || !a.key_risks.empty() || !a.view_agreement.empty() ||
      !a.decision_basis.empty()) {
    out += "\nassessment:\n";
    if (!a.success_likelihood.empty())
      out += "  - success_likelihood: " + a.success_likelihood + "\n";
    if (!a.key_risks.empty()) out += "  - key_risks: " + a.key_risks + "\n";
    if (!a.view_agreement.empty()) out += "  - view_agreement: " + a.view_agreement + "\n";
    if (!a.decision_basis.empty()) out += "  - decision_basis: " + a.decision_basis + "\n";
  }
  return out;
}

// ==========================================================================
// proposal + boundary parsing
// ==========================================================================

namespace {

// Scan a balanced bracket block starting at `open`, honoring double-quoted
// strings and backslash escapes.  Returns one past the closing bracket.
std::size_t scan_balanced(const std::string& text, std::size_t open, char open_c,
                          char close_c) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == open_c) ++depth;
    else if (c == close_c) {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string::npos;
}

// Case-insensitive find of `needle` in `haystack`.
std::size_t ifind(const std::string& haystack, const std::string& needle) {
  const std::string h = lower(haystack), n = lower(needle);
  return h.find(n);
}

std::string extract_reasoning(const std::string& text) {
  const std::size_t pos = ifind(text, "reasoning");
  if (pos == std::string::npos) return "";
  std::size_t colon = text.find(':', pos);
  if (colon == std::string::npos) return "";
  std::string v = trim(text.substr(colon + 1));
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  return v;
}

}  // namespace

SubtaskProposal parse_subtask_proposal(const std::string& text) {
  const std::size_t key = ifind(text, "subtasks");
  if (key == std::string::npos) throw ParseError("missing 'Subtasks' field", text);
  const std::size_t open = text.find('[', key);
  if (open == std::string::npos) throw ParseError("missing subtask list '['", text);
  const std::size_t end = scan_balanced(text, open, '[', ']');
  if (end == std::string::npos) throw ParseError("unterminated subtask list", text);

  Json arr;
  try {
    arr = Json::parse(text.substr(open, end - open));
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("subtask list is not valid JSON: ") + e.what(), text);
  }
  if (!arr.is_array() || arr.empty())
    throw ParseError("subtask list must be a nonempty array", text);

  SubtaskProposal out;
  for (const auto& item : arr) {
    if (!item.is_string() || item.get<std::string>().empty())
      throw ParseError("subtask entries must be nonempty strings", text);
    out.subtasks.push_back(item.get<std::string>());
  }
  out.reasoning = extract_reasoning(text.substr(end));
  return out;
}

BoundaryResponse parse_boundary_response(const std::string& text,
                                         const std::vector<std::string>& subtasks) {
  if (subtasks.empty()) throw std::invalid_argument("parse_boundary_response: no subtasks");
  const std::size_t key = ifind(text, "labeled_dict");
  if (key == std::string::npos) throw ParseError("missing 'Labeled_dict' field", text);
  const std::size_t open = text.find('{', key);
  if (open == std::string::npos) throw ParseError("missing '{' after Labeled_dict", text);
  const std::size_t end = scan_balanced(text, open, '{', '}');
  if (end == std::string::npos) throw ParseError("unterminated Labeled_dict", text);

  std::string fragment = text.substr(open, end - open);
  Json dict;
  try {
    dict = Json::parse(fragment);
  } catch (const Json::parse_error&) {
    // Python-style dicts show up often enough; try a quote swap.
    std::replace(fragment.begin(), fragment.end(), '\'', '"');
    try {
      dict = Json::parse(fragment);
    } catch (const Json::parse_error& e) {
      throw ParseError(std::string("Labeled_dict is not valid JSON: ") + e.what(), text);
    }
  }
  if (!dict.is_object()) throw ParseError("Labeled_dict must be an object", text);

  BoundaryResponse out;
  for (std::size_t i = 0; i < subtasks.size(); ++i) {
    const std::string positional = "subtask_" + std::to_string(i + 1);
    const Json* entry = nullptr;
    if (dict.contains(positional)) entry = &dict.at(positional);
    else if (dict.contains(subtasks[i])) entry = &dict.at(subtasks[i]);
    if (!entry)
      throw ParseError("Labeled_dict is missing an entry for subtask " + std::to_string(i + 1),
                       text);
    if (!entry->is_array() || entry->size() != 2 || !(*entry)[0].is_number_integer() ||
        !(*entry)[1].is_number_integer())
      throw ParseError("range for subtask " + std::to_string(i + 1) +
                           " must be [start_idx, end_idx]",
                       text);
    const int s = (*entry)[0].get<int>();
    const int e = (*entry)[1].get<int>();
    if (s < 0 || e < s)
      throw ParseError("range for subtask " + std::to_string(i + 1) + " is not ordered", text);
    out.ranges.push_back({s, e});
  }
  out.reasoning = extract_reasoning(text.substr(end));
  return out;
}

// ==========================================================================
// scripted substitutes
// ==========================================================================

namespace {

double done_tolerance(const sim::TaskScript& script, const sim::SubtaskSpec& spec,
                      const sim::WorldState& world) {
  switch (spec.kind) {
    case sim::SubtaskKind::kReach:
      return script.reach_tolerance;
    case sim::SubtaskKind::kGrasp:
      return script.grasp_radius;
    case sim::SubtaskKind::kTransport:
      return script.transport_tolerance;
    case sim::SubtaskKind::kRelease: {
      const auto it = world.targets.find(spec.target_id);
      return it != world.targets.end() ? it->second.radius : script.transport_tolerance;
    }
  }
  return script.transport_tolerance;
}

}  // namespace

PlannerDecision scripted_planner(const sim::WorldState& world, const sim::TaskScript& script,
                                 int current, const ScriptedPlannerConfig& cfg,
                                 std::uint64_t query_key) {
  const int num = static_cast<int>(script.subtasks.size());
  if (current < 0 || current >= num)
    throw std::invalid_argument("scripted_planner: current subtask out of range");

  // Earliest earlier subtask whose postcondition no longer holds.
  int violated = -1;
  for (int j = 0; j < current; ++j) {
    if (!sim::subtask_done(world, script, j)) {
      violated = j;
      break;
    }
  }

  const sim::SubtaskSpec& spec = script.subtasks[static_cast<std::size_t>(current)];
  const double dist = sim::goal_distance(world, script, current);
  const double tol = done_tolerance(script, spec, world);
  double ref = 0.05;
  if (current < static_cast<int>(world.progress_ref.size()) &&
      world.progress_ref[static_cast<std::size_t>(current)] > 0.0)
    ref = std::max(world.progress_ref[static_cast<std::size_t>(current)], ref);
  const bool current_on_track =
      sim::subtask_done(world, script, current) || dist <= tol + cfg.on_track_margin * ref;

  bool backtrack = violated >= 0 || !current_on_track;
  const int target = violated >= 0 ? violated : current;
  bool missed = false;
  if (backtrack && cfg.miss_rate > 0.0) {
    rng::Stream stream(rng::mix(cfg.seed, query_key));
    if (stream.next_double() < cfg.miss_rate) {
      backtrack = false;
      missed = true;
    }
  }

  const std::string dist_text = format_meters(dist);
  PlannerDecision d;
  d.kind = backtrack ? DecisionKind::kBacktrack : DecisionKind::kTransit;
  d.next_subtask =
      script.subtasks[static_cast<std::size_t>(backtrack ? target : current)].instruction;
  if (backtrack && violated >= 0) {
    d.reason = "Postcondition of an earlier subtask no longer holds; repositioning from "
               "subtask " +
               std::to_string(target + 1) + " restores the missing precondition.";
  } else if (backtrack) {
    d.reason = "Gripper is " + dist_text +
               " m from the true goal at high reported progress; completion without "
               "repositioning is unlikely.";
  } else if (missed) {
    d.reason = "Residual misalignment of " + dist_text +
               " m judged recoverable without corrective repositioning.";
  } else {
    d.reason = "Remaining distance " + dist_text +
               " m is within tolerance of the current goal; continuing will complete the "
               "subtask.";
  }
  d.front_evidence = {"gripper " + dist_text + " m from goal in workspace frame",
                      violated >= 0 ? "earlier subtask outcome visibly undone"
                                    : "object and goal placement consistent with plan"};
  d.wrist_evidence = {world.gripper.gripper_width >= 0.5 ? "gripper jaws closed"
                                                         : "gripper jaws open",
                      "local contact state matches " + sim::kind_name(spec.kind) + " phase"};
  d.assessment.success_likelihood = backtrack ? "low" : (missed ? "medium" : "high");
  d.assessment.key_risks =
      backtrack ? "misalignment, wasted completion attempt" : "minor residual offset";
  d.assessment.view_agreement = "agree; front view dominates for goal alignment";
  d.assessment.decision_basis = "true-goal distance " + dist_text + " m vs tolerance " +
                                format_meters(tol + cfg.on_track_margin * ref) + " m";
  return d;
}

std::vector<std::array<int, 2>> scripted_boundary(std::size_t num_subtasks,
                                                  const std::vector<std::string>& primitives) {
  const int k = static_cast<int>(num_subtasks);
  const int len = static_cast<int>(primitives.size());
  if (k < 1) throw std::invalid_argument("scripted_boundary: no subtasks");
  if (len < k)
    throw std::invalid_argument("scripted_boundary: fewer primitives than subtasks");

  std::vector<int> change_points;
  for (int i = 1; i < len; ++i)
    if (primitives[static_cast<std::size_t>(i)] != primitives[static_cast<std::size_t>(i - 1)])
      change_points.push_back(i);

  std::vector<int> cuts;  // start index of subtasks 1..k-1
  int prev = 0;
  for (int i = 1; i < k; ++i) {
    const int target =
        static_cast<int>(std::llround(static_cast<double>(i) * len / static_cast<double>(k)));
    const int hi = len - (k - i);  // leave one step per remaining subtask
    int best = -1;
    for (int cp : change_points) {
      if (cp <= prev || cp > hi) continue;
      if (best < 0 || std::abs(cp - target) < std::abs(best - target)) best = cp;
    }
    const int cut = best >= 0 ? best : std::clamp(target, prev + 1, hi);
    cuts.push_back(cut);
    prev = cut;
  }

  std::vector<std::array<int, 2>> ranges;
  int start = 0;
  for (int i = 0; i < k; ++i) {
    const int end = (i + 1 < k) ? cuts[static_cast<std::size_t>(i)] - 1 : len - 1;
    ranges.push_back({start, end});
    start = end + 1;
  }
  return ranges;
}

SubtaskProposal scripted_subtask_proposal(const std::string& instruction) {
  if (trim(instruction).empty())
    throw std::invalid_argument("scripted_subtask_proposal: empty instruction");
  SubtaskProposal out;
  out.subtasks = {"Move the gripper above the target object",
                  "Close the gripper to grasp the target object",
                  "Move the gripper to the goal position",
                  "Open the gripper to release the target object"};
  out.reasoning = "Canonical pick-and-place decomposition for '" + instruction +
                  "': reach, grasp, transport, release.";
  return out;
}

// ==========================================================================
// high-level calls
// ==========================================================================

SubtaskProposal propose_subtasks(ChatClient& client, const OracleClientConfig& cfg,
                                 const std::string& instruction) {
  validate_config(cfg);
  ChatRequest req;
  req.model = cfg.model;
  req.temperature = cfg.temperature;
  req.prompt = render_subtask_prompt(instruction);
  return parse_subtask_proposal(client.complete(req));
}

BoundaryResponse infer_boundaries(ChatClient& client, const OracleClientConfig& cfg,
                                  const std::string& instruction,
                                  const std::vector<std::string>& subtasks,
                                  const std::vector<std::string>& primitives) {
  validate_config(cfg);
  ChatRequest req;
  req.model = cfg.model;
  req.temperature = cfg.temperature;
  req.prompt = render_boundary_prompt(instruction, subtasks, primitives);
  return parse_boundary_response(client.complete(req), subtasks);
}

PlannerDecision plan_next(ChatClient& client, const OracleClientConfig& cfg,
                          const std::string& instruction,
                          const std::vector<std::string>& subtasks, int current_index,
                          const std::vector<ImageRef>& views) {
  validate_config(cfg);
  if (current_index < 0 || current_index >= static_cast<int>(subtasks.size()))
    throw std::invalid_argument("plan_next: current index out of range");
  const PlannerRequest rendered = render_planner_prompt(
      instruction, subtasks, subtasks[static_cast<std::size_t>(current_index)], views);
  ChatRequest req;
  req.model = cfg.model;
  req.temperature = cfg.temperature;
  req.prompt = rendered.prompt;
  req.images = {rendered.front, rendered.wrist};
  return parse_planner_response(client.complete(req), subtasks, current_index);
}

}  // namespace cyclevla::oracle
