#pragma once

/**
 * Every LLM/VLM touchpoint behind one contract: prompt rendering for
 * subtask proposal, boundary inference, and failure prediction/planning;
 * tolerant response parsing; deterministic scripted substitutes for
 * offline runs; and an HTTP chat client with transcript record/replay.
 *
 * Prompt templates are frozen byte-for-byte (golden files under
 * tests/golden/) and instantiated by plain placeholder substitution, so
 * rendering is a pure function of its inputs.
 */

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclevla/sim.hpp"

namespace cyclevla::oracle {

// ==========================================================================
// templates
// ==========================================================================

/// Placeholders: {language_instruction}.
extern const std::string kSubtaskProposalTemplate;
/// Placeholders: {language_instruction}, {subtasks}, {trajectory_features}.
extern const std::string kBoundaryTemplate;
/// Placeholders: {language_instruction}, {subtasks}, {current_subtask}.
extern const std::string kPlannerTemplate;

// ==========================================================================
// domain types
// ==========================================================================

enum class DecisionKind { kTransit, kBacktrack };

std::string kind_to_string(DecisionKind k);
DecisionKind kind_from_string(const std::string& s);  // throws ParseError

struct PlannerAssessment {
  std::string success_likelihood;  // high | medium | low ("" when absent)
  std::string key_risks;
  std::string view_agreement;  // agree | partial | disagree, plus free text
  std::string decision_basis;
  bool operator==(const PlannerAssessment&) const = default;
};

/// The planner's (j, dec) decision plus its stated evidence.
struct PlannerDecision {
  std::string next_subtask;  // verbatim entry of the subtask list
  DecisionKind kind = DecisionKind::kTransit;
  std::string reason;
  std::vector<std::string> front_evidence;
  std::vector<std::string> wrist_evidence;
  PlannerAssessment assessment;
  bool operator==(const PlannerDecision&) const = default;
};

struct SubtaskProposal {
  std::vector<std::string> subtasks;
  std::string reasoning;
};

/// One inclusive [start, end] range per subtask, in subtask-list order,
/// indices in the (downsampled) primitive space.
struct BoundaryResponse {
  std::vector<std::array<int, 2>> ranges;
  std::string reasoning;
};

struct ImageRef {
  std::string tag;  // FRONT or WRIST
  std::string url;  // data: URI or plain URL
};

/// A planner query ready for a chat endpoint: prompt text + the two views.
struct PlannerRequest {
  std::string prompt;
  ImageRef front;
  ImageRef wrist;
};

struct OracleClientConfig {
  std::string endpoint = "http://127.0.0.1:8080";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4.1";
  double temperature = 0.2;
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_sec = 60.0;
  int max_retries = 3;
  int backoff_base_ms = 1000;  // exponential, factor 2; shrink in tests
  std::string transcript_path;  // "" = no transcript
};

/// Validated defaults: the subtask decomposition endpoint.
OracleClientConfig decomposer_defaults();
/// Validated defaults: the failure predictor / planner endpoint.
OracleClientConfig planner_defaults();

/// Throws std::invalid_argument when temperature or retries are out of range.
void validate_config(const OracleClientConfig& cfg);

/// Raised when model output cannot be parsed; carries the raw text.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::string raw)
      : std::runtime_error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

/// Transport / endpoint failure after retries were exhausted.
class OracleError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ==========================================================================
// rendering
// ==========================================================================

std::string render_subtask_prompt(const std::string& instruction);

std::string render_boundary_prompt(const std::string& instruction,
                                   const std::vector<std::string>& subtasks,
                                   const std::vector<std::string>& primitives);

/// Requires current to be a verbatim member of subtasks and exactly one
/// FRONT plus one WRIST view (any order).
PlannerRequest render_planner_prompt(const std::string& instruction,
                                     const std::vector<std::string>& subtasks,
                                     const std::string& current,
                                     const std::vector<ImageRef>& views);

// ==========================================================================
// parsing
// ==========================================================================

/// Tolerant field extraction (markdown fences stripped, whitespace trimmed,
/// next_subtask never rewritten).  Requires next_subtask, type and reason;
/// validates kind, list membership, and the direction constraint: transit
/// may name only the current or immediately following subtask, backtrack
/// only the current or an earlier one.  Throws ParseError.
PlannerDecision parse_planner_response(const std::string& text,
                                       const std::vector<std::string>& subtasks,
                                       int current_index);

/// Inverse of parse_planner_response for valid decisions (round-trip).
std::string format_planner_decision(const PlannerDecision& d);

/// Parses 'Subtasks: ["...", ...]' and 'Reasoning: "..."'.  Throws ParseError.
SubtaskProposal parse_subtask_proposal(const std::string& text);

/// Parses 'Labeled_dict: {"subtask_1": [s, e], ...}'; keys may be the
/// positional names subtask_1..K or the verbatim instructions.  Ranges are
/// returned in subtask-list order.  Throws ParseError.
BoundaryResponse parse_boundary_response(const std::string& text,
                                         const std::vector<std::string>& subtasks);

// ==========================================================================
// scripted substitutes
// ==========================================================================

struct ScriptedPlannerConfig {
  // Probability of missing a failure (returning transit where geometry says
  // backtrack); deterministic per (seed, query_key).
  double miss_rate = 0.0;
  std::uint64_t seed = 0;
  // The current subtask counts as on track while the remaining true-goal
  // distance is at most margin * its activation reference distance (plus
  // the completion tolerance).
  double on_track_margin = 0.15;
};

/// Geometric stand-in for the VLM: checks the postconditions of every
/// earlier subtask (earliest violated one becomes the backtrack target),
/// then whether the current subtask is still on track toward its true
/// goal.  Pure given (world, query_key).  Throws std::invalid_argument on
/// an out-of-range current index.
PlannerDecision scripted_planner(const sim::WorldState& world, const sim::TaskScript& script,
                                 int current, const ScriptedPlannerConfig& cfg,
                                 std::uint64_t query_key);

/// Scripted boundary inference: change-points of the primitive string
/// sequence nearest to uniform cut positions.
std::vector<std::array<int, 2>> scripted_boundary(std::size_t num_subtasks,
                                                  const std::vector<std::string>& primitives);

/// Scripted decomposition: the canonical four pick-and-place subtasks.
SubtaskProposal scripted_subtask_proposal(const std::string& instruction);

// ==========================================================================
// chat transport
// ==========================================================================

struct ChatRequest {
  std::string model;
  double temperature = 0.0;
  std::string prompt;
  std::vector<ImageRef> images;
};

/// One blocking chat completion; implementations throw OracleError.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const ChatRequest& req) = 0;
};

/// OpenAI-compatible JSON-over-HTTP client (plain HTTP) with exponential
/// backoff on 429/5xx/transport errors and optional JSONL transcripts.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(OracleClientConfig cfg);
  std::string complete(const ChatRequest& req) override;
  const OracleClientConfig& config() const { return cfg_; }

 private:
  OracleClientConfig cfg_;
  int seq_ = 0;
};

/// Replays a recorded JSONL transcript in order; prompts must match the
/// recording exactly or OracleError is thrown.
class ReplayChatClient : public ChatClient {
 public:
  explicit ReplayChatClient(const std::string& transcript_path);
  std::string complete(const ChatRequest& req) override;
  std::size_t remaining() const { return entries_.size() - next_; }

 private:
  struct Entry {
    std::string prompt;
    std::string response;
  };
  std::vector<Entry> entries_;
  std::size_t next_ = 0;
};

/// Append one exchange to a JSONL transcript (creates the file on first
/// use).  `seq` orders the exchanges; no wall-clock fields, so transcripts
/// of deterministic runs are byte-identical.
void append_transcript(const std::string& path, int seq, const std::string& backend,
                       const ChatRequest& req, const std::string& response);

// ==========================================================================
// high-level calls (render + complete + parse)
// ==========================================================================

SubtaskProposal propose_subtasks(ChatClient& client, const OracleClientConfig& cfg,
                                 const std::string& instruction);

BoundaryResponse infer_boundaries(ChatClient& client, const OracleClientConfig& cfg,
                                  const std::string& instruction,
                                  const std::vector<std::string>& subtasks,
                                  const std::vector<std::string>& primitives);

PlannerDecision plan_next(ChatClient& client, const OracleClientConfig& cfg,
                          const std::string& instruction,
                          const std::vector<std::string>& subtasks, int current_index,
                          const std::vector<ImageRef>& views);

}  // namespace cyclevla::oracle
