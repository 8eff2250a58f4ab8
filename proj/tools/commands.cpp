#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cyclevla/controller.hpp"
#include "cyclevla/eval.hpp"
#include "cyclevla/json_io.hpp"
#include "cyclevla/mbr.hpp"
#include "cyclevla/oracle.hpp"
#include "cyclevla/segmenter.hpp"
#include "cyclevla/sim.hpp"

namespace cyclevla::cli {

using io::Json;

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  io::write_text_file(path, content);
}

sim::Scenario load_scenario(const std::string& path, int index, std::uint64_t fallback_seed) {
  if (path.empty()) return sim::make_pick_place_scenario(fallback_seed);
  const auto rows = io::read_jsonl(path);
  if (index < 0 || static_cast<std::size_t>(index) >= rows.size())
    throw std::runtime_error("scenario index " + std::to_string(index) + " out of range for " +
                             path + " (" + std::to_string(rows.size()) + " rows)");
  return io::scenario_from_json(rows[static_cast<std::size_t>(index)]);
}

std::vector<sim::Scenario> load_scenarios(const std::string& path) {
  std::vector<sim::Scenario> out;
  for (const auto& row : io::read_jsonl(path)) out.push_back(io::scenario_from_json(row));
  return out;
}

// ==========================================================================
// mbr-select
// ==========================================================================

struct MbrSelectOpts {
  std::string input;
  std::string start_path;
  std::string metric = "l2";
  std::string mode = "density";
  int chunk_size = 0;  // 0 = infer from the first chunk
  bool normalize = false;
};

void run_mbr_select(const MbrSelectOpts& opts) {
  std::vector<core::ActionChunk> chunks;
  for (const auto& row : io::read_jsonl(opts.input))
    chunks.push_back(io::action_chunk_from_json(row));
  if (chunks.empty()) throw std::runtime_error("no hypothesis chunks in " + opts.input);

  core::RobotState start{};
  if (!opts.start_path.empty())
    start = io::robot_state_from_json(Json::parse(io::read_text_file(opts.start_path)));

  const std::size_t h = opts.chunk_size > 0 ? static_cast<std::size_t>(opts.chunk_size)
                                            : chunks.front().steps.size();
  const auto set = mbr::make_hypothesis_set(start, std::move(chunks), h);
  const auto result = mbr::select(set, mbr::metric_from_name(opts.metric),
                                  mbr::mode_from_name(opts.mode), opts.normalize);

  Json j;
  j["selected_index"] = result.selected_index;
  j["metric"] = opts.metric;
  j["mode"] = mbr::mode_name(result.mode);
  j["risks"] = result.risks;
  j["distance_matrix"] = result.distance_matrix;
  std::cout << j.dump() << "\n";
}

void register_mbr_select(CLI::App& app) {
  auto opts = std::make_shared<MbrSelectOpts>();
  auto* cmd = app.add_subcommand("mbr-select",
                                 "Consensus-select one hypothesis from a chunk bundle");
  cmd->add_option("input", opts->input, "JSONL file, one action chunk per line")->required();
  cmd->add_option("--metric", opts->metric, "l1|l2|linf|cos|corr")->capture_default_str();
  cmd->add_option("--mode", opts->mode, "standard|density")->capture_default_str();
  cmd->add_option("--chunk-size", opts->chunk_size, "expected steps per chunk (0 = infer)")
      ->capture_default_str();
  cmd->add_option("--start", opts->start_path, "JSON file with the shared start state");
  cmd->add_flag("--normalize", opts->normalize, "z-score features before distances");
  cmd->callback([opts] { run_mbr_select(*opts); });
}

// ==========================================================================
// decompose
// ==========================================================================

struct DecomposeOpts {
  std::string input;
  std::string thresholds;
  int window = segmenter::kDefaultWindow;
  int max_primitive_len = segmenter::kMaxPrimitiveLen;
  std::string oracle = "scripted";
  std::string instruction = "pick up the object and place it at the goal";
  std::string subtasks;  // semicolon-separated explicit list
  std::string dataset_path;
  bool report = false;
  std::string truth_path;
  std::string endpoint;
};

segmenter::Thresholds parse_thresholds(const std::string& text) {
  segmenter::Thresholds th;
  if (text.empty()) return th;
  const auto parts = split(text, ',');
  if (parts.size() != 3)
    throw std::runtime_error("--thresholds wants \"trans,rot,grip\" (3 comma-separated values)");
  th.trans = std::stod(parts[0]);
  th.rot = std::stod(parts[1]);
  th.grip = std::stod(parts[2]);
  return th;
}

Json dataset_record_to_json(const segmenter::DatasetRecord& r) {
  Json j;
  j["step"] = r.step;
  j["target"] = io::to_json(r.target);
  j["instruction"] = r.instruction;
  j["weight"] = r.weight;
  return j;
}

void run_decompose(const DecomposeOpts& opts) {
  const auto rows = io::read_jsonl(opts.input);
  if (rows.empty()) throw std::runtime_error("no trajectory logs in " + opts.input);
  const segmenter::Thresholds th = parse_thresholds(opts.thresholds);

  std::shared_ptr<oracle::ChatClient> client;
  oracle::OracleClientConfig ocfg = oracle::decomposer_defaults();
  if (!opts.endpoint.empty()) ocfg.endpoint = opts.endpoint;
  if (opts.oracle == "http") client = std::make_shared<oracle::HttpChatClient>(ocfg);
  else if (opts.oracle != "scripted" && opts.oracle != "none")
    throw std::runtime_error("--oracle must be scripted, http, or none");

  std::vector<Json> truth_rows;
  if (!opts.truth_path.empty()) truth_rows = io::read_jsonl(opts.truth_path);
  if (opts.report && truth_rows.size() != rows.size() && !truth_rows.empty())
    throw std::runtime_error("--truth row count does not match the input logs");

  std::vector<Json> dataset_rows;
  double err_steps = 0.0;
  double err_pct = 0.0;
  int err_count = 0;

  for (std::size_t li = 0; li < rows.size(); ++li) {
    const core::TrajectoryLog log = io::trajectory_log_from_json(rows[li]);

    std::vector<std::string> subtasks;
    if (!opts.subtasks.empty()) {
      subtasks = split(opts.subtasks, ';');
    } else if (opts.oracle == "http") {
      subtasks = oracle::propose_subtasks(*client, ocfg, opts.instruction).subtasks;
    } else if (opts.oracle == "scripted") {
      subtasks = oracle::scripted_subtask_proposal(opts.instruction).subtasks;
    } else {
      throw std::runtime_error("--oracle none needs an explicit --subtasks list");
    }

    segmenter::BoundaryOracleFn boundary;
    if (opts.oracle == "scripted") {
      boundary = [](const std::vector<std::string>& names,
                    const std::vector<std::string>& primitives) {
        return oracle::scripted_boundary(names.size(), primitives);
      };
    } else if (opts.oracle == "http") {
      boundary = [client, ocfg, &opts](const std::vector<std::string>& names,
                                       const std::vector<std::string>& primitives) {
        return oracle::infer_boundaries(*client, ocfg, opts.instruction, names, primitives)
            .ranges;
      };
    }

    const core::SubtaskPlan plan =
        segmenter::decompose_log(log, subtasks, boundary, th, opts.window,
                                 opts.max_primitive_len);
    std::cout << io::to_json(plan).dump() << "\n";

    if (!opts.dataset_path.empty()) {
      for (const auto& rec : segmenter::emit_dataset(plan, log).records)
        dataset_rows.push_back(dataset_record_to_json(rec));
    }

    if (opts.report && !truth_rows.empty()) {
      const core::SubtaskPlan truth = io::subtask_plan_from_json(truth_rows[li]);
      if (truth.subtasks.size() != plan.subtasks.size())
        throw std::runtime_error("truth plan has a different subtask count at log " +
                                 std::to_string(li));
      for (std::size_t k = 1; k < plan.subtasks.size(); ++k) {
        const int diff = std::abs(plan.subtasks[k].start - truth.subtasks[k].start);
        err_steps += diff;
        err_pct += 100.0 * diff / static_cast<double>(log.size());
        err_count += 1;
      }
    }
  }

  if (!opts.dataset_path.empty()) io::write_jsonl(opts.dataset_path, dataset_rows);

  if (opts.report) {
    Json j;
    Json rep;
    rep["boundaries"] = err_count;
    rep["mean_abs_error_steps"] = err_count ? err_steps / err_count : 0.0;
    rep["mean_rel_error_pct"] = err_count ? err_pct / err_count : 0.0;
    j["report"] = std::move(rep);
    std::cout << j.dump() << "\n";
  }
}

void register_decompose(CLI::App& app) {
  auto opts = std::make_shared<DecomposeOpts>();
  auto* cmd = app.add_subcommand("decompose",
                                 "Segment trajectory logs into labeled subtask datasets");
  cmd->add_option("input", opts->input, "JSONL file, one trajectory log per line")->required();
  cmd->add_option("--thresholds", opts->thresholds, "initial \"trans,rot,grip\" thresholds");
  cmd->add_option("--window", opts->window, "state-difference window")->capture_default_str();
  cmd->add_option("--max-primitive-len", opts->max_primitive_len,
                  "downsample target length")->capture_default_str();
  cmd->add_option("--oracle", opts->oracle, "scripted|http|none")->capture_default_str();
  cmd->add_option("--instruction", opts->instruction, "task instruction for decomposition")
      ->capture_default_str();
  cmd->add_option("--subtasks", opts->subtasks, "explicit semicolon-separated subtask list");
  cmd->add_option("--dataset", opts->dataset_path, "write labeled dataset JSONL here");
  cmd->add_flag("--report", opts->report, "emit boundary-error statistics");
  cmd->add_option("--truth", opts->truth_path, "ground-truth plan JSONL for --report");
  cmd->add_option("--endpoint", opts->endpoint, "chat endpoint for --oracle http");
  cmd->callback([opts] { run_decompose(*opts); });
}

// ==========================================================================
// run-episode
// ==========================================================================

struct RunEpisodeOpts {
  std::uint64_t seed = 0;
  double tau_p = 0.9;
  int retries = 3;
  int samples = 8;
  std::string metric = "l2";
  std::string mbr_mode = "density";
  std::string oracle = "scripted";
  bool no_correction = false;
  bool always_mbr = false;
  bool failure_cutoff = false;
  std::string scenario_path;
  int index = 0;
  double p_fail = -1.0;  // <0 = keep the scenario's value
  double miss_rate = 0.0;
  int t_max = 512;
  int chunk_size = 8;
  std::string endpoint;
  std::string transcript;
  std::string replay_path;
};

void run_run_episode(const RunEpisodeOpts& opts) {
  sim::Scenario scenario = load_scenario(opts.scenario_path, opts.index, opts.seed);
  if (opts.p_fail >= 0.0) scenario.policy.p_fail = opts.p_fail;

  controller::EpisodeConfig cfg;
  cfg.tau_p = opts.tau_p;
  cfg.max_retries = opts.retries;
  cfg.samples = opts.samples;
  cfg.metric = mbr::metric_from_name(opts.metric);
  cfg.mbr_mode = mbr::mode_from_name(opts.mbr_mode);
  cfg.t_max = opts.t_max;
  cfg.chunk_size = opts.chunk_size;
  cfg.seed = opts.seed;
  if (opts.no_correction) cfg.correction = controller::CorrectionMode::kNoCorrection;
  if (opts.always_mbr) cfg.correction = controller::CorrectionMode::kAlwaysMbr;
  if (opts.failure_cutoff) cfg.correction = controller::CorrectionMode::kFailureCutoff;

  controller::EpisodeOutcome outcome;
  if (opts.oracle == "scripted") {
    oracle::ScriptedPlannerConfig pcfg;
    pcfg.miss_rate = opts.miss_rate;
    pcfg.seed = opts.seed;
    outcome = controller::run_scenario_episode(scenario, cfg, pcfg);
  } else if (opts.oracle == "http" || opts.oracle == "replay") {
    oracle::OracleClientConfig ocfg = oracle::planner_defaults();
    if (!opts.endpoint.empty()) ocfg.endpoint = opts.endpoint;
    ocfg.transcript_path = opts.transcript;
    std::shared_ptr<oracle::ChatClient> client;
    if (opts.oracle == "http") client = std::make_shared<oracle::HttpChatClient>(ocfg);
    else client = std::make_shared<oracle::ReplayChatClient>(opts.replay_path);

    std::vector<std::string> names;
    for (const auto& s : scenario.script.subtasks) names.push_back(s.instruction);
    const std::string instruction = scenario.script.instruction;
    const controller::PlannerFn planner =
        [client, ocfg, names, instruction](const sim::WorldState&, int current,
                                           std::uint64_t) {
          // No renderer in this harness: the views are tagged placeholders.
          const std::vector<oracle::ImageRef> views{{"FRONT", "synthetic://front"},
                                                    {"WRIST", "synthetic://wrist"}};
          controller::PlannerResult res;
          res.decision = oracle::plan_next(*client, ocfg, instruction, names, current, views);
          return res;
        };

    sim::Environment env(scenario.world, scenario.script);
    sim::MockPolicyConfig mp = scenario.policy;
    mp.chunk_size = cfg.chunk_size;
    sim::MockPolicy policy(scenario.script, mp);
    outcome = controller::run_episode(env, policy, planner, cfg);
  } else {
    throw std::runtime_error("--oracle must be scripted, http, or replay");
  }

  Json j = controller::outcome_to_json(outcome);
  j["runtime_shares"] = eval::runtime_shares_to_json(eval::report_runtime_shares({outcome}));
  std::cout << j.dump(2) << "\n";
}

void register_run_episode(CLI::App& app) {
  auto opts = std::make_shared<RunEpisodeOpts>();
  auto* cmd = app.add_subcommand("run-episode",
                                 "Run one monitored episode and emit its outcome JSON");
  cmd->add_option("--seed", opts->seed, "episode seed")->capture_default_str();
  cmd->add_option("--tau-p", opts->tau_p, "progress confirmation threshold")
      ->capture_default_str();
  cmd->add_option("--retries", opts->retries, "backtrack budget per subtask")
      ->capture_default_str();
  cmd->add_option("--samples", opts->samples, "hypotheses per consensus refill")
      ->capture_default_str();
  cmd->add_option("--metric", opts->metric, "l1|l2|linf|cos|corr")->capture_default_str();
  cmd->add_option("--mbr-mode", opts->mbr_mode, "standard|density")->capture_default_str();
  cmd->add_option("--oracle", opts->oracle, "scripted|http|replay")->capture_default_str();
  auto* nc = cmd->add_flag("--no-correction", opts->no_correction, "monitoring only");
  auto* am = cmd->add_flag("--always-mbr", opts->always_mbr,
                           "consensus at every refill, no planner");
  auto* fc = cmd->add_flag("--failure-cutoff", opts->failure_cutoff,
                           "terminate on predicted failure");
  nc->excludes(am)->excludes(fc);
  am->excludes(fc);
  cmd->add_option("--scenario", opts->scenario_path, "scenario bundle JSONL");
  cmd->add_option("--index", opts->index, "row in the scenario bundle")->capture_default_str();
  cmd->add_option("--p-fail", opts->p_fail, "override the policy failure rate");
  cmd->add_option("--miss-rate", opts->miss_rate, "scripted planner miss rate")
      ->capture_default_str();
  cmd->add_option("--t-max", opts->t_max, "step budget")->capture_default_str();
  cmd->add_option("--chunk-size", opts->chunk_size, "steps per chunk")->capture_default_str();
  cmd->add_option("--endpoint", opts->endpoint, "chat endpoint for --oracle http");
  cmd->add_option("--transcript", opts->transcript, "append oracle transcript JSONL here");
  cmd->add_option("--replay", opts->replay_path, "transcript to replay for --oracle replay");
  cmd->callback([opts] { run_run_episode(*opts); });
}

// ==========================================================================
// gen-scenarios
// ==========================================================================

struct GenScenariosOpts {
  std::uint64_t seed = 0;
  int count = 10;
  double p_fail = -1.0;
  std::string out;
};

void run_gen_scenarios(const GenScenariosOpts& opts) {
  std::string buffer;
  for (auto& scenario : sim::make_scenarios(opts.seed, opts.count)) {
    if (opts.p_fail >= 0.0) scenario.policy.p_fail = opts.p_fail;
    buffer += io::to_json(scenario).dump() + "\n";
  }
  emit(opts.out, buffer);
}

void register_gen_scenarios(CLI::App& app) {
  auto opts = std::make_shared<GenScenariosOpts>();
  auto* cmd = app.add_subcommand("gen-scenarios", "Emit a seeded scenario bundle as JSONL");
  cmd->add_option("--seed", opts->seed, "master seed")->capture_default_str();
  cmd->add_option("--count", opts->count, "number of scenarios")->capture_default_str();
  cmd->add_option("--p-fail", opts->p_fail, "override the policy failure rate");
  cmd->add_option("--out", opts->out, "output path (default stdout)");
  cmd->callback([opts] { run_gen_scenarios(*opts); });
}

// ==========================================================================
// eval-psucc and sweep
// ==========================================================================

struct SweepOpts {
  std::string n_values = "4,8,16,32,64";
  std::string metrics = "l2";
  int episodes = 200;
  std::string scenarios_path;
  std::uint64_t seed = 0;
  std::string mode = "density";
  int trials = 100;
  int bootstrap = 1000;
  int horizon = 6;
  int chunk_size = 8;
  bool unpaired = false;
  std::string emit_csv;
  std::string out;
};

void run_sweep_command(const SweepOpts& opts) {
  eval::SweepSpec spec;
  spec.n_values.clear();
  for (const auto& part : split(opts.n_values, ',')) spec.n_values.push_back(std::stoi(part));
  spec.metrics.clear();
  for (const auto& part : split(opts.metrics, ','))
    spec.metrics.push_back(mbr::metric_from_name(part));
  spec.episodes = opts.episodes;
  if (!opts.scenarios_path.empty()) spec.tasks = load_scenarios(opts.scenarios_path);
  spec.paired_seeds = !opts.unpaired;
  spec.mode = mbr::mode_from_name(opts.mode);
  spec.horizon_chunks = opts.horizon;
  spec.chunk_size = opts.chunk_size;
  spec.random_trials = opts.trials;
  spec.bootstrap_resamples = opts.bootstrap;
  spec.seed = opts.seed;

  const eval::SweepReport report = eval::run_sweep(spec);
  emit(opts.out, eval::sweep_report_to_json(report).dump(2) + "\n");
  std::cerr << eval::sweep_report_to_text(report);
  if (!opts.emit_csv.empty())
    io::write_text_file(opts.emit_csv, eval::sweep_report_to_csv(report));
}

void add_common_sweep_options(CLI::App* cmd, const std::shared_ptr<SweepOpts>& opts) {
  cmd->add_option("--episodes", opts->episodes, "episodes per cell")->capture_default_str();
  cmd->add_option("--scenarios", opts->scenarios_path, "scenario bundle JSONL");
  cmd->add_option("--seed", opts->seed, "suite seed")->capture_default_str();
  cmd->add_option("--mode", opts->mode, "standard|density")->capture_default_str();
  cmd->add_option("--trials", opts->trials, "random-baseline trials")->capture_default_str();
  cmd->add_option("--bootstrap", opts->bootstrap, "bootstrap resamples")
      ->capture_default_str();
  cmd->add_option("--horizon", opts->horizon, "decision points per episode")
      ->capture_default_str();
  cmd->add_option("--chunk-size", opts->chunk_size, "steps per chunk")->capture_default_str();
  cmd->add_flag("--unpaired", opts->unpaired, "fresh seeds per cell instead of pairing");
  cmd->add_option("--emit-csv", opts->emit_csv, "also write the table as CSV here");
  cmd->add_option("--out", opts->out, "JSON output path (default stdout)");
}

void register_eval_psucc(CLI::App& app) {
  auto opts = std::make_shared<SweepOpts>();
  opts->n_values = "8";
  auto* cmd = app.add_subcommand("eval-psucc",
                                 "Estimate selection success probability for one cell");
  cmd->add_option("--n", opts->n_values, "hypothesis count")->capture_default_str();
  cmd->add_option("--metric", opts->metrics, "distance metric")->capture_default_str();
  add_common_sweep_options(cmd, opts);
  cmd->callback([opts] { run_sweep_command(*opts); });
}

void register_sweep(CLI::App& app) {
  auto opts = std::make_shared<SweepOpts>();
  auto* cmd = app.add_subcommand("sweep",
                                 "Paired MBR-vs-random sweep over N values and metrics");
  cmd->add_option("--n-values", opts->n_values, "comma-separated hypothesis counts")
      ->capture_default_str();
  cmd->add_option("--metrics", opts->metrics, "comma-separated metrics")
      ->capture_default_str();
  add_common_sweep_options(cmd, opts);
  cmd->callback([opts] { run_sweep_command(*opts); });
}

}  // namespace

void register_commands(CLI::App& app) {
  register_mbr_select(app);
  register_decompose(app);
  register_run_episode(app);
  register_gen_scenarios(app);
  register_eval_psucc(app);
  register_sweep(app);
}

}  // namespace cyclevla::cli
