#include "cyclevla/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "cyclevla/rng.hpp"

namespace cyclevla::eval {

using io::Json;

namespace {

constexpr const char* kComponents[] = {"vlm", "action_rollout", "sampling", "mbr", "backtrack"};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

/// Fixed-order work distribution: worker threads pull indices from a shared
/// counter, results land in caller-owned slots, reduction stays sequential.
void parallel_for(int count, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const int workers = std::min({count, static_cast<int>(hw), 16});
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mtx;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= count) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mtx);
          if (!err) err = std::current_exception();
          next.store(count);
          break;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace

// ==========================================================================
// outcome tensor
// ==========================================================================

void validate_matrix(const OutcomeMatrix& m) {
  if (m.z.empty()) throw std::invalid_argument("outcome matrix has no episodes");
  if (m.boundaries.size() != m.z.size())
    throw std::invalid_argument("outcome matrix: one boundary list per episode required");
  std::size_t n = 0;
  for (std::size_t e = 0; e < m.z.size(); ++e) {
    const auto& episode = m.z[e];
    if (episode.empty())
      throw std::invalid_argument("outcome matrix: episode " + std::to_string(e) +
                                  " has no decision points");
    if (m.boundaries[e].size() != episode.size())
      throw std::invalid_argument("outcome matrix: boundary count mismatch in episode " +
                                  std::to_string(e));
    if (m.boundaries[e][0] != 0)
      throw std::invalid_argument("outcome matrix: boundaries must start at 0 (episode " +
                                  std::to_string(e) + ")");
    const int spacing = m.boundaries[e].size() > 1 ? m.boundaries[e][1] : 1;
    if (spacing <= 0)
      throw std::invalid_argument("outcome matrix: boundary spacing must be positive");
    for (std::size_t t = 0; t < episode.size(); ++t) {
      if (m.boundaries[e][t] != static_cast<int>(t) * spacing)
        throw std::invalid_argument("outcome matrix: boundaries are not an arithmetic grid");
      if (episode[t].empty())
        throw std::invalid_argument("outcome matrix: empty hypothesis row");
      if (n == 0) n = episode[t].size();
      if (episode[t].size() != n)
        throw std::invalid_argument("outcome matrix: hypothesis count is not uniform");
    }
  }
}

SelectorFn make_random_selector(std::uint64_t trial) {
  return [trial](int episode, int decision, int n) {
    const std::uint64_t key = rng::mix(static_cast<std::uint64_t>(episode),
                                       static_cast<std::uint64_t>(decision), trial);
    return static_cast<int>(rng::bounded_hash(key, static_cast<std::uint64_t>(n)));
  };
}

std::vector<double> per_episode_means(const OutcomeMatrix& m, const SelectorFn& selector) {
  validate_matrix(m);
  if (!selector) throw std::invalid_argument("estimate_psucc: null selector");
  std::vector<double> means;
  means.reserve(m.z.size());
  for (std::size_t e = 0; e < m.z.size(); ++e) {
    double hits = 0.0;
    for (std::size_t t = 0; t < m.z[e].size(); ++t) {
      const int n = static_cast<int>(m.z[e][t].size());
      const int pick = selector(static_cast<int>(e), static_cast<int>(t), n);
      if (pick < 0 || pick >= n)
        throw std::out_of_range("selector returned an out-of-range hypothesis index");
      hits += m.z[e][t][static_cast<std::size_t>(pick)];
    }
    means.push_back(hits / static_cast<double>(m.z[e].size()));
  }
  return means;
}

double estimate_psucc(const OutcomeMatrix& m, const SelectorFn& selector) {
  const std::vector<double> means = per_episode_means(m, selector);
  double acc = 0.0;
  for (double v : means) acc += v;
  return acc / static_cast<double>(means.size());
}

// ==========================================================================
// rollout recording
// ==========================================================================

RecordedEpisode record_episode(const sim::Scenario& scenario, const RecorderConfig& cfg) {
  if (cfg.hypotheses < 2) throw std::invalid_argument("recorder: hypotheses must be >= 2");
  if (cfg.horizon_chunks < 1) throw std::invalid_argument("recorder: horizon must be >= 1");
  if (cfg.chunk_size < 1) throw std::invalid_argument("recorder: chunk_size must be >= 1");
  if (scenario.script.subtasks.empty())
    throw std::invalid_argument("recorder: scenario script has no subtasks");

  sim::MockPolicyConfig pcfg = scenario.policy;
  pcfg.chunk_size = cfg.chunk_size;
  const int last = static_cast<int>(scenario.script.subtasks.size()) - 1;
  const core::RobotState origin{};  // shared descriptor frame

  RecordedEpisode rec;
  rec.chunks.resize(static_cast<std::size_t>(cfg.horizon_chunks));
  rec.features.resize(static_cast<std::size_t>(cfg.horizon_chunks));
  rec.labels.resize(static_cast<std::size_t>(cfg.horizon_chunks));

  std::vector<sim::WorldState> worlds(static_cast<std::size_t>(cfg.hypotheses), scenario.world);
  std::vector<int> subtask(static_cast<std::size_t>(cfg.hypotheses), 0);

  for (int c = 0; c < cfg.horizon_chunks; ++c) {
    const int t = c * cfg.chunk_size;
    rec.boundaries.push_back(t);
    auto& chunks = rec.chunks[static_cast<std::size_t>(c)];
    auto& features = rec.features[static_cast<std::size_t>(c)];
    auto& labels = rec.labels[static_cast<std::size_t>(c)];
    chunks.reserve(static_cast<std::size_t>(cfg.hypotheses));
    for (int i = 0; i < cfg.hypotheses; ++i) {
      const std::size_t idx = static_cast<std::size_t>(i);
      while (subtask[idx] < last && sim::subtask_done(worlds[idx], scenario.script, subtask[idx]))
        subtask[idx] += 1;
      core::ActionChunk chunk = sim::mock_policy_sample(
          worlds[idx], scenario.script, subtask[idx], pcfg,
          rng::mix(scenario.seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i)));
      labels.push_back(
          sim::label_hypothesis(worlds[idx], scenario.script, subtask[idx], chunk, pcfg) ? 1 : 0);
      features.push_back(mbr::extract_features(origin, chunk));
      for (const auto& step : chunk.steps) worlds[idx] = sim::env_step(worlds[idx], step);
      chunks.push_back(std::move(chunk));
    }
  }
  return rec;
}

OutcomeMatrix build_outcome_matrix(const std::vector<RecordedEpisode>& episodes) {
  OutcomeMatrix m;
  m.z.reserve(episodes.size());
  m.boundaries.reserve(episodes.size());
  for (const auto& rec : episodes) {
    m.z.push_back(rec.labels);
    m.boundaries.push_back(rec.boundaries);
  }
  validate_matrix(m);
  return m;
}

SelectorFn make_mbr_selector(const std::vector<RecordedEpisode>& episodes,
                             mbr::DistanceMetric metric, mbr::SelectionMode mode,
                             bool normalize) {
  auto picks = std::make_shared<std::vector<std::vector<int>>>(episodes.size());
  parallel_for(static_cast<int>(episodes.size()), [&](int e) {
    const auto& rec = episodes[static_cast<std::size_t>(e)];
    auto& row = (*picks)[static_cast<std::size_t>(e)];
    row.reserve(rec.chunks.size());
    for (std::size_t t = 0; t < rec.chunks.size(); ++t) {
      mbr::HypothesisSet set;
      set.start_state = core::RobotState{};
      set.chunks = rec.chunks[t];
      set.features = rec.features[t];
      row.push_back(mbr::select(set, metric, mode, normalize).selected_index);
    }
  });
  return [picks](int episode, int decision, int n) {
    if (episode < 0 || static_cast<std::size_t>(episode) >= picks->size())
      throw std::out_of_range("mbr selector: episode index out of range");
    const auto& row = (*picks)[static_cast<std::size_t>(episode)];
    if (decision < 0 || static_cast<std::size_t>(decision) >= row.size())
      throw std::out_of_range("mbr selector: decision index out of range");
    const int pick = row[static_cast<std::size_t>(decision)];
    if (pick >= n) throw std::out_of_range("mbr selector: selection exceeds hypothesis count");
    return pick;
  };
}

// ==========================================================================
// sweeps
// ==========================================================================

void validate_spec(const SweepSpec& spec) {
  if (spec.n_values.empty()) throw std::invalid_argument("sweep spec: n_values is empty");
  const std::set<int> allowed{4, 8, 16, 32, 64};
  for (int n : spec.n_values) {
    if (!allowed.count(n))
      throw std::invalid_argument("sweep spec: n must be one of {4, 8, 16, 32, 64}, got " +
                                  std::to_string(n));
  }
  if (spec.metrics.empty()) throw std::invalid_argument("sweep spec: metrics is empty");
  if (spec.episodes < 1) throw std::invalid_argument("sweep spec: episodes must be >= 1");
  if (spec.horizon_chunks < 1) throw std::invalid_argument("sweep spec: horizon must be >= 1");
  if (spec.chunk_size < 1) throw std::invalid_argument("sweep spec: chunk_size must be >= 1");
  if (spec.random_trials < 1)
    throw std::invalid_argument("sweep spec: random_trials must be >= 1");
  if (spec.bootstrap_resamples < 1)
    throw std::invalid_argument("sweep spec: bootstrap_resamples must be >= 1");
}

namespace {

std::array<double, 2> bootstrap_ci(const std::vector<double>& values, int resamples,
                                   rng::Stream stream) {
  const std::size_t n = values.size();
  if (n == 1) return {values[0], values[0]};
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += values[stream.next_below(n)];
    means.push_back(acc / static_cast<double>(n));
  }
  std::sort(means.begin(), means.end());
  const auto quantile = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::llround(q * (means.size() - 1)));
    return means[idx];
  };
  return {quantile(0.025), quantile(0.975)};
}

double mean_of(const std::vector<double>& values) {
  double acc = 0.0;
  for (double v : values) acc += v;
  return values.empty() ? 0.0 : acc / static_cast<double>(values.size());
}

}  // namespace

SweepReport run_sweep(const SweepSpec& spec) {
  validate_spec(spec);

  // Episode pool: the supplied scenario bundle (truncated to `episodes` if
  // larger) or a generated suite.
  std::vector<sim::Scenario> base = spec.tasks;
  if (base.empty()) {
    base = sim::make_scenarios(spec.seed, spec.episodes);
  } else if (static_cast<int>(base.size()) > spec.episodes) {
    base.resize(static_cast<std::size_t>(spec.episodes));
  }
  const int episodes = static_cast<int>(base.size());

  SweepReport report;
  report.episodes = episodes;
  report.horizon_chunks = spec.horizon_chunks;
  report.chunk_size = spec.chunk_size;
  report.random_trials = spec.random_trials;
  report.bootstrap_resamples = spec.bootstrap_resamples;
  report.mode = mbr::mode_name(spec.mode);
  report.paired = spec.paired_seeds;
  report.seed = spec.seed;

  for (std::size_t ni = 0; ni < spec.n_values.size(); ++ni) {
    const int n = spec.n_values[ni];

    std::vector<sim::Scenario> pool = base;
    if (!spec.paired_seeds) {
      // Decouple the cells: fresh rollout seeds per hypothesis-count row.
      for (std::size_t e = 0; e < pool.size(); ++e)
        pool[e].seed = rng::mix(spec.seed ^ 0x5eedULL, ni, e);
    }

    RecorderConfig rc;
    rc.hypotheses = n;
    rc.horizon_chunks = spec.horizon_chunks;
    rc.chunk_size = spec.chunk_size;

    std::vector<RecordedEpisode> recs(pool.size());
    parallel_for(episodes, [&](int e) {
      recs[static_cast<std::size_t>(e)] = record_episode(pool[static_cast<std::size_t>(e)], rc);
    });
    const OutcomeMatrix matrix = build_outcome_matrix(recs);

    // Trial-averaged random baseline; shared by every metric in this row.
    std::vector<double> rand_means(static_cast<std::size_t>(episodes), 0.0);
    for (int trial = 0; trial < spec.random_trials; ++trial) {
      const auto one = per_episode_means(matrix, make_random_selector(
                                                     static_cast<std::uint64_t>(trial)));
      for (int e = 0; e < episodes; ++e) rand_means[static_cast<std::size_t>(e)] += one[e];
    }
    for (double& v : rand_means) v /= static_cast<double>(spec.random_trials);

    for (std::size_t mi = 0; mi < spec.metrics.size(); ++mi) {
      const mbr::DistanceMetric metric = spec.metrics[mi];
      const auto mbr_means =
          per_episode_means(matrix, make_mbr_selector(recs, metric, spec.mode));

      std::vector<double> deltas(static_cast<std::size_t>(episodes));
      for (int e = 0; e < episodes; ++e)
        deltas[static_cast<std::size_t>(e)] =
            mbr_means[static_cast<std::size_t>(e)] - rand_means[static_cast<std::size_t>(e)];

      SweepCell cell;
      cell.n = n;
      cell.metric = metric;
      cell.p_random = mean_of(rand_means);
      cell.p_mbr = mean_of(mbr_means);
      cell.delta = cell.p_mbr - cell.p_random;
      cell.delta_ci = bootstrap_ci(
          deltas, spec.bootstrap_resamples,
          rng::Stream(rng::mix(spec.seed, 0xB007ULL, static_cast<std::uint64_t>(n),
                               static_cast<std::uint64_t>(mi))));
      cell.episodes = episodes;
      report.cells.push_back(cell);
    }
  }
  return report;
}

// ==========================================================================
// recovery comparison
// ==========================================================================

RecoveryReport run_recovery_comparison(const std::vector<sim::Scenario>& scenarios,
                                       const controller::EpisodeConfig& base,
                                       const oracle::ScriptedPlannerConfig& planner_cfg) {
  const controller::CorrectionMode modes[] = {
      controller::CorrectionMode::kNoCorrection, controller::CorrectionMode::kFull,
      controller::CorrectionMode::kAlwaysMbr, controller::CorrectionMode::kFailureCutoff};

  RecoveryReport report;
  for (const auto mode : modes) {
    RecoveryRow row;
    row.mode = controller::correction_name(mode);
    row.episodes = static_cast<int>(scenarios.size());

    std::vector<controller::EpisodeOutcome> outcomes(scenarios.size());
    parallel_for(static_cast<int>(scenarios.size()), [&](int e) {
      const auto& scenario = scenarios[static_cast<std::size_t>(e)];
      controller::EpisodeConfig cfg = base;
      cfg.correction = mode;
      cfg.seed = scenario.seed;  // paired across modes
      outcomes[static_cast<std::size_t>(e)] =
          controller::run_scenario_episode(scenario, cfg, planner_cfg);
    });

    double backtracks = 0.0;
    double steps = 0.0;
    for (const auto& o : outcomes) {
      row.successes += o.success ? 1 : 0;
      backtracks += static_cast<double>(o.backtracks.size());
      steps += static_cast<double>(o.steps_used);
    }
    if (!scenarios.empty()) {
      row.success_rate = static_cast<double>(row.successes) / row.episodes;
      row.mean_backtracks = backtracks / row.episodes;
      row.mean_steps = steps / row.episodes;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ==========================================================================
// runtime shares
// ==========================================================================

RuntimeShares report_runtime_shares(const std::vector<controller::EpisodeOutcome>& outcomes) {
  if (outcomes.empty())
    throw std::invalid_argument("runtime shares: no outcomes to aggregate");

  RuntimeShares shares;
  std::map<std::string, int> missing;
  std::set<std::string> unknown;
  for (const char* key : kComponents) shares.durations[key] = 0.0;
  for (const auto& outcome : outcomes) {
    for (const char* key : kComponents) {
      const auto it = outcome.component_timings.find(key);
      if (it == outcome.component_timings.end()) {
        missing[key] += 1;
        continue;
      }
      shares.durations[key] += it->second;
    }
    for (const auto& [key, value] : outcome.component_timings) {
      (void)value;
      if (!shares.durations.count(key)) unknown.insert(key);
    }
  }
  for (const auto& [key, count] : missing)
    shares.warnings.push_back("component '" + key + "' missing from " + std::to_string(count) +
                              " outcome(s); treated as zero");
  for (const auto& key : unknown)
    shares.warnings.push_back("unknown component '" + key + "' ignored");

  double total = 0.0;
  for (const auto& [key, value] : shares.durations) {
    (void)key;
    total += value;
  }
  if (total <= 0.0)
    throw std::invalid_argument("runtime shares: total recorded time is zero");
  for (const auto& [key, value] : shares.durations)
    shares.percentages[key] = 100.0 * value / total;
  return shares;
}

// ==========================================================================
// report rendering
// ==========================================================================

Json sweep_report_to_json(const SweepReport& r) {
  Json j;
  j["episodes"] = r.episodes;
  j["horizon_chunks"] = r.horizon_chunks;
  j["chunk_size"] = r.chunk_size;
  j["random_trials"] = r.random_trials;
  j["bootstrap_resamples"] = r.bootstrap_resamples;
  j["mode"] = r.mode;
  j["paired"] = r.paired;
  j["seed"] = r.seed;
  Json cells = Json::array();
  for (const auto& c : r.cells) {
    Json jc;
    jc["n"] = c.n;
    jc["metric"] = mbr::metric_name(c.metric);
    jc["p_random"] = c.p_random;
    jc["p_mbr"] = c.p_mbr;
    jc["delta"] = c.delta;
    jc["delta_ci"] = Json::array({c.delta_ci[0], c.delta_ci[1]});
    jc["episodes"] = c.episodes;
    cells.push_back(std::move(jc));
  }
  j["cells"] = std::move(cells);
  return j;
}

std::string sweep_report_to_text(const SweepReport& r) {
  std::string out;
  out += "  n  metric  p_random   p_mbr     delta    95% CI\n";
  for (const auto& c : r.cells) {
    char line[160];
    std::snprintf(line, sizeof(line), "%3d  %-6s  %8.4f  %8.4f  %+8.4f  [%+.4f, %+.4f]\n",
                  c.n, mbr::metric_name(c.metric).c_str(), c.p_random, c.p_mbr, c.delta,
                  c.delta_ci[0], c.delta_ci[1]);
    out += line;
  }
  char footer[160];
  std::snprintf(footer, sizeof(footer),
                "episodes=%d trials=%d bootstrap=%d mode=%s paired=%s\n", r.episodes,
                r.random_trials, r.bootstrap_resamples, r.mode.c_str(),
                r.paired ? "yes" : "no");
  out += footer;
  return out;
}

std::string sweep_report_to_csv(const SweepReport& r) {
  std::string out = "n,metric,p_random,p_mbr,delta,ci_lo,ci_hi,episodes\n";
  for (const auto& c : r.cells) {
    out += std::to_string(c.n) + "," + mbr::metric_name(c.metric) + "," +
           fmt("%.6f", c.p_random) + "," + fmt("%.6f", c.p_mbr) + "," + fmt("%.6f", c.delta) +
           "," + fmt("%.6f", c.delta_ci[0]) + "," + fmt("%.6f", c.delta_ci[1]) + "," +
           std::to_string(c.episodes) + "\n";
  }
  return out;
}

Json recovery_report_to_json(const RecoveryReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    Json jr;
    jr["mode"] = row.mode;
    jr["episodes"] = row.episodes;
    jr["successes"] = row.successes;
    jr["success_rate"] = row.success_rate;
    jr["mean_backtracks"] = row.mean_backtracks;
    jr["mean_steps"] = row.mean_steps;
    rows.push_back(std::move(jr));
  }
  Json j;
  j["rows"] = std::move(rows);
  return j;
}

std::string recovery_report_to_text(const RecoveryReport& r) {
  std::string out = "mode            success  backtracks  steps\n";
  for (const auto& row : r.rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-15s %7.3f  %10.2f  %6.1f   (%d/%d)\n",
                  row.mode.c_str(), row.success_rate, row.mean_backtracks, row.mean_steps,
                  row.successes, row.episodes);
    out += line;
  }
  return out;
}

Json runtime_shares_to_json(const RuntimeShares& r) {
  Json durations;
  Json percentages;
  // Fixed component order, matching the durations map only in membership.
  for (const char* key : kComponents) {
    durations[key] = r.durations.at(key);
    percentages[key] = r.percentages.at(key);
  }
  Json j;
  j["durations"] = std::move(durations);
  j["percentages"] = std::move(percentages);
  j["warnings"] = r.warnings;
  return j;
}

std::string runtime_shares_to_text(const RuntimeShares& r) {
  std::string out = "component        time       share\n";
  double total = 0.0;
  for (const char* key : kComponents) {
    char line[120];
    std::snprintf(line, sizeof(line), "%-15s  %9.2f  %6.2f%%\n", key, r.durations.at(key),
                  r.percentages.at(key));
    out += line;
    total += r.durations.at(key);
  }
  char footer[120];
  std::snprintf(footer, sizeof(footer), "%-15s  %9.2f  %6.2f%%\n", "total", total, 100.0);
  out += footer;
  for (const auto& w : r.warnings) out += "warning: " + w + "\n";
  return out;
}

}  // namespace cyclevla::eval
