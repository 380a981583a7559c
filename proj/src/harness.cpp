#include "evi/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "evi/csv.hpp"
#include "evi/errors.hpp"

namespace evi {

namespace {

constexpr double kDecayMargin = 1e-6;

Eigen::Matrix2d parse_matrix2(const KeyValueConfig& cfg, const std::string& key,
                              const Eigen::Matrix2d& fallback) {
  if (!cfg.has(key)) return fallback;
  const std::vector<double> v = cfg.get_doubles(key, {});
  if (v.size() != 4) {
    throw ConfigError(key + ": expected 4 numbers (row-major 2x2)");
  }
  Eigen::Matrix2d m;
  m << v[0], v[1], v[2], v[3];
  return m;
}

}  // namespace

std::vector<double> RunConfig::default_sweep_lambdas() {
  // 12 logarithmically spaced penalties spanning the grid instance's
  // never-transmit and always-transmit corners.
  std::vector<double> out;
  const double lo = 1e-5;
  const double hi = 30.0;
  const int count = 12;
  for (int i = 0; i < count; ++i) {
    out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
  }
  return out;
}

std::vector<double> RunConfig::default_sweep_random_probs() {
  std::vector<double> out;
  for (int i = 0; i < 12; ++i) out.push_back(i / 11.0);
  return out;
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_config(KeyValueConfig::parse_file(path));
}

RunConfig RunConfig::from_config(const KeyValueConfig& cfg) {
  RunConfig rc;
  rc.env_kind = cfg.get_string("environment.kind", rc.env_kind);
  if (rc.env_kind != "gridworld" && rc.env_kind != "linear2d") {
    throw ConfigError("environment.kind: expected gridworld or linear2d");
  }
  rc.rows = cfg.get_int("environment.rows", rc.rows);
  rc.cols = cfg.get_int("environment.cols", rc.cols);
  rc.goal = cfg.get_int("environment.goal", rc.cols - 1);
  rc.slip_prob = cfg.get_double("environment.slip_prob", rc.slip_prob);
  rc.discount = cfg.get_double("environment.discount",
                               rc.env_kind == "gridworld" ? 1.0 : 0.9);
  rc.dynamics = parse_matrix2(cfg, "environment.dynamics", rc.dynamics);
  rc.noise_cov = parse_matrix2(cfg, "environment.noise_cov", rc.noise_cov);

  rc.basis_kind = cfg.get_string(
      "basis.kind", rc.env_kind == "gridworld" ? "indicator" : "poly2");

  rc.hyper.step_size = cfg.get_double("hyper.step_size", 1.0);
  rc.hyper.samples_per_agent = cfg.get_int("hyper.samples_per_agent", 10);
  rc.hyper.iterations = cfg.get_int("hyper.iterations", 50);
  rc.hyper.agents = cfg.get_int("hyper.agents", 2);
  rc.hyper.comm_penalty = cfg.get_double("hyper.comm_penalty", 0.1);
  rc.hyper.projection_bound = cfg.get_double("hyper.projection_bound", 0.0);
  const std::string decay = cfg.get_string("hyper.threshold_decay", "auto");
  if (decay == "auto") {
    rc.decay_auto = true;
  } else {
    rc.decay_auto = false;
    char* end = nullptr;
    rc.hyper.threshold_decay = std::strtod(decay.c_str(), &end);
    if (end == decay.c_str() || *end != '\0') {
      throw ConfigError("hyper.threshold_decay: expected a number or 'auto'");
    }
  }

  const std::string trig = cfg.get_string("trigger.kind", "oracle");
  const auto kind = parse_trigger_kind(trig);
  if (!kind.has_value()) {
    throw ConfigError("trigger.kind: unknown trigger '" + trig + "'");
  }
  rc.trigger_kind = *kind;
  rc.random_prob = cfg.get_double("trigger.random_prob", 0.5);
  rc.divide_by_iterations = cfg.get_bool("trigger.divide_by_iterations", true);

  rc.init_kind = cfg.get_string("init.value_function", "random");
  if (rc.init_kind != "random" && rc.init_kind != "zero") {
    throw ConfigError("init.value_function: expected random or zero");
  }

  rc.trials = cfg.get_int("trials", rc.trials);
  rc.seed = static_cast<std::uint64_t>(cfg.get_int64("seed", 1));
  rc.output_dir = cfg.get_string("output", rc.output_dir);
  rc.quadrature_resolution =
      cfg.get_int("quadrature.resolution", rc.quadrature_resolution);
  rc.waive_assumptions = cfg.get_bool("assumptions.waive", false);

  rc.sweep_lambdas = cfg.get_doubles("sweep.lambdas", rc.sweep_lambdas);
  rc.sweep_random_probs =
      cfg.get_doubles("sweep.random_probs", rc.sweep_random_probs);
  rc.sweep_triggers = cfg.get_strings("sweep.triggers", rc.sweep_triggers);

  rc.scaling_agent_counts =
      cfg.get_ints("scaling.agent_counts", rc.scaling_agent_counts);
  rc.scaling_loss_fraction =
      cfg.get_double("scaling.loss_fraction", rc.scaling_loss_fraction);
  rc.scaling_trials = cfg.get_int("scaling.trials", 0);

  const std::vector<std::string> unknown = cfg.unconsumed_keys();
  if (!unknown.empty()) {
    throw ConfigError("unknown config key: " + unknown.front());
  }
  rc.validate();
  return rc;
}

void RunConfig::validate() const {
  hyper.validate();
  if (trials < 1) throw ConfigError("trials: must be >= 1");
  if (quadrature_resolution < 1) {
    throw ConfigError("quadrature.resolution: must be >= 1");
  }
  if (env_kind == "gridworld") {
    if (rows < 1 || cols < 1) {
      throw ConfigError("environment.rows/cols: must be >= 1");
    }
    if (goal < 0 || goal >= rows * cols) {
      throw ConfigError("environment.goal: cell index out of range");
    }
    if (slip_prob < 0.0 || slip_prob > 1.0) {
      throw ConfigError("environment.slip_prob: must lie in [0,1]");
    }
    if (basis_kind != "indicator") {
      throw ConfigError("basis.kind: gridworld requires indicator");
    }
  } else {
    if (basis_kind != "poly2") {
      throw ConfigError("basis.kind: linear2d requires poly2");
    }
    if (discount <= 0.0 || discount >= 1.0) {
      throw ConfigError("environment.discount: must lie in (0,1)");
    }
  }
  if (random_prob < 0.0 || random_prob > 1.0) {
    throw ConfigError("trigger.random_prob: must lie in [0,1]");
  }
  if (!(scaling_loss_fraction > 0.0 && scaling_loss_fraction < 1.0)) {
    throw ConfigError("scaling.loss_fraction: must lie in (0,1)");
  }
  for (double p : sweep_random_probs) {
    if (p < 0.0 || p > 1.0) {
      throw ConfigError("sweep.random_probs: entries must lie in [0,1]");
    }
  }
  for (double l : sweep_lambdas) {
    if (l < 0.0) throw ConfigError("sweep.lambdas: entries must be >= 0");
  }
  for (const std::string& t : sweep_triggers) {
    if (!parse_trigger_kind(t).has_value()) {
      throw ConfigError("sweep.triggers: unknown trigger '" + t + "'");
    }
  }
  for (int m : scaling_agent_counts) {
    if (m < 1) throw ConfigError("scaling.agent_counts: entries must be >= 1");
  }
}

Problem RunConfig::materialize() const {
  Problem problem;
  if (env_kind == "gridworld") {
    problem.env = make_gridworld(rows, cols, goal, slip_prob, discount);
    problem.basis = indicator_basis(rows * cols);
  } else {
    problem.env = make_linear_gaussian(dynamics, noise_cov, discount);
    problem.basis = polynomial_basis_deg2();
  }

  const SecondMomentSummary moment =
      second_moment(*problem.basis, *problem.env, SecondMomentMode::exact());

  problem.hyper = hyper;
  if (decay_auto) {
    // Smallest decay admissible for the executed update map, plus a margin.
    const double floor = decay_min_allowed(
        moment.eigenvalues, hyper.step_size * kBatchGradientScale);
    problem.hyper.threshold_decay = std::min(1.0, floor + kDecayMargin);
  }

  const AssumptionReport gate = check_update_map(
      moment, problem.hyper.step_size, problem.hyper.threshold_decay);
  if (!waive_assumptions) {
    if (!gate.positive_definite) {
      throw AssumptionError(
          "feature second-moment matrix is not positive definite");
    }
    if (!gate.step_size_ok) {
      throw AssumptionError(
          "hyper.step_size is inadmissible for this spectrum; the update "
          "map is unstable");
    }
    const bool gain_trigger = trigger_kind == TriggerKind::oracle ||
                              trigger_kind == TriggerKind::estimated_gain ||
                              trigger_kind == TriggerKind::estimated_gain_exact;
    if (gain_trigger && !gate.decay_ok) {
      throw AssumptionError(
          "hyper.threshold_decay decays faster than the update map "
          "contracts; raise it or use 'auto'");
    }
  }

  problem.trigger.kind = trigger_kind;
  problem.trigger.random_prob = random_prob;
  problem.trigger.schedule =
      ThresholdSchedule{problem.hyper.comm_penalty,
                        problem.hyper.threshold_decay,
                        problem.hyper.iterations, divide_by_iterations};

  problem.v_current = init_kind == "zero"
                          ? zero_initial_value(*problem.env, problem.basis)
                          : random_initial_value(*problem.env, problem.basis,
                                                 seed);
  problem.quadrature_resolution = quadrature_resolution;
  problem.objective = std::make_shared<ExactObjective>(
      *problem.env, *problem.basis, problem.v_current, quadrature_resolution);
  return problem;
}

int worker_count() {
  if (const char* env = std::getenv("EVI_WORKERS")) {
    const int parsed = std::atoi(env);
    if (parsed >= 1) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(int count, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

struct TrialStats {
  std::vector<double> comm;
  std::vector<double> loss;
};

SweepPoint aggregate_point(double param, const TrialStats& stats) {
  SweepPoint point;
  point.param = param;
  point.trials = static_cast<int>(stats.comm.size());
  const MetricEstimate comm = mean_and_stderr(stats.comm);
  const MetricEstimate loss = mean_and_stderr(stats.loss);
  point.comm_rate_mean = comm.mean;
  point.comm_rate_se = comm.stderr_;
  point.final_loss_mean = loss.mean;
  point.final_loss_se = loss.stderr_;
  return point;
}

}  // namespace

std::vector<SweepSeries> run_sweep(const RunConfig& config,
                                   std::span<const double> lambdas,
                                   std::span<const TriggerKind> triggers) {
  if (lambdas.empty()) throw ConfigError("sweep: need at least one penalty");
  if (config.trials < 1) throw ConfigError("sweep: trials must be >= 1");
  const Problem base = config.materialize();

  std::vector<SweepSeries> result;
  for (TriggerKind kind : triggers) {
    SweepSeries series;
    series.kind = kind;

    std::vector<double> params;
    if (kind == TriggerKind::random) {
      params.assign(config.sweep_random_probs.begin(),
                    config.sweep_random_probs.end());
    } else {
      params.assign(lambdas.begin(), lambdas.end());
    }
    if (params.empty()) {
      throw ConfigError(std::string("sweep: no sweep values for trigger ") +
                        trigger_kind_name(kind));
    }
    std::sort(params.begin(), params.end());

    for (double param : params) {
      Problem variant = base;
      variant.trigger.kind = kind;
      if (kind == TriggerKind::random) {
        variant.trigger.random_prob = param;
      } else {
        variant.hyper.comm_penalty = param;
        variant.trigger.schedule.comm_penalty = param;
      }

      TrialStats stats;
      stats.comm.resize(static_cast<std::size_t>(config.trials));
      stats.loss.resize(static_cast<std::size_t>(config.trials));
      parallel_for(config.trials, [&](int trial) {
        // Trial seeds do not depend on the trigger or the penalty, so all
        // series see the same tuple streams.
        const RunRecord record = variant.run_trial(derive_seed(
            config.seed, {stream::kTrial, static_cast<std::uint64_t>(trial)}));
        stats.comm[static_cast<std::size_t>(trial)] = record.comm_rate;
        stats.loss[static_cast<std::size_t>(trial)] = record.final_loss;
      });
      series.points.push_back(aggregate_point(param, stats));
    }
    result.push_back(std::move(series));
  }
  return result;
}

TrajectoryResult run_trajectory(const RunConfig& config) {
  const Problem problem = config.materialize();
  InnerLoopOptions options;
  options.record_weight_path = true;
  TrajectoryResult out;
  out.record = problem.run_trial(
      derive_seed(config.seed, {stream::kTrial, 0}), options);

  const int half = config.hyper.iterations / 2;
  for (const IterationLog& it : out.record.iterations) {
    int bits = 0;
    for (int b : it.transmitted) bits += b;
    if (it.k < half) {
      out.first_half_transmissions += bits;
    } else {
      out.second_half_transmissions += bits;
    }
  }
  out.final_dist_to_opt =
      (out.record.final_weights - problem.objective->optimal_weights()).norm();
  return out;
}

int iterations_to_threshold(const RunRecord& record, double optimum_loss,
                            double loss_fraction) {
  const double gap0 = record.initial_loss - optimum_loss;
  const double cutoff = optimum_loss + loss_fraction * gap0;
  for (const IterationLog& it : record.iterations) {
    if (it.loss <= cutoff) return it.k;
  }
  if (record.final_loss <= cutoff) {
    return static_cast<int>(record.iterations.size());
  }
  return static_cast<int>(record.iterations.size()) + 1;  // never reached
}

std::vector<ScalingRow> run_agent_scaling(const RunConfig& config,
                                          std::span<const int> agent_counts) {
  if (agent_counts.empty()) {
    throw ConfigError("scaling: agent count list must be non-empty");
  }
  const Problem base = config.materialize();
  const double optimum = base.objective->optimum_value();
  const int trials =
      config.scaling_trials > 0 ? config.scaling_trials : config.trials;

  std::vector<ScalingRow> rows;
  for (int agents : agent_counts) {
    Problem variant = base;
    variant.hyper.agents = agents;

    std::vector<double> iters(static_cast<std::size_t>(trials));
    TrialStats stats;
    stats.comm.resize(static_cast<std::size_t>(trials));
    stats.loss.resize(static_cast<std::size_t>(trials));
    parallel_for(trials, [&](int trial) {
      const RunRecord record = variant.run_trial(derive_seed(
          config.seed, {stream::kTrial, static_cast<std::uint64_t>(trial)}));
      iters[static_cast<std::size_t>(trial)] = iterations_to_threshold(
          record, optimum, config.scaling_loss_fraction);
      stats.comm[static_cast<std::size_t>(trial)] = record.comm_rate;
      stats.loss[static_cast<std::size_t>(trial)] = record.final_loss;
    });

    std::sort(iters.begin(), iters.end());
    ScalingRow row;
    row.agents = agents;
    row.trials = trials;
    const std::size_t mid = iters.size() / 2;
    row.median_iterations_to_threshold =
        iters.size() % 2 == 1 ? iters[mid]
                              : 0.5 * (iters[mid - 1] + iters[mid]);
    const MetricEstimate comm = mean_and_stderr(stats.comm);
    const MetricEstimate loss = mean_and_stderr(stats.loss);
    row.comm_rate_mean = comm.mean;
    row.comm_rate_se = comm.stderr_;
    row.final_loss_mean = loss.mean;
    row.final_loss_se = loss.stderr_;
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const SweepSeries& series, const std::string& path,
                     const std::string& comment) {
  CsvWriter csv(path);
  if (!comment.empty()) csv.comment(comment);
  csv.row({"trigger", "lambda", "trials", "comm_rate_mean", "comm_rate_se",
           "final_loss_mean", "final_loss_se"});
  for (const SweepPoint& p : series.points) {
    csv.row({trigger_kind_name(series.kind), format_double(p.param),
             format_int(p.trials), format_double(p.comm_rate_mean),
             format_double(p.comm_rate_se), format_double(p.final_loss_mean),
             format_double(p.final_loss_se)});
  }
}

void write_trajectory_csv(const RunRecord& record, const std::string& path,
                          const std::string& comment) {
  CsvWriter csv(path);
  if (!comment.empty()) csv.comment(comment);
  const int n = static_cast<int>(record.final_weights.size());
  std::vector<std::string> header = {"k", "agent_id", "alpha", "gain", "loss"};
  for (int i = 0; i < n; ++i) header.push_back("weight_" + std::to_string(i));
  csv.row(header);

  for (const IterationLog& it : record.iterations) {
    const Eigen::VectorXd& w =
        record.weight_path.empty() ? record.final_weights
                                   : record.weight_path[it.k];
    for (std::size_t agent = 0; agent < it.transmitted.size(); ++agent) {
      std::vector<std::string> cells = {
          format_int(it.k), format_int(static_cast<long long>(agent)),
          format_int(it.transmitted[agent]), format_double(it.gains[agent]),
          format_double(it.loss)};
      for (int i = 0; i < n; ++i) cells.push_back(format_double(w[i]));
      csv.row(cells);
    }
  }
}

void write_scaling_csv(std::span<const ScalingRow> rows,
                       const std::string& path, const std::string& comment) {
  CsvWriter csv(path);
  if (!comment.empty()) csv.comment(comment);
  csv.row({"agents", "trials", "median_iterations_to_threshold",
           "comm_rate_mean", "comm_rate_se", "final_loss_mean",
           "final_loss_se"});
  for (const ScalingRow& r : rows) {
    csv.row({format_int(r.agents), format_int(r.trials),
             format_double(r.median_iterations_to_threshold),
             format_double(r.comm_rate_mean), format_double(r.comm_rate_se),
             format_double(r.final_loss_mean),
             format_double(r.final_loss_se)});
  }
}

}  // namespace evi
