#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "evi/csv.hpp"
#include "evi/errors.hpp"
#include "evi/harness.hpp"

namespace evi {

namespace {

namespace fs = std::filesystem;

std::string timestamp_utc() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::int64_t seed_override = -1;
  int trials_override = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration file")
        ->required();
    cmd->add_option("--out", out_override, "output directory override");
    cmd->add_option("--seed", seed_override, "root seed override");
    cmd->add_option("--trials", trials_override, "trial count override");
  }

  RunConfig load() const {
    RunConfig config = RunConfig::from_file(config_path);
    if (!out_override.empty()) config.output_dir = out_override;
    if (seed_override >= 0) {
      config.seed = static_cast<std::uint64_t>(seed_override);
    }
    if (trials_override > 0) config.trials = trials_override;
    return config;
  }
};

std::string prepare_output_dir(const RunConfig& config) {
  fs::create_directories(config.output_dir);
  return config.output_dir;
}

void write_summary(const std::string& dir, const std::string& name,
                   const std::string& text) {
  std::ofstream out(fs::path(dir) / name);
  out << text;
  std::cout << text;
}

int run_sweep_command(const CommonArgs& args) {
  const RunConfig config = args.load();
  const std::string dir = prepare_output_dir(config);
  const std::string stamp = "evi sweep generated " + timestamp_utc();

  std::ostringstream summary;
  summary << "sweep: " << config.env_kind << ", trials=" << config.trials
          << ", seed=" << config.seed << "\n";

  // One series at a time so completed curves survive a later abort.
  for (const std::string& name : config.sweep_triggers) {
    const TriggerKind kind[] = {*parse_trigger_kind(name)};
    const std::vector<SweepSeries> series =
        run_sweep(config, config.sweep_lambdas, kind);
    const std::string path =
        (fs::path(dir) / ("sweep_" + name + ".csv")).string();
    write_sweep_csv(series.front(), path, stamp);
    summary << "  " << name << " -> " << path << "\n";
    for (const SweepPoint& p : series.front().points) {
      summary << "    param=" << format_double(p.param)
              << " comm_rate=" << format_double(p.comm_rate_mean)
              << " final_loss=" << format_double(p.final_loss_mean) << "\n";
    }
  }
  write_summary(dir, "sweep_summary.txt", summary.str());
  return 0;
}

int run_trajectory_command(const CommonArgs& args) {
  const RunConfig config = args.load();
  const std::string dir = prepare_output_dir(config);
  const TrajectoryResult result = run_trajectory(config);

  const std::string path = (fs::path(dir) / "trajectory.csv").string();
  write_trajectory_csv(result.record, path,
                       "evi trajectory generated " + timestamp_utc());

  std::ostringstream summary;
  summary << "trajectory: " << config.env_kind
          << ", trigger=" << trigger_kind_name(config.trigger_kind)
          << ", penalty=" << format_double(config.hyper.comm_penalty) << "\n"
          << "  comm_rate=" << format_double(result.record.comm_rate)
          << " final_loss=" << format_double(result.record.final_loss)
          << " final_dist=" << format_double(result.final_dist_to_opt) << "\n"
          << "  transmissions first_half=" << result.first_half_transmissions
          << " second_half=" << result.second_half_transmissions << "\n"
          << "  -> " << path << "\n";
  write_summary(dir, "trajectory_summary.txt", summary.str());
  return 0;
}

int run_scaling_command(const CommonArgs& args) {
  const RunConfig config = args.load();
  const std::string dir = prepare_output_dir(config);
  const std::vector<ScalingRow> rows =
      run_agent_scaling(config, config.scaling_agent_counts);

  const std::string path = (fs::path(dir) / "scaling.csv").string();
  write_scaling_csv(rows, path, "evi scaling generated " + timestamp_utc());

  std::ostringstream summary;
  summary << "scaling: " << config.env_kind
          << ", loss_fraction=" << format_double(config.scaling_loss_fraction)
          << "\n";
  for (const ScalingRow& r : rows) {
    summary << "  agents=" << r.agents << " median_iterations="
            << format_double(r.median_iterations_to_threshold)
            << " comm_rate=" << format_double(r.comm_rate_mean) << "\n";
  }
  if (rows.size() >= 2) {
    const ScalingRow& first = rows.front();
    const ScalingRow& last = rows.back();
    const bool faster = last.median_iterations_to_threshold <
                        first.median_iterations_to_threshold;
    summary << "  " << last.agents << " agents reach the loss threshold "
            << (faster ? "sooner" : "no sooner") << " than " << first.agents
            << " agents (comm_rate gap "
            << format_double(
                   std::abs(last.comm_rate_mean - first.comm_rate_mean))
            << ")\n";
  }
  summary << "  -> " << path << "\n";
  write_summary(dir, "scaling_summary.txt", summary.str());
  return 0;
}

int run_check_assumptions_command(const CommonArgs& args) {
  RunConfig config = args.load();
  // Build the moment summary without the admissibility gate; this command
  // reports the verdict instead of refusing to run.
  config.waive_assumptions = true;
  const Problem problem = config.materialize();
  const SecondMomentSummary moment =
      second_moment(*problem.basis, *problem.env, SecondMomentMode::exact());

  const AssumptionReport literal = check_assumptions(
      moment, problem.hyper.step_size, problem.hyper.threshold_decay);
  const AssumptionReport gate = check_update_map(
      moment, problem.hyper.step_size, problem.hyper.threshold_decay);

  const std::string dir = prepare_output_dir(config);
  const std::string path = (fs::path(dir) / "assumptions.csv").string();
  {
    CsvWriter csv(path);
    csv.comment("evi check-assumptions generated " + timestamp_utc());
    csv.row({"report", "min_eigenvalue", "lambda_max", "positive_definite",
             "step_size", "step_size_ok", "decay", "decay_min_allowed",
             "decay_ok"});
    const auto emit = [&](const char* label, const AssumptionReport& r) {
      csv.row({label, format_double(r.min_eigenvalue),
               format_double(moment.lambda_max),
               format_int(r.positive_definite ? 1 : 0),
               format_double(r.step_size), format_int(r.step_size_ok ? 1 : 0),
               format_double(r.decay), format_double(r.decay_min_allowed),
               format_int(r.decay_ok ? 1 : 0)});
    };
    emit("stated_step", literal);
    emit("update_map", gate);
  }

  std::ostringstream summary;
  summary << "check-assumptions: " << config.env_kind << "\n"
          << "  spectrum: min=" << format_double(moment.eigenvalues[0])
          << " max=" << format_double(moment.lambda_max)
          << " positive_definite=" << (moment.positive_definite ? "yes" : "no")
          << "\n"
          << "  stated step " << format_double(literal.step_size)
          << ": step_ok=" << (literal.step_size_ok ? "yes" : "no")
          << " decay_min=" << format_double(literal.decay_min_allowed)
          << " decay_ok=" << (literal.decay_ok ? "yes" : "no") << "\n"
          << "  update map (half-gradient estimator, effective step "
          << format_double(gate.step_size)
          << "): step_ok=" << (gate.step_size_ok ? "yes" : "no")
          << " decay_min=" << format_double(gate.decay_min_allowed)
          << " decay_ok=" << (gate.decay_ok ? "yes" : "no") << "\n"
          << "  verdict: " << (gate.all_ok() ? "PASS" : "FAIL") << "\n"
          << "  -> " << path << "\n";
  write_summary(dir, "assumptions_summary.txt", summary.str());
  return gate.all_ok() ? 0 : 3;
}

int run_check_bound_command(const CommonArgs& args, int covariance_batches,
                            bool covariance_max_over_path) {
  const RunConfig config = args.load();
  const Problem problem = config.materialize();

  BoundCheckSettings settings;
  settings.trials = config.trials;
  if (covariance_batches > 0) settings.covariance_batches = covariance_batches;
  settings.covariance_max_over_path = covariance_max_over_path;

  const BoundReport report =
      performance_bound_check(problem, settings, config.seed);

  const std::string dir = prepare_output_dir(config);
  const std::string path = (fs::path(dir) / "bound.csv").string();
  {
    CsvWriter csv(path);
    csv.comment("evi check-bound generated " + timestamp_utc());
    csv.row({"lambda", "trials", "lhs_mean", "lhs_se", "rhs", "comm_term",
             "final_loss", "optimum_loss", "initial_loss", "noise_trace",
             "pass"});
    csv.row({format_double(config.hyper.comm_penalty),
             format_int(report.trials), format_double(report.lhs_mean),
             format_double(report.lhs_stderr), format_double(report.rhs),
             format_double(report.comm_term_mean),
             format_double(report.final_loss_mean),
             format_double(report.optimum_loss),
             format_double(report.initial_loss),
             format_double(report.noise_trace),
             format_int(report.pass ? 1 : 0)});
  }

  std::ostringstream summary;
  summary << "check-bound: penalty="
          << format_double(config.hyper.comm_penalty)
          << " trials=" << report.trials << "\n"
          << "  lhs=" << format_double(report.lhs_mean) << " (se "
          << format_double(report.lhs_stderr) << ")"
          << " rhs=" << format_double(report.rhs) << "\n"
          << "  comm_term=" << format_double(report.comm_term_mean)
          << " final_loss=" << format_double(report.final_loss_mean)
          << " optimum_loss=" << format_double(report.optimum_loss) << "\n"
          << "  verdict: " << (report.pass ? "PASS" : "FAIL") << "\n"
          << "  -> " << path << "\n";
  write_summary(dir, "bound_summary.txt", summary.str());
  return report.pass ? 0 : 3;
}

int run_check_inequality_command(const CommonArgs& args, int iterates,
                                 int draws) {
  const RunConfig config = args.load();
  const Problem problem = config.materialize();
  const GateCorrelationReport report =
      check_gate_correlation(problem, iterates, draws, config.seed);

  const std::string dir = prepare_output_dir(config);
  const std::string path = (fs::path(dir) / "inequality.csv").string();
  {
    CsvWriter csv(path);
    csv.comment("evi check-inequality generated " + timestamp_utc());
    csv.row({"iterate", "k", "threshold", "lhs", "rhs", "margin_se",
             "transmit_rate", "pass"});
    for (const GateCorrelationRow& row : report.rows) {
      csv.row({format_int(row.iterate), format_int(row.k),
               format_double(row.threshold), format_double(row.lhs),
               format_double(row.rhs), format_double(row.margin_stderr),
               format_double(row.transmit_rate),
               format_int(row.pass ? 1 : 0)});
    }
  }

  std::ostringstream summary;
  int failed = 0;
  for (const GateCorrelationRow& row : report.rows) {
    if (!row.pass) ++failed;
  }
  summary << "check-inequality: iterates=" << report.rows.size()
          << " draws=" << draws << " failed=" << failed << "\n"
          << "  verdict: " << (report.all_pass ? "PASS" : "FAIL") << "\n"
          << "  -> " << path << "\n";
  write_summary(dir, "inequality_summary.txt", summary.str());
  return report.all_pass ? 0 : 3;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{
      "evi: communication-efficient distributed value-function learning "
      "simulator"};
  app.require_subcommand(1);

  CommonArgs sweep_args, trajectory_args, scaling_args, assumptions_args,
      bound_args, inequality_args;

  CLI::App* sweep = app.add_subcommand(
      "sweep", "penalty sweep producing tradeoff curves per trigger");
  sweep_args.attach(sweep);

  CLI::App* trajectory = app.add_subcommand(
      "trajectory", "single run with per-iteration weight logging");
  trajectory_args.attach(trajectory);

  CLI::App* scaling = app.add_subcommand(
      "scaling", "iterations-to-threshold versus agent count");
  scaling_args.attach(scaling);

  CLI::App* assumptions = app.add_subcommand(
      "check-assumptions", "spectral admissibility of step size and decay");
  assumptions_args.attach(assumptions);

  CLI::App* bound = app.add_subcommand(
      "check-bound", "Monte Carlo check of the performance guarantee");
  bound_args.attach(bound);
  int covariance_batches = 0;
  bool covariance_max_over_path = false;
  bound->add_option("--covariance-batches", covariance_batches,
                    "batches for the gradient covariance estimate");
  bound->add_flag("--covariance-max-over-path", covariance_max_over_path,
                  "use the largest covariance along a pilot trajectory");

  CLI::App* inequality = app.add_subcommand(
      "check-inequality",
      "transmit-indicator / post-step objective correlation check");
  inequality_args.attach(inequality);
  int iterates = 20;
  int draws = 100000;
  inequality->add_option("--iterates", iterates, "number of probe iterates");
  inequality->add_option("--draws", draws, "gradient draws per iterate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sweep->parsed()) return run_sweep_command(sweep_args);
    if (trajectory->parsed()) return run_trajectory_command(trajectory_args);
    if (scaling->parsed()) return run_scaling_command(scaling_args);
    if (assumptions->parsed()) {
      return run_check_assumptions_command(assumptions_args);
    }
    if (bound->parsed()) {
      return run_check_bound_command(bound_args, covariance_batches,
                                     covariance_max_over_path);
    }
    if (inequality->parsed()) {
      return run_check_inequality_command(inequality_args, iterates, draws);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const AssumptionError& e) {
    std::cerr << "assumption violation: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace evi
