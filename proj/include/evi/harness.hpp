#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "evi/analysis.hpp"
#include "evi/config.hpp"
#include "evi/loop.hpp"

namespace evi {

// Validated run configuration. Field names mirror the config keys.
struct RunConfig {
  // environment.*
  std::string env_kind = "gridworld";  // gridworld | linear2d
  int rows = 3;
  int cols = 3;
  int goal = 2;  // top-right cell of the default grid
  double slip_prob = 0.5;
  double discount = 1.0;
  // linear2d only
  Eigen::Matrix2d dynamics =
      (Eigen::Matrix2d() << 0.8, -0.2, 0.1, 1.0).finished();
  Eigen::Matrix2d noise_cov = 0.1 * Eigen::Matrix2d::Identity();

  // basis.*
  std::string basis_kind;  // indicator | poly2; default matches environment

  // hyper.*
  HyperParams hyper;
  bool decay_auto = true;  // hyper.threshold_decay = auto

  // trigger.*
  TriggerKind trigger_kind = TriggerKind::oracle;
  double random_prob = 0.5;
  bool divide_by_iterations = true;

  // init.*
  std::string init_kind = "random";  // random | zero

  int trials = 100;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int quadrature_resolution = 512;
  bool waive_assumptions = false;

  // sweep.*
  std::vector<double> sweep_lambdas = default_sweep_lambdas();
  std::vector<double> sweep_random_probs = default_sweep_random_probs();
  std::vector<std::string> sweep_triggers = {"oracle", "estimated_gain",
                                             "random"};

  // scaling.*
  std::vector<int> scaling_agent_counts = {2, 10};
  double scaling_loss_fraction = 0.05;
  int scaling_trials = 0;  // 0 means `trials`

  static std::vector<double> default_sweep_lambdas();
  static std::vector<double> default_sweep_random_probs();

  static RunConfig from_file(const std::string& path);
  static RunConfig from_config(const KeyValueConfig& cfg);

  void validate() const;

  // Builds the environment, basis, initial value guess and shared exact
  // objective; resolves `auto` threshold decay from the moment spectrum and
  // gates on the admissibility of the executed update map unless waived.
  Problem materialize() const;
};

// Runs fn(0..count-1) on a bounded worker pool. Pool size comes from the
// EVI_WORKERS environment variable, defaulting to the hardware concurrency.
// The first exception thrown by any worker is rethrown after completion.
void parallel_for(int count, const std::function<void(int)>& fn);
int worker_count();

struct SweepPoint {
  double param = 0.0;  // penalty for gain triggers, probability for random
  int trials = 0;
  double comm_rate_mean = 0.0;
  double comm_rate_se = 0.0;
  double final_loss_mean = 0.0;
  double final_loss_se = 0.0;
};

struct SweepSeries {
  TriggerKind kind = TriggerKind::oracle;
  std::vector<SweepPoint> points;  // sorted by param ascending
};

// For every requested trigger runs `trials` seeded loops per sweep value and
// aggregates communication rate and final loss. Gain triggers sweep the
// communication penalty; the random baseline sweeps its transmit
// probability. Trial seeds are shared across series so curves can be
// compared pathwise.
std::vector<SweepSeries> run_sweep(const RunConfig& config,
                                   std::span<const double> lambdas,
                                   std::span<const TriggerKind> triggers);

struct TrajectoryResult {
  RunRecord record;
  int first_half_transmissions = 0;
  int second_half_transmissions = 0;
  double final_dist_to_opt = 0.0;
};

// Single seeded run with the full weight path recorded.
TrajectoryResult run_trajectory(const RunConfig& config);

struct ScalingRow {
  int agents = 0;
  int trials = 0;
  // First iteration whose loss gap is within the configured fraction of the
  // initial gap; iterations+1 when never reached.
  double median_iterations_to_threshold = 0.0;
  double comm_rate_mean = 0.0;
  double comm_rate_se = 0.0;
  double final_loss_mean = 0.0;
  double final_loss_se = 0.0;
};

std::vector<ScalingRow> run_agent_scaling(const RunConfig& config,
                                          std::span<const int> agent_counts);

int iterations_to_threshold(const RunRecord& record, double optimum_loss,
                            double loss_fraction);

// CSV emission. Schemas:
//   sweep:      trigger,lambda,trials,comm_rate_mean,comm_rate_se,
//               final_loss_mean,final_loss_se
//   trajectory: k,agent_id,alpha,gain,loss,weight_0..weight_{n-1}
// A non-empty comment is written as a leading '#' line, which body readers
// skip; rerunning with the same config and seed reproduces the body bytes.
void write_sweep_csv(const SweepSeries& series, const std::string& path,
                     const std::string& comment = {});
void write_trajectory_csv(const RunRecord& record, const std::string& path,
                          const std::string& comment = {});
void write_scaling_csv(std::span<const ScalingRow> rows,
                       const std::string& path,
                       const std::string& comment = {});

// Subcommands: sweep, trajectory, scaling, check-assumptions, check-bound,
// check-inequality. Exit codes: 0 success, 1 config error, 2 numerical
// failure, 3 failed check.
int cli_main(int argc, const char* const* argv);

}  // namespace evi
