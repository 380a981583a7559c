#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "evi/features.hpp"
#include "evi/loop.hpp"
#include "evi/run_record.hpp"

namespace evi {

// Spectral admissibility of (step size, threshold decay) for a given
// feature second-moment matrix.
struct AssumptionReport {
  double min_eigenvalue = 0.0;
  bool positive_definite = false;
  Eigen::VectorXd step_margins;       // |1 - 2 * step * lambda_i|
  bool step_size_ok = false;          // all margins strictly below 1
  bool sufficient_step_ok = false;    // step < 2 / lambda_max
  double decay_min_allowed = 0.0;     // max_i (1 - 2 * step * lambda_i)^2
  bool decay_ok = false;              // decay >= minimum - 1e-12
  double step_size = 0.0;
  double decay = 0.0;

  bool all_ok() const {
    return positive_definite && step_size_ok && decay_ok;
  }
};

AssumptionReport check_assumptions(const SecondMomentSummary& moment,
                                   double step_size, double decay);

// Smallest admissible threshold decay for the given spectrum and step.
double decay_min_allowed(const Eigen::VectorXd& eigenvalues, double step_size);

// Admissibility of the update map actually executed by the server. The
// batch estimator carries half the objective gradient, so the conditions
// are evaluated at step * kBatchGradientScale.
AssumptionReport check_update_map(const SecondMomentSummary& moment,
                                  double step_size, double decay);

// Sample covariance of the batch gradient at fixed w over independent
// batches of size samples_per_batch.
Eigen::MatrixXd estimate_gradient_covariance(
    const Environment& env, const FeatureBasis& basis,
    const ValueFunction& v_current, const Eigen::VectorXd& w,
    int samples_per_batch, int batches, std::uint64_t seed);

struct BoundCheckSettings {
  int trials = 2000;
  int covariance_batches = 4000;
  // When true, probe the gradient covariance along an always-transmit pilot
  // trajectory and keep the matrix with the largest trace; otherwise the
  // covariance is taken at the optimum.
  bool covariance_max_over_path = false;
  int path_probe_points = 8;
};

// Monte Carlo check of the end-to-end performance guarantee: the mean of
// penalty * (transmissions / (2N)) + J(w_N) over independent trials must
// stay below the closed-form ceiling built from J(w*), the initialization
// gap, the decay rate, and the gradient-noise trace.
struct BoundReport {
  double lhs_mean = 0.0;
  double lhs_stderr = 0.0;
  double rhs = 0.0;
  double comm_term_mean = 0.0;
  double final_loss_mean = 0.0;
  double optimum_loss = 0.0;
  double initial_loss = 0.0;
  double noise_trace = 0.0;      // tr(Phi G)
  double horizon_factor = 0.0;   // (1 - decay^N) / (1 - decay), N at decay 1
  int trials = 0;
  bool pass = false;
  Eigen::MatrixXd gradient_covariance;
  AssumptionReport update_map;   // admissibility of the executed update
};

// Requires: oracle trigger, threshold schedule in divide-by-iterations
// mode, exactly two agents, and an admissible (step, decay) pair for the
// executed update map.
BoundReport performance_bound_check(const Problem& problem,
                                    const BoundCheckSettings& settings,
                                    std::uint64_t seed);

// Verifies that the transmit indicator is nonpositively correlated with the
// post-step objective: mean(alpha * J(w - step g)) must not exceed
// mean(alpha) * mean(J(w - step g)) beyond Monte Carlo error. Checked at
// `iterates` perturbed weight vectors, each with `draws` fresh batches,
// against the late-phase thresholds of the schedule.
struct GateCorrelationRow {
  int iterate = 0;
  int k = 0;                 // schedule index supplying the threshold
  double threshold = 0.0;
  double lhs = 0.0;          // mean(alpha * J(w - step g))
  double rhs = 0.0;          // mean(alpha) * mean(J(w - step g))
  double margin_stderr = 0.0;
  double transmit_rate = 0.0;
  bool pass = false;
};

struct GateCorrelationReport {
  std::vector<GateCorrelationRow> rows;
  bool all_pass = false;
};

GateCorrelationReport check_gate_correlation(const Problem& problem,
                                             int iterates, int draws,
                                             std::uint64_t seed);

struct MetricEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  int trials = 0;
};

// Mean over trials of penalty * comm_rate + J(w_N), with standard error.
MetricEstimate performance_metric(std::span<const RunRecord> records,
                                  double comm_penalty);

// Mean and standard error of a sample.
MetricEstimate mean_and_stderr(std::span<const double> values);

}  // namespace evi
