#include "evi/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "evi/errors.hpp"

namespace evi {

namespace {

constexpr double kDecayTol = 1e-12;

}  // namespace

double decay_min_allowed(const Eigen::VectorXd& eigenvalues,
                         double step_size) {
  double worst = 0.0;
  for (int i = 0; i < eigenvalues.size(); ++i) {
    const double factor = 1.0 - 2.0 * step_size * eigenvalues[i];
    worst = std::max(worst, factor * factor);
  }
  return worst;
}

AssumptionReport check_assumptions(const SecondMomentSummary& moment,
                                   double step_size, double decay) {
  AssumptionReport report;
  report.step_size = step_size;
  report.decay = decay;
  report.min_eigenvalue = moment.eigenvalues[0];
  report.positive_definite = moment.positive_definite;

  const int n = static_cast<int>(moment.eigenvalues.size());
  report.step_margins.resize(n);
  bool ok = true;
  for (int i = 0; i < n; ++i) {
    report.step_margins[i] =
        std::abs(1.0 - 2.0 * step_size * moment.eigenvalues[i]);
    ok = ok && report.step_margins[i] < 1.0;
  }
  report.step_size_ok = ok;
  report.sufficient_step_ok =
      moment.lambda_max > 0.0 && step_size < 2.0 / moment.lambda_max;
  report.decay_min_allowed = decay_min_allowed(moment.eigenvalues, step_size);
  report.decay_ok = decay >= report.decay_min_allowed - kDecayTol;
  return report;
}

AssumptionReport check_update_map(const SecondMomentSummary& moment,
                                  double step_size, double decay) {
  return check_assumptions(moment, step_size * kBatchGradientScale, decay);
}

Eigen::MatrixXd estimate_gradient_covariance(
    const Environment& env, const FeatureBasis& basis,
    const ValueFunction& v_current, const Eigen::VectorXd& w,
    int samples_per_batch, int batches, std::uint64_t seed) {
  if (batches < 2) {
    throw ConfigError("estimate_gradient_covariance: batches must be >= 2");
  }
  const int n = basis.dim();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(n, n);
  for (int b = 0; b < batches; ++b) {
    const std::uint64_t batch_seed = derive_seed(
        seed, {stream::kProbe, static_cast<std::uint64_t>(b)});
    const std::vector<DataTuple> tuples =
        sample_tuples(env, samples_per_batch, batch_seed);
    const Eigen::VectorXd g =
        stochastic_gradient(w, tuples, basis, v_current, env.discount());
    mean += g;
    second.selfadjointView<Eigen::Lower>().rankUpdate(g);
  }
  mean /= static_cast<double>(batches);
  second = second.selfadjointView<Eigen::Lower>();
  second /= static_cast<double>(batches);
  Eigen::MatrixXd cov = second - mean * mean.transpose();
  // Unbiased scaling, then re-symmetrize against accumulation error.
  cov *= static_cast<double>(batches) / (batches - 1.0);
  return 0.5 * (cov + cov.transpose());
}

MetricEstimate mean_and_stderr(std::span<const double> values) {
  if (values.empty()) {
    throw ConfigError("mean_and_stderr: empty sample");
  }
  MetricEstimate out;
  out.trials = static_cast<int>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / out.trials;
  if (out.trials > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stderr_ = std::sqrt(ss / (out.trials - 1.0) / out.trials);
  }
  return out;
}

MetricEstimate performance_metric(std::span<const RunRecord> records,
                                  double comm_penalty) {
  if (records.empty()) {
    throw ConfigError("performance_metric: empty record list");
  }
  std::vector<double> values;
  values.reserve(records.size());
  for (const RunRecord& r : records) {
    values.push_back(comm_penalty * r.comm_rate + r.final_loss);
  }
  return mean_and_stderr(values);
}

BoundReport performance_bound_check(const Problem& problem,
                                    const BoundCheckSettings& settings,
                                    std::uint64_t seed) {
  if (problem.trigger.kind != TriggerKind::oracle) {
    throw ConfigError("check-bound: trigger.kind must be oracle");
  }
  if (!problem.trigger.schedule.divide_by_iterations) {
    throw ConfigError(
        "check-bound: trigger.divide_by_iterations must be true");
  }
  if (problem.hyper.agents != 2) {
    throw ConfigError("check-bound: hyper.agents must be 2");
  }
  if (settings.trials < 2) {
    throw ConfigError("check-bound: trials must be >= 2");
  }

  BoundReport report;
  report.trials = settings.trials;

  const SecondMomentSummary moment =
      second_moment(*problem.basis, *problem.env, SecondMomentMode::exact());
  report.update_map = check_update_map(moment, problem.hyper.step_size,
                                       problem.hyper.threshold_decay);
  if (!report.update_map.all_ok()) {
    throw AssumptionError(
        "check-bound: step size or threshold decay is inadmissible for the "
        "executed update map");
  }

  const ExactObjective& objective = *problem.objective;
  const Eigen::VectorXd& w_opt = objective.optimal_weights();
  report.optimum_loss = objective.optimum_value();
  report.initial_loss =
      objective(Eigen::VectorXd::Zero(problem.basis->dim()));

  // Gradient-noise covariance plug-in.
  const std::uint64_t cov_seed = derive_seed(seed, {stream::kProbe, 0xC0});
  if (settings.covariance_max_over_path) {
    Problem pilot = problem;
    pilot.trigger = TriggerPolicy{TriggerKind::always, 0.5,
                                  problem.trigger.schedule};
    const RunRecord path = pilot.run_trial(
        derive_seed(seed, {stream::kProbe, 0xAA}),
        InnerLoopOptions{true, {}, problem.quadrature_resolution});
    double best_trace = -1.0;
    const int probes = std::max(1, settings.path_probe_points);
    const int stride =
        std::max<int>(1, static_cast<int>(path.weight_path.size()) / probes);
    for (std::size_t i = 0; i < path.weight_path.size(); i += stride) {
      Eigen::MatrixXd cov = estimate_gradient_covariance(
          *problem.env, *problem.basis, problem.v_current, path.weight_path[i],
          problem.hyper.samples_per_agent, settings.covariance_batches,
          derive_seed(cov_seed, {static_cast<std::uint64_t>(i)}));
      const double trace = (moment.matrix * cov).trace();
      if (trace > best_trace) {
        best_trace = trace;
        report.gradient_covariance = std::move(cov);
      }
    }
  } else {
    report.gradient_covariance = estimate_gradient_covariance(
        *problem.env, *problem.basis, problem.v_current, w_opt,
        problem.hyper.samples_per_agent, settings.covariance_batches,
        cov_seed);
  }
  report.noise_trace = (moment.matrix * report.gradient_covariance).trace();

  const double decay = problem.hyper.threshold_decay;
  const int horizon = problem.hyper.iterations;
  const double decay_pow = std::pow(decay, horizon);
  report.horizon_factor = std::abs(1.0 - decay) < kDecayTol
                              ? static_cast<double>(horizon)
                              : (1.0 - decay_pow) / (1.0 - decay);

  const double penalty = problem.hyper.comm_penalty;
  report.rhs = penalty + report.optimum_loss +
               decay_pow * (report.initial_loss - report.optimum_loss) +
               report.horizon_factor * problem.hyper.step_size *
                   problem.hyper.step_size * report.noise_trace;

  std::vector<double> lhs_values, comm_values, loss_values;
  lhs_values.reserve(settings.trials);
  for (int trial = 0; trial < settings.trials; ++trial) {
    const RunRecord record = problem.run_trial(derive_seed(
        seed, {stream::kTrial, static_cast<std::uint64_t>(trial)}));
    const double value = penalty * record.comm_rate + record.final_loss;
    lhs_values.push_back(value);
    comm_values.push_back(penalty * record.comm_rate);
    loss_values.push_back(record.final_loss);
  }
  const MetricEstimate lhs = mean_and_stderr(lhs_values);
  report.lhs_mean = lhs.mean;
  report.lhs_stderr = lhs.stderr_;
  report.comm_term_mean = mean_and_stderr(comm_values).mean;
  report.final_loss_mean = mean_and_stderr(loss_values).mean;
  report.pass = report.lhs_mean <= report.rhs + 2.0 * report.lhs_stderr;
  return report;
}

GateCorrelationReport check_gate_correlation(const Problem& problem,
                                             int iterates, int draws,
                                             std::uint64_t seed) {
  if (iterates < 1 || draws < 2) {
    throw ConfigError("check-inequality: need >= 1 iterates and >= 2 draws");
  }
  const ExactObjective& objective = *problem.objective;
  const Eigen::VectorXd& w_opt = objective.optimal_weights();
  const int n = problem.basis->dim();
  const double step = problem.hyper.step_size;
  const int horizon = problem.hyper.iterations;

  GateCorrelationReport report;
  report.all_pass = true;
  Rng iterate_rng(derive_seed(seed, {stream::kProbe, 0x17}));

  for (int it = 0; it < iterates; ++it) {
    // Perturbed iterate around the optimum, where gains span the
    // interesting range.
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) {
      w[i] = w_opt[i] + 2.0 * iterate_rng.uniform() - 1.0;
    }
    // Late-phase thresholds are the ones that actually gate transmissions.
    const int k = std::max(0, horizon - 1 - (it % horizon));
    const double thr = threshold(problem.trigger.schedule, k);

    double sum_d = 0.0, sum_a = 0.0, sum_j = 0.0;
    double sum_dd = 0.0, sum_aa = 0.0, sum_jj = 0.0;
    double sum_da = 0.0, sum_dj = 0.0, sum_aj = 0.0;
    for (int b = 0; b < draws; ++b) {
      const std::uint64_t batch_seed =
          derive_seed(seed, {stream::kProbe, static_cast<std::uint64_t>(it),
                             static_cast<std::uint64_t>(b)});
      const std::vector<DataTuple> tuples = sample_tuples(
          *problem.env, problem.hyper.samples_per_agent, batch_seed);
      const Eigen::VectorXd g = stochastic_gradient(
          w, tuples, *problem.basis, problem.v_current,
          problem.env->discount());
      const double j_after = objective(w - step * g);
      const double alpha =
          (j_after - objective(w) <= -thr) ? 1.0 : 0.0;
      const double d = alpha * j_after;
      sum_d += d;
      sum_a += alpha;
      sum_j += j_after;
      sum_dd += d * d;
      sum_aa += alpha * alpha;
      sum_jj += j_after * j_after;
      sum_da += d * alpha;
      sum_dj += d * j_after;
      sum_aj += alpha * j_after;
    }
    const double m = static_cast<double>(draws);
    const double mean_d = sum_d / m;
    const double mean_a = sum_a / m;
    const double mean_j = sum_j / m;
    const double var_d = sum_dd / m - mean_d * mean_d;
    const double var_a = sum_aa / m - mean_a * mean_a;
    const double var_j = sum_jj / m - mean_j * mean_j;
    const double cov_da = sum_da / m - mean_d * mean_a;
    const double cov_dj = sum_dj / m - mean_d * mean_j;
    const double cov_aj = sum_aj / m - mean_a * mean_j;

    // Delta-method variance of mean_d - mean_a * mean_j.
    const double var_margin =
        (var_d + mean_j * mean_j * var_a + mean_a * mean_a * var_j -
         2.0 * mean_j * cov_da - 2.0 * mean_a * cov_dj +
         2.0 * mean_a * mean_j * cov_aj) /
        m;

    GateCorrelationRow row;
    row.iterate = it;
    row.k = k;
    row.threshold = thr;
    row.lhs = mean_d;
    row.rhs = mean_a * mean_j;
    row.margin_stderr = std::sqrt(std::max(0.0, var_margin));
    row.transmit_rate = mean_a;
    row.pass = row.lhs <= row.rhs + 2.0 * row.margin_stderr;
    report.all_pass = report.all_pass && row.pass;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace evi
