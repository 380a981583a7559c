#include "evi/loop.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "evi/errors.hpp"

namespace evi {

namespace {

constexpr double kWeightNormLimit = 1e12;

void check_weights_finite(const Eigen::VectorXd& w, int k) {
  if (!w.allFinite() || w.norm() > kWeightNormLimit) {
    std::ostringstream msg;
    msg << "weights diverged at iteration " << k << " (|w| = " << w.norm()
        << "); reduce the step size";
    throw DivergenceError(msg.str());
  }
}

}  // namespace

RunRecord run_inner_loop(const Environment& env,
                         const std::shared_ptr<const FeatureBasis>& basis,
                         const ValueFunction& v_current,
                         const HyperParams& hyper, const TriggerPolicy& trigger,
                         std::uint64_t seed, const ExactObjective* objective,
                         const InnerLoopOptions& options) {
  hyper.validate();
  const int n = basis->dim();
  const int agents = hyper.agents;
  const int iterations = hyper.iterations;
  const double discount = env.discount();

  const bool gain_trigger = trigger.kind == TriggerKind::oracle ||
                            trigger.kind == TriggerKind::estimated_gain ||
                            trigger.kind == TriggerKind::estimated_gain_exact;
  if (gain_trigger && trigger.schedule.iterations != iterations) {
    throw ConfigError(
        "run_inner_loop: trigger schedule horizon does not match "
        "hyper.iterations");
  }

  std::optional<ExactObjective> local;
  if (objective == nullptr) {
    local.emplace(env, *basis, v_current, options.quadrature_resolution);
    objective = &*local;
  }
  const auto exact = [objective](const Eigen::VectorXd& w) {
    return (*objective)(w);
  };
  const Eigen::VectorXd& w_opt = objective->optimal_weights();

  Eigen::VectorXd w = options.initial_weights.size() == 0
                          ? Eigen::VectorXd::Zero(n)
                          : options.initial_weights;
  if (w.size() != n) {
    throw ConfigError("run_inner_loop: initial weights do not match basis");
  }

  RunRecord record;
  record.iterations.reserve(static_cast<std::size_t>(iterations));
  record.initial_loss = (*objective)(w);
  if (options.record_weight_path) {
    record.weight_path.reserve(static_cast<std::size_t>(iterations) + 1);
  }

  int total_transmissions = 0;
  std::vector<StochasticGradient> received;
  received.reserve(static_cast<std::size_t>(agents));

  for (int k = 0; k < iterations; ++k) {
    IterationLog log;
    log.k = k;
    log.transmitted.resize(agents, 0);
    log.gains.assign(agents, std::numeric_limits<double>::quiet_NaN());
    log.dist_to_opt = (w - w_opt).norm();
    log.loss = (*objective)(w);
    if (options.record_weight_path) record.weight_path.push_back(w);

    received.clear();
    for (int agent = 0; agent < agents; ++agent) {
      const std::uint64_t data_seed = derive_seed(
          seed, {stream::kData, static_cast<std::uint64_t>(agent),
                 static_cast<std::uint64_t>(k)});
      const std::vector<DataTuple> tuples =
          sample_tuples(env, hyper.samples_per_agent, data_seed);
      StochasticGradient grad{
          stochastic_gradient(w, tuples, *basis, v_current, discount), agent, k};

      std::optional<GainEstimate> gain;
      switch (trigger.kind) {
        case TriggerKind::oracle:
          gain = oracle_gain(w, grad.value, hyper.step_size, exact);
          break;
        case TriggerKind::estimated_gain:
          gain = estimated_gain(grad.value, tuples, *basis, hyper.step_size);
          break;
        case TriggerKind::estimated_gain_exact:
          gain = estimated_gain_exact_quadratic(grad.value, tuples, *basis,
                                                hyper.step_size);
          break;
        default:
          break;
      }

      Rng gate_rng(derive_seed(seed, {stream::kGate,
                                      static_cast<std::uint64_t>(agent),
                                      static_cast<std::uint64_t>(k)}));
      const int alpha = decide(trigger, k, gain, &gate_rng);
      log.transmitted[agent] = alpha;
      if (gain.has_value()) log.gains[agent] = gain->value;
      if (alpha == 1) {
        received.push_back(std::move(grad));
        ++total_transmissions;
      }
    }

    w = server_update(w, received, hyper.step_size, agents,
                      hyper.projection_bound);
    check_weights_finite(w, k);
    record.iterations.push_back(std::move(log));
  }

  record.final_weights = std::move(w);
  record.final_loss = (*objective)(record.final_weights);
  record.comm_rate = static_cast<double>(total_transmissions) /
                     (static_cast<double>(agents) * iterations);
  if (options.record_weight_path) {
    record.weight_path.push_back(record.final_weights);
  }
  return record;
}

ValueFunction random_initial_value(
    const Environment& env, const std::shared_ptr<const FeatureBasis>& basis,
    std::uint64_t seed) {
  Rng rng(derive_seed(seed, {stream::kInit}));
  if (env.space().is_finite()) {
    Eigen::VectorXd values(env.space().size);
    for (int s = 0; s < values.size(); ++s) values[s] = rng.uniform();
    return ValueFunction::tabular(std::move(values));
  }
  Eigen::VectorXd weights(basis->dim());
  for (int i = 0; i < weights.size(); ++i) weights[i] = rng.uniform();
  return ValueFunction::basis_expansion(basis, std::move(weights));
}

ValueFunction zero_initial_value(
    const Environment& env, const std::shared_ptr<const FeatureBasis>& basis) {
  if (env.space().is_finite()) {
    return ValueFunction::zero_tabular(env.space().size);
  }
  return ValueFunction::basis_expansion(basis,
                                        Eigen::VectorXd::Zero(basis->dim()));
}

std::vector<ValueFunction> run_outer_loop(
    const Environment& env, const std::shared_ptr<const FeatureBasis>& basis,
    const HyperParams& hyper, const TriggerPolicy& trigger,
    int outer_iterations, std::uint64_t seed,
    std::optional<ValueFunction> initial_value,
    const InnerLoopOptions& options) {
  if (outer_iterations < 1) {
    throw ConfigError("run_outer_loop: outer_iterations must be >= 1");
  }
  ValueFunction current = initial_value.has_value()
                              ? std::move(*initial_value)
                              : random_initial_value(env, basis, seed);

  std::vector<ValueFunction> fitted;
  fitted.reserve(static_cast<std::size_t>(outer_iterations));
  for (int round = 0; round < outer_iterations; ++round) {
    const std::uint64_t round_seed = derive_seed(
        seed, {stream::kRound, static_cast<std::uint64_t>(round)});
    RunRecord record = run_inner_loop(env, basis, current, hyper, trigger,
                                      round_seed, nullptr, options);
    current = ValueFunction::basis_expansion(basis, record.final_weights);
    fitted.push_back(current);
  }
  return fitted;
}

RunRecord Problem::run_trial(std::uint64_t trial_seed,
                             const InnerLoopOptions& options) const {
  InnerLoopOptions opts = options;
  opts.quadrature_resolution = quadrature_resolution;
  return run_inner_loop(*env, basis, v_current, hyper, trigger, trial_seed,
                        objective.get(), opts);
}

}  // namespace evi
