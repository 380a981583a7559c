#include "evi/trigger.hpp"

#include <cmath>

#include "evi/errors.hpp"

namespace evi {

const char* trigger_kind_name(TriggerKind kind) {
  switch (kind) {
    case TriggerKind::oracle: return "oracle";
    case TriggerKind::estimated_gain: return "estimated_gain";
    case TriggerKind::estimated_gain_exact: return "estimated_gain_exact";
    case TriggerKind::random: return "random";
    case TriggerKind::always: return "always";
    case TriggerKind::never: return "never";
  }
  return "unknown";
}

std::optional<TriggerKind> parse_trigger_kind(std::string_view name) {
  for (TriggerKind kind :
       {TriggerKind::oracle, TriggerKind::estimated_gain,
        TriggerKind::estimated_gain_exact, TriggerKind::random,
        TriggerKind::always, TriggerKind::never}) {
    if (name == trigger_kind_name(kind)) return kind;
  }
  return std::nullopt;
}

double threshold(const ThresholdSchedule& schedule, int k) {
  if (k < 0 || k >= schedule.iterations) {
    throw ConfigError("threshold: iteration index out of range");
  }
  if (!(schedule.decay > 0.0 && schedule.decay <= 1.0)) {
    throw ConfigError("threshold: decay must lie in (0,1]");
  }
  const double base = schedule.divide_by_iterations
                          ? schedule.comm_penalty / schedule.iterations
                          : schedule.comm_penalty;
  return base / std::pow(schedule.decay, schedule.iterations - 1 - k);
}

GainEstimate oracle_gain(const Eigen::VectorXd& w, const Eigen::VectorXd& g,
                         double step_size,
                         const std::function<double(const Eigen::VectorXd&)>&
                             exact_objective) {
  const double value =
      exact_objective(w - step_size * g) - exact_objective(w);
  return {value, GainEstimate::Method::oracle};
}

namespace {

// Mean of (phi^T g)^2 over the batch; equals g^T [(1/T) sum phi phi^T] g
// without materializing the matrix.
double mean_projected_square(const Eigen::VectorXd& g,
                             std::span<const DataTuple> tuples,
                             const FeatureBasis& basis) {
  if (tuples.empty()) {
    throw ConfigError("estimated gain: tuple batch must be non-empty");
  }
  Eigen::VectorXd phi(basis.dim());
  double acc = 0.0;
  for (const DataTuple& t : tuples) {
    basis.eval_into(t.x, phi);
    const double proj = phi.dot(g);
    acc += proj * proj;
  }
  return acc / static_cast<double>(tuples.size());
}

}  // namespace

GainEstimate estimated_gain(const Eigen::VectorXd& g,
                            std::span<const DataTuple> tuples,
                            const FeatureBasis& basis, double step_size) {
  const double quad = mean_projected_square(g, tuples, basis);
  const double value = -(g.squaredNorm() - 0.5 * step_size * quad);
  return {value, GainEstimate::Method::sample_quadratic};
}

GainEstimate estimated_gain_exact_quadratic(const Eigen::VectorXd& g,
                                            std::span<const DataTuple> tuples,
                                            const FeatureBasis& basis,
                                            double step_size) {
  const double quad = mean_projected_square(g, tuples, basis);
  const double value =
      -step_size * g.squaredNorm() + step_size * step_size * quad;
  return {value, GainEstimate::Method::sample_exact_quadratic};
}

int decide(const TriggerPolicy& policy, int k,
           const std::optional<GainEstimate>& gain, Rng* rng) {
  switch (policy.kind) {
    case TriggerKind::always:
      return 1;
    case TriggerKind::never:
      return 0;
    case TriggerKind::random:
      if (rng == nullptr) {
        throw ConfigError("decide: random trigger requires an rng");
      }
      return rng->bernoulli(policy.random_prob) ? 1 : 0;
    case TriggerKind::oracle:
    case TriggerKind::estimated_gain:
    case TriggerKind::estimated_gain_exact:
      if (!gain.has_value()) {
        throw ConfigError("decide: gain-based trigger requires a gain estimate");
      }
      return gain->value <= -threshold(policy.schedule, k) ? 1 : 0;
  }
  return 0;
}

}  // namespace evi
