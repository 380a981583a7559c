#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>

#include "evi/features.hpp"
#include "evi/learner.hpp"
#include "evi/mdp.hpp"
#include "evi/rng.hpp"

namespace evi {

enum class TriggerKind {
  oracle,                // exact objective difference of the candidate step
  estimated_gain,        // sample-estimated gain, reference form
  estimated_gain_exact,  // sample-estimated gain, full quadratic expansion
  random,                // Bernoulli(p), ignores the data
  always,
  never,
};

const char* trigger_kind_name(TriggerKind kind);
std::optional<TriggerKind> parse_trigger_kind(std::string_view name);

// Geometric threshold schedule. The transmit threshold at iteration k is
// base / decay^(iterations-1-k) where base = penalty / iterations in the
// default mode and base = penalty otherwise. Early iterations therefore
// demand larger predicted gains; the demand relaxes as k grows.
struct ThresholdSchedule {
  double comm_penalty = 0.0;
  double decay = 1.0;  // in (0, 1]
  int iterations = 1;
  bool divide_by_iterations = true;
};

// Threshold magnitude at iteration k in [0, iterations).
double threshold(const ThresholdSchedule& schedule, int k);

struct GainEstimate {
  enum class Method { oracle, sample_quadratic, sample_exact_quadratic };
  double value = 0.0;  // predicted objective change of the candidate step
  Method method = Method::oracle;
};

// Exact predicted gain J(w - step*g) - J(w); needs full model knowledge.
GainEstimate oracle_gain(const Eigen::VectorXd& w, const Eigen::VectorXd& g,
                         double step_size,
                         const std::function<double(const Eigen::VectorXd&)>&
                             exact_objective);

// Data-estimated gain -g^T [I - (step/2) * (1/T) sum phi phi^T] g, using the
// same batch that produced g. Costs O(T n).
GainEstimate estimated_gain(const Eigen::VectorXd& g,
                            std::span<const DataTuple> tuples,
                            const FeatureBasis& basis, double step_size);

// Dimension-consistent variant carrying the step through both terms of the
// quadratic expansion: -step*|g|^2 + step^2 * g^T [(1/T) sum phi phi^T] g.
GainEstimate estimated_gain_exact_quadratic(const Eigen::VectorXd& g,
                                            std::span<const DataTuple> tuples,
                                            const FeatureBasis& basis,
                                            double step_size);

struct TriggerPolicy {
  TriggerKind kind = TriggerKind::always;
  double random_prob = 0.5;  // only used by TriggerKind::random
  ThresholdSchedule schedule;
};

// Transmit decision for iteration k. Gain-based kinds transmit when the
// predicted gain is at or below the negated threshold (ties transmit).
// `gain` is required for gain-based kinds, `rng` for the random kind.
int decide(const TriggerPolicy& policy, int k,
           const std::optional<GainEstimate>& gain, Rng* rng);

}  // namespace evi
