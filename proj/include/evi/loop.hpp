#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "evi/learner.hpp"
#include "evi/run_record.hpp"
#include "evi/trigger.hpp"
#include "evi/value_function.hpp"

namespace evi {

struct InnerLoopOptions {
  bool record_weight_path = false;
  // Initial server weights; empty means all zeros.
  Eigen::VectorXd initial_weights;
  int quadrature_resolution = 512;
};

// One full pass of the distributed fitting loop: for each of N iterations
// the server broadcasts w_k, every agent draws a fresh batch, computes its
// batch gradient, evaluates the trigger, and the server averages whatever
// was transmitted. Per-(agent, iteration) streams are derived from `seed`,
// so results do not depend on evaluation order. `objective` may be shared
// across trials; when null it is built internally.
RunRecord run_inner_loop(const Environment& env,
                         const std::shared_ptr<const FeatureBasis>& basis,
                         const ValueFunction& v_current,
                         const HyperParams& hyper, const TriggerPolicy& trigger,
                         std::uint64_t seed,
                         const ExactObjective* objective = nullptr,
                         const InnerLoopOptions& options = {});

// Draws the randomized initial value guess: i.i.d. uniform [0,1] table for
// finite spaces, i.i.d. uniform [0,1] expansion weights otherwise.
ValueFunction random_initial_value(const Environment& env,
                                   const std::shared_ptr<const FeatureBasis>& basis,
                                   std::uint64_t seed);

// Zero initial value guess in the representation matching the space.
ValueFunction zero_initial_value(const Environment& env,
                                 const std::shared_ptr<const FeatureBasis>& basis);

// Repeats the inner loop, replacing the value guess with the fitted
// expansion after each round and resetting the server weights. Returns the
// fitted value function of every round.
std::vector<ValueFunction> run_outer_loop(
    const Environment& env, const std::shared_ptr<const FeatureBasis>& basis,
    const HyperParams& hyper, const TriggerPolicy& trigger,
    int outer_iterations, std::uint64_t seed,
    std::optional<ValueFunction> initial_value = std::nullopt,
    const InnerLoopOptions& options = {});

// A fully materialized learning problem: environment, features, the value
// guess being backed up, hyperparameters, trigger, and the shared exact
// objective for that guess.
struct Problem {
  std::shared_ptr<const Environment> env;
  std::shared_ptr<const FeatureBasis> basis;
  ValueFunction v_current;
  HyperParams hyper;
  TriggerPolicy trigger;
  std::shared_ptr<const ExactObjective> objective;
  int quadrature_resolution = 512;

  RunRecord run_trial(std::uint64_t trial_seed,
                      const InnerLoopOptions& options = {}) const;
};

}  // namespace evi
