#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "evi/mdp.hpp"
#include "evi/value_function.hpp"

namespace evi {

// The batch gradient estimator (feature-weighted TD residuals averaged over
// a batch) has mean Phi (w - w*), which is half the gradient of the squared
// error objective. Analysis that needs the true-gradient parameterization
// of the update map rescales the step size by this factor.
inline constexpr double kBatchGradientScale = 0.5;

struct HyperParams {
  double step_size = 1.0;        // SGD step applied at the server
  int samples_per_agent = 10;    // batch size per agent per iteration
  int iterations = 50;           // server iterations per approximation
  int agents = 2;
  double comm_penalty = 0.0;     // weight on the communication term
  double threshold_decay = 1.0;  // geometric decay of the trigger threshold
  double projection_bound = 0.0; // radius of the weight ball; <= 0 disables

  void validate() const;  // throws ConfigError naming the offending field
};

struct StochasticGradient {
  Eigen::VectorXd value;
  int agent_id = 0;
  int iteration = 0;
};

// Population objective J(w) = E_d[(target(x) - w^T phi(x))^2] where target
// is the exact one-step backup of v_current. Reduced once to its quadratic
// moments, so evaluations are O(n^2). Finite case: exact d-weighted sums.
// Continuous case: fixed midpoint quadrature over the unit square; the
// closed form reproduces the quadrature sum exactly, not approximately.
class ExactObjective {
 public:
  ExactObjective(const Environment& env, const FeatureBasis& basis,
                 const ValueFunction& v_current,
                 int quadrature_resolution = 512);

  double operator()(const Eigen::VectorXd& w) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const;

  // Moment matrix consistent with the evaluation measure.
  const Eigen::MatrixXd& feature_moment() const { return phi_; }
  const Eigen::VectorXd& target_moment() const { return b_; }

  // Minimizer of the quadratic and its value. Throws AssumptionError when
  // the moment matrix is numerically singular.
  const Eigen::VectorXd& optimal_weights() const { return w_opt_; }
  double optimum_value() const { return j_opt_; }

  int dim() const { return static_cast<int>(b_.size()); }

 private:
  Eigen::MatrixXd phi_;  // E[phi phi^T]
  Eigen::VectorXd b_;    // E[phi * target]
  double c_ = 0.0;       // E[target^2]
  Eigen::VectorXd w_opt_;
  double j_opt_ = 0.0;
};

// J(w) evaluated from scratch (builds the moments and discards them).
double objective_exact(const Eigen::VectorXd& w, const Environment& env,
                       const FeatureBasis& basis,
                       const ValueFunction& v_current,
                       int quadrature_resolution = 512);

// Normal-equation solution of the fitting problem. The residual of the
// solve is checked against 1e-8; a singular moment matrix raises
// AssumptionError.
Eigen::VectorXd optimal_weights(const Environment& env,
                                const FeatureBasis& basis,
                                const ValueFunction& v_current,
                                int quadrature_resolution = 512);

// Batch gradient: mean over tuples of phi(x) * (w^T phi(x) - c - discount *
// v_current(x_next)).
Eigen::VectorXd stochastic_gradient(const Eigen::VectorXd& w,
                                    std::span<const DataTuple> tuples,
                                    const FeatureBasis& basis,
                                    const ValueFunction& v_current,
                                    double discount);

// Server aggregation: unchanged when nothing was received, otherwise a step
// along the mean of the received gradients, optionally followed by
// Euclidean projection onto the ball of radius projection_bound.
Eigen::VectorXd server_update(const Eigen::VectorXd& w,
                              std::span<const StochasticGradient> received,
                              double step_size, int agents,
                              double projection_bound = 0.0);

}  // namespace evi
