#include "evi/learner.hpp"

#include <cmath>

#include "evi/errors.hpp"

namespace evi {

namespace {

constexpr double kNormalEquationTol = 1e-8;

// Rank-1 accumulation of (phi, target) moments with weight wgt.
struct MomentAccumulator {
  Eigen::MatrixXd phi2;
  Eigen::VectorXd phi_target;
  double target2 = 0.0;

  explicit MomentAccumulator(int n)
      : phi2(Eigen::MatrixXd::Zero(n, n)),
        phi_target(Eigen::VectorXd::Zero(n)) {}

  void add(const Eigen::VectorXd& phi, double target, double wgt) {
    phi2.selfadjointView<Eigen::Lower>().rankUpdate(phi, wgt);
    phi_target.noalias() += wgt * target * phi;
    target2 += wgt * target * target;
  }
};

}  // namespace

void HyperParams::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("hyper.step_size: must be > 0");
  if (samples_per_agent < 1) {
    throw ConfigError("hyper.samples_per_agent: must be >= 1");
  }
  if (iterations < 1) throw ConfigError("hyper.iterations: must be >= 1");
  if (agents < 1) throw ConfigError("hyper.agents: must be >= 1");
  if (!(comm_penalty >= 0.0)) {
    throw ConfigError("hyper.comm_penalty: must be >= 0");
  }
  if (!(threshold_decay > 0.0 && threshold_decay <= 1.0)) {
    throw ConfigError("hyper.threshold_decay: must lie in (0,1]");
  }
}

ExactObjective::ExactObjective(const Environment& env,
                               const FeatureBasis& basis,
                               const ValueFunction& v_current,
                               int quadrature_resolution) {
  const int n = basis.dim();
  MomentAccumulator acc(n);
  Eigen::VectorXd phi(n);

  if (env.space().is_finite()) {
    const Eigen::VectorXd& d = *env.state_distribution();
    for (int s = 0; s < env.space().size; ++s) {
      const State x(s);
      basis.eval_into(x, phi);
      acc.add(phi, exact_bellman_target(env, v_current, x), d[s]);
    }
  } else {
    if (quadrature_resolution < 1) {
      throw ConfigError("quadrature.resolution: must be >= 1");
    }
    const int res = quadrature_resolution;
    const double cell = 1.0 / res;
    const double wgt = cell * cell;  // uniform d over the unit square
    for (int i = 0; i < res; ++i) {
      for (int j = 0; j < res; ++j) {
        Eigen::Vector2d p((i + 0.5) * cell, (j + 0.5) * cell);
        const State x(p);
        basis.eval_into(x, phi);
        acc.add(phi, exact_bellman_target(env, v_current, x), wgt);
      }
    }
  }

  phi_ = acc.phi2.selfadjointView<Eigen::Lower>();
  b_ = std::move(acc.phi_target);
  c_ = acc.target2;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(phi_);
  const double min_eig = es.eigenvalues()[0];
  const double max_eig = es.eigenvalues()[n - 1];
  if (!(min_eig > 1e-12 * std::max(1.0, max_eig))) {
    throw AssumptionError(
        "optimal_weights: feature second-moment matrix is singular; the "
        "fitting problem has no unique solution");
  }
  w_opt_ = phi_.ldlt().solve(b_);
  if ((phi_ * w_opt_ - b_).norm() > kNormalEquationTol) {
    throw AssumptionError("optimal_weights: normal-equation residual too large");
  }
  j_opt_ = (*this)(w_opt_);
}

double ExactObjective::operator()(const Eigen::VectorXd& w) const {
  return w.dot(phi_ * w) - 2.0 * w.dot(b_) + c_;
}

Eigen::VectorXd ExactObjective::gradient(const Eigen::VectorXd& w) const {
  return 2.0 * (phi_ * w - b_);
}

double objective_exact(const Eigen::VectorXd& w, const Environment& env,
                       const FeatureBasis& basis,
                       const ValueFunction& v_current,
                       int quadrature_resolution) {
  return ExactObjective(env, basis, v_current, quadrature_resolution)(w);
}

Eigen::VectorXd optimal_weights(const Environment& env,
                                const FeatureBasis& basis,
                                const ValueFunction& v_current,
                                int quadrature_resolution) {
  return ExactObjective(env, basis, v_current, quadrature_resolution)
      .optimal_weights();
}

Eigen::VectorXd stochastic_gradient(const Eigen::VectorXd& w,
                                    std::span<const DataTuple> tuples,
                                    const FeatureBasis& basis,
                                    const ValueFunction& v_current,
                                    double discount) {
  if (tuples.empty()) {
    throw ConfigError("stochastic_gradient: tuple batch must be non-empty");
  }
  const int n = basis.dim();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd phi(n), buf(n);
  for (const DataTuple& t : tuples) {
    basis.eval_into(t.x, phi);
    const double residual =
        w.dot(phi) - t.cost - discount * v_current.eval_with_buffer(t.x_next, buf);
    grad.noalias() += residual * phi;
  }
  grad /= static_cast<double>(tuples.size());
  return grad;
}

Eigen::VectorXd server_update(const Eigen::VectorXd& w,
                              std::span<const StochasticGradient> received,
                              double step_size, int agents,
                              double projection_bound) {
  if (static_cast<int>(received.size()) > agents) {
    throw ConfigError("server_update: more gradients than agents");
  }
  if (received.empty()) return w;

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(w.size());
  for (const StochasticGradient& g : received) {
    if (g.value.size() != w.size()) {
      throw ConfigError("server_update: gradient dimension mismatch");
    }
    mean += g.value;
  }
  mean /= static_cast<double>(received.size());

  Eigen::VectorXd next = w - step_size * mean;
  if (projection_bound > 0.0) {
    const double norm = next.norm();
    if (norm > projection_bound) next *= projection_bound / norm;
  }
  return next;
}

}  // namespace evi
