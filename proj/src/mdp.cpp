#include "evi/mdp.hpp"

#include <cmath>
#include <stdexcept>

#include "evi/errors.hpp"
#include "evi/value_function.hpp"

namespace evi {

namespace {

constexpr double kRowSumTol = 1e-12;

class GridWorld final : public Environment {
 public:
  GridWorld(int rows, int cols, int goal, double slip_prob, double discount)
      : rows_(rows), cols_(cols), goal_(goal), discount_(discount) {
    if (rows < 1 || cols < 1) {
      throw ConfigError("gridworld: rows and cols must be >= 1");
    }
    const int n = rows * cols;
    if (goal < 0 || goal >= n) {
      throw ConfigError("gridworld: goal index out of range");
    }
    if (slip_prob < 0.0 || slip_prob > 1.0) {
      throw ConfigError("gridworld: slip_prob must lie in [0,1]");
    }
    if (discount <= 0.0 || discount > 1.0) {
      throw ConfigError("gridworld: discount must lie in (0,1]");
    }

    kernel_ = Eigen::MatrixXd::Zero(n, n);
    for (int s = 0; s < n; ++s) {
      if (s == goal_) {
        kernel_(s, s) = 1.0;  // absorbing
        continue;
      }
      const int row = s / cols_;
      const int col = s % cols_;
      // Uniform policy over {up, down, left, right}; blocked moves stay.
      const int targets[4] = {
          row > 0 ? s - cols_ : s,          // up
          row + 1 < rows_ ? s + cols_ : s,  // down
          col > 0 ? s - 1 : s,              // left
          col + 1 < cols_ ? s + 1 : s,      // right
      };
      for (int a = 0; a < 4; ++a) {
        int t = targets[a];
        // A rightward move on the top row fails with probability slip_prob.
        if (a == 3 && row == 0 && t != s) {
          kernel_(s, t) += 0.25 * (1.0 - slip_prob);
          kernel_(s, s) += 0.25 * slip_prob;
        } else {
          kernel_(s, t) += 0.25;
        }
      }
    }
    for (int s = 0; s < n; ++s) {
      if (std::abs(kernel_.row(s).sum() - 1.0) > kRowSumTol) {
        throw DivergenceError("gridworld: transition row does not sum to 1");
      }
    }
    dist_ = Eigen::VectorXd::Constant(n, 1.0 / n);
  }

  StateSpaceKind space() const override {
    return StateSpaceKind::finite(rows_ * cols_);
  }
  double discount() const override { return discount_; }

  State sample_state(Rng& rng) const override {
    return rng.uniform_int(0, rows_ * cols_ - 1);
  }

  double stage_cost(const State& x) const override {
    return finite_state(x) == goal_ ? 0.0 : 1.0;
  }

  State sample_transition(const State& x, Rng& rng) const override {
    const int s = finite_state(x);
    const double u = rng.uniform();
    double acc = 0.0;
    const int n = rows_ * cols_;
    int last_reachable = s;
    for (int t = 0; t < n; ++t) {
      if (kernel_(s, t) == 0.0) continue;
      acc += kernel_(s, t);
      last_reachable = t;
      if (u < acc) return t;
    }
    return last_reachable;  // guard against accumulated rounding
  }

  const Eigen::MatrixXd* transition_matrix() const override {
    return &kernel_;
  }
  const Eigen::VectorXd* state_distribution() const override { return &dist_; }

 private:
  int rows_, cols_, goal_;
  double discount_;
  Eigen::MatrixXd kernel_;
  Eigen::VectorXd dist_;
};

class LinearGaussian final : public Environment {
 public:
  LinearGaussian(const Eigen::Matrix2d& dynamics,
                 const Eigen::Matrix2d& noise_cov, double discount)
      : dynamics_(dynamics), noise_cov_(noise_cov), discount_(discount) {
    if (discount <= 0.0 || discount >= 1.0) {
      throw ConfigError("linear_gaussian: discount must lie in (0,1)");
    }
    if ((noise_cov - noise_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw ConfigError("linear_gaussian: noise covariance must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(noise_cov);
    if (es.eigenvalues().minCoeff() < -1e-9) {
      throw ConfigError(
          "linear_gaussian: noise covariance must be positive semidefinite");
    }
    const Eigen::Vector2d clipped = es.eigenvalues().cwiseMax(0.0);
    noise_sqrt_ = es.eigenvectors() * clipped.cwiseSqrt().asDiagonal() *
                  es.eigenvectors().transpose();
  }

  StateSpaceKind space() const override { return StateSpaceKind::continuous(2); }
  double discount() const override { return discount_; }

  State sample_state(Rng& rng) const override {
    Eigen::Vector2d x;
    x << rng.uniform(), rng.uniform();
    return x;
  }

  double stage_cost(const State& x) const override {
    return vec_state(x).squaredNorm();
  }

  State sample_transition(const State& x, Rng& rng) const override {
    Eigen::Vector2d z;
    z << rng.normal(), rng.normal();
    return Eigen::Vector2d(dynamics_ * vec_state(x) + noise_sqrt_ * z);
  }

  const Eigen::Matrix2d& dynamics() const { return dynamics_; }
  const Eigen::Matrix2d& noise_covariance() const { return noise_cov_; }

 private:
  Eigen::Matrix2d dynamics_;
  Eigen::Matrix2d noise_cov_;
  Eigen::Matrix2d noise_sqrt_;
  double discount_;
};

// Expected value of a degree-2 polynomial expansion at A x + w, w Gaussian:
// the quadratic part contributes (Ax)^T M (Ax) + tr(M Sigma).
double expected_quadratic_value(const LinearGaussian& env,
                                const Eigen::VectorXd& coeffs,
                                const Eigen::Vector2d& x) {
  Eigen::Matrix2d quad;
  quad << coeffs[0], 0.5 * coeffs[2], 0.5 * coeffs[2], coeffs[1];
  const Eigen::Vector2d mean = env.dynamics() * x;
  return mean.dot(quad * mean) + (quad * env.noise_covariance()).trace() +
         coeffs[3] * mean[0] + coeffs[4] * mean[1] + coeffs[5];
}

}  // namespace

std::shared_ptr<const Environment> make_gridworld(int rows, int cols, int goal,
                                                  double slip_prob,
                                                  double discount) {
  return std::make_shared<GridWorld>(rows, cols, goal, slip_prob, discount);
}

std::shared_ptr<const Environment> make_linear_gaussian(
    const Eigen::Matrix2d& dynamics, const Eigen::Matrix2d& noise_cov,
    double discount) {
  return std::make_shared<LinearGaussian>(dynamics, noise_cov, discount);
}

std::vector<DataTuple> sample_tuples(const Environment& env, int count,
                                     std::uint64_t seed) {
  if (count < 1) throw ConfigError("sample_tuples: count must be >= 1");
  Rng rng(seed);
  std::vector<DataTuple> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    State x = env.sample_state(rng);
    double c = env.stage_cost(x);
    State x_next = env.sample_transition(x, rng);
    out.push_back(DataTuple{std::move(x), c, std::move(x_next)});
  }
  return out;
}

double exact_bellman_target(const Environment& env,
                            const ValueFunction& v_current, const State& x) {
  if (env.space().is_finite()) {
    const Eigen::MatrixXd& kernel = *env.transition_matrix();
    const int s = finite_state(x);
    double expected = 0.0;
    for (int t = 0; t < kernel.cols(); ++t) {
      if (kernel(s, t) != 0.0) expected += kernel(s, t) * v_current(t);
    }
    return env.stage_cost(x) + env.discount() * expected;
  }

  const auto* lg = dynamic_cast<const LinearGaussian*>(&env);
  if (lg == nullptr) {
    throw std::logic_error("exact_bellman_target: unknown continuous environment");
  }
  if (v_current.is_tabular() ||
      v_current.basis().kind() != FeatureBasis::Kind::poly_deg2) {
    throw ConfigError(
        "exact_bellman_target: continuous case requires a degree-2 "
        "polynomial value representation");
  }
  return env.stage_cost(x) +
         env.discount() *
             expected_quadratic_value(*lg, v_current.weights(), vec_state(x));
}

}  // namespace evi
