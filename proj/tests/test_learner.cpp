#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "evi/errors.hpp"
#include "evi/learner.hpp"
#include "evi/loop.hpp"
#include "evi/rng.hpp"

using namespace evi;

namespace {

const int kGoal = 2;

std::shared_ptr<const Environment> grid3() {
  return make_gridworld(3, 3, kGoal, 0.5);
}

std::shared_ptr<const Environment> linear2d() {
  Eigen::Matrix2d a;
  a << 0.8, -0.2, 0.1, 1.0;
  return make_linear_gaussian(a, 0.1 * Eigen::Matrix2d::Identity(), 0.9);
}

Eigen::VectorXd random_vector(Rng& rng, int n, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

// Central finite differences of the exact objective; for a quadratic this
// is exact up to roundoff.
Eigen::VectorXd fd_gradient(const ExactObjective& objective,
                            const Eigen::VectorXd& w, double h = 1e-5) {
  Eigen::VectorXd grad(w.size());
  for (int i = 0; i < w.size(); ++i) {
    Eigen::VectorXd hi = w, lo = w;
    hi[i] += h;
    lo[i] -= h;
    grad[i] = (objective(hi) - objective(lo)) / (2.0 * h);
  }
  return grad;
}

// Expected time-to-goal via dense solve; duplicated from the chain tests on
// purpose so this file carries its own oracle.
Eigen::VectorXd hitting_time_oracle(const Eigen::MatrixXd& kernel, int goal) {
  const int n = static_cast<int>(kernel.rows());
  std::vector<int> keep;
  for (int s = 0; s < n; ++s) {
    if (s != goal) keep.push_back(s);
  }
  const int m = static_cast<int>(keep.size());
  Eigen::MatrixXd a(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      a(i, j) = (i == j ? 1.0 : 0.0) - kernel(keep[i], keep[j]);
    }
  }
  const Eigen::VectorXd sub = a.partialPivLu().solve(Eigen::VectorXd::Ones(m));
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i) v[keep[i]] = sub[i];
  return v;
}

TriggerPolicy plain_trigger(TriggerKind kind, const HyperParams& hyper,
                            double p = 0.5) {
  TriggerPolicy trigger;
  trigger.kind = kind;
  trigger.random_prob = p;
  trigger.schedule = ThresholdSchedule{hyper.comm_penalty,
                                       hyper.threshold_decay,
                                       hyper.iterations, true};
  return trigger;
}

}  // namespace

TEST_CASE("objective vanishes when the indicator weights equal the targets") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  const ValueFunction v = ValueFunction::tabular(
      (Eigen::VectorXd(9) << 0.2, 0.9, 0.0, 0.4, 0.6, 0.1, 0.8, 0.5, 0.3)
          .finished());
  Eigen::VectorXd targets(9);
  for (int s = 0; s < 9; ++s) {
    targets[s] = exact_bellman_target(*env, v, State(s));
  }
  CHECK(objective_exact(targets, *env, *basis, v) ==
        doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("objective of the zero guess at zero weights is the mean squared cost") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  const ValueFunction zero = ValueFunction::zero_tabular(9);
  CHECK(objective_exact(Eigen::VectorXd::Zero(9), *env, *basis, zero) ==
        doctest::Approx(8.0 / 9.0).epsilon(1e-14));
}

TEST_CASE("no weight vector beats the solved optimum") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  const ValueFunction v = ValueFunction::zero_tabular(9);
  const ExactObjective objective(*env, *basis, v);
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd w = random_vector(rng, 9, 3.0);
    CHECK(objective(w) >= objective.optimum_value() - 1e-12);
  }
}

TEST_CASE("optimal indicator weights equal the targets") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  const ValueFunction zero = ValueFunction::zero_tabular(9);
  const Eigen::VectorXd w = optimal_weights(*env, *basis, zero);
  // One backup of the zero guess is the stage-cost vector.
  for (int s = 0; s < 9; ++s) {
    CHECK(w[s] == doctest::Approx(s == kGoal ? 0.0 : 1.0).epsilon(1e-10));
  }
}

TEST_CASE("finite differences vanish at the solved optimum") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  Rng rng(6);
  Eigen::VectorXd table(9);
  for (int i = 0; i < 9; ++i) table[i] = rng.uniform();
  const ValueFunction v = ValueFunction::tabular(table);
  const ExactObjective objective(*env, *basis, v);
  const Eigen::VectorXd grad = fd_gradient(objective, objective.optimal_weights());
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("continuous moments reproduce the literal quadrature sum") {
  auto env = linear2d();
  auto basis = polynomial_basis_deg2();
  Rng rng(9);
  Eigen::VectorXd u(6);
  for (int i = 0; i < 6; ++i) u[i] = rng.uniform();
  const ValueFunction v = ValueFunction::basis_expansion(basis, u);

  const int res = 64;
  const ExactObjective objective(*env, *basis, v, res);
  const Eigen::VectorXd w = random_vector(rng, 6, 2.0);

  // Literal sum over the same nodes.
  double acc = 0.0;
  Eigen::VectorXd phi(6);
  const double cell = 1.0 / res;
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const State x(Eigen::Vector2d((i + 0.5) * cell, (j + 0.5) * cell));
      basis->eval_into(x, phi);
      const double r = exact_bellman_target(*env, v, x) - w.dot(phi);
      acc += r * r * cell * cell;
    }
  }
  CHECK(objective(w) == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("continuous optimum recovers the pushforward coefficients") {
  // The degree-2 basis is closed under the backup, so the fitted weights
  // must equal the analytically mapped coefficients and the optimum value
  // must vanish.
  Eigen::Matrix2d a;
  a << 0.8, -0.2, 0.1, 1.0;
  const Eigen::Matrix2d sigma = 0.1 * Eigen::Matrix2d::Identity();
  auto env = make_linear_gaussian(a, sigma, 0.9);
  auto basis = polynomial_basis_deg2();

  Rng rng(14);
  Eigen::VectorXd u(6);
  for (int i = 0; i < 6; ++i) u[i] = rng.uniform();
  const ValueFunction v = ValueFunction::basis_expansion(basis, u);

  const double g = 0.9;
  Eigen::VectorXd theta(6);
  theta[0] = 1.0 + g * (u[0] * a(0, 0) * a(0, 0) + u[1] * a(1, 0) * a(1, 0) +
                        u[2] * a(0, 0) * a(1, 0));
  theta[1] = 1.0 + g * (u[0] * a(0, 1) * a(0, 1) + u[1] * a(1, 1) * a(1, 1) +
                        u[2] * a(0, 1) * a(1, 1));
  theta[2] = g * (2.0 * u[0] * a(0, 0) * a(0, 1) +
                  2.0 * u[1] * a(1, 0) * a(1, 1) +
                  u[2] * (a(0, 0) * a(1, 1) + a(0, 1) * a(1, 0)));
  theta[3] = g * (u[3] * a(0, 0) + u[4] * a(1, 0));
  theta[4] = g * (u[3] * a(0, 1) + u[4] * a(1, 1));
  theta[5] = g * (u[0] * sigma(0, 0) + u[1] * sigma(1, 1) + u[2] * sigma(0, 1) +
                  u[5]);

  const ExactObjective objective(*env, *basis, v, 128);
  CHECK((objective.optimal_weights() - theta).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(objective.optimum_value() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("loss gap equals the moment quadratic form") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  Rng rng(21);
  Eigen::VectorXd table(9);
  for (int i = 0; i < 9; ++i) table[i] = rng.uniform();
  const ValueFunction v = ValueFunction::tabular(table);
  const ExactObjective objective(*env, *basis, v);
  const Eigen::VectorXd& w_opt = objective.optimal_weights();

  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd w = random_vector(rng, 9, 3.0);
    const Eigen::VectorXd d = w - w_opt;
    const double gap = objective(w) - objective.optimum_value();
    CHECK(gap == doctest::Approx(d.dot(objective.feature_moment() * d))
                     .epsilon(1e-8));
  }
}

TEST_CASE("a zero TD residual yields a zero gradient") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  const ValueFunction v = ValueFunction::zero_tabular(9);
  // Weight so that w^T phi(x) = cost exactly for the sampled state.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(9);
  w[0] = 1.0;
  std::vector<DataTuple> batch = {DataTuple{State(0), 1.0, State(3)}};
  const Eigen::VectorXd g = stochastic_gradient(w, batch, *basis, v, 1.0);
  CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a full sweep at zero weights is the scaled negative cost vector") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  const ValueFunction v = ValueFunction::zero_tabular(9);
  std::vector<DataTuple> batch;
  for (int s = 0; s < 9; ++s) {
    batch.push_back(DataTuple{State(s), env->stage_cost(State(s)), State(s)});
  }
  const Eigen::VectorXd g =
      stochastic_gradient(Eigen::VectorXd::Zero(9), batch, *basis, v, 1.0);
  for (int s = 0; s < 9; ++s) {
    CHECK(g[s] == doctest::Approx(-env->stage_cost(State(s)) / 9.0)
                      .epsilon(1e-14));
  }
}

TEST_CASE("the batch gradient is parallel to the objective gradient") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  Rng rng(33);
  Eigen::VectorXd table(9);
  for (int i = 0; i < 9; ++i) table[i] = rng.uniform();
  const ValueFunction v = ValueFunction::tabular(table);
  const ExactObjective objective(*env, *basis, v);

  const Eigen::VectorXd w =
      objective.optimal_weights() + random_vector(rng, 9, 1.0);
  const int batches = 20000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(9);
  for (int b = 0; b < batches; ++b) {
    const auto tuples = sample_tuples(
        *env, 10, derive_seed(77, {static_cast<std::uint64_t>(b)}));
    mean += stochastic_gradient(w, tuples, *basis, v, 1.0);
  }
  mean /= batches;

  const Eigen::VectorXd fd = fd_gradient(objective, w);
  const double cosine = mean.dot(fd) / (mean.norm() * fd.norm());
  CHECK(cosine > 0.999);
  // The estimator carries half the objective gradient.
  CHECK(mean.norm() / fd.norm() == doctest::Approx(0.5).epsilon(0.01));

  // Coordinatewise agreement with the analytic mean.
  const Eigen::VectorXd analytic =
      objective.feature_moment() * (w - objective.optimal_weights());
  CHECK((mean - analytic).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("server update matches a literal four-branch reference") {
  Rng rng(5);
  const double eps = 0.7;
  for (int pattern = 0; pattern < 4; ++pattern) {
    const bool first = (pattern & 1) != 0;
    const bool second = (pattern & 2) != 0;
    const Eigen::VectorXd w = random_vector(rng, 6, 2.0);
    const Eigen::VectorXd g1 = random_vector(rng, 6, 1.0);
    const Eigen::VectorXd g2 = random_vector(rng, 6, 1.0);

    std::vector<StochasticGradient> received;
    if (first) received.push_back({g1, 0, 0});
    if (second) received.push_back({g2, 1, 0});
    const Eigen::VectorXd next = server_update(w, received, eps, 2);

    Eigen::VectorXd expected;
    if (first && second) {
      expected = w - (eps / 2.0) * (g1 + g2);
    } else if (first) {
      expected = w - eps * g1;
    } else if (second) {
      expected = w - eps * g2;
    } else {
      expected = w;
    }
    CHECK((next - expected).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("identical transmitted gradients collapse the averaging") {
  Rng rng(15);
  const Eigen::VectorXd w = random_vector(rng, 4, 1.0);
  const Eigen::VectorXd g = random_vector(rng, 4, 1.0);
  std::vector<StochasticGradient> received = {{g, 0, 0}, {g, 1, 0}};
  const Eigen::VectorXd next = server_update(w, received, 1.0, 2);
  CHECK((next - (w - g)).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("server update rejects more gradients than agents") {
  std::vector<StochasticGradient> received = {
      {Eigen::VectorXd::Zero(3), 0, 0},
      {Eigen::VectorXd::Zero(3), 1, 0},
      {Eigen::VectorXd::Zero(3), 2, 0}};
  CHECK_THROWS_AS(
      server_update(Eigen::VectorXd::Zero(3), received, 1.0, 2), ConfigError);
}

TEST_CASE("projection keeps the weights inside the ball") {
  Rng rng(25);
  const Eigen::VectorXd w = random_vector(rng, 5, 3.0);
  std::vector<StochasticGradient> received = {{random_vector(rng, 5, 5.0), 0, 0}};
  const Eigen::VectorXd next = server_update(w, received, 1.0, 2, 0.5);
  CHECK(next.norm() <= 0.5 + 1e-12);
}

TEST_CASE("a silent inner loop never moves the weights") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  HyperParams hyper;
  hyper.iterations = 25;
  const ValueFunction v = random_initial_value(*env, basis, 3);
  const RunRecord record = run_inner_loop(
      *env, basis, v, hyper, plain_trigger(TriggerKind::never, hyper), 11);
  CHECK(record.final_weights.cwiseAbs().maxCoeff() == 0.0);
  CHECK(record.comm_rate == 0.0);
  CHECK(record.final_loss == record.initial_loss);
  CHECK(record.iterations.size() == 25);
}

TEST_CASE("equal seeds give bitwise-identical records") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  HyperParams hyper;
  hyper.comm_penalty = 0.05;
  hyper.threshold_decay = 0.8;
  const ValueFunction v = random_initial_value(*env, basis, 3);
  const ExactObjective objective(*env, *basis, v);
  const TriggerPolicy trigger = plain_trigger(TriggerKind::oracle, hyper);

  const RunRecord a =
      run_inner_loop(*env, basis, v, hyper, trigger, 123, &objective);
  const RunRecord b =
      run_inner_loop(*env, basis, v, hyper, trigger, 123, &objective);
  CHECK(a.final_weights == b.final_weights);
  CHECK(a.final_loss == b.final_loss);
  CHECK(a.comm_rate == b.comm_rate);
  REQUIRE(a.iterations.size() == b.iterations.size());
  for (std::size_t k = 0; k < a.iterations.size(); ++k) {
    CHECK(a.iterations[k].transmitted == b.iterations[k].transmitted);
    CHECK(a.iterations[k].loss == b.iterations[k].loss);
  }

  const RunRecord c =
      run_inner_loop(*env, basis, v, hyper, trigger, 124, &objective);
  CHECK(a.final_weights != c.final_weights);
}

TEST_CASE("always transmitting converges on the grid") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  HyperParams hyper;
  hyper.iterations = 200;
  const ValueFunction v = random_initial_value(*env, basis, 3);
  const ExactObjective objective(*env, *basis, v);
  const RunRecord record =
      run_inner_loop(*env, basis, v, hyper,
                     plain_trigger(TriggerKind::always, hyper), 7, &objective);
  CHECK(record.comm_rate == 1.0);
  // The indicator basis represents every target, so the optimum loss is 0.
  CHECK(objective.optimum_value() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(record.final_loss < 0.1 * record.initial_loss);
}

TEST_CASE("one always-transmit step decreases the objective in expectation") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  HyperParams hyper;
  hyper.iterations = 1;
  const ValueFunction v = random_initial_value(*env, basis, 3);
  const ExactObjective objective(*env, *basis, v);
  const TriggerPolicy trigger = plain_trigger(TriggerKind::always, hyper);

  Rng rng(40);
  InnerLoopOptions options;
  options.initial_weights = objective.optimal_weights() + random_vector(rng, 9, 2.0);
  const double before = objective(options.initial_weights);

  double sum_after = 0.0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    const RunRecord record = run_inner_loop(
        *env, basis, v, hyper, trigger,
        derive_seed(90, {static_cast<std::uint64_t>(t)}), &objective, options);
    sum_after += record.final_loss;
  }
  CHECK(sum_after / trials < before);
}

TEST_CASE("an enabled projection bounds the whole weight path") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  HyperParams hyper;
  hyper.iterations = 60;
  hyper.projection_bound = 0.5;
  const ValueFunction v = random_initial_value(*env, basis, 3);
  InnerLoopOptions options;
  options.record_weight_path = true;
  const RunRecord record =
      run_inner_loop(*env, basis, v, hyper,
                     plain_trigger(TriggerKind::always, hyper), 5, nullptr,
                     options);
  for (const Eigen::VectorXd& w : record.weight_path) {
    CHECK(w.norm() <= 0.5 + 1e-12);
  }
}

TEST_CASE("diverging weights abort with a diagnostic") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  HyperParams hyper;
  hyper.step_size = 50.0;  // update map is expansive at this step
  hyper.iterations = 400;
  const ValueFunction v = random_initial_value(*env, basis, 3);
  CHECK_THROWS_AS(
      run_inner_loop(*env, basis, v, hyper,
                     plain_trigger(TriggerKind::always, hyper), 2),
      DivergenceError);
}

TEST_CASE("one outer round equals the inner loop") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  HyperParams hyper;
  hyper.iterations = 30;
  const TriggerPolicy trigger = plain_trigger(TriggerKind::always, hyper);

  const std::uint64_t seed = 55;
  const std::vector<ValueFunction> fitted =
      run_outer_loop(*env, basis, hyper, trigger, 1, seed);
  REQUIRE(fitted.size() == 1);

  const ValueFunction v = random_initial_value(*env, basis, seed);
  const RunRecord record = run_inner_loop(
      *env, basis, v, hyper, trigger, derive_seed(seed, {stream::kRound, 0}));
  CHECK(fitted[0].weights() == record.final_weights);
}

TEST_CASE("iterated exact fits converge to the hitting-time table") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  const Eigen::VectorXd oracle =
      hitting_time_oracle(*env->transition_matrix(), kGoal);

  Rng rng(61);
  Eigen::VectorXd table(9);
  for (int i = 0; i < 9; ++i) table[i] = rng.uniform();
  // Undiscounted absorbing chain: a nonzero initial value at the goal
  // survives every backup as a constant shift, so the hitting-time reading
  // anchors the goal at zero.
  table[kGoal] = 0.0;
  ValueFunction v = ValueFunction::tabular(table);
  for (int round = 0; round < 400; ++round) {
    v = ValueFunction::tabular(optimal_weights(*env, *basis, v));
  }
  for (int s = 0; s < 9; ++s) {
    CHECK(std::abs(v.values()[s] - oracle[s]) < 1e-3);
  }
}

TEST_CASE("a zero-cost chain keeps every fitted round at zero") {
  auto env = make_gridworld(1, 1, 0, 0.0);
  auto basis = indicator_basis(1);
  HyperParams hyper;
  hyper.iterations = 10;
  const TriggerPolicy trigger = plain_trigger(TriggerKind::always, hyper);
  const std::vector<ValueFunction> fitted =
      run_outer_loop(*env, basis, hyper, trigger, 2, 4,
                     zero_initial_value(*env, basis));
  REQUIRE(fitted.size() == 2);
  for (const ValueFunction& v : fitted) {
    CHECK(v.weights().cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("a mismatched trigger schedule horizon is rejected up front") {
  auto env = grid3();
  auto basis = indicator_basis(9);
  HyperParams hyper;
  hyper.iterations = 30;
  TriggerPolicy trigger = plain_trigger(TriggerKind::oracle, hyper);
  trigger.schedule.iterations = 10;
  const ValueFunction v = random_initial_value(*env, basis, 3);
  CHECK_THROWS_WITH_AS(run_inner_loop(*env, basis, v, hyper, trigger, 1),
                       doctest::Contains("schedule horizon"), ConfigError);
}

TEST_CASE("hyper parameter validation names the offending field") {
  HyperParams hyper;
  hyper.step_size = 0.0;
  CHECK_THROWS_WITH_AS(hyper.validate(),
                       doctest::Contains("hyper.step_size"), ConfigError);
  hyper = HyperParams{};
  hyper.agents = 0;
  CHECK_THROWS_AS(hyper.validate(), ConfigError);
  hyper = HyperParams{};
  hyper.threshold_decay = 1.5;
  CHECK_THROWS_AS(hyper.validate(), ConfigError);
}
