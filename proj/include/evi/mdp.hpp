#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include "evi/rng.hpp"

namespace evi {

class ValueFunction;  // value_function.hpp

// A state is either a finite-state index or a point in R^2.
using State = std::variant<int, Eigen::Vector2d>;

inline int finite_state(const State& s) { return std::get<int>(s); }
inline const Eigen::Vector2d& vec_state(const State& s) {
  return std::get<Eigen::Vector2d>(s);
}

struct StateSpaceKind {
  enum class Tag { finite, continuous };
  Tag tag;
  // Number of states (finite) or coordinate dimension (continuous).
  int size;

  static StateSpaceKind finite(int count) { return {Tag::finite, count}; }
  static StateSpaceKind continuous(int dim) { return {Tag::continuous, dim}; }
  bool is_finite() const { return tag == Tag::finite; }
};

// One sampled transition: state, stage cost at that state, successor state.
struct DataTuple {
  State x;
  double cost;
  State x_next;
};

// A fixed-policy Markov chain with stage costs and a sampling distribution
// over states. Immutable after construction; safe to share across threads
// (each sampling call owns its Rng).
class Environment {
 public:
  virtual ~Environment() = default;

  virtual StateSpaceKind space() const = 0;
  virtual double discount() const = 0;

  // Draws a state from the data distribution d.
  virtual State sample_state(Rng& rng) const = 0;

  virtual double stage_cost(const State& x) const = 0;

  // Draws a successor from the policy-induced transition kernel.
  virtual State sample_transition(const State& x, Rng& rng) const = 0;

  // Finite environments expose the exact kernel and the d weights.
  virtual const Eigen::MatrixXd* transition_matrix() const { return nullptr; }
  virtual const Eigen::VectorXd* state_distribution() const { return nullptr; }
};

// Grid exploration chain. The policy randomizes uniformly over the four
// moves; moves blocked by the boundary stay in place; the goal cell is
// absorbing with zero cost and every other step costs 1, so the exact value
// function is the expected time to reach the goal. On the top row a
// commanded rightward move fails (stays in place) with probability
// slip_prob. Cell index = row * cols + col with row 0 at the top.
std::shared_ptr<const Environment> make_gridworld(int rows, int cols, int goal,
                                                  double slip_prob,
                                                  double discount = 1.0);

// Two-dimensional linear dynamics x_next = A x + w with zero-mean Gaussian
// noise, quadratic stage cost |x|^2 and d uniform on the unit square.
std::shared_ptr<const Environment> make_linear_gaussian(
    const Eigen::Matrix2d& dynamics, const Eigen::Matrix2d& noise_cov,
    double discount);

// Draws `count` i.i.d. tuples: x ~ d, one policy transition, stage cost at x.
// Fully reproducible from the seed.
std::vector<DataTuple> sample_tuples(const Environment& env, int count,
                                     std::uint64_t seed);

// Exact one-step backup c(x) + discount * E[v_current(x_next) | x].
// Finite case: kernel row expectation. Continuous case: closed-form Gaussian
// expectation, which requires v_current expressed in the degree-2 polynomial
// basis. Oracle/analysis path only; agents never call this.
double exact_bellman_target(const Environment& env,
                            const ValueFunction& v_current, const State& x);

}  // namespace evi
