#pragma once

#include <Eigen/Dense>
#include <memory>
#include <utility>

#include "evi/features.hpp"
#include "evi/mdp.hpp"

namespace evi {

// Either a table of values over a finite state space or a linear expansion
// w^T phi(x) over a feature basis. Immutable and safe for concurrent reads.
class ValueFunction {
 public:
  // Empty placeholder; assign a real representation before evaluating.
  ValueFunction() : ValueFunction({}, nullptr, {}) {}

  static ValueFunction tabular(Eigen::VectorXd values) {
    return ValueFunction(std::move(values), nullptr, {});
  }

  static ValueFunction basis_expansion(
      std::shared_ptr<const FeatureBasis> basis, Eigen::VectorXd weights);

  static ValueFunction zero_tabular(int num_states) {
    return tabular(Eigen::VectorXd::Zero(num_states));
  }

  bool is_tabular() const { return basis_ == nullptr; }

  double operator()(const State& x) const {
    if (is_tabular()) return values_[finite_state(x)];
    Eigen::VectorXd phi(basis_->dim());
    basis_->eval_into(x, phi);
    return weights_.dot(phi);
  }

  // Allocation-free evaluation; `buf` must have size basis().dim() when the
  // representation is an expansion (unused for tabular).
  double eval_with_buffer(const State& x, Eigen::VectorXd& buf) const {
    if (is_tabular()) return values_[finite_state(x)];
    basis_->eval_into(x, buf);
    return weights_.dot(buf);
  }

  const Eigen::VectorXd& values() const { return values_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const FeatureBasis& basis() const { return *basis_; }
  std::shared_ptr<const FeatureBasis> basis_ptr() const { return basis_; }

 private:
  ValueFunction(Eigen::VectorXd tab, std::shared_ptr<const FeatureBasis> basis,
                Eigen::VectorXd weights)
      : values_(std::move(tab)),
        basis_(std::move(basis)),
        weights_(std::move(weights)) {}

  Eigen::VectorXd values_;   // tabular representation
  std::shared_ptr<const FeatureBasis> basis_;
  Eigen::VectorXd weights_;  // expansion coefficients
};

}  // namespace evi
