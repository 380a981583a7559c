#include "evi/value_function.hpp"

#include "evi/errors.hpp"

namespace evi {

ValueFunction ValueFunction::basis_expansion(
    std::shared_ptr<const FeatureBasis> basis, Eigen::VectorXd weights) {
  if (!basis) throw ConfigError("value function: basis must not be null");
  if (weights.size() != basis->dim()) {
    throw ConfigError("value function: weight length does not match basis");
  }
  if (!weights.allFinite()) {
    throw ConfigError("value function: weights must be finite");
  }
  return ValueFunction({}, std::move(basis), std::move(weights));
}

}  // namespace evi
