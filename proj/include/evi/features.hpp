#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>

#include "evi/mdp.hpp"

namespace evi {

// Fixed feature map phi: X -> R^n. Immutable; share via shared_ptr.
class FeatureBasis {
 public:
  enum class Kind { indicator, poly_deg2 };

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }

  Eigen::VectorXd operator()(const State& x) const {
    Eigen::VectorXd out(dim_);
    eval_into(x, out);
    return out;
  }

  // Allocation-free evaluation for hot loops. `out` must have size dim().
  void eval_into(const State& x, Eigen::VectorXd& out) const;

  // Exact second-moment matrix E_d[phi phi^T] under the sampling
  // distribution used by the matching environment (uniform in both cases).
  const std::optional<Eigen::MatrixXd>& exact_second_moment() const {
    return exact_second_moment_;
  }

  static FeatureBasis make_indicator(int num_states);
  static FeatureBasis make_poly_deg2();

 private:
  FeatureBasis(Kind kind, int dim, std::optional<Eigen::MatrixXd> moment)
      : kind_(kind), dim_(dim), exact_second_moment_(std::move(moment)) {}

  Kind kind_;
  int dim_;
  std::optional<Eigen::MatrixXd> exact_second_moment_;
};

// One-hot features over a finite state space; exact second moment under
// uniform d is I/num_states.
std::shared_ptr<const FeatureBasis> indicator_basis(int num_states);

// [x1^2, x2^2, x1*x2, x1, x2, 1] on R^2. The ordering is fixed so weight
// vectors are comparable across runs. Exact second moment from the monomial
// moments of the uniform distribution on the unit square.
std::shared_ptr<const FeatureBasis> polynomial_basis_deg2();

// Second-moment matrix with its spectrum. Eigenvalues sorted ascending.
struct SecondMomentSummary {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd eigenvalues;
  double lambda_max = 0.0;
  bool positive_definite = false;
};

struct SecondMomentMode {
  enum class Tag { exact, monte_carlo };
  Tag tag = Tag::exact;
  long sample_count = 0;
  std::uint64_t seed = 0;

  static SecondMomentMode exact() { return {}; }
  static SecondMomentMode monte_carlo(long samples, std::uint64_t seed) {
    return {Tag::monte_carlo, samples, seed};
  }
};

// Computes E_d[phi phi^T] exactly (requires the basis to carry it) or by
// averaging phi phi^T over draws from d. Throws if the numerical result is
// indefinite beyond tolerance (broken basis/environment pairing).
SecondMomentSummary second_moment(const FeatureBasis& basis,
                                  const Environment& env,
                                  const SecondMomentMode& mode);

// Spectral summary of an already-computed symmetric matrix.
SecondMomentSummary summarize_second_moment(const Eigen::MatrixXd& phi);

}  // namespace evi
