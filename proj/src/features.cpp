#include "evi/features.hpp"

#include "evi/errors.hpp"

namespace evi {

namespace {

constexpr double kIndefiniteTol = -1e-9;

// Monomial exponents of the degree-2 basis, in the fixed ordering.
constexpr int kPolyExp[6][2] = {{2, 0}, {0, 2}, {1, 1}, {1, 0}, {0, 1}, {0, 0}};

Eigen::MatrixXd poly_deg2_exact_moment() {
  // E[x1^a x2^b] = 1/((a+1)(b+1)) under uniform d on the unit square.
  Eigen::MatrixXd phi(6, 6);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      const int a = kPolyExp[i][0] + kPolyExp[j][0];
      const int b = kPolyExp[i][1] + kPolyExp[j][1];
      phi(i, j) = 1.0 / ((a + 1.0) * (b + 1.0));
    }
  }
  return phi;
}

}  // namespace

void FeatureBasis::eval_into(const State& x, Eigen::VectorXd& out) const {
  switch (kind_) {
    case Kind::indicator:
      out.setZero();
      out[finite_state(x)] = 1.0;
      return;
    case Kind::poly_deg2: {
      const Eigen::Vector2d& v = vec_state(x);
      out[0] = v[0] * v[0];
      out[1] = v[1] * v[1];
      out[2] = v[0] * v[1];
      out[3] = v[0];
      out[4] = v[1];
      out[5] = 1.0;
      return;
    }
  }
}

FeatureBasis FeatureBasis::make_indicator(int num_states) {
  if (num_states < 1) {
    throw ConfigError("indicator_basis: state count must be >= 1");
  }
  Eigen::MatrixXd phi =
      Eigen::MatrixXd::Identity(num_states, num_states) / num_states;
  return FeatureBasis(Kind::indicator, num_states, std::move(phi));
}

FeatureBasis FeatureBasis::make_poly_deg2() {
  return FeatureBasis(Kind::poly_deg2, 6, poly_deg2_exact_moment());
}

std::shared_ptr<const FeatureBasis> indicator_basis(int num_states) {
  return std::make_shared<FeatureBasis>(FeatureBasis::make_indicator(num_states));
}

std::shared_ptr<const FeatureBasis> polynomial_basis_deg2() {
  return std::make_shared<FeatureBasis>(FeatureBasis::make_poly_deg2());
}

SecondMomentSummary summarize_second_moment(const Eigen::MatrixXd& phi) {
  SecondMomentSummary out;
  // Symmetrize before the eigensolve so tiny accumulation asymmetry cannot
  // produce complex arithmetic paths.
  out.matrix = 0.5 * (phi + phi.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.matrix);
  out.eigenvalues = es.eigenvalues();  // ascending
  out.lambda_max = out.eigenvalues[out.eigenvalues.size() - 1];
  const double min_eig = out.eigenvalues[0];
  if (min_eig < kIndefiniteTol) {
    throw AssumptionError(
        "second_moment: matrix is indefinite; basis and environment are "
        "inconsistent");
  }
  out.positive_definite = min_eig > 0.0;
  return out;
}

SecondMomentSummary second_moment(const FeatureBasis& basis,
                                  const Environment& env,
                                  const SecondMomentMode& mode) {
  if (mode.tag == SecondMomentMode::Tag::exact) {
    if (!basis.exact_second_moment().has_value()) {
      throw ConfigError("second_moment: basis has no exact moment matrix");
    }
    return summarize_second_moment(*basis.exact_second_moment());
  }

  if (mode.sample_count < 1) {
    throw ConfigError("second_moment: monte_carlo sample count must be >= 1");
  }
  const int n = basis.dim();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd phi(n);
  Rng rng(mode.seed);
  for (long i = 0; i < mode.sample_count; ++i) {
    basis.eval_into(env.sample_state(rng), phi);
    acc.selfadjointView<Eigen::Lower>().rankUpdate(phi);
  }
  acc = acc.selfadjointView<Eigen::Lower>();
  acc /= static_cast<double>(mode.sample_count);
  return summarize_second_moment(acc);
}

}  // namespace evi
