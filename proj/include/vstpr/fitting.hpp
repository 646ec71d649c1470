#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace vstpr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Fills residuals r (model - data) and, when J is non-null, the Jacobian dr/dp.
using ResidualFn = std::function<void(const VectorXd& p, VectorXd& r, MatrixXd* J)>;

struct LmOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-8; // max_i |dp_i| / (|p_i| + scale_i)
  double initial_lambda = 1e-3;
  // three consecutive lightly damped steps each lowering the cost by less than this converge
  double cost_tolerance = 1e-10;
  // per-parameter scale used in the step test; defaults to |p0_i| (or 1 when zero)
  VectorXd scale;
};

struct LmResult {
  VectorXd params;
  MatrixXd covariance;
  VectorXd residuals;
  double residual_norm = 0;
  double initial_residual_norm = 0;
  int iterations = 0;
};

// Damped Gauss-Newton with Marquardt diagonal scaling. Throws FitFailed when the
// step test is not met within max_iterations.
LmResult levenberg_marquardt(const ResidualFn& f, const VectorXd& p0, int n_residuals,
                             const LmOptions& opt = {});

// Selects free parameters out of a full parameter vector.
struct ParamMask {
  VectorXd full;
  std::vector<int> free;

  VectorXd pack() const;
  VectorXd expand(const VectorXd& p) const;
  MatrixXd columns(const MatrixXd& J_full) const;
  // covariance of the full vector (zero rows/cols for fixed parameters)
  MatrixXd expand_cov(const MatrixXd& cov) const;
};

} // namespace vstpr
