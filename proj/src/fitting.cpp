#include "vstpr/fitting.hpp"
#include "vstpr/errors.hpp"

#include <cmath>
#include <limits>

namespace vstpr {

LmResult levenberg_marquardt(const ResidualFn& f, const VectorXd& p0, int m, const LmOptions& opt) {
  const int n = static_cast<int>(p0.size());
  VectorXd p = p0, r(m), r_new(m);
  MatrixXd J(m, n);
  f(p, r, &J);
  if (!r.allFinite()) throw FitFailed("residuals not finite at the initial point", std::nan(""));

  VectorXd scale(n);
  for (int i = 0; i < n; ++i) {
    double s = opt.scale.size() == n ? opt.scale[i] : std::abs(p0[i]);
    scale[i] = s > 0 ? s : 1.0;
  }

  LmResult res;
  res.initial_residual_norm = r.norm();
  double cost = r.squaredNorm();
  double lambda = opt.initial_lambda;
  bool converged = false;
  int it = 0;
  int stalled = 0;
  MatrixXd A = J.transpose() * J;
  VectorXd g = J.transpose() * r;

  for (; it < opt.max_iterations && !converged; ++it) {
    VectorXd D = A.diagonal();
    double dmax = D.maxCoeff();
    for (int i = 0; i < n; ++i)
      if (!(D[i] > dmax * 1e-15)) D[i] = dmax > 0 ? dmax * 1e-15 : 1.0;

    bool accepted = false;
    while (!accepted) {
      MatrixXd M = A;
      M.diagonal() += lambda * D;
      VectorXd dp = M.ldlt().solve(-g);
      if (!dp.allFinite()) {
        lambda *= 10;
        if (lambda > 1e20) break;
        continue;
      }
      VectorXd p_new = p + dp;
      f(p_new, r_new, nullptr);
      double c_new = r_new.allFinite() ? r_new.squaredNorm() : std::numeric_limits<double>::infinity();
      if (c_new <= cost) {
        double step = (dp.cwiseAbs().array() / (p.cwiseAbs() + scale).array()).maxCoeff();
        double rel_drop = cost > 0 ? (cost - c_new) / cost : 0.0;
        p = p_new;
        cost = c_new;
        f(p, r, &J);
        A = J.transpose() * J;
        g = J.transpose() * r;
        lambda = std::max(lambda / 10, 1e-12);
        accepted = true;
        if (step < opt.step_tolerance || rel_drop < 1e-15 || cost == 0.0) {
          converged = true;
        } else if (rel_drop < opt.cost_tolerance && lambda <= 1.0) {
          // flat (e.g. quartic) minima converge only linearly; stop once the cost has stalled
          if (++stalled >= 3) converged = true;
        } else {
          stalled = 0;
        }
      } else {
        lambda *= 10;
        if (lambda > 1e20) break;
      }
    }
    // no decrease possible at any damping: we sit on a minimum to machine precision
    if (!accepted) converged = true;
  }
  if (!converged) throw FitFailed("no convergence within iteration limit", std::sqrt(cost));

  res.params = p;
  res.residuals = r;
  res.residual_norm = std::sqrt(cost);
  res.iterations = it;
  double dof = std::max(1, m - n);
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(A);
  res.covariance = cod.pseudoInverse() * (cost / dof);
  return res;
}

VectorXd ParamMask::pack() const {
  VectorXd p(free.size());
  for (std::size_t i = 0; i < free.size(); ++i) p[i] = full[free[i]];
  return p;
}

VectorXd ParamMask::expand(const VectorXd& p) const {
  VectorXd out = full;
  for (std::size_t i = 0; i < free.size(); ++i) out[free[i]] = p[i];
  return out;
}

MatrixXd ParamMask::columns(const MatrixXd& Jf) const {
  MatrixXd J(Jf.rows(), free.size());
  for (std::size_t i = 0; i < free.size(); ++i) J.col(i) = Jf.col(free[i]);
  return J;
}

MatrixXd ParamMask::expand_cov(const MatrixXd& cov) const {
  MatrixXd out = MatrixXd::Zero(full.size(), full.size());
  for (std::size_t i = 0; i < free.size(); ++i)
    for (std::size_t j = 0; j < free.size(); ++j) out(free[i], free[j]) = cov(i, j);
  return out;
}

} // namespace vstpr
