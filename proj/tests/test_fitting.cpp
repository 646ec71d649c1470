#include "vstpr/errors.hpp"
#include "vstpr/fitting.hpp"

#include <doctest.h>

#include <cmath>

using namespace vstpr;
using doctest::Approx;

TEST_SUITE("fitting") {

TEST_CASE("linear model recovers exact parameters") {
  const int m = 20;
  ResidualFn f = [](const VectorXd& p, VectorXd& r, MatrixXd* J) {
    for (int i = 0; i < 20; ++i) {
      double x = 0.1 * i;
      r[i] = p[0] + p[1] * x - (3.0 - 2.0 * x);
      if (J) {
        (*J)(i, 0) = 1;
        (*J)(i, 1) = x;
      }
    }
  };
  auto res = levenberg_marquardt(f, Eigen::Vector2d(0, 0), m);
  CHECK(res.params[0] == Approx(3.0).epsilon(1e-10));
  CHECK(res.params[1] == Approx(-2.0).epsilon(1e-10));
  CHECK(res.residual_norm < 1e-10);
  CHECK(res.initial_residual_norm > 1);
}

TEST_CASE("exponential decay from a distant start") {
  const int m = 50;
  ResidualFn f = [](const VectorXd& p, VectorXd& r, MatrixXd* J) {
    for (int i = 0; i < 50; ++i) {
      double t = 0.1 * i, e = std::exp(-p[1] * t);
      r[i] = p[0] * e - 5.0 * std::exp(-0.7 * t);
      if (J) {
        (*J)(i, 0) = e;
        (*J)(i, 1) = -p[0] * t * e;
      }
    }
  };
  auto res = levenberg_marquardt(f, Eigen::Vector2d(1.0, 3.0), m);
  CHECK(res.params[0] == Approx(5.0).epsilon(1e-8));
  CHECK(res.params[1] == Approx(0.7).epsilon(1e-8));
}

TEST_CASE("covariance matches the linear least squares formula") {
  const int m = 30;
  VectorXd noise(m);
  for (int i = 0; i < m; ++i) noise[i] = std::sin(1.7 * i) * 0.05;
  ResidualFn f = [&](const VectorXd& p, VectorXd& r, MatrixXd* J) {
    for (int i = 0; i < m; ++i) {
      double x = i;
      r[i] = p[0] + p[1] * x - (1.0 + 0.5 * x + noise[i]);
      if (J) {
        (*J)(i, 0) = 1;
        (*J)(i, 1) = x;
      }
    }
  };
  auto res = levenberg_marquardt(f, Eigen::Vector2d(0, 0), m);
  MatrixXd X(m, 2);
  for (int i = 0; i < m; ++i) X.row(i) << 1.0, double(i);
  MatrixXd cov = (X.transpose() * X).inverse() * (res.residual_norm * res.residual_norm / (m - 2));
  CHECK((res.covariance - cov).norm() < 1e-10 * cov.norm());
}

TEST_CASE("quartic minimum converges") {
  // r = p^2 has a flat minimum at 0 where Gauss-Newton only halves the step
  ResidualFn f = [](const VectorXd& p, VectorXd& r, MatrixXd* J) {
    r[0] = p[0] * p[0];
    r[1] = 0.1;
    if (J) {
      (*J)(0, 0) = 2 * p[0];
      (*J)(1, 0) = 0;
    }
  };
  VectorXd p0(1);
  p0 << 1.0;
  LmOptions o;
  o.scale = VectorXd::Constant(1, 1.0);
  auto res = levenberg_marquardt(f, p0, 2, o);
  CHECK(std::abs(res.params[0]) < 1e-2);
}

TEST_CASE("non-finite residuals and iteration limit") {
  ResidualFn bad = [](const VectorXd&, VectorXd& r, MatrixXd* J) {
    r[0] = NAN;
    if (J) (*J)(0, 0) = 1;
  };
  CHECK_THROWS_AS(levenberg_marquardt(bad, VectorXd::Ones(1), 1), FitFailed);

  ResidualFn slow = [](const VectorXd& p, VectorXd& r, MatrixXd* J) {
    r[0] = std::exp(p[0]);
    if (J) (*J)(0, 0) = std::exp(p[0]);
  };
  LmOptions o;
  o.max_iterations = 3;
  try {
    levenberg_marquardt(slow, VectorXd::Zero(1), 1, o);
    FAIL("expected FitFailed");
  } catch (const FitFailed& e) {
    CHECK(e.last_residual() > 0);
  }
}

TEST_CASE("parameter mask") {
  ParamMask mk;
  mk.full = Eigen::Vector4d(1, 2, 3, 4);
  mk.free = {0, 2};
  CHECK(mk.pack() == Eigen::Vector2d(1, 3));
  CHECK(mk.expand(Eigen::Vector2d(7, 8)) == Eigen::Vector4d(7, 2, 8, 4));
  MatrixXd J = MatrixXd::Random(5, 4);
  MatrixXd c = mk.columns(J);
  CHECK(c.cols() == 2);
  CHECK(c.col(1) == J.col(2));
  MatrixXd cov(2, 2);
  cov << 1, 2, 3, 4;
  MatrixXd full = mk.expand_cov(cov);
  CHECK(full(2, 2) == 4);
  CHECK(full(0, 2) == 2);
  CHECK(full(1, 1) == 0);
  CHECK(full(3, 3) == 0);
}

}
