//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SPINMAP_LEAST_SQUARES_H_
#define SPINMAP_LEAST_SQUARES_H_

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace spinmap {

struct LsqProblem {
  // Fills residuals r (size m) and, when J is non-null, the Jacobian dr/dx.
  std::function<void(const Eigen::VectorXd &x, Eigen::VectorXd &r,
                     Eigen::MatrixXd *J)>
      eval;
  // Optional domain check; infeasible trial steps are rejected.
  std::function<bool(const Eigen::VectorXd &x)> feasible;
};

struct LsqOptions {
  int max_iterations = 500;
  double ftol = 1e-15; // relative cost reduction
  double xtol = 1e-13; // relative step size
  double gtol = 1e-14; // max |J^T r|
  double lambda0 = 1e-3;
};

struct LsqResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  double cost = 0; // sum of squared residuals
  double gradient_norm = 0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/**
 * @brief Levenberg-Marquardt with Marquardt diagonal scaling. Only steps
 * that lower the cost are accepted, so the cost never increases.
 */
LsqResult levenberg_marquardt(const LsqProblem &problem,
                              const Eigen::VectorXd &x0,
                              const LsqOptions &opts = {});

struct Covariance {
  Eigen::MatrixXd matrix;
  std::vector<int> rank_deficient; // parameter indices with no curvature
};

// s^2 (J^T J)^-1 with s^2 = rss / (m - p); pseudo-inverse when singular.
Covariance residual_covariance(const Eigen::MatrixXd &jacobian, double rss);

} // namespace spinmap

#endif // SPINMAP_LEAST_SQUARES_H_
