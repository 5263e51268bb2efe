//
// Project spinmap - Copyright 2026 spinmap authors
// SPDX-License-Identifier: Apache-2.0
//

#include "spinmap/least_squares.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace spinmap {

LsqResult levenberg_marquardt(const LsqProblem &problem,
                              const Eigen::VectorXd &x0,
                              const LsqOptions &opts) {
  LsqResult res;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  problem.eval(x, r, &J);
  double cost = r.squaredNorm();
  double lambda = opts.lambda0;
  const Eigen::Index p = x.size();

  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    res.gradient_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    if (res.gradient_norm <= opts.gtol) {
      res.converged = true;
      res.message = "gradient below tolerance";
      break;
    }

    Eigen::VectorXd diag = JtJ.diagonal();
    for (Eigen::Index k = 0; k < p; ++k)
      diag[k] = std::max(diag[k], 1e-30);

    bool accepted = false;
    bool small_step = false;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * diag;
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10;
        continue;
      }
      const Eigen::VectorXd xn = x + step;
      if (step.norm() <= opts.xtol * (x.norm() + opts.xtol)) {
        small_step = true;
        break;
      }
      if (problem.feasible && !problem.feasible(xn)) {
        lambda *= 10;
        continue;
      }
      Eigen::VectorXd rn;
      problem.eval(xn, rn, nullptr);
      const double cn = rn.squaredNorm();
      if (std::isfinite(cn) && cn < cost) {
        const double rel = (cost - cn) / std::max(cost, 1e-300);
        x = xn;
        r = std::move(rn);
        cost = cn;
        lambda = std::max(lambda / 10, 1e-15);
        accepted = true;
        problem.eval(x, r, &J);
        if (rel <= opts.ftol)
          small_step = true;
        break;
      }
      lambda *= 10;
    }
    if (small_step) {
      res.converged = true;
      res.message = "step below tolerance";
      ++it;
      break;
    }
    if (!accepted) {
      // No descent direction left at any damping: a numerical minimum.
      res.converged = true;
      res.message = "no further decrease";
      ++it;
      break;
    }
  }
  if (!res.converged)
    res.message = "iteration limit reached";

  res.x = x;
  res.residuals = r;
  res.jacobian = J;
  res.cost = cost;
  res.iterations = it;
  const Eigen::VectorXd g = J.transpose() * r;
  res.gradient_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  return res;
}

Covariance residual_covariance(const Eigen::MatrixXd &jacobian, double rss) {
  Covariance cov;
  const Eigen::Index m = jacobian.rows(), p = jacobian.cols();
  const double s2 = m > p ? rss / static_cast<double>(m - p) : 0.0;
  const Eigen::MatrixXd JtJ = jacobian.transpose() * jacobian;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(JtJ);
  const Eigen::VectorXd &ev = es.eigenvalues();
  const double cut = std::max(ev.cwiseAbs().maxCoeff(), 1e-300) * 1e-12;
  Eigen::VectorXd inv(ev.size());
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    inv[k] = ev[k] > cut ? 1.0 / ev[k] : 0.0;
  cov.matrix = s2 * es.eigenvectors() * inv.asDiagonal()
               * es.eigenvectors().transpose();
  // Parameters carrying weight in a flat direction.
  for (Eigen::Index k = 0; k < p; ++k) {
    for (Eigen::Index e = 0; e < ev.size(); ++e) {
      if (ev[e] <= cut && std::abs(es.eigenvectors()(k, e)) > 0.1) {
        cov.rank_deficient.push_back(static_cast<int>(k));
        break;
      }
    }
  }
  return cov;
}

} // namespace spinmap
