#pragma once

#include <utility>

#include <Eigen/Dense>

#include "rot/measures.hpp"

namespace rot {

enum class SinkhornDomain {
  automatic,  // log domain when lambda_beta < 0.05
  plain,
  log,
};

struct SinkhornConfig {
  double lambda_beta = 0.2;
  int iterations = 10;
  SinkhornDomain domain = SinkhornDomain::automatic;
  // Early exit once the row residual drops to this level, checked every 10
  // iterations. 0 runs the full iteration count.
  double tol = 0.0;
};

struct EntropicPlan {
  TransportPlan plan;
  double residual = 0.0;
  int iterations = 0;
};

/// argmin_{P in Pi(p, q)} <P, cost> + lambda_beta * sum P ln P, by alternating
/// scaling from unit scaling vectors. Zero-mass rows/columns are excluded and
/// left at zero.
EntropicPlan entropic_ot(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                         const Eigen::VectorXd& q, const SinkhornConfig& config);

struct ScalingResult {
  Eigen::VectorXd d;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Vector d > 0 with diag(d) K diag(d) doubly stochastic, via the damped
/// fixed point d <- sqrt(d / (K d)). Reports the row-sum residual on failure
/// rather than throwing.
ScalingResult symmetric_scaling(const Eigen::MatrixXd& kernel, double tol, int max_iter);

/// Exact transport LP for m * n <= 16 by enumerating basic feasible
/// solutions (spanning trees of the bipartite support graph).
std::pair<TransportPlan, double> exact_ot_small(const Eigen::MatrixXd& cost,
                                                const Eigen::VectorXd& p,
                                                const Eigen::VectorXd& q);

}  // namespace rot
