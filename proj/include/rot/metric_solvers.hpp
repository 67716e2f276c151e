#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "rot/measures.hpp"

namespace rot {

/// Element-wise p-norm ball with p = 2k / (2k - 1).
struct PNormConfig {
  int k = 1;
};

/// Generalized KL (Bregman) regularization toward the prior M0.
/// An empty prior means the identity of matching size.
struct KLConfig {
  std::optional<Eigen::MatrixXd> prior;
  double lambda_m = 1.0;
};

/// KL regularization restricted to doubly-stochastic metrics. An empty prior
/// means (I + 11^T) / (n + 1), which is itself doubly stochastic.
struct DSConfig {
  std::optional<Eigen::MatrixXd> prior;
  double lambda_m = 1.0;
  double sinkhorn_tol = 1e-8;
  int sinkhorn_max_iter = 10000;
  // When false, an unconverged scaling is returned with converged == false
  // instead of throwing.
  bool strict = true;
};

using MetricSolverConfig = std::variant<PNormConfig, KLConfig, DSConfig>;

std::string family_name(const MetricSolverConfig& config);

/// Maximizer M*(gamma) of the inner problem and the attained objective f(gamma).
struct AdversarialMetric {
  Eigen::MatrixXd matrix;
  MetricSolverConfig family;
  double value = 0.0;
  MomentKind kind = MomentKind::full;
  // Scaling residual of the DS solver; zero for the closed forms.
  double residual = 0.0;
  bool converged = true;
};

/// M* = ||V||_2k^(1-2k) V^(o(2k-1)), value = ||V||_2k.
AdversarialMetric pnorm_metric(const DisplacementMoment& v, int k);

/// M* = M0 o exp(V / lambda), value = lambda * 1^T (M* - M0) 1.
AdversarialMetric kl_metric(const DisplacementMoment& v, const Eigen::MatrixXd& prior,
                            double lambda_m);
AdversarialMetric kl_metric(const DisplacementMoment& v, const KLConfig& config);

/// M* = D (M0 o exp(V / lambda)) D with D from symmetric Sinkhorn scaling.
/// value = <V, M*> - lambda * KL(M*, M0), evaluated through the scaling dual
/// so that residual errors enter only at second order.
AdversarialMetric ds_metric(const DisplacementMoment& v, const DSConfig& config);

/// Dispatches on the configured family.
AdversarialMetric adversarial_value(const DisplacementMoment& v, const MetricSolverConfig& config);

/// Callable form of a metric solver, so callers can substitute a fixed metric.
using MetricOracle = std::function<AdversarialMetric(const DisplacementMoment&)>;
MetricOracle make_metric_oracle(MetricSolverConfig config);
/// Always returns M = I with value trace(V); recovers the squared Euclidean cost.
MetricOracle identity_metric_oracle();

/// Softmax of diag(V) / lambda: the optimal feature weights on the simplex.
Eigen::VectorXd feature_weights(const DisplacementMoment& v, double lambda_m);

/// lambda * (ln sum_i exp(v_i / lambda) - (d - 1)), v = diag(V).
double feature_selection_objective(const DisplacementMoment& v, double lambda_m);

/// Generalized KL divergence sum M ln(M / M0) - M + M0 with 0 ln 0 = 0.
double kl_divergence(const Eigen::MatrixXd& m, const Eigen::MatrixXd& prior);

/// Element-wise p-norm (sum |a_ij|^p)^(1/p).
double entrywise_norm(const Eigen::MatrixXd& a, double p);

Eigen::MatrixXd default_ds_prior(Eigen::Index n);

}  // namespace rot
