#pragma once

#include <optional>

#include <Eigen/Dense>

#include "rot/measures.hpp"
#include "rot/metric_solvers.hpp"
#include "rot/sinkhorn.hpp"

namespace rot {

/// Ground embeddings of the L labels (unit rows), with an optional feature
/// grouping. The arranged copy of the embeddings is computed once and shared
/// by every moment and cost evaluation.
class LabelSpace {
 public:
  explicit LabelSpace(Eigen::MatrixXd embeddings,
                      std::optional<FeatureGrouping> grouping = std::nullopt);

  const Eigen::MatrixXd& embeddings() const { return embeddings_; }
  const std::optional<FeatureGrouping>& grouping() const { return grouping_; }
  Eigen::Index label_count() const { return embeddings_.rows(); }
  Eigen::Index dim() const { return embeddings_.cols(); }
  bool grouped() const { return grouping_.has_value(); }

  /// V_gamma (d x d) or U_gamma (r x r).
  DisplacementMoment moment(const Eigen::MatrixXd& plan) const;

  /// C(p,q) = (l_p - l_q)^T M (l_p - l_q), symmetric with zero diagonal.
  Eigen::MatrixXd pair_costs(const Eigen::MatrixXd& metric) const;

 private:
  Eigen::MatrixXd embeddings_;
  std::optional<FeatureGrouping> grouping_;
  // Rows are the (arranged) embeddings; each row read column-major as d1 x r
  // in grouped mode.
  using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajorMatrix arranged_;
  // The same blocks stacked vertically, (L * d1) x r.
  Eigen::MatrixXd blocks_;
};

/// Where the simplex-tangent gradient formula is evaluated.
/// lmo: on the last LMO subproblem (its cost, its plan, lambda_beta), which is
///   what the entropic solver actually satisfied; exact for any iteration count.
/// solution: on the returned plan with C*(gamma) and lambda_gamma; exact only
///   once Frank-Wolfe has converged with lambda_beta = lambda_gamma.
enum class GradientSource { lmo, solution };

struct RotLossConfig {
  MetricSolverConfig metric = PNormConfig{1};
  double lambda_gamma = 0.02;
  int fw_iters = 1;
  SinkhornConfig sinkhorn;
  double target_smoothing_alpha = 1e-3;
  GradientSource gradient = GradientSource::lmo;
};

/// rot: adversarial metric from `metric`; w22: metric pinned to the identity.
enum class LossKind { rot, w22 };

/// (1 - alpha) y / (1^T y) + alpha / L.
Eigen::VectorXd smooth_target(const Eigen::VectorXd& y, double alpha);

struct LossResult {
  double value = 0.0;
  TransportPlan plan;
  AdversarialMetric metric;
  Eigen::MatrixXd costs;  // C* at the returned plan
  // Last LMO subproblem: its cost matrix and entropic solution.
  Eigen::MatrixXd lmo_costs;
  Eigen::MatrixXd lmo_plan;
};

/// min over gamma in Pi(h, y_hat) of max_M <V_gamma, M> + lambda_gamma sum gamma ln gamma,
/// by Frank-Wolfe with an entropic LMO started from h y_hat^T.
LossResult rot_loss(const Eigen::VectorXd& h, const Eigen::VectorXd& y_hat,
                    const LabelSpace& labels, const RotLossConfig& config,
                    LossKind kind = LossKind::rot);

/// Same solver with an arbitrary metric oracle in place of config.metric.
LossResult rot_loss(const Eigen::VectorXd& h, const Eigen::VectorXd& y_hat,
                    const LabelSpace& labels, const RotLossConfig& config,
                    const MetricOracle& oracle);

/// Simplex-tangent gradient (1/L) A 1 - (1^T A 1 / L^2) 1 with
/// A = costs + lambda (ln plan + 1 1^T). Needs a strictly positive plan.
Eigen::VectorXd simplex_tangent_gradient(const Eigen::MatrixXd& costs, const Eigen::MatrixXd& plan,
                                         double lambda);

/// The formula above at the returned solution, A = C* + lambda_gamma (ln gamma* + 1 1^T).
Eigen::VectorXd loss_gradient_from_solution(const LossResult& solution, double lambda_gamma);

/// The formula above on the last LMO subproblem, with lambda_beta.
Eigen::VectorXd loss_gradient_from_lmo(const LossResult& solution, double lambda_beta);

struct LossWithGradient {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

LossWithGradient rot_loss_with_gradient(const Eigen::VectorXd& h, const Eigen::VectorXd& y_hat,
                                        const LabelSpace& labels, const RotLossConfig& config,
                                        LossKind kind = LossKind::rot);

Eigen::VectorXd rot_loss_gradient(const Eigen::VectorXd& h, const Eigen::VectorXd& y_hat,
                                  const LabelSpace& labels, const RotLossConfig& config,
                                  LossKind kind = LossKind::rot);

/// sum gamma ln gamma with 0 ln 0 = 0.
double negative_entropy(const Eigen::MatrixXd& plan);

}  // namespace rot
