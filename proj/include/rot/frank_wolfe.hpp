#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rot/measures.hpp"
#include "rot/metric_solvers.hpp"
#include "rot/sinkhorn.hpp"

namespace rot {

/// Which objective the p-norm family descends. Both share minimizers; norm_2k
/// rescales the gradient by 2k ||V||^(2k-1).
enum class ObjectivePower { norm, norm_2k };

struct FWConfig {
  int max_iter = 200;
  double gap_tol = 1e-6;
  SinkhornConfig sinkhorn;
  MetricSolverConfig metric = PNormConfig{1};
  std::optional<FeatureGrouping> grouping;
  ObjectivePower objective_power = ObjectivePower::norm;
};

struct RotResult {
  double value = 0.0;
  TransportPlan plan;
  AdversarialMetric metric;
  // f(gamma_t) and the FW gap <gamma_t - lmo_t, grad_t> for every iterate visited.
  std::vector<double> value_history;
  std::vector<double> gap_history;
  int iterations_used = 0;
  // False when some DS scaling along the way missed its tolerance (non-strict mode).
  bool metric_converged = true;
};

/// V_gamma in full or grouped form depending on `grouping`.
DisplacementMoment plan_moment(const TransportPlan& plan, const DiscreteMeasure& src,
                               const DiscreteMeasure& tgt,
                               const std::optional<FeatureGrouping>& grouping);

/// f(gamma) and M*(gamma).
AdversarialMetric plan_objective(const TransportPlan& plan, const DiscreteMeasure& src,
                                 const DiscreteMeasure& tgt, const MetricSolverConfig& metric,
                                 const std::optional<FeatureGrouping>& grouping = std::nullopt);

/// grad(i,j) = (s_i - t_j)^T M* (s_i - t_j), or <(S_i - T_j) B*, S_i - T_j> in
/// grouped mode.
Eigen::MatrixXd gradient_wrt_plan(const TransportPlan& plan, const DiscreteMeasure& src,
                                  const DiscreteMeasure& tgt, const AdversarialMetric& metric,
                                  const std::optional<FeatureGrouping>& grouping = std::nullopt);

/// Frank-Wolfe from the independent coupling with step 2 / (t + 2) and an
/// entropic LMO. Stops when the gap reaches gap_tol or after max_iter steps.
RotResult rot_distance(const DiscreteMeasure& src, const DiscreteMeasure& tgt,
                       const FWConfig& config);

/// One entropic solve with squared Euclidean cost; returns <plan, cost>.
double w22_distance(const DiscreteMeasure& src, const DiscreteMeasure& tgt,
                    const SinkhornConfig& sinkhorn);

/// Pairwise squared Euclidean distances between rows.
Eigen::MatrixXd squared_euclidean_cost(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace rot
