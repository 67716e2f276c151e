#include "rot/frank_wolfe.hpp"

#include <cmath>
#include <string>

#include "rot/error.hpp"

namespace rot {

DisplacementMoment plan_moment(const TransportPlan& plan, const DiscreteMeasure& src,
                               const DiscreteMeasure& tgt,
                               const std::optional<FeatureGrouping>& grouping) {
  if (grouping) return grouped_second_moment(plan, src, tgt, *grouping);
  return displacement_second_moment(plan, src, tgt);
}

AdversarialMetric plan_objective(const TransportPlan& plan, const DiscreteMeasure& src,
                                 const DiscreteMeasure& tgt, const MetricSolverConfig& metric,
                                 const std::optional<FeatureGrouping>& grouping) {
  return adversarial_value(plan_moment(plan, src, tgt, grouping), metric);
}

Eigen::MatrixXd gradient_wrt_plan(const TransportPlan& plan, const DiscreteMeasure& src,
                                  const DiscreteMeasure& tgt, const AdversarialMetric& metric,
                                  const std::optional<FeatureGrouping>& grouping) {
  if (plan.matrix.rows() != src.size() || plan.matrix.cols() != tgt.size()) {
    throw InvalidArgument("plan shape does not match the measures");
  }
  if (src.dim() != tgt.dim()) throw InvalidArgument("source and target dimensions differ");
  const bool grouped = grouping.has_value();
  if (grouped != (metric.kind == MomentKind::grouped)) {
    throw InvalidArgument(grouped ? "grouped gradient needs a grouped metric B*"
                                  : "full gradient needs a full metric M*");
  }
  const Eigen::Index m = src.size();
  const Eigen::Index n = tgt.size();
  Eigen::MatrixXd grad(m, n);

  if (!grouped) {
    const Eigen::MatrixXd& mat = metric.matrix;
    if (mat.rows() != src.dim() || mat.cols() != src.dim()) {
      throw InvalidArgument("metric size does not match the point dimension");
    }
    Eigen::MatrixXd diffs(n, src.dim());
    for (Eigen::Index i = 0; i < m; ++i) {
      diffs = (-tgt.points()).rowwise() + src.points().row(i);
      grad.row(i) = ((diffs * mat).cwiseProduct(diffs)).rowwise().sum().transpose();
    }
    return grad;
  }

  const int d1 = grouping->group_size();
  const int r = grouping->group_count();
  if (metric.matrix.rows() != r || metric.matrix.cols() != r) {
    throw InvalidArgument("group metric size does not match the group count");
  }
  if (grouping->dim() != src.dim()) throw InvalidArgument("grouping does not match the dimension");
  const Eigen::MatrixXd s = grouping->arrange_rows(src.points());
  const Eigen::MatrixXd t = grouping->arrange_rows(tgt.points());
  Eigen::VectorXd diff(grouping->padded_dim());
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      diff = (s.row(i) - t.row(j)).transpose();
      Eigen::Map<const Eigen::MatrixXd> delta(diff.data(), d1, r);
      grad(i, j) = ((delta * metric.matrix).cwiseProduct(delta)).sum();
    }
  }
  return grad;
}

namespace {

void validate(const FWConfig& config) {
  if (config.max_iter < 1) throw InvalidArgument("max_iter must be >= 1");
  if (!(config.gap_tol >= 0.0)) throw InvalidArgument("gap_tol must be nonnegative");
}

double gradient_scale(const FWConfig& config, const AdversarialMetric& metric) {
  if (config.objective_power != ObjectivePower::norm_2k) return 1.0;
  const auto* pnorm = std::get_if<PNormConfig>(&config.metric);
  if (pnorm == nullptr) return 1.0;
  return 2.0 * pnorm->k * std::pow(metric.value, 2 * pnorm->k - 1);
}

}  // namespace

RotResult rot_distance(const DiscreteMeasure& src, const DiscreteMeasure& tgt,
                       const FWConfig& config) {
  validate(config);
  if (src.dim() != tgt.dim()) {
    throw InvalidArgument("source dimension " + std::to_string(src.dim()) +
                          " differs from target dimension " + std::to_string(tgt.dim()));
  }
  RotResult out;
  TransportPlan plan = independent_coupling(src, tgt);
  for (int t = 0; t < config.max_iter; ++t) {
    const AdversarialMetric metric = plan_objective(plan, src, tgt, config.metric, config.grouping);
    out.metric_converged = out.metric_converged && metric.converged;
    Eigen::MatrixXd grad = gradient_wrt_plan(plan, src, tgt, metric, config.grouping);
    grad *= gradient_scale(config, metric);
    const EntropicPlan lmo = entropic_ot(grad, src.weights(), tgt.weights(), config.sinkhorn);
    const double gap = ((plan.matrix - lmo.plan.matrix).array() * grad.array()).sum();
    out.value_history.push_back(metric.value);
    out.gap_history.push_back(gap);
    out.iterations_used = t + 1;
    if (gap <= config.gap_tol) break;
    const double theta = 2.0 / (t + 2.0);
    plan.matrix = (1.0 - theta) * plan.matrix + theta * lmo.plan.matrix;
  }
  out.metric = plan_objective(plan, src, tgt, config.metric, config.grouping);
  out.metric_converged = out.metric_converged && out.metric.converged;
  out.value = out.metric.value;
  out.plan = std::move(plan);
  return out;
}

Eigen::MatrixXd squared_euclidean_cost(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw InvalidArgument("point dimensions differ");
  Eigen::MatrixXd cost(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    cost.row(i) = ((-b).rowwise() + a.row(i)).rowwise().squaredNorm().transpose();
  }
  return cost;
}

double w22_distance(const DiscreteMeasure& src, const DiscreteMeasure& tgt,
                    const SinkhornConfig& sinkhorn) {
  const Eigen::MatrixXd cost = squared_euclidean_cost(src.points(), tgt.points());
  const EntropicPlan result = entropic_ot(cost, src.weights(), tgt.weights(), sinkhorn);
  return (result.plan.matrix.array() * cost.array()).sum();
}

}  // namespace rot
