#include "rot/rot_loss.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "rot/error.hpp"

namespace rot {

namespace {

void require_simplex(const Eigen::VectorXd& v, Eigen::Index n, const char* name) {
  if (v.size() != n) {
    std::ostringstream os;
    os << name << " has length " << v.size() << ", expected " << n;
    throw InvalidArgument(os.str());
  }
  if (!v.allFinite() || (v.array() < 0.0).any() || std::abs(v.sum() - 1.0) > 1e-8) {
    throw InvalidArgument(std::string(name) + " is not a probability vector");
  }
}

}  // namespace

LabelSpace::LabelSpace(Eigen::MatrixXd embeddings, std::optional<FeatureGrouping> grouping)
    : embeddings_(std::move(embeddings)), grouping_(std::move(grouping)) {
  if (embeddings_.rows() == 0 || embeddings_.cols() == 0) {
    throw InvalidArgument("label space needs at least one label and one dimension");
  }
  if (!embeddings_.allFinite()) throw InvalidArgument("label embeddings have non-finite entries");
  for (Eigen::Index p = 0; p < embeddings_.rows(); ++p) {
    const double norm = embeddings_.row(p).norm();
    if (std::abs(norm - 1.0) > 1e-10) {
      std::ostringstream os;
      os << "embedding of label " << p << " has 2-norm " << norm << ", expected 1";
      throw InvalidArgument(os.str());
    }
  }
  if (grouping_) {
    if (grouping_->dim() != embeddings_.cols()) {
      std::ostringstream os;
      os << "grouping covers " << grouping_->dim() << " features but embeddings have "
         << embeddings_.cols();
      throw InvalidArgument(os.str());
    }
    arranged_ = grouping_->arrange_rows(embeddings_);
  } else {
    arranged_ = embeddings_;
  }
  // Row p * d1 + a holds row a of the d1 x r block of label p.
  const Eigen::Index side = grouped() ? grouping_->group_count() : arranged_.cols();
  const Eigen::Index block = arranged_.cols() / side;
  blocks_.resize(label_count() * block, side);
  for (Eigen::Index p = 0; p < label_count(); ++p) {
    blocks_.middleRows(p * block, block) =
        Eigen::Map<const Eigen::MatrixXd>(arranged_.row(p).data(), block, side);
  }
}

DisplacementMoment LabelSpace::moment(const Eigen::MatrixXd& plan) const {
  const Eigen::Index labels = label_count();
  if (plan.rows() != labels || plan.cols() != labels) {
    throw InvalidArgument("plan must be L x L");
  }
  // sum_pq g_pq (X_p - X_q)^T (X_p - X_q)
  //   = sum_p w_p X_p^T X_p - sum_p (X_p^T Y_p + Y_p^T X_p),
  // with w = row sums + column sums and Y = plan * X. Costs O(L^2 d + L d r)
  // instead of O(L^2 d r) for the pairwise sum.
  const Eigen::Index side = blocks_.cols();
  const Eigen::Index block = blocks_.rows() / labels;
  const Eigen::VectorXd w = plan.rowwise().sum() + plan.colwise().sum().transpose();
  RowMajorMatrix y = plan * arranged_;
  Eigen::MatrixXd y_blocks(blocks_.rows(), side);
  for (Eigen::Index p = 0; p < labels; ++p) {
    y_blocks.middleRows(p * block, block) = Eigen::Map<const Eigen::MatrixXd>(y.row(p).data(), block, side);
  }
  Eigen::VectorXd row_weights(blocks_.rows());
  for (Eigen::Index p = 0; p < labels; ++p) row_weights.segment(p * block, block).setConstant(w(p));

  const Eigen::MatrixXd cross = blocks_.transpose() * y_blocks;
  Eigen::MatrixXd out = blocks_.transpose() * row_weights.asDiagonal() * blocks_;
  out -= cross + cross.transpose();
  out = 0.5 * (out + out.transpose());
  return {out, grouped() ? MomentKind::grouped : MomentKind::full};
}

Eigen::MatrixXd LabelSpace::pair_costs(const Eigen::MatrixXd& metric) const {
  const Eigen::Index labels = label_count();
  Eigen::MatrixXd gram;
  if (!grouped()) {
    if (metric.rows() != dim() || metric.cols() != dim()) {
      throw InvalidArgument("metric size does not match the embedding dimension");
    }
    gram = arranged_ * metric * arranged_.transpose();
  } else {
    const int d1 = grouping_->group_size();
    const int r = grouping_->group_count();
    if (metric.rows() != r || metric.cols() != r) {
      throw InvalidArgument("group metric size does not match the group count");
    }
    // <X_p B, X_q> over the flattened d1 x r blocks.
    Eigen::MatrixXd transformed(labels, arranged_.cols());
    for (Eigen::Index p = 0; p < labels; ++p) {
      Eigen::Map<const Eigen::MatrixXd> xp(arranged_.row(p).data(), d1, r);
      Eigen::MatrixXd yp = xp * metric;
      transformed.row(p) = Eigen::Map<const Eigen::RowVectorXd>(yp.data(), yp.size());
    }
    gram = transformed * arranged_.transpose();
  }
  const Eigen::VectorXd self = gram.diagonal();
  Eigen::MatrixXd costs = (self.replicate(1, labels) + self.transpose().replicate(labels, 1)) -
                          (gram + gram.transpose());
  costs.diagonal().setZero();
  return costs;
}

Eigen::VectorXd smooth_target(const Eigen::VectorXd& y, double alpha) {
  if (y.size() == 0) throw InvalidArgument("empty label vector");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("smoothing alpha must lie in [0, 1)");
  if (!y.allFinite() || (y.array() < 0.0).any()) {
    throw InvalidArgument("label vector must be nonnegative");
  }
  const double total = y.sum();
  if (total <= 0.0) throw InvalidArgument("all-zero label vector");
  const double uniform = alpha / static_cast<double>(y.size());
  return ((1.0 - alpha) / total) * y + Eigen::VectorXd::Constant(y.size(), uniform);
}

double negative_entropy(const Eigen::MatrixXd& plan) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < plan.cols(); ++j) {
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
      const double g = plan(i, j);
      if (g > 0.0) total += g * std::log(g);
    }
  }
  return total;
}

LossResult rot_loss(const Eigen::VectorXd& h, const Eigen::VectorXd& y_hat,
                    const LabelSpace& labels, const RotLossConfig& config,
                    const MetricOracle& oracle) {
  const Eigen::Index n = labels.label_count();
  require_simplex(h, n, "prediction h");
  require_simplex(y_hat, n, "target y_hat");
  if (!(config.lambda_gamma > 0.0)) throw InvalidArgument("lambda_gamma must be positive");
  if (config.fw_iters < 1) throw InvalidArgument("fw_iters must be >= 1");

  TransportPlan plan{h * y_hat.transpose(), h, y_hat};
  LossResult out;
  for (int t = 0; t < config.fw_iters; ++t) {
    const AdversarialMetric metric = oracle(labels.moment(plan.matrix));
    out.lmo_costs = labels.pair_costs(metric.matrix);
    EntropicPlan lmo = entropic_ot(out.lmo_costs, h, y_hat, config.sinkhorn);
    const double theta = 2.0 / (t + 2.0);
    plan.matrix = (1.0 - theta) * plan.matrix + theta * lmo.plan.matrix;
    out.lmo_plan = std::move(lmo.plan.matrix);
  }
  out.metric = oracle(labels.moment(plan.matrix));
  out.costs = labels.pair_costs(out.metric.matrix);
  out.value = out.metric.value + config.lambda_gamma * negative_entropy(plan.matrix);
  out.plan = std::move(plan);
  return out;
}

LossResult rot_loss(const Eigen::VectorXd& h, const Eigen::VectorXd& y_hat,
                    const LabelSpace& labels, const RotLossConfig& config, LossKind kind) {
  const MetricOracle oracle =
      kind == LossKind::w22 ? identity_metric_oracle() : make_metric_oracle(config.metric);
  return rot_loss(h, y_hat, labels, config, oracle);
}

Eigen::VectorXd simplex_tangent_gradient(const Eigen::MatrixXd& costs, const Eigen::MatrixXd& plan,
                                         double lambda) {
  if (costs.rows() != plan.rows() || costs.cols() != plan.cols() || plan.rows() != plan.cols()) {
    throw InvalidArgument("gradient needs square cost and plan matrices of equal size");
  }
  if ((plan.array() <= 0.0).any()) {
    throw InvalidArgument(
        "gradient undefined: transport plan has zero entries; enable smoothing");
  }
  const auto labels = static_cast<double>(plan.rows());
  const Eigen::MatrixXd a = costs + lambda * (plan.array().log() + 1.0).matrix();
  const Eigen::VectorXd row_sums = a.rowwise().sum();
  return row_sums / labels -
         Eigen::VectorXd::Constant(plan.rows(), row_sums.sum() / (labels * labels));
}

Eigen::VectorXd loss_gradient_from_solution(const LossResult& solution, double lambda_gamma) {
  return simplex_tangent_gradient(solution.costs, solution.plan.matrix, lambda_gamma);
}

Eigen::VectorXd loss_gradient_from_lmo(const LossResult& solution, double lambda_beta) {
  // For the entropic plan diag(u) K diag(v), A = lambda (ln u 1^T + 1 ln v^T + 1 1^T)
  // exactly, whether or not the outer iteration has converged.
  return simplex_tangent_gradient(solution.lmo_costs, solution.lmo_plan, lambda_beta);
}

LossWithGradient rot_loss_with_gradient(const Eigen::VectorXd& h, const Eigen::VectorXd& y_hat,
                                        const LabelSpace& labels, const RotLossConfig& config,
                                        LossKind kind) {
  const LossResult solution = rot_loss(h, y_hat, labels, config, kind);
  const Eigen::VectorXd gradient =
      config.gradient == GradientSource::lmo
          ? loss_gradient_from_lmo(solution, config.sinkhorn.lambda_beta)
          : loss_gradient_from_solution(solution, config.lambda_gamma);
  return {solution.value, gradient};
}

Eigen::VectorXd rot_loss_gradient(const Eigen::VectorXd& h, const Eigen::VectorXd& y_hat,
                                  const LabelSpace& labels, const RotLossConfig& config,
                                  LossKind kind) {
  return rot_loss_with_gradient(h, y_hat, labels, config, kind).gradient;
}

}  // namespace rot
