#include "rot/measures.hpp"

#include <cmath>
#include <string>

#include "rot/error.hpp"

namespace rot {

DiscreteMeasure::DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  if (points_.rows() == 0) throw InvalidArgument("measure has no points");
  if (points_.cols() == 0) throw InvalidArgument("measure points have dimension 0");
  if (weights_.size() != points_.rows()) {
    throw InvalidArgument("measure has " + std::to_string(points_.rows()) + " points but " +
                          std::to_string(weights_.size()) + " weights");
  }
  if (!points_.allFinite() || !weights_.allFinite()) {
    throw InvalidArgument("measure has non-finite entries");
  }
  if ((weights_.array() < 0.0).any()) throw InvalidArgument("negative weight");
  const double total = weights_.sum();
  if (total <= 0.0) throw InvalidArgument("all-zero weights");
  weights_ /= total;
}

DiscreteMeasure make_measure(const std::vector<Eigen::VectorXd>& points,
                             const Eigen::VectorXd& weights) {
  if (points.empty()) throw InvalidArgument("measure has no points");
  const Eigen::Index d = points.front().size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(points.size()), d);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d) {
      throw InvalidArgument("point " + std::to_string(i) + " has dimension " +
                            std::to_string(points[i].size()) + ", expected " +
                            std::to_string(d));
    }
    rows.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  }
  return DiscreteMeasure(std::move(rows), weights);
}

DiscreteMeasure make_measure(const Eigen::MatrixXd& points, const Eigen::VectorXd& weights) {
  return DiscreteMeasure(points, weights);
}

DiscreteMeasure uniform_measure(const Eigen::MatrixXd& points) {
  return DiscreteMeasure(points, Eigen::VectorXd::Ones(points.rows()));
}

double TransportPlan::marginal_residual() const {
  const double rows = (matrix.rowwise().sum() - row_marginal).cwiseAbs().maxCoeff();
  const double cols = (matrix.colwise().sum().transpose() - col_marginal).cwiseAbs().maxCoeff();
  return std::max(rows, cols);
}

bool TransportPlan::is_feasible(double tol) const {
  return (matrix.array() >= 0.0).all() && marginal_residual() <= tol;
}

TransportPlan independent_coupling(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  return TransportPlan{a.weights() * b.weights().transpose(), a.weights(), b.weights()};
}

FeatureGrouping::FeatureGrouping(std::vector<int> permutation, int d, int r, std::uint64_t seed)
    : permutation_(std::move(permutation)), d_(d), d1_(0), r_(r), pad_(0), seed_(seed) {
  if (d < 1) throw InvalidArgument("grouping dimension must be positive");
  if (r < 1 || r > d) {
    throw InvalidArgument("group count r=" + std::to_string(r) + " must lie in [1, " +
                          std::to_string(d) + "]");
  }
  d1_ = (d + r - 1) / r;
  pad_ = d1_ * r - d;
  const int padded = d1_ * r;
  if (static_cast<int>(permutation_.size()) != padded) {
    throw InvalidArgument("grouping permutation has " + std::to_string(permutation_.size()) +
                          " entries, expected " + std::to_string(padded));
  }
  std::vector<bool> seen(static_cast<std::size_t>(padded), false);
  for (int idx : permutation_) {
    if (idx < 0 || idx >= padded || seen[static_cast<std::size_t>(idx)]) {
      throw InvalidArgument("grouping permutation is not a bijection on 0.." +
                            std::to_string(padded - 1));
    }
    seen[static_cast<std::size_t>(idx)] = true;
  }
}

FeatureGrouping FeatureGrouping::identity(int d) {
  std::vector<int> perm(static_cast<std::size_t>(std::max(d, 0)));
  for (int i = 0; i < d; ++i) perm[static_cast<std::size_t>(i)] = i;
  return FeatureGrouping(std::move(perm), d, d);
}

Eigen::VectorXd FeatureGrouping::arrange(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != d_) {
    throw InvalidArgument("vector of dimension " + std::to_string(x.size()) +
                          " does not match grouping dimension " + std::to_string(d_));
  }
  Eigen::VectorXd out(padded_dim());
  for (int k = 0; k < padded_dim(); ++k) {
    const int src = permutation_[static_cast<std::size_t>(k)];
    out(k) = src < d_ ? x(src) : 0.0;
  }
  return out;
}

Eigen::MatrixXd FeatureGrouping::arrange_rows(const Eigen::MatrixXd& rows) const {
  Eigen::MatrixXd out(rows.rows(), padded_dim());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out.row(i) = arrange(rows.row(i).transpose()).transpose();
  }
  return out;
}

Eigen::MatrixXd FeatureGrouping::reshape(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd arranged = arrange(x);
  return Eigen::Map<const Eigen::MatrixXd>(arranged.data(), d1_, r_);
}

namespace {

void check_plan_shape(const TransportPlan& plan, const DiscreteMeasure& src,
                      const DiscreteMeasure& tgt) {
  if (plan.matrix.rows() != src.size() || plan.matrix.cols() != tgt.size()) {
    throw InvalidArgument("plan is " + std::to_string(plan.matrix.rows()) + "x" +
                          std::to_string(plan.matrix.cols()) + " but measures have " +
                          std::to_string(src.size()) + " and " + std::to_string(tgt.size()) +
                          " atoms");
  }
  if (src.dim() != tgt.dim()) {
    throw InvalidArgument("source dimension " + std::to_string(src.dim()) +
                          " differs from target dimension " + std::to_string(tgt.dim()));
  }
}

}  // namespace

DisplacementMoment displacement_second_moment(const TransportPlan& plan,
                                              const DiscreteMeasure& src,
                                              const DiscreteMeasure& tgt) {
  check_plan_shape(plan, src, tgt);
  const Eigen::Index d = src.dim();
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < src.size(); ++i) {
    for (Eigen::Index j = 0; j < tgt.size(); ++j) {
      const double g = plan.matrix(i, j);
      if (g == 0.0) continue;
      z = src.points().row(i) - tgt.points().row(j);
      v.noalias() += g * z * z.transpose();
    }
  }
  return {v, MomentKind::full};
}

DisplacementMoment grouped_second_moment(const TransportPlan& plan,
                                         const DiscreteMeasure& src,
                                         const DiscreteMeasure& tgt,
                                         const FeatureGrouping& grouping) {
  check_plan_shape(plan, src, tgt);
  if (grouping.dim() != src.dim()) {
    throw InvalidArgument("grouping covers " + std::to_string(grouping.dim()) +
                          " features but measures have dimension " + std::to_string(src.dim()));
  }
  const int d1 = grouping.group_size();
  const int r = grouping.group_count();
  const Eigen::MatrixXd s = grouping.arrange_rows(src.points());
  const Eigen::MatrixXd t = grouping.arrange_rows(tgt.points());
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(r, r);
  Eigen::VectorXd diff(grouping.padded_dim());
  for (Eigen::Index i = 0; i < src.size(); ++i) {
    for (Eigen::Index j = 0; j < tgt.size(); ++j) {
      const double g = plan.matrix(i, j);
      if (g == 0.0) continue;
      diff = (s.row(i) - t.row(j)).transpose();
      Eigen::Map<const Eigen::MatrixXd> delta(diff.data(), d1, r);
      u.noalias() += g * delta.transpose() * delta;
    }
  }
  return {u, MomentKind::grouped};
}

}  // namespace rot
