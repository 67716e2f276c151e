#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace rot {

/// Finite set of weighted atoms in R^d. Points are stored one per row.
class DiscreteMeasure {
 public:
  /// Validates and renormalizes `weights` to unit mass.
  DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd weights);

  const Eigen::MatrixXd& points() const { return points_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }
  Eigen::VectorXd point(Eigen::Index i) const { return points_.row(i).transpose(); }

 private:
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
};

DiscreteMeasure make_measure(const std::vector<Eigen::VectorXd>& points,
                             const Eigen::VectorXd& weights);
DiscreteMeasure make_measure(const Eigen::MatrixXd& points, const Eigen::VectorXd& weights);

/// Uniform weights over the rows of `points`.
DiscreteMeasure uniform_measure(const Eigen::MatrixXd& points);

/// Joint distribution with target marginals. Entropic solvers may leave a
/// small marginal residual; it is queried rather than enforced on construction.
struct TransportPlan {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd row_marginal;
  Eigen::VectorXd col_marginal;

  /// max over rows and columns of |sum - target|.
  double marginal_residual() const;
  bool is_feasible(double tol = 1e-8) const;
};

TransportPlan independent_coupling(const DiscreteMeasure& a, const DiscreteMeasure& b);

enum class MomentKind { full, grouped };

/// Second moment of displacements, either d x d (full) or r x r (grouped).
struct DisplacementMoment {
  Eigen::MatrixXd matrix;
  MomentKind kind = MomentKind::full;
};

/// Assignment of d features to r groups of d1 features each. Features are
/// zero-padded to d1 * r, permuted, then laid out column-major in a d1 x r
/// matrix so that column g holds group g.
class FeatureGrouping {
 public:
  FeatureGrouping(std::vector<int> permutation, int d, int r, std::uint64_t seed = 0);

  /// d1 = 1, r = d, identity permutation.
  static FeatureGrouping identity(int d);

  const std::vector<int>& permutation() const { return permutation_; }
  int dim() const { return d_; }
  int group_size() const { return d1_; }
  int group_count() const { return r_; }
  int pad() const { return pad_; }
  int padded_dim() const { return d1_ * r_; }
  std::uint64_t seed() const { return seed_; }

  /// Padded and permuted copy of `x` (length d1 * r). Reading it column-major
  /// as d1 x r gives the reshaped matrix.
  Eigen::VectorXd arrange(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// arrange() applied to every row.
  Eigen::MatrixXd arrange_rows(const Eigen::MatrixXd& rows) const;

  /// d1 x r reshaped matrix of `x`.
  Eigen::MatrixXd reshape(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  bool operator==(const FeatureGrouping& other) const = default;

 private:
  std::vector<int> permutation_;
  int d_;
  int d1_;
  int r_;
  int pad_;
  std::uint64_t seed_;
};

/// V = sum_ij plan(i,j) (s_i - t_j)(s_i - t_j)^T, accumulated i outer, j inner.
DisplacementMoment displacement_second_moment(const TransportPlan& plan,
                                              const DiscreteMeasure& src,
                                              const DiscreteMeasure& tgt);

/// U = sum_ij plan(i,j) (S_i - T_j)^T (S_i - T_j) with S_i, T_j the d1 x r
/// reshapes. Satisfies <V, B (x) I_d1> = <U, B> in arranged coordinates.
DisplacementMoment grouped_second_moment(const TransportPlan& plan,
                                         const DiscreteMeasure& src,
                                         const DiscreteMeasure& tgt,
                                         const FeatureGrouping& grouping);

}  // namespace rot
