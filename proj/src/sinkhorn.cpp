#include "rot/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "rot/error.hpp"

namespace rot {

namespace {

constexpr double kLogDomainThreshold = 0.05;
// The early-exit residual is checked every this many iterations.
constexpr int kResidualStride = 10;

bool check_due(int iteration, const SinkhornConfig& config) {
  return config.tol > 0.0 && (iteration % kResidualStride == 0 || iteration == config.iterations);
}

void require_probability(const Eigen::VectorXd& v, const char* name) {
  if (!v.allFinite() || (v.array() < 0.0).any()) {
    throw InvalidArgument(std::string(name) + " must be a nonnegative finite vector");
  }
  if (std::abs(v.sum() - 1.0) > 1e-8) {
    std::ostringstream os;
    os << name << " sums to " << v.sum() << ", expected 1";
    throw InvalidArgument(os.str());
  }
}

std::vector<Eigen::Index> support(const Eigen::VectorXd& v) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v(i) > 0.0) idx.push_back(i);
  }
  return idx;
}

double log_sum_exp(const Eigen::Ref<const Eigen::ArrayXd>& x) {
  const double top = x.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((x - top).exp().sum());
}

struct Reduced {
  Eigen::MatrixXd cost;
  Eigen::VectorXd p;
  Eigen::VectorXd q;
};

// Restricts to the supports and removes row/column minima; both leave the
// entropic solution unchanged.
Reduced reduce(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
               const std::vector<Eigen::Index>& rows, const std::vector<Eigen::Index>& cols) {
  Reduced out;
  const auto m = static_cast<Eigen::Index>(rows.size());
  const auto n = static_cast<Eigen::Index>(cols.size());
  out.cost.resize(m, n);
  out.p.resize(m);
  out.q.resize(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    out.p(i) = p(rows[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < n; ++j) {
      out.cost(i, j) = cost(rows[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) out.q(j) = q(cols[static_cast<std::size_t>(j)]);
  out.cost.colwise() -= out.cost.rowwise().minCoeff();
  out.cost.rowwise() -= out.cost.colwise().minCoeff();
  return out;
}

double residual_of(const Eigen::MatrixXd& plan, const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  const double r = (plan.rowwise().sum() - p).cwiseAbs().maxCoeff();
  const double c = (plan.colwise().sum().transpose() - q).cwiseAbs().maxCoeff();
  return std::max(r, c);
}

// Returns false when the kernel underflows.
bool solve_plain(const Reduced& in, const SinkhornConfig& config, Eigen::MatrixXd& plan,
                 int& iterations) {
  const Eigen::MatrixXd kernel = (-in.cost.array() / config.lambda_beta).exp().matrix();
  Eigen::VectorXd u = Eigen::VectorXd::Ones(in.p.size());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(in.q.size());
  for (iterations = 1; iterations <= config.iterations; ++iterations) {
    const Eigen::VectorXd kv = kernel * v;
    if ((kv.array() <= 0.0).any() || !kv.allFinite()) return false;
    u = in.p.cwiseQuotient(kv);
    const Eigen::VectorXd ktu = kernel.transpose() * u;
    if ((ktu.array() <= 0.0).any() || !ktu.allFinite()) return false;
    v = in.q.cwiseQuotient(ktu);
    if (check_due(iterations, config)) {
      const double row_res = (u.cwiseProduct(kernel * v) - in.p).cwiseAbs().maxCoeff();
      if (row_res <= config.tol) break;
    }
  }
  iterations = std::min(iterations, config.iterations);
  plan = u.asDiagonal() * kernel * v.asDiagonal();
  return plan.allFinite();
}

void solve_log(const Reduced& in, const SinkhornConfig& config, Eigen::MatrixXd& plan,
               int& iterations) {
  const double lambda = config.lambda_beta;
  const Eigen::Index m = in.p.size();
  const Eigen::Index n = in.q.size();
  const Eigen::ArrayXd log_p = in.p.array().log();
  const Eigen::ArrayXd log_q = in.q.array().log();
  // Potentials divided by lambda.
  Eigen::ArrayXd f = Eigen::ArrayXd::Zero(m);
  Eigen::ArrayXd g = Eigen::ArrayXd::Zero(n);
  const Eigen::ArrayXXd scaled = in.cost.array() / lambda;
  Eigen::ArrayXd buffer_n(n);
  Eigen::ArrayXd buffer_m(m);
  auto row_update = [&] {
    for (Eigen::Index i = 0; i < m; ++i) {
      buffer_n = g - scaled.row(i).transpose();
      f(i) = log_p(i) - log_sum_exp(buffer_n);
    }
  };
  auto row_residual = [&] {
    double res = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      buffer_n = g - scaled.row(i).transpose();
      res = std::max(res, std::abs(std::exp(f(i) + log_sum_exp(buffer_n)) - in.p(i)));
    }
    return res;
  };
  for (iterations = 1; iterations <= config.iterations; ++iterations) {
    row_update();
    for (Eigen::Index j = 0; j < n; ++j) {
      buffer_m = f - scaled.col(j);
      g(j) = log_q(j) - log_sum_exp(buffer_m);
    }
    if (check_due(iterations, config) && row_residual() <= config.tol) break;
  }
  iterations = std::min(iterations, config.iterations);
  plan.resize(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    plan.col(j) = (f + g(j) - scaled.col(j)).exp().matrix();
  }
}

}  // namespace

EntropicPlan entropic_ot(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                         const Eigen::VectorXd& q, const SinkhornConfig& config) {
  if (cost.rows() != p.size() || cost.cols() != q.size()) {
    std::ostringstream os;
    os << "cost is " << cost.rows() << "x" << cost.cols() << " but marginals have sizes "
       << p.size() << " and " << q.size();
    throw InvalidArgument(os.str());
  }
  if (!cost.allFinite()) throw InvalidArgument("non-finite cost");
  require_probability(p, "row marginal");
  require_probability(q, "column marginal");
  if (!(config.lambda_beta > 0.0)) throw InvalidArgument("lambda_beta must be positive");
  if (config.iterations < 1) throw InvalidArgument("Sinkhorn iterations must be >= 1");

  const std::vector<Eigen::Index> rows = support(p);
  const std::vector<Eigen::Index> cols = support(q);
  const Reduced reduced = reduce(cost, p, q, rows, cols);

  Eigen::MatrixXd sub;
  int iterations = 0;
  bool use_log = config.domain == SinkhornDomain::log ||
                 (config.domain == SinkhornDomain::automatic &&
                  config.lambda_beta < kLogDomainThreshold);
  if (!use_log && !solve_plain(reduced, config, sub, iterations)) {
    if (config.domain == SinkhornDomain::plain) {
      throw NumericalError("Sinkhorn kernel underflow; use the log domain or a larger lambda_beta");
    }
    use_log = true;
  }
  if (use_log) solve_log(reduced, config, sub, iterations);

  EntropicPlan out;
  out.plan.matrix = Eigen::MatrixXd::Zero(cost.rows(), cost.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out.plan.matrix(rows[i], cols[j]) =
          sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  out.plan.row_marginal = p;
  out.plan.col_marginal = q;
  out.residual = residual_of(out.plan.matrix, p, q);
  out.iterations = iterations;
  return out;
}

ScalingResult symmetric_scaling(const Eigen::MatrixXd& kernel, double tol, int max_iter) {
  const Eigen::Index n = kernel.rows();
  if (kernel.cols() != n || n == 0) throw InvalidArgument("scaling kernel must be square");
  if (!kernel.allFinite() || (kernel.array() <= 0.0).any()) {
    throw InvalidArgument("scaling kernel must be finite and entrywise positive");
  }
  const double scale = kernel.cwiseAbs().maxCoeff();
  if ((kernel - kernel.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidArgument("scaling kernel must be symmetric");
  }
  ScalingResult out;
  out.d = Eigen::VectorXd::Ones(n);
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    const Eigen::VectorXd kd = kernel * out.d;
    out.residual = (out.d.cwiseProduct(kd).array() - 1.0).abs().maxCoeff();
    if (out.residual <= tol) {
      out.converged = true;
      return out;
    }
    out.d = out.d.cwiseQuotient(kd).cwiseSqrt();
  }
  out.residual = (out.d.cwiseProduct(kernel * out.d).array() - 1.0).abs().maxCoeff();
  out.converged = out.residual <= tol;
  return out;
}

namespace {

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[static_cast<std::size_t>(a)] = b;
    return true;
  }
};

}  // namespace

std::pair<TransportPlan, double> exact_ot_small(const Eigen::MatrixXd& cost,
                                                const Eigen::VectorXd& p,
                                                const Eigen::VectorXd& q) {
  const int m = static_cast<int>(cost.rows());
  const int n = static_cast<int>(cost.cols());
  if (m * n > 16) throw InvalidArgument("exact_ot_small supports m * n <= 16");
  if (p.size() != m || q.size() != n) throw InvalidArgument("marginal sizes do not match cost");
  if (!cost.allFinite()) throw InvalidArgument("non-finite cost");
  require_probability(p, "row marginal");
  require_probability(q, "column marginal");

  const int cells = m * n;
  const int tree_edges = m + n - 1;
  std::vector<bool> chosen(static_cast<std::size_t>(cells), false);
  std::fill(chosen.begin(), chosen.begin() + tree_edges, true);

  double best = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd best_plan = Eigen::MatrixXd::Zero(m, n);
  std::vector<std::pair<int, int>> edges;
  do {
    edges.clear();
    DisjointSet dsu(m + n);
    bool tree = true;
    for (int c = 0; c < cells && tree; ++c) {
      if (!chosen[static_cast<std::size_t>(c)]) continue;
      const int i = c / n;
      const int j = c % n;
      tree = dsu.unite(i, m + j);
      edges.emplace_back(i, j);
    }
    if (!tree) continue;

    // Peel leaves: a degree-one node fixes the flow on its only edge.
    std::vector<double> remaining(static_cast<std::size_t>(m + n));
    for (int i = 0; i < m; ++i) remaining[static_cast<std::size_t>(i)] = p(i);
    for (int j = 0; j < n; ++j) remaining[static_cast<std::size_t>(m + j)] = q(j);
    std::vector<bool> done(edges.size(), false);
    Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(m, n);
    bool feasible = true;
    for (std::size_t step = 0; step < edges.size() && feasible; ++step) {
      std::vector<int> degree(static_cast<std::size_t>(m + n), 0);
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if (done[e]) continue;
        ++degree[static_cast<std::size_t>(edges[e].first)];
        ++degree[static_cast<std::size_t>(m + edges[e].second)];
      }
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if (done[e]) continue;
        const int a = edges[e].first;
        const int b = m + edges[e].second;
        int leaf = -1;
        int other = -1;
        if (degree[static_cast<std::size_t>(a)] == 1) {
          leaf = a;
          other = b;
        } else if (degree[static_cast<std::size_t>(b)] == 1) {
          leaf = b;
          other = a;
        } else {
          continue;
        }
        const double flow = remaining[static_cast<std::size_t>(leaf)];
        if (flow < -1e-12) feasible = false;
        plan(edges[e].first, edges[e].second) = std::max(flow, 0.0);
        remaining[static_cast<std::size_t>(leaf)] = 0.0;
        remaining[static_cast<std::size_t>(other)] -= flow;
        done[e] = true;
        break;
      }
    }
    if (!feasible) continue;
    const double value = (plan.array() * cost.array()).sum();
    if (value < best) {
      best = value;
      best_plan = plan;
    }
  } while (std::prev_permutation(chosen.begin(), chosen.end()));

  return {TransportPlan{best_plan, p, q}, best};
}

}  // namespace rot
