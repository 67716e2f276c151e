#include "rot/metric_solvers.hpp"

#include <cmath>
#include <sstream>

#include "rot/error.hpp"
#include "rot/sinkhorn.hpp"

namespace rot {

namespace {

// Largest |argument| accepted by exp() before we call it an overflow.
constexpr double kMaxExponent = 700.0;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_finite(const DisplacementMoment& v) {
  if (!v.matrix.allFinite()) throw NumericalError("displacement moment has non-finite entries");
  if (v.matrix.rows() != v.matrix.cols()) throw InvalidArgument("displacement moment is not square");
}

void require_lambda(double lambda_m) {
  if (!(lambda_m > 0.0) || !std::isfinite(lambda_m)) {
    throw InvalidArgument("lambda_m must be positive and finite");
  }
}

void require_prior(const Eigen::MatrixXd& prior, Eigen::Index n, bool strictly_positive) {
  if (prior.rows() != n || prior.cols() != n) {
    std::ostringstream os;
    os << "prior M0 is " << prior.rows() << "x" << prior.cols() << ", expected " << n << "x" << n;
    throw InvalidArgument(os.str());
  }
  if (!prior.allFinite()) throw InvalidArgument("prior M0 has non-finite entries");
  if (strictly_positive) {
    if ((prior.array() <= 0.0).any()) throw InvalidArgument("prior M0 must be entrywise positive");
  } else if ((prior.array() < 0.0).any()) {
    throw InvalidArgument("negative M0 entry");
  }
  const double scale = std::max(1.0, prior.cwiseAbs().maxCoeff());
  if ((prior - prior.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidArgument("prior M0 is not symmetric");
  }
}

void check_exponent(double x, Eigen::Index i, Eigen::Index j) {
  if (std::abs(x) > kMaxExponent) {
    std::ostringstream os;
    os << "exponent argument V(" << i << "," << j << ")/lambda_m = " << x
       << " exceeds " << kMaxExponent << "; increase lambda_m";
    throw NumericalError(os.str());
  }
}

double int_pow(double x, int n) {
  double out = 1.0;
  for (int i = 0; i < n; ++i) out *= x;
  return out;
}

}  // namespace

std::string family_name(const MetricSolverConfig& config) {
  return std::visit(Overloaded{[](const PNormConfig&) { return std::string("pnorm"); },
                               [](const KLConfig&) { return std::string("kl"); },
                               [](const DSConfig&) { return std::string("ds"); }},
                    config);
}

double entrywise_norm(const Eigen::MatrixXd& a, double p) {
  const double scale = a.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return scale * std::pow((a.cwiseAbs() / scale).array().pow(p).sum(), 1.0 / p);
}

AdversarialMetric pnorm_metric(const DisplacementMoment& v, int k) {
  require_finite(v);
  if (k < 1) throw InvalidArgument("p-norm family needs k >= 1");
  AdversarialMetric out;
  out.family = PNormConfig{k};
  out.kind = v.kind;
  const Eigen::Index n = v.matrix.rows();
  const double scale = v.matrix.cwiseAbs().maxCoeff();
  if (scale == 0.0) {
    out.matrix = Eigen::MatrixXd::Zero(n, n);
    out.value = 0.0;
    return out;
  }
  // ||V||_2k = scale * (sum (V/scale)^2k)^(1/2k)
  double sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) sum += int_pow(v.matrix(i, j) / scale, 2 * k);
  }
  const double norm = scale * std::pow(sum, 1.0 / (2.0 * k));
  out.matrix.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out.matrix(i, j) = int_pow(v.matrix(i, j) / norm, 2 * k - 1);
    }
  }
  out.value = norm;
  return out;
}

AdversarialMetric kl_metric(const DisplacementMoment& v, const Eigen::MatrixXd& prior,
                            double lambda_m) {
  require_finite(v);
  require_lambda(lambda_m);
  const Eigen::Index n = v.matrix.rows();
  require_prior(prior, n, false);
  AdversarialMetric out;
  out.family = KLConfig{prior, lambda_m};
  out.kind = v.kind;
  out.matrix = Eigen::MatrixXd::Zero(n, n);
  double excess = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m0 = prior(i, j);
      if (m0 == 0.0) continue;
      const double arg = v.matrix(i, j) / lambda_m;
      check_exponent(arg, i, j);
      out.matrix(i, j) = m0 * std::exp(arg);
      excess += m0 * std::expm1(arg);
    }
  }
  out.value = lambda_m * excess;
  return out;
}

AdversarialMetric kl_metric(const DisplacementMoment& v, const KLConfig& config) {
  if (config.prior) return kl_metric(v, *config.prior, config.lambda_m);
  const Eigen::Index n = v.matrix.rows();
  return kl_metric(v, Eigen::MatrixXd::Identity(n, n), config.lambda_m);
}

Eigen::MatrixXd default_ds_prior(Eigen::Index n) {
  return (Eigen::MatrixXd::Identity(n, n) + Eigen::MatrixXd::Ones(n, n)) /
         static_cast<double>(n + 1);
}

AdversarialMetric ds_metric(const DisplacementMoment& v, const DSConfig& config) {
  require_finite(v);
  require_lambda(config.lambda_m);
  if (!(config.sinkhorn_tol > 0.0)) throw InvalidArgument("sinkhorn_tol must be positive");
  if (config.sinkhorn_max_iter < 1) throw InvalidArgument("sinkhorn_max_iter must be >= 1");
  const Eigen::Index n = v.matrix.rows();
  const Eigen::MatrixXd prior = config.prior ? *config.prior : default_ds_prior(n);
  require_prior(prior, n, true);

  Eigen::MatrixXd arg = v.matrix / config.lambda_m;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) check_exponent(arg(i, j), i, j);
  }
  // A constant shift of the exponent is absorbed by D.
  const double shift = arg.maxCoeff();
  const Eigen::MatrixXd kernel = prior.cwiseProduct((arg.array() - shift).exp().matrix());
  const ScalingResult scaling = symmetric_scaling(kernel, config.sinkhorn_tol,
                                                  config.sinkhorn_max_iter);
  if (!scaling.converged && config.strict) {
    std::ostringstream os;
    os << "doubly-stochastic scaling did not converge in " << config.sinkhorn_max_iter
       << " iterations (row-sum residual " << scaling.residual << ")";
    throw ConvergenceError(os.str(), scaling.residual);
  }
  const Eigen::VectorXd& d = scaling.d;
  AdversarialMetric out;
  out.family = config;
  out.kind = v.kind;
  out.matrix = d.asDiagonal() * kernel * d.asDiagonal();
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
  const double mass = d.dot(kernel * d);
  out.value = config.lambda_m * (mass - 2.0 * d.array().log().sum() +
                                 static_cast<double>(n) * shift - prior.sum());
  out.residual = scaling.residual;
  out.converged = scaling.converged;
  return out;
}

AdversarialMetric adversarial_value(const DisplacementMoment& v, const MetricSolverConfig& config) {
  return std::visit(
      Overloaded{[&](const PNormConfig& c) { return pnorm_metric(v, c.k); },
                 [&](const KLConfig& c) { return kl_metric(v, c); },
                 [&](const DSConfig& c) { return ds_metric(v, c); }},
      config);
}

MetricOracle make_metric_oracle(MetricSolverConfig config) {
  return [config = std::move(config)](const DisplacementMoment& v) {
    return adversarial_value(v, config);
  };
}

MetricOracle identity_metric_oracle() {
  return [](const DisplacementMoment& v) {
    require_finite(v);
    AdversarialMetric out;
    out.matrix = Eigen::MatrixXd::Identity(v.matrix.rows(), v.matrix.cols());
    out.value = v.matrix.trace();
    out.kind = v.kind;
    return out;
  };
}

Eigen::VectorXd feature_weights(const DisplacementMoment& v, double lambda_m) {
  require_lambda(lambda_m);
  const Eigen::VectorXd diag = v.matrix.diagonal();
  if (!diag.allFinite()) throw NumericalError("displacement moment diagonal is not finite");
  const Eigen::ArrayXd scaled = diag.array() / lambda_m;
  const Eigen::ArrayXd e = (scaled - scaled.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

double feature_selection_objective(const DisplacementMoment& v, double lambda_m) {
  require_lambda(lambda_m);
  const Eigen::VectorXd diag = v.matrix.diagonal();
  if (!diag.allFinite()) throw NumericalError("displacement moment diagonal is not finite");
  const Eigen::ArrayXd scaled = diag.array() / lambda_m;
  const double top = scaled.maxCoeff();
  const double lse = top + std::log((scaled - top).exp().sum());
  return lambda_m * (lse - static_cast<double>(diag.size() - 1));
}

double kl_divergence(const Eigen::MatrixXd& m, const Eigen::MatrixXd& prior) {
  if (m.rows() != prior.rows() || m.cols() != prior.cols()) {
    throw InvalidArgument("kl_divergence: shape mismatch");
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double a = m(i, j);
      const double b = prior(i, j);
      if (a > 0.0) {
        if (b <= 0.0) return std::numeric_limits<double>::infinity();
        total += a * std::log(a / b);
      }
      total += b - a;
    }
  }
  return total;
}

}  // namespace rot
