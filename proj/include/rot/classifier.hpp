#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "rot/data_io.hpp"
#include "rot/rot_loss.hpp"

namespace rot {

/// Linear softmax model h(x; W) = softmax(W^T x), W is M x L.
struct SoftmaxModel {
  Eigen::MatrixXd weights;

  Eigen::Index feature_dim() const { return weights.rows(); }
  Eigen::Index label_count() const { return weights.cols(); }

  static SoftmaxModel zeros(Eigen::Index feature_dim, Eigen::Index label_count);
};

Eigen::VectorXd softmax_forward(const SoftmaxModel& model, const Eigen::VectorXd& x);

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 50;
  double weight_decay = 0.0005;
  std::uint64_t seed = 0;
  RotLossConfig loss;
  LossKind loss_kind = LossKind::rot;
  bool shuffle = true;
  double divergence_threshold = 1e6;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  SoftmaxModel model;
  std::vector<EpochStats> epochs;
};

struct SampleGradient {
  double loss = 0.0;
  Eigen::MatrixXd weights_gradient;  // d loss / d W, without weight decay
};

/// Loss of one instance and its gradient with respect to W by the chain rule
/// through the softmax.
SampleGradient sample_gradient(const SoftmaxModel& model, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& y_hat, const LabelSpace& labels,
                               const TrainConfig& config);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Per-instance SGD: W <- W - lr * (x dz^T + 2 weight_decay W). Starts from
/// zero weights unless `initial` is given.
TrainResult sgd_train(const Dataset& dataset, const TrainConfig& config, const LabelSpace& labels,
                      const SoftmaxModel* initial = nullptr,
                      const EpochCallback& on_epoch = nullptr);

struct RankingMetrics {
  double auc = 0.0;
  double map = 0.0;
};

/// Micro-averaged AUC over all (instance, label) pairs (ties get half credit)
/// and mean over instances of average precision of the label ranking.
RankingMetrics ranking_metrics(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& relevance);

RankingMetrics evaluate(const SoftmaxModel& model, const Dataset& dataset);

/// Checkpoint: 8-byte magic "ROTSOFTM", version byte, uint64 M, uint64 L,
/// then M * L little-endian float64 in row-major order.
void save_model(const std::filesystem::path& path, const SoftmaxModel& model);
SoftmaxModel load_model(const std::filesystem::path& path);

}  // namespace rot
