#include "rot/classifier.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "rot/error.hpp"

namespace rot {

SoftmaxModel SoftmaxModel::zeros(Eigen::Index feature_dim, Eigen::Index label_count) {
  return SoftmaxModel{Eigen::MatrixXd::Zero(feature_dim, label_count)};
}

Eigen::VectorXd softmax_forward(const SoftmaxModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.feature_dim()) {
    std::ostringstream os;
    os << "feature vector has dimension " << x.size() << " but the model expects "
       << model.feature_dim();
    throw InvalidArgument(os.str());
  }
  const Eigen::VectorXd logits = model.weights.transpose() * x;
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

SampleGradient sample_gradient(const SoftmaxModel& model, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& y_hat, const LabelSpace& labels,
                               const TrainConfig& config) {
  const Eigen::VectorXd h = softmax_forward(model, x);
  const LossWithGradient lg = rot_loss_with_gradient(h, y_hat, labels, config.loss,
                                                     config.loss_kind);
  // Softmax Jacobian (diag(h) - h h^T) applied to the loss gradient.
  const Eigen::VectorXd dz =
      h.cwiseProduct((lg.gradient.array() - h.dot(lg.gradient)).matrix());
  return {lg.value, x * dz.transpose()};
}

TrainResult sgd_train(const Dataset& dataset, const TrainConfig& config, const LabelSpace& labels,
                      const SoftmaxModel* initial, const EpochCallback& on_epoch) {
  dataset.validate();
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw InvalidArgument("learning rate must be nonnegative and finite");
  }
  if (config.epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (!(config.weight_decay >= 0.0)) throw InvalidArgument("weight decay must be nonnegative");
  if (labels.label_count() != dataset.label_count()) {
    std::ostringstream os;
    os << "label space has " << labels.label_count() << " labels but the dataset has "
       << dataset.label_count();
    throw InvalidArgument(os.str());
  }

  TrainResult out;
  out.model = initial ? *initial : SoftmaxModel::zeros(dataset.feature_dim(), dataset.label_count());
  if (out.model.feature_dim() != dataset.feature_dim() ||
      out.model.label_count() != dataset.label_count()) {
    throw InvalidArgument("initial model dimensions do not match the dataset");
  }

  std::vector<Eigen::VectorXd> targets;
  targets.reserve(static_cast<std::size_t>(dataset.size()));
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    targets.push_back(smooth_target(dataset.label_vector(i), config.loss.target_smoothing_alpha));
  }

  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(dataset.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (const Eigen::Index i : order) {
      const Eigen::VectorXd x = dataset.features.row(i).transpose();
      // Logit gaps past ~745 underflow a probability to exactly 0, where the
      // entropic gradient has no value. Only runaway weights get there.
      if (softmax_forward(out.model, x).minCoeff() <= 0.0) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << ", instance " << i
           << ": softmax saturated, |W| = " << out.model.weights.norm()
           << "; lower the learning rate";
        throw DivergenceError(os.str());
      }
      const SampleGradient sg =
          sample_gradient(out.model, x, targets[static_cast<std::size_t>(i)], labels, config);
      if (!std::isfinite(sg.loss) || sg.loss > config.divergence_threshold ||
          !sg.weights_gradient.allFinite()) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << ", instance " << i << ": loss " << sg.loss
           << ", |W| = " << out.model.weights.norm() << "; lower the learning rate";
        throw DivergenceError(os.str());
      }
      total += sg.loss;
      out.model.weights -= config.learning_rate *
                           (sg.weights_gradient + 2.0 * config.weight_decay * out.model.weights);
      if (!out.model.weights.allFinite()) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << ", instance " << i
           << ": weights became non-finite; lower the learning rate";
        throw DivergenceError(os.str());
      }
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = total / static_cast<double>(dataset.size());
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return out;
}

RankingMetrics ranking_metrics(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& relevance) {
  if (scores.rows() != relevance.rows() || scores.cols() != relevance.cols()) {
    throw InvalidArgument("scores and relevance shapes differ");
  }
  if (!scores.allFinite()) throw InvalidArgument("scores must be finite");

  // Micro AUC via the rank-sum statistic with average ranks for ties.
  const Eigen::Index total = scores.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return scores.data()[a] < scores.data()[b];
  });
  double positives = 0.0;
  double positive_rank_sum = 0.0;
  for (std::size_t start = 0; start < idx.size();) {
    std::size_t end = start;
    while (end < idx.size() && scores.data()[idx[end]] == scores.data()[idx[start]]) ++end;
    const double avg_rank = 0.5 * (static_cast<double>(start + 1) + static_cast<double>(end));
    for (std::size_t k = start; k < end; ++k) {
      if (relevance.data()[idx[k]] > 0.5) {
        positives += 1.0;
        positive_rank_sum += avg_rank;
      }
    }
    start = end;
  }
  const double negatives = static_cast<double>(total) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw InvalidArgument("AUC undefined: only one class present in the labels");
  }
  RankingMetrics out;
  out.auc = (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);

  double ap_sum = 0.0;
  int counted = 0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.cols()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return scores(i, a) > scores(i, b); });
    double hits = 0.0;
    double precision_sum = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (relevance(i, order[k]) > 0.5) {
        hits += 1.0;
        precision_sum += hits / static_cast<double>(k + 1);
      }
    }
    if (hits > 0.0) {
      ap_sum += precision_sum / hits;
      ++counted;
    }
  }
  out.map = counted > 0 ? ap_sum / counted : 0.0;
  return out;
}

RankingMetrics evaluate(const SoftmaxModel& model, const Dataset& dataset) {
  dataset.validate();
  if (model.feature_dim() != dataset.feature_dim() ||
      model.label_count() != dataset.label_count()) {
    std::ostringstream os;
    os << "model is " << model.feature_dim() << "x" << model.label_count()
       << " (features x labels) but the dataset is " << dataset.feature_dim() << "x"
       << dataset.label_count();
    throw InvalidArgument(os.str());
  }
  Eigen::MatrixXd scores(dataset.size(), dataset.label_count());
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    scores.row(i) = softmax_forward(model, dataset.features.row(i).transpose()).transpose();
  }
  return ranking_metrics(scores, dataset.label_matrix());
}

namespace {

constexpr std::array<char, 8> kModelMagic = {'R', 'O', 'T', 'S', 'O', 'F', 'T', 'M'};
constexpr unsigned char kModelVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int b = 0; b < 8; ++b) bytes[static_cast<std::size_t>(b)] = static_cast<char>((v >> (8 * b)) & 0xff);
  os.write(bytes.data(), 8);
}

std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), 8);
  if (!is) throw IoError("model checkpoint is truncated");
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | bytes[static_cast<std::size_t>(b)];
  return v;
}

}  // namespace

void save_model(const std::filesystem::path& path, const SoftmaxModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kModelMagic.data(), kModelMagic.size());
  os.put(static_cast<char>(kModelVersion));
  put_u64(os, static_cast<std::uint64_t>(model.feature_dim()));
  put_u64(os, static_cast<std::uint64_t>(model.label_count()));
  for (Eigen::Index i = 0; i < model.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < model.weights.cols(); ++j) {
      put_u64(os, std::bit_cast<std::uint64_t>(model.weights(i, j)));
    }
  }
  if (!os) throw IoError("failed writing " + path.string());
}

SoftmaxModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model checkpoint " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kModelMagic) throw IoError(path.string() + " is not a model checkpoint");
  const int version = is.get();
  if (version != kModelVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t rows = get_u64(is);
  const std::uint64_t cols = get_u64(is);
  if (rows == 0 || cols == 0 || rows > (1u << 26) || cols > (1u << 26)) {
    throw IoError("checkpoint has invalid dimensions");
  }
  SoftmaxModel model{Eigen::MatrixXd(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols))};
  for (Eigen::Index i = 0; i < model.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < model.weights.cols(); ++j) {
      model.weights(i, j) = std::bit_cast<double>(get_u64(is));
    }
  }
  if (!model.weights.allFinite()) throw IoError("checkpoint has non-finite weights");
  return model;
}

}  // namespace rot
