#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "rot/classifier.hpp"
#include "rot/error.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd unit_rows(MatrixXd m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
  return m;
}

rot::Dataset toy_dataset(int n, int features, int labels, std::mt19937_64& rng) {
  rot::Dataset data;
  data.features = oracle::random_matrix(n, features, rng);
  std::uniform_int_distribution<int> pick(0, labels - 1);
  for (int i = 0; i < n; ++i) data.labels.push_back({pick(rng)});
  for (int l = 0; l < labels; ++l) data.label_names.push_back("l" + std::to_string(l));
  return data;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rot_classifier_" + name);
}

double loss_at(const MatrixXd& w, const VectorXd& x, const VectorXd& y, const rot::LabelSpace& space,
               const rot::TrainConfig& cfg) {
  const VectorXd h = rot::softmax_forward(rot::SoftmaxModel{w}, x);
  return rot::rot_loss(h, y, space, cfg.loss, cfg.loss_kind).value;
}

}  // namespace

TEST(Softmax, Examples) {
  const auto zero = rot::SoftmaxModel::zeros(3, 4);
  EXPECT_LT((rot::softmax_forward(zero, VectorXd::Ones(3)).array() - 0.25).abs().maxCoeff(), 1e-15);

  rot::SoftmaxModel m{MatrixXd::Zero(1, 2)};
  m.weights(0, 0) = std::log(2.0);
  const VectorXd h = rot::softmax_forward(m, VectorXd::Ones(1));
  EXPECT_NEAR(h(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(h(1), 1.0 / 3.0, 1e-15);

  // A constant feature adds the same logit to every label.
  std::mt19937_64 rng(1);
  rot::SoftmaxModel base{oracle::random_matrix(3, 4, rng)};
  rot::SoftmaxModel shifted = base;
  shifted.weights.row(2).array() += 500.0;
  const VectorXd x = (VectorXd(3) << 0.3, -1.0, 1.0).finished();
  EXPECT_LT((rot::softmax_forward(base, x) - rot::softmax_forward(shifted, x)).cwiseAbs().maxCoeff(),
            1e-12);
  EXPECT_THROW(rot::softmax_forward(base, VectorXd::Ones(2)), rot::InvalidArgument);
}

TEST(Softmax, StaysOnSimplexForExtremeInputs) {
  std::mt19937_64 rng(2);
  const rot::SoftmaxModel m{1e3 * oracle::random_matrix(5, 6, rng)};
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd h = rot::softmax_forward(m, 10 * oracle::random_matrix(5, 1, rng));
    EXPECT_TRUE(h.allFinite());
    EXPECT_GE(h.minCoeff(), 0.0);
    EXPECT_NEAR(h.sum(), 1.0, 1e-12);
  }
}

TEST(SampleGradient, ChainRuleMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const rot::LabelSpace space(unit_rows(oracle::random_matrix(3, 4, rng)));
  const VectorXd x = oracle::random_matrix(4, 1, rng);
  const VectorXd y = rot::smooth_target(VectorXd::Unit(3, 1), 0.05);
  const MatrixXd w = 0.5 * oracle::random_matrix(4, 3, rng);
  for (rot::LossKind kind : {rot::LossKind::w22, rot::LossKind::rot}) {
    rot::TrainConfig cfg;
    cfg.loss_kind = kind;
    cfg.loss.lambda_gamma = 0.5;
    cfg.loss.fw_iters = 3000;
    cfg.loss.sinkhorn.lambda_beta = 0.5;
    cfg.loss.sinkhorn.iterations = 2000;
    cfg.loss.sinkhorn.tol = 1e-14;
    const auto sg = rot::sample_gradient(rot::SoftmaxModel{w}, x, y, space, cfg);
    MatrixXd numeric(4, 3);
    const double step = 1e-5;
    for (Eigen::Index a = 0; a < 4; ++a) {
      for (Eigen::Index b = 0; b < 3; ++b) {
        MatrixXd wp = w;
        MatrixXd wm = w;
        wp(a, b) += step;
        wm(a, b) -= step;
        numeric(a, b) = (loss_at(wp, x, y, space, cfg) - loss_at(wm, x, y, space, cfg)) / (2 * step);
      }
    }
    EXPECT_LT((numeric - sg.weights_gradient).norm(), 1e-3 * sg.weights_gradient.norm())
        << (kind == rot::LossKind::w22 ? "w22" : "rot");
  }
}

TEST(SampleGradient, SmallStepDecreasesW22Loss) {
  std::mt19937_64 rng(4);
  const rot::LabelSpace space(unit_rows(oracle::random_matrix(3, 3, rng)));
  rot::TrainConfig cfg;
  cfg.loss_kind = rot::LossKind::w22;
  // Gradient is exact at the converged plan with matching entropy weights.
  cfg.loss.lambda_gamma = 0.1;
  cfg.loss.fw_iters = 200;
  cfg.loss.sinkhorn.lambda_beta = 0.1;
  cfg.loss.sinkhorn.iterations = 2000;
  cfg.loss.sinkhorn.tol = 1e-14;
  for (int trial = 0; trial < 10; ++trial) {
    const VectorXd x = oracle::random_matrix(4, 1, rng);
    const VectorXd y = rot::smooth_target(VectorXd::Unit(3, trial % 3), 1e-3);
    const MatrixXd w = 0.3 * oracle::random_matrix(4, 3, rng);
    const auto sg = rot::sample_gradient(rot::SoftmaxModel{w}, x, y, space, cfg);
    const MatrixXd w_next = w - 1e-4 * sg.weights_gradient;
    EXPECT_LT(loss_at(w_next, x, y, space, cfg), sg.loss);
  }
}

TEST(SgdTrain, ZeroLearningRateKeepsWeights) {
  std::mt19937_64 rng(5);
  const auto data = toy_dataset(20, 4, 3, rng);
  const rot::LabelSpace space(unit_rows(oracle::random_matrix(3, 3, rng)));
  rot::TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  const rot::SoftmaxModel start{oracle::random_matrix(4, 3, rng)};
  const auto res = rot::sgd_train(data, cfg, space, &start);
  EXPECT_EQ(res.model.weights, start.weights);
  ASSERT_EQ(res.epochs.size(), 3u);
  for (const auto& e : res.epochs) EXPECT_TRUE(std::isfinite(e.mean_loss));
}

TEST(SgdTrain, SingleSampleDescent) {
  std::mt19937_64 rng(6);
  rot::Dataset data;
  data.features = (MatrixXd(1, 4) << 1.0, -0.5, 0.3, 2.0).finished();
  data.labels = {{2}};
  data.label_names = {"a", "b", "c"};
  const rot::LabelSpace space(unit_rows(oracle::random_matrix(3, 3, rng)));
  rot::TrainConfig cfg;
  cfg.loss_kind = rot::LossKind::w22;
  cfg.learning_rate = 0.01;
  cfg.epochs = 30;
  const auto res = rot::sgd_train(data, cfg, space);
  for (std::size_t e = 3; e < res.epochs.size(); ++e) {
    EXPECT_LE(res.epochs[e].mean_loss, res.epochs[e - 1].mean_loss + 1e-12) << "epoch " << e + 1;
  }
  EXPECT_LT(res.epochs.back().mean_loss, res.epochs.front().mean_loss);
}

TEST(SgdTrain, DeterministicGivenSeed) {
  std::mt19937_64 rng(7);
  const auto data = toy_dataset(30, 5, 4, rng);
  const rot::LabelSpace space(unit_rows(oracle::random_matrix(4, 3, rng)));
  rot::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 42;
  EXPECT_EQ(rot::sgd_train(data, cfg, space).model.weights,
            rot::sgd_train(data, cfg, space).model.weights);
}

TEST(SgdTrain, DivergenceAborts) {
  std::mt19937_64 rng(8);
  const auto data = toy_dataset(20, 4, 3, rng);
  const rot::LabelSpace space(unit_rows(oracle::random_matrix(3, 3, rng)));
  rot::TrainConfig cfg;
  cfg.learning_rate = 1e308;
  cfg.epochs = 5;
  try {
    rot::sgd_train(data, cfg, space);
    FAIL() << "expected divergence";
  } catch (const rot::DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
  }
}

TEST(SgdTrain, RejectsMismatchedLabelSpace) {
  std::mt19937_64 rng(9);
  const auto data = toy_dataset(5, 4, 3, rng);
  const rot::LabelSpace space(unit_rows(oracle::random_matrix(4, 3, rng)));
  EXPECT_THROW(rot::sgd_train(data, rot::TrainConfig{}, space), rot::InvalidArgument);
}

TEST(RankingMetrics, PerfectAndInverted) {
  MatrixXd rel(3, 4);
  rel << 1, 0, 0, 1,
         0, 1, 0, 0,
         0, 0, 1, 1;
  const auto perfect = rot::ranking_metrics(rel, rel);
  EXPECT_DOUBLE_EQ(perfect.auc, 1.0);
  EXPECT_DOUBLE_EQ(perfect.map, 1.0);
  const auto inverted = rot::ranking_metrics(MatrixXd::Ones(3, 4) - rel, rel);
  EXPECT_DOUBLE_EQ(inverted.auc, 0.0);
}

TEST(RankingMetrics, AucMatchesPairwiseCountWithTies) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> coarse(0, 5);
  std::bernoulli_distribution coin(0.3);
  MatrixXd scores(40, 5);
  MatrixXd rel(40, 5);
  std::vector<double> flat_scores;
  std::vector<int> flat_labels;
  for (Eigen::Index j = 0; j < 5; ++j) {
    for (Eigen::Index i = 0; i < 40; ++i) {
      scores(i, j) = coarse(rng);
      rel(i, j) = coin(rng) ? 1.0 : 0.0;
      flat_scores.push_back(scores(i, j));
      flat_labels.push_back(static_cast<int>(rel(i, j)));
    }
  }
  EXPECT_NEAR(rot::ranking_metrics(scores, rel).auc,
              oracle::pairwise_auc(flat_scores, flat_labels), 1e-12);
}

TEST(RankingMetrics, AveragePrecisionByHand) {
  // Ranking b, a, c, d with relevant {a, d}: precisions 1/2 and 2/4.
  MatrixXd scores(1, 4);
  scores << 0.8, 0.9, 0.5, 0.1;
  MatrixXd rel(1, 4);
  rel << 1, 0, 0, 1;
  EXPECT_NEAR(rot::ranking_metrics(scores, rel).map, 0.5 * (0.5 + 0.5), 1e-15);
}

TEST(RankingMetrics, RandomScoresGiveHalf) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd scores(10000, 1);
  MatrixXd rel(10000, 1);
  for (int i = 0; i < 10000; ++i) {
    scores(i, 0) = u(rng);
    rel(i, 0) = i % 2;
  }
  EXPECT_NEAR(rot::ranking_metrics(scores, rel).auc, 0.5, 0.02);
}

TEST(RankingMetrics, SingleClassIsAnError) {
  try {
    rot::ranking_metrics(MatrixXd::Ones(2, 2), MatrixXd::Ones(2, 2));
    FAIL() << "expected an error";
  } catch (const rot::InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("AUC undefined"), std::string::npos);
  }
}

TEST(Evaluate, DimensionMismatch) {
  std::mt19937_64 rng(12);
  const auto data = toy_dataset(10, 4, 3, rng);
  try {
    rot::evaluate(rot::SoftmaxModel::zeros(5, 3), data);
    FAIL() << "expected an error";
  } catch (const rot::InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("5x3"), std::string::npos);
  }
}

TEST(Checkpoint, RoundTripAndCorruption) {
  std::mt19937_64 rng(13);
  const rot::SoftmaxModel m{oracle::random_matrix(6, 4, rng)};
  const auto path = temp_path("model.bin");
  rot::save_model(path, m);
  EXPECT_EQ(std::filesystem::file_size(path), 8u + 1u + 16u + 6u * 4u * 8u);
  EXPECT_EQ(rot::load_model(path).weights, m.weights);

  {
    std::ifstream is(path, std::ios::binary);
    char magic[8];
    is.read(magic, 8);
    EXPECT_EQ(std::string(magic, 8), "ROTSOFTM");
    EXPECT_EQ(is.get(), 1);
  }

  std::filesystem::resize_file(path, 40);
  EXPECT_THROW(rot::load_model(path), rot::IoError);
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTAMODELFILE";
  }
  EXPECT_THROW(rot::load_model(path), rot::IoError);
  EXPECT_THROW(rot::load_model(temp_path("missing.bin")), rot::IoError);
  std::filesystem::remove(path);
}
