#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rot/measures.hpp"

namespace rot {

/// Instances with dense features and sparse binary labels.
struct Dataset {
  Eigen::MatrixXd features;               // N x M
  std::vector<std::vector<int>> labels;   // sorted label indices per instance
  std::vector<std::string> label_names;   // L entries

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index feature_dim() const { return features.cols(); }
  Eigen::Index label_count() const { return static_cast<Eigen::Index>(label_names.size()); }

  /// Dense 0/1 indicator vector of instance i.
  Eigen::VectorXd label_vector(Eigen::Index i) const;
  /// N x L dense 0/1 matrix.
  Eigen::MatrixXd label_matrix() const;

  /// Throws unless N, M, L > 0, every instance has a label, and all indices are in range.
  void validate() const;
};

/// Reads a word2vec-style text file ("<count> <dim>" header, then
/// "<token> v1 ... vdim" per line) and returns one unit row per label.
/// Labels missing from the file fall back to the renormalized mean of their
/// underscore-separated words.
Eigen::MatrixXd load_embeddings(const std::filesystem::path& path,
                                const std::vector<std::string>& label_names);

/// Features: dense CSV, or float32 binary with a 16-byte header
/// ("RFEATF32", uint32 N, uint32 M, little endian). Labels: one line per
/// instance, "<index>\t<i,j,...>", optionally preceded by a
/// "#labels\t<name,name,...>" header naming the L labels.
Dataset load_dataset(const std::filesystem::path& features_path,
                     const std::filesystem::path& labels_path);

Eigen::MatrixXd load_features(const std::filesystem::path& path);
void save_features_csv(const std::filesystem::path& path, const Eigen::MatrixXd& features);
void save_features_binary(const std::filesystem::path& path, const Eigen::MatrixXd& features);
void save_labels(const std::filesystem::path& path, const Dataset& dataset);
void save_embeddings(const std::filesystem::path& path, const std::vector<std::string>& tokens,
                     const Eigen::MatrixXd& vectors);

/// Random assignment of d features into r groups, seeded.
FeatureGrouping make_grouping(int d, int r, std::uint64_t seed);

/// Header "rot-grouping d=<d> r=<r> seed=<seed>", then one permuted index per line.
void save_grouping(const std::filesystem::path& path, const FeatureGrouping& grouping);
FeatureGrouping load_grouping(const std::filesystem::path& path);

}  // namespace rot
