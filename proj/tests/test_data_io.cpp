#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <unistd.h>

#include "oracles.hpp"
#include "rot/data_io.hpp"
#include "rot/error.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("rot_data_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::filesystem::path file(const std::string& name, const std::string& contents) const {
    const auto p = path_ / name;
    std::ofstream(p) << contents;
    return p;
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Expects an IoError whose message contains every fragment.
template <typename F>
void expect_io_error(F&& f, std::initializer_list<std::string> fragments) {
  try {
    f();
    FAIL() << "expected IoError";
  } catch (const rot::IoError& e) {
    const std::string msg = e.what();
    for (const auto& frag : fragments) {
      EXPECT_NE(msg.find(frag), std::string::npos) << "'" << frag << "' not in: " << msg;
    }
  }
}

}  // namespace

TEST(Embeddings, ExactTokensAreNormalized) {
  TempDir dir;
  const auto path = dir.file("e.txt", "3 2\ncat 3 4\ndog 0 2\nbird 1 1\n");
  const MatrixXd e = rot::load_embeddings(path, {"dog", "cat"});
  ASSERT_EQ(e.rows(), 2);
  EXPECT_NEAR(e(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(e(0, 1), 1.0, 1e-15);
  EXPECT_NEAR(e(1, 0), 0.6, 1e-15);
  EXPECT_NEAR(e(1, 1), 0.8, 1e-15);
}

TEST(Embeddings, UnderscoreFallbackAveragesWords) {
  TempDir dir;
  const auto path = dir.file("e.txt", "2 2\nPersian 1 0\ncat 0 1\n");
  const MatrixXd e = rot::load_embeddings(path, {"Persian_cat"});
  EXPECT_NEAR(e(0, 0), std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(e(0, 1), std::sqrt(0.5), 1e-15);
  expect_io_error([&] { rot::load_embeddings(path, {"Siamese_cat"}); }, {"Siamese_cat"});
  expect_io_error([&] { rot::load_embeddings(path, {"zebra"}); }, {"no embedding", "zebra"});
}

TEST(Embeddings, MalformedInput) {
  TempDir dir;
  const auto short_row = dir.file("a.txt", "2 3\ncat 1 2 3\ndog 1 2\n");
  expect_io_error([&] { rot::load_embeddings(short_row, {"cat"}); },
                  {":3", "expected 3 values after token, found 2"});
  const auto bad_header = dir.file("b.txt", "cat 1 2 3\n");
  expect_io_error([&] { rot::load_embeddings(bad_header, {"cat"}); }, {"malformed header"});
  const auto zero = dir.file("c.txt", "1 2\ncat 0 0\n");
  expect_io_error([&] { rot::load_embeddings(zero, {"cat"}); }, {"zero"});
  expect_io_error([&] { rot::load_embeddings(dir / "missing.txt", {"cat"}); }, {"cannot open"});
}

TEST(Embeddings, WriteThenRead) {
  TempDir dir;
  std::mt19937_64 rng(1);
  MatrixXd v = oracle::random_matrix(4, 6, rng);
  for (Eigen::Index i = 0; i < v.rows(); ++i) v.row(i).normalize();
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  rot::save_embeddings(dir / "e.txt", names, v);
  EXPECT_LT((rot::load_embeddings(dir / "e.txt", names) - v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dataset, SmallCsvExample) {
  TempDir dir;
  const auto f = dir.file("x.csv", "1,2,3\n4,5,6\n");
  const auto l = dir.file("y.txt", "0\t0,2\n1\t1\n");
  const auto data = rot::load_dataset(f, l);
  EXPECT_EQ(data.size(), 2);
  EXPECT_EQ(data.feature_dim(), 3);
  EXPECT_EQ(data.label_count(), 3);
  EXPECT_EQ(data.features(1, 2), 6.0);
  EXPECT_EQ(data.labels[0], (std::vector<int>{0, 2}));
  EXPECT_EQ(data.labels[1], (std::vector<int>{1}));
  EXPECT_EQ(data.label_vector(0), (VectorXd(3) << 1, 0, 1).finished());
}

TEST(Dataset, HeaderNamesLabels) {
  TempDir dir;
  const auto f = dir.file("x.csv", "1,2\n3,4\n");
  const auto l = dir.file("y.txt", "#labels\tcat,dog,bird\n1\t2\n0\t0\n");
  const auto data = rot::load_dataset(f, l);
  EXPECT_EQ(data.label_count(), 3);
  EXPECT_EQ(data.label_names[2], "bird");
  EXPECT_EQ(data.labels[0], (std::vector<int>{0}));
  EXPECT_EQ(data.labels[1], (std::vector<int>{2}));
}

TEST(Dataset, LabelErrors) {
  TempDir dir;
  const auto f = dir.file("x.csv", "1,2\n3,4\n");
  const auto out_of_range = dir.file("a.txt", "#labels\tcat,dog\n0\t0\n1\t2\n");
  expect_io_error([&] { rot::load_dataset(f, out_of_range); }, {":3", "label index 2 out of range"});
  const auto empty = dir.file("b.txt", "0\t0\n1\t\n");
  expect_io_error([&] { rot::load_dataset(f, empty); }, {"instance with zero labels"});
  const auto missing = dir.file("c.txt", "0\t0\n");
  expect_io_error([&] { rot::load_dataset(f, missing); }, {"instance 1"});
  const auto duplicate = dir.file("d.txt", "0\t0\n0\t1\n1\t1\n");
  expect_io_error([&] { rot::load_dataset(f, duplicate); }, {"duplicate instance 0"});
  const auto too_many = dir.file("e.txt", "0\t0\n1\t1\n2\t1\n");
  expect_io_error([&] { rot::load_dataset(f, too_many); }, {"out of range for N = 2"});
}

TEST(Features, CsvErrorsNameTheLine) {
  TempDir dir;
  expect_io_error([&] { rot::load_features(dir.file("a.csv", "1,2\n3,x\n")); }, {":2", "'x'"});
  expect_io_error([&] { rot::load_features(dir.file("b.csv", "1,2\n3\n")); }, {":2"});
  expect_io_error([&] { rot::load_features(dir.file("c.csv", "")); }, {"no feature rows"});
}

TEST(Features, BinaryAndCsvRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(2);
  const MatrixXd x = oracle::random_matrix(7, 5, rng);
  rot::save_features_csv(dir / "x.csv", x);
  EXPECT_EQ(rot::load_features(dir / "x.csv"), x);
  rot::save_features_binary(dir / "x.bin", x);
  EXPECT_EQ(std::filesystem::file_size(dir / "x.bin"), 16u + 7u * 5u * 4u);
  const MatrixXd back = rot::load_features(dir / "x.bin");
  EXPECT_EQ(back, x.cast<float>().cast<double>());

  std::filesystem::resize_file(dir / "x.bin", 30);
  expect_io_error([&] { rot::load_features(dir / "x.bin"); }, {"truncated"});
}

TEST(Dataset, LabelsRoundTrip) {
  TempDir dir;
  rot::Dataset data;
  data.features = MatrixXd::Ones(3, 2);
  data.labels = {{0, 1}, {2}, {1}};
  data.label_names = {"x", "y", "z"};
  rot::save_features_csv(dir / "f.csv", data.features);
  rot::save_labels(dir / "l.txt", data);
  const auto back = rot::load_dataset(dir / "f.csv", dir / "l.txt");
  EXPECT_EQ(back.labels, data.labels);
  EXPECT_EQ(back.label_names, data.label_names);
}

TEST(Grouping, Shapes) {
  const auto full = rot::make_grouping(6, 6, 1);
  EXPECT_EQ(full.group_size(), 1);
  EXPECT_EQ(full.pad(), 0);
  const auto padded = rot::make_grouping(5, 2, 1);
  EXPECT_EQ(padded.group_size(), 3);
  EXPECT_EQ(padded.pad(), 1);
  EXPECT_EQ(padded.padded_dim(), 6);
  const auto perm = padded.permutation();
  EXPECT_EQ(std::set<int>(perm.begin(), perm.end()), (std::set<int>{0, 1, 2, 3, 4, 5}));
}

TEST(Grouping, DeterministicPerSeed) {
  EXPECT_EQ(rot::make_grouping(50, 7, 9), rot::make_grouping(50, 7, 9));
  EXPECT_NE(rot::make_grouping(50, 7, 9).permutation(), rot::make_grouping(50, 7, 10).permutation());
}

TEST(Grouping, RejectsBadCounts) {
  try {
    rot::make_grouping(5, 6, 0);
    FAIL() << "expected an error";
  } catch (const rot::InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("r=6"), std::string::npos);
  }
  EXPECT_THROW(rot::make_grouping(5, 0, 0), rot::InvalidArgument);
}

TEST(Grouping, SaveLoadRoundTrip) {
  TempDir dir;
  const auto g = rot::make_grouping(23, 4, 77);
  rot::save_grouping(dir / "g.txt", g);
  EXPECT_EQ(rot::load_grouping(dir / "g.txt"), g);
  expect_io_error([&] { rot::load_grouping(dir.file("bad.txt", "not a grouping\n")); },
                  {"malformed grouping header"});
  expect_io_error(
      [&] { rot::load_grouping(dir.file("dup.txt", "rot-grouping d=3 r=3 seed=0\n0\n0\n1\n")); },
      {"dup.txt"});
}
