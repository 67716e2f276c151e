#include "rot/data_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string_view>

#include "rot/error.hpp"

namespace rot {

namespace {

constexpr std::array<char, 8> kFeatureMagic = {'R', 'F', 'E', 'A', 'T', 'F', '3', '2'};
constexpr std::string_view kLabelHeader = "#labels";
constexpr std::string_view kGroupingHeader = "rot-grouping";

std::string located(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  return path.string() + ":" + std::to_string(line) + ": " + what;
}

std::string_view trim(std::string_view s) {
  const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
  while (!s.empty() && !not_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && !not_space(s.back())) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) parts.push_back(s.substr(start, i - start));
  }
  return parts;
}

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(path, mode);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

std::vector<std::string> words_of(const std::string& label) {
  std::vector<std::string> words;
  for (std::string_view w : split(label, '_')) {
    if (!w.empty()) words.emplace_back(w);
  }
  return words;
}

}  // namespace

Eigen::VectorXd Dataset::label_vector(Eigen::Index i) const {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(label_count());
  for (int l : labels[static_cast<std::size_t>(i)]) y(l) = 1.0;
  return y;
}

Eigen::MatrixXd Dataset::label_matrix() const {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(size(), label_count());
  for (Eigen::Index i = 0; i < size(); ++i) {
    for (int l : labels[static_cast<std::size_t>(i)]) y(i, l) = 1.0;
  }
  return y;
}

void Dataset::validate() const {
  if (size() == 0 || feature_dim() == 0 || label_count() == 0) {
    throw InvalidArgument("dataset must have N, M, L > 0");
  }
  if (static_cast<Eigen::Index>(labels.size()) != size()) {
    throw InvalidArgument("dataset has " + std::to_string(size()) + " feature rows but " +
                          std::to_string(labels.size()) + " label rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) throw InvalidArgument("instance " + std::to_string(i) + " has zero labels");
    for (int l : labels[i]) {
      if (l < 0 || l >= label_count()) {
        throw InvalidArgument("instance " + std::to_string(i) + " has label index " +
                              std::to_string(l) + " outside 0.." +
                              std::to_string(label_count() - 1));
      }
    }
  }
  if (!features.allFinite()) throw InvalidArgument("dataset features are not finite");
}

Eigen::MatrixXd load_embeddings(const std::filesystem::path& path,
                                const std::vector<std::string>& label_names) {
  if (label_names.empty()) throw InvalidArgument("no label names given");
  std::ifstream is = open_input(path);
  std::string line;
  if (!std::getline(is, line)) throw IoError(located(path, 1, "malformed header: file is empty"));
  const auto header = split_whitespace(line);
  long long vocab = 0;
  long long dim = 0;
  if (header.size() != 2 || !parse_int(header[0], vocab) || !parse_int(header[1], dim) ||
      vocab < 0 || dim <= 0) {
    throw IoError(located(path, 1, "malformed header, expected \"<vocab_count> <dim>\""));
  }

  std::set<std::string, std::less<>> wanted;
  for (const std::string& name : label_names) {
    wanted.insert(name);
    for (const std::string& w : words_of(name)) wanted.insert(w);
  }

  std::map<std::string, Eigen::VectorXd, std::less<>> found;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    const auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    const auto values = static_cast<long long>(fields.size()) - 1;
    if (values != dim) {
      throw IoError(located(path, line_no,
                            "expected " + std::to_string(dim) + " values after token, found " +
                                std::to_string(values)));
    }
    const std::string_view token = fields[0];
    if (wanted.find(token) == wanted.end()) continue;
    Eigen::VectorXd v(dim);
    for (long long k = 0; k < dim; ++k) {
      if (!parse_double(fields[static_cast<std::size_t>(k + 1)], v(k))) {
        throw IoError(located(path, line_no, "unparseable value '" +
                                                 std::string(fields[static_cast<std::size_t>(k + 1)]) + "'"));
      }
    }
    found.emplace(std::string(token), std::move(v));
  }

  Eigen::MatrixXd out(static_cast<Eigen::Index>(label_names.size()), dim);
  for (std::size_t p = 0; p < label_names.size(); ++p) {
    const std::string& name = label_names[p];
    Eigen::VectorXd v;
    if (auto it = found.find(name); it != found.end()) {
      v = it->second;
    } else {
      const std::vector<std::string> words = words_of(name);
      bool resolved = !words.empty();
      v = Eigen::VectorXd::Zero(dim);
      for (const std::string& w : words) {
        auto wit = found.find(w);
        if (wit == found.end()) {
          resolved = false;
          break;
        }
        v += wit->second;
      }
      if (!resolved) {
        throw IoError("no embedding for label '" + name + "' in " + path.string());
      }
      v /= static_cast<double>(words.size());
    }
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw IoError("embedding for label '" + name + "' has zero or non-finite norm");
    }
    out.row(static_cast<Eigen::Index>(p)) = (v / norm).transpose();
  }
  return out;
}

Eigen::MatrixXd load_features(const std::filesystem::path& path) {
  std::ifstream is = open_input(path, std::ios::in | std::ios::binary);
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (is && magic == kFeatureMagic) {
    std::array<unsigned char, 8> dims{};
    is.read(reinterpret_cast<char*>(dims.data()), dims.size());
    if (!is) throw IoError(path.string() + ": truncated binary feature header");
    auto u32 = [&](std::size_t off) {
      return static_cast<std::uint32_t>(dims[off]) | (static_cast<std::uint32_t>(dims[off + 1]) << 8) |
             (static_cast<std::uint32_t>(dims[off + 2]) << 16) |
             (static_cast<std::uint32_t>(dims[off + 3]) << 24);
    };
    const std::uint32_t n = u32(0);
    const std::uint32_t m = u32(4);
    if (n == 0 || m == 0) throw IoError(path.string() + ": binary features with zero rows or columns");
    Eigen::MatrixXd out(n, m);
    std::array<unsigned char, 4> buf{};
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint32_t j = 0; j < m; ++j) {
        is.read(reinterpret_cast<char*>(buf.data()), 4);
        if (!is) {
          throw IoError(path.string() + ": binary features truncated at row " + std::to_string(i));
        }
        const std::uint32_t bits = static_cast<std::uint32_t>(buf[0]) |
                                   (static_cast<std::uint32_t>(buf[1]) << 8) |
                                   (static_cast<std::uint32_t>(buf[2]) << 16) |
                                   (static_cast<std::uint32_t>(buf[3]) << 24);
        out(i, j) = static_cast<double>(std::bit_cast<float>(bits));
      }
    }
    return out;
  }

  is.clear();
  is.seekg(0);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    for (std::string_view cell : split(line, ',')) {
      double v = 0.0;
      if (!parse_double(cell, v)) {
        throw IoError(located(path, line_no, "unparseable value '" + std::string(trim(cell)) + "'"));
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError(located(path, line_no,
                            "row has " + std::to_string(row.size()) + " columns, expected " +
                                std::to_string(rows.front().size())));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path.string() + ": no feature rows");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& features_path,
                     const std::filesystem::path& labels_path) {
  Dataset data;
  data.features = load_features(features_path);
  const Eigen::Index n = data.features.rows();

  std::ifstream is = open_input(labels_path);
  std::vector<std::optional<std::vector<int>>> rows(static_cast<std::size_t>(n));
  std::optional<int> label_count;
  int max_label = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (trim(view).empty()) continue;
    if (view.starts_with(kLabelHeader)) {
      if (label_count) throw IoError(located(labels_path, line_no, "duplicate label header"));
      const std::size_t tab = view.find('\t');
      if (tab == std::string_view::npos) {
        throw IoError(located(labels_path, line_no, "label header needs \"#labels<TAB>names\""));
      }
      for (std::string_view name : split(view.substr(tab + 1), ',')) {
        name = trim(name);
        if (name.empty()) throw IoError(located(labels_path, line_no, "empty label name"));
        data.label_names.emplace_back(name);
      }
      label_count = static_cast<int>(data.label_names.size());
      continue;
    }
    const std::size_t tab = view.find('\t');
    const std::string_view index_part = view.substr(0, tab);
    long long instance = -1;
    if (!parse_int(index_part, instance)) {
      throw IoError(located(labels_path, line_no, "bad instance index '" + std::string(index_part) + "'"));
    }
    if (instance < 0 || instance >= n) {
      throw IoError(located(labels_path, line_no,
                            "instance index " + std::to_string(instance) +
                                " out of range for N = " + std::to_string(n) + " feature rows"));
    }
    auto& slot = rows[static_cast<std::size_t>(instance)];
    if (slot) throw IoError(located(labels_path, line_no, "duplicate instance " + std::to_string(instance)));
    const std::string_view list = tab == std::string_view::npos ? std::string_view{} : trim(view.substr(tab + 1));
    if (list.empty()) {
      throw IoError(located(labels_path, line_no,
                            "instance with zero labels (instance " + std::to_string(instance) + ")"));
    }
    std::vector<int> labels;
    for (std::string_view item : split(list, ',')) {
      int l = -1;
      if (!parse_int(item, l) || l < 0) {
        throw IoError(located(labels_path, line_no, "bad label index '" + std::string(trim(item)) + "'"));
      }
      if (label_count && l >= *label_count) {
        throw IoError(located(labels_path, line_no,
                              "label index " + std::to_string(l) + " out of range 0.." +
                                  std::to_string(*label_count - 1)));
      }
      labels.push_back(l);
      max_label = std::max(max_label, l);
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    slot = std::move(labels);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!rows[static_cast<std::size_t>(i)]) {
      throw IoError(labels_path.string() + ": no labels for instance " + std::to_string(i) +
                    " (features have N = " + std::to_string(n) + " rows)");
    }
    data.labels.push_back(std::move(*rows[static_cast<std::size_t>(i)]));
  }
  if (!label_count) {
    for (int l = 0; l <= max_label; ++l) data.label_names.push_back(std::to_string(l));
  }
  data.validate();
  return data;
}

void save_features_csv(const std::filesystem::path& path, const Eigen::MatrixXd& features) {
  std::ofstream os = open_output(path);
  os.precision(17);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      if (j > 0) os << ',';
      os << features(i, j);
    }
    os << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

void save_features_binary(const std::filesystem::path& path, const Eigen::MatrixXd& features) {
  std::ofstream os = open_output(path, std::ios::out | std::ios::binary);
  os.write(kFeatureMagic.data(), kFeatureMagic.size());
  auto put_u32 = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xff));
  };
  put_u32(static_cast<std::uint32_t>(features.rows()));
  put_u32(static_cast<std::uint32_t>(features.cols()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(features(i, j))));
    }
  }
  if (!os) throw IoError("failed writing " + path.string());
}

void save_labels(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream os = open_output(path);
  os << kLabelHeader << '\t';
  for (std::size_t l = 0; l < dataset.label_names.size(); ++l) {
    if (l > 0) os << ',';
    os << dataset.label_names[l];
  }
  os << '\n';
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
    os << i << '\t';
    for (std::size_t k = 0; k < dataset.labels[i].size(); ++k) {
      if (k > 0) os << ',';
      os << dataset.labels[i][k];
    }
    os << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

void save_embeddings(const std::filesystem::path& path, const std::vector<std::string>& tokens,
                     const Eigen::MatrixXd& vectors) {
  if (static_cast<Eigen::Index>(tokens.size()) != vectors.rows()) {
    throw InvalidArgument("token count does not match the number of vectors");
  }
  std::ofstream os = open_output(path);
  os.precision(17);
  os << vectors.rows() << ' ' << vectors.cols() << '\n';
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    os << tokens[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) os << ' ' << vectors(i, j);
    os << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

FeatureGrouping make_grouping(int d, int r, std::uint64_t seed) {
  if (d < 1) throw InvalidArgument("feature dimension must be positive");
  if (r < 1 || r > d) {
    throw InvalidArgument("group count r=" + std::to_string(r) + " must lie in [1, d=" +
                          std::to_string(d) + "]");
  }
  const int d1 = (d + r - 1) / r;
  std::vector<int> perm(static_cast<std::size_t>(d1 * r));
  std::iota(perm.begin(), perm.end(), 0);
  // Explicit Fisher-Yates so the permutation does not depend on the standard
  // library's distribution implementation.
  std::mt19937_64 rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  return FeatureGrouping(std::move(perm), d, r, seed);
}

void save_grouping(const std::filesystem::path& path, const FeatureGrouping& grouping) {
  std::ofstream os = open_output(path);
  os << kGroupingHeader << " d=" << grouping.dim() << " r=" << grouping.group_count()
     << " seed=" << grouping.seed() << '\n';
  for (int idx : grouping.permutation()) os << idx << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

FeatureGrouping load_grouping(const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  std::string line;
  if (!std::getline(is, line)) throw IoError(path.string() + ": empty grouping file");
  const auto fields = split_whitespace(line);
  int d = 0;
  int r = 0;
  std::uint64_t seed = 0;
  if (fields.size() != 4 || fields[0] != kGroupingHeader || !fields[1].starts_with("d=") ||
      !fields[2].starts_with("r=") || !fields[3].starts_with("seed=") ||
      !parse_int(fields[1].substr(2), d) || !parse_int(fields[2].substr(2), r) ||
      !parse_int(fields[3].substr(5), seed)) {
    throw IoError(located(path, 1, "malformed grouping header"));
  }
  std::vector<int> perm;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    int idx = 0;
    if (!parse_int(line, idx)) throw IoError(located(path, line_no, "bad permutation index"));
    perm.push_back(idx);
  }
  try {
    return FeatureGrouping(std::move(perm), d, r, seed);
  } catch (const InvalidArgument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace rot
