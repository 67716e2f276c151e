#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rot/classifier.hpp"
#include "rot/data_io.hpp"
#include "rot/error.hpp"
#include "rot/frank_wolfe.hpp"
#include "rot/rot_loss.hpp"

namespace rot::cli {

namespace {

using nlohmann::json;

// Flags shared by every subcommand that builds a metric.
struct SolverFlags {
  std::string family = "pnorm";
  int k = 1;
  double lambda_m = 1.0;
  int r = 0;  // 0: no grouping
  std::uint64_t seed = 0;
  double lambda_beta = 0.2;
  int sinkhorn_iters = 10;
};

void add_solver_flags(CLI::App* cmd, SolverFlags& f) {
  cmd->add_option("--family", f.family, "Metric family")
      ->check(CLI::IsMember({"pnorm", "kl", "ds", "w22"}))
      ->capture_default_str();
  cmd->add_option("--k", f.k, "p-norm order, p = 2k / (2k - 1)")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  cmd->add_option("--lambda-m", f.lambda_m, "KL / DS regularization strength")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--r", f.r, "Number of feature groups (0 disables grouping)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--seed", f.seed, "Seed for grouping and shuffling")->capture_default_str();
  cmd->add_option("--lambda-beta", f.lambda_beta, "Entropic regularization of the LMO")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--sinkhorn-iters", f.sinkhorn_iters, "Sinkhorn iterations per LMO")
      ->check(CLI::Range(1, 1000000))
      ->capture_default_str();
}

MetricSolverConfig metric_config(const SolverFlags& f, bool strict) {
  if (f.family == "kl") return KLConfig{std::nullopt, f.lambda_m};
  if (f.family == "ds") {
    DSConfig ds;
    ds.lambda_m = f.lambda_m;
    ds.strict = strict;
    return ds;
  }
  return PNormConfig{f.k};
}

std::optional<FeatureGrouping> grouping_for(const SolverFlags& f, Eigen::Index dim) {
  if (f.r == 0) return std::nullopt;
  return make_grouping(static_cast<int>(dim), f.r, f.seed);
}

std::vector<std::string> split_names(const std::string& list) {
  std::vector<std::string> names;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) names.push_back(item);
  }
  return names;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << j.dump(2) << '\n';
  if (!os) throw IoError("failed writing " + path);
}

// ---------------------------------------------------------------- distance

struct DistanceFlags {
  SolverFlags solver;
  std::string src;
  std::string tgt;
  int fw_iters = 200;
  double gap_tol = 1e-6;
  bool json = false;
};

int cmd_distance(const DistanceFlags& f, std::ostream& out, std::ostream& err) {
  const DiscreteMeasure src = uniform_measure(load_features(f.src));
  const DiscreteMeasure tgt = uniform_measure(load_features(f.tgt));
  if (src.dim() != tgt.dim()) {
    throw InvalidArgument("source points have dimension " + std::to_string(src.dim()) +
                          " but target points have " + std::to_string(tgt.dim()));
  }
  SinkhornConfig sinkhorn;
  sinkhorn.lambda_beta = f.solver.lambda_beta;
  sinkhorn.iterations = f.solver.sinkhorn_iters;
  sinkhorn.tol = 1e-10;

  double value = 0.0;
  double gap = 0.0;
  int iterations = 0;
  std::optional<std::string> warning;
  if (f.solver.family == "w22") {
    value = w22_distance(src, tgt, sinkhorn);
  } else {
    FWConfig cfg;
    cfg.max_iter = f.fw_iters;
    cfg.gap_tol = f.gap_tol;
    cfg.sinkhorn = sinkhorn;
    cfg.metric = metric_config(f.solver, false);
    cfg.grouping = grouping_for(f.solver, src.dim());
    const RotResult res = rot_distance(src, tgt, cfg);
    value = res.value;
    gap = res.gap_history.empty() ? 0.0 : res.gap_history.back();
    iterations = res.iterations_used;
    if (!res.metric_converged) {
      std::ostringstream os;
      os << "metric scaling did not converge (residual " << res.metric.residual << ")";
      warning = os.str();
    }
  }

  if (f.json) {
    json j = {{"value", value}, {"gap", gap}, {"iterations", iterations},
              {"family", f.solver.family}};
    if (warning) j["warning"] = *warning;
    out << j.dump() << '\n';
  } else {
    out << std::setprecision(10) << "value " << value << '\n'
        << "iterations " << iterations << '\n'
        << "gap " << gap << '\n';
    if (warning) out << "warning " << *warning << '\n';
  }
  if (warning) {
    err << "warning: " << *warning << '\n';
    return kNotConverged;
  }
  return kOk;
}

// ---------------------------------------------------------------- contour

struct LossFlags {
  double lambda_gamma = 0.02;
  int fw_iters = 1;
  double smoothing = 1e-3;
  std::string gradient = "lmo";
};

void add_loss_flags(CLI::App* cmd, LossFlags& f) {
  cmd->add_option("--lambda-gamma", f.lambda_gamma, "Entropic regularization of the loss")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--fw-iters", f.fw_iters, "Frank-Wolfe iterations per loss evaluation")
      ->check(CLI::Range(1, 100000))
      ->capture_default_str();
  cmd->add_option("--smoothing", f.smoothing, "Target smoothing alpha in [0, 1)")
      ->check(CLI::Range(0.0, 0.999))
      ->capture_default_str();
  cmd->add_option("--gradient", f.gradient,
                  "lmo: last LMO subproblem; solution: returned plan with lambda-gamma")
      ->check(CLI::IsMember({"lmo", "solution"}))
      ->capture_default_str();
}

RotLossConfig loss_config(const SolverFlags& s, const LossFlags& l) {
  RotLossConfig cfg;
  cfg.metric = metric_config(s, true);
  cfg.lambda_gamma = l.lambda_gamma;
  cfg.fw_iters = l.fw_iters;
  cfg.sinkhorn.lambda_beta = s.lambda_beta;
  cfg.sinkhorn.iterations = s.sinkhorn_iters;
  cfg.target_smoothing_alpha = l.smoothing;
  cfg.gradient = l.gradient == "solution" ? GradientSource::solution : GradientSource::lmo;
  return cfg;
}

struct ContourFlags {
  SolverFlags solver;
  LossFlags loss;
  std::string labels;
  std::string embeddings;
  int grid_n = 101;
  std::string out;
};

int cmd_contour(const ContourFlags& f, std::ostream& out) {
  const std::vector<std::string> names = split_names(f.labels);
  if (names.size() != 3) {
    throw InvalidArgument("--labels needs exactly three comma-separated names, got " +
                          std::to_string(names.size()));
  }
  const Eigen::MatrixXd emb = load_embeddings(f.embeddings, names);
  const LabelSpace space(emb, grouping_for(f.solver, emb.cols()));
  const RotLossConfig cfg = loss_config(f.solver, f.loss);
  const LossKind kind = f.solver.family == "w22" ? LossKind::w22 : LossKind::rot;
  const Eigen::VectorXd target = smooth_target(Eigen::Vector3d(0.0, 0.0, 1.0), cfg.target_smoothing_alpha);

  struct Row {
    double x, y, loss;
  };
  std::vector<Row> rows;
  const int steps = f.grid_n - 1;
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; i + j <= steps; ++j) {
      const double x = static_cast<double>(i) / steps;
      const double y = static_cast<double>(j) / steps;
      const Eigen::Vector3d h(x, y, static_cast<double>(steps - i - j) / steps);
      rows.push_back({x, y, rot_loss(h, target, space, cfg, kind).value});
    }
  }
  double top = rows.front().loss;
  for (const Row& r : rows) top = std::max(top, r.loss);
  if (!(top > 0.0)) throw NumericalError("contour grid has no positive loss to normalize by");

  std::ofstream os(f.out);
  if (!os) throw IoError("cannot open " + f.out + " for writing");
  os << "x,y,loss\n" << std::setprecision(12);
  for (const Row& r : rows) os << r.x << ',' << r.y << ',' << r.loss / top << '\n';
  if (!os) throw IoError("failed writing " + f.out);
  out << "wrote " << rows.size() << " grid points to " << f.out << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train / eval

struct TrainFlags {
  SolverFlags solver;
  LossFlags loss;
  std::string features;
  std::string labels;
  std::string embeddings;
  double lr = 0.01;
  int epochs = 50;
  double weight_decay = 0.0005;
  std::string model_out;
  std::string grouping_out;
  std::string grouping_in;
  std::string metrics_json;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
  const Dataset data = load_dataset(f.features, f.labels);
  const Eigen::MatrixXd emb = load_embeddings(f.embeddings, data.label_names);

  std::optional<FeatureGrouping> grouping;
  if (!f.grouping_in.empty()) {
    if (f.solver.r != 0) throw InvalidArgument("--r and --grouping-in are mutually exclusive");
    grouping = load_grouping(f.grouping_in);
  } else {
    grouping = grouping_for(f.solver, emb.cols());
  }
  const LabelSpace space(emb, grouping);

  TrainConfig cfg;
  cfg.learning_rate = f.lr;
  cfg.epochs = f.epochs;
  cfg.weight_decay = f.weight_decay;
  cfg.seed = f.solver.seed;
  cfg.loss = loss_config(f.solver, f.loss);
  cfg.loss_kind = f.solver.family == "w22" ? LossKind::w22 : LossKind::rot;

  out << std::setprecision(6);
  const TrainResult result = sgd_train(data, cfg, space, nullptr, [&](const EpochStats& s) {
    out << "epoch " << s.epoch << " loss " << s.mean_loss << " seconds " << s.seconds << '\n';
  });
  save_model(f.model_out, result.model);
  if (grouping && !f.grouping_out.empty()) save_grouping(f.grouping_out, *grouping);

  if (!f.metrics_json.empty()) {
    json epochs = json::array();
    for (const EpochStats& s : result.epochs) {
      epochs.push_back({{"epoch", s.epoch}, {"loss", s.mean_loss}, {"seconds", s.seconds}});
    }
    const RankingMetrics train_metrics = evaluate(result.model, data);
    write_json(f.metrics_json, {{"epochs", epochs},
                                {"train_auc", train_metrics.auc},
                                {"train_map", train_metrics.map},
                                {"family", f.solver.family}});
  }
  return kOk;
}

struct EvalFlags {
  std::string features;
  std::string labels;
  std::string model_in;
  std::string metrics_json;
};

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  const Dataset data = load_dataset(f.features, f.labels);
  const SoftmaxModel model = load_model(f.model_in);
  const RankingMetrics m = evaluate(model, data);
  out << std::setprecision(6) << "auc " << m.auc << '\n' << "map " << m.map << '\n';
  if (!f.metrics_json.empty()) {
    write_json(f.metrics_json, {{"auc", m.auc}, {"map", m.map}, {"instances", data.size()}});
  }
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust optimal transport distances and losses", "rot"};
  app.require_subcommand(1);

  DistanceFlags distance;
  distance.solver.lambda_beta = 0.02;
  distance.solver.sinkhorn_iters = 1000;
  CLI::App* dist_cmd = app.add_subcommand("distance", "Robust OT distance between two point sets");
  dist_cmd->add_option("--src", distance.src, "Source points (feature file)")
      ->required()
      ->check(CLI::ExistingFile);
  dist_cmd->add_option("--tgt", distance.tgt, "Target points (feature file)")
      ->required()
      ->check(CLI::ExistingFile);
  add_solver_flags(dist_cmd, distance.solver);
  dist_cmd->add_option("--fw-iters", distance.fw_iters, "Maximum Frank-Wolfe iterations")
      ->check(CLI::Range(1, 1000000))
      ->capture_default_str();
  dist_cmd->add_option("--gap-tol", distance.gap_tol, "Stop once the FW gap is this small")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  dist_cmd->add_flag("--json", distance.json, "Single-line JSON report");

  ContourFlags contour;
  CLI::App* contour_cmd = app.add_subcommand("contour", "Loss over the 3-label simplex");
  contour_cmd->add_option("--labels", contour.labels, "A,B,C; C is the true label")->required();
  contour_cmd->add_option("--embeddings", contour.embeddings, "Embedding text file")
      ->required()
      ->check(CLI::ExistingFile);
  contour_cmd->add_option("--grid-n", contour.grid_n, "Grid points per axis")
      ->check(CLI::Range(2, 100000))
      ->capture_default_str();
  contour_cmd->add_option("--out", contour.out, "Output CSV")->required();
  add_solver_flags(contour_cmd, contour.solver);
  add_loss_flags(contour_cmd, contour.loss);

  TrainFlags train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a softmax model with the ROT loss");
  train_cmd->add_option("--features", train.features)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--labels", train.labels)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--embeddings", train.embeddings)->required()->check(CLI::ExistingFile);
  add_solver_flags(train_cmd, train.solver);
  add_loss_flags(train_cmd, train.loss);
  train_cmd->add_option("--lr", train.lr, "Learning rate")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd->add_option("--epochs", train.epochs)->check(CLI::Range(1, 1000000))->capture_default_str();
  train_cmd->add_option("--weight-decay", train.weight_decay)
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd->add_option("--model-out", train.model_out, "Checkpoint path")->required();
  train_cmd->add_option("--grouping-out", train.grouping_out, "Where to write the feature grouping");
  train_cmd->add_option("--grouping-in", train.grouping_in, "Reuse a saved feature grouping")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--metrics-json", train.metrics_json, "Per-epoch statistics as JSON");

  EvalFlags eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "AUC and mAP of a trained model");
  eval_cmd->add_option("--features", eval.features)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--labels", eval.labels)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--model-in", eval.model_in)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--metrics-json", eval.metrics_json);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageOrIo;
  }

  try {
    if (*dist_cmd) return cmd_distance(distance, out, err);
    if (*contour_cmd) return cmd_contour(contour, out);
    if (*train_cmd) return cmd_train(train, out);
    return cmd_eval(eval, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kNotConverged;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kNotConverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageOrIo;
  }
}

}  // namespace rot::cli
