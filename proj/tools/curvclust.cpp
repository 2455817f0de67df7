// Command-line driver: ricci | train | eval.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 input error, 3 divergence,
// 4 checkpoint error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "curvclust/config.hpp"
#include "curvclust/errors.hpp"
#include "curvclust/graph.hpp"
#include "curvclust/ricci.hpp"
#include "curvclust/trainer.hpp"

namespace fs = std::filesystem;
using namespace curvclust;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kInput = 2, kDiverged = 3, kCheckpoint = 4 };

struct GraphArgs {
  std::string edges;
  std::string features;
  std::string labels;
  bool row_normalize = false;
};

void add_graph_flags(CLI::App* cmd, GraphArgs& g) {
  cmd->add_option("--edges", g.edges, "edge list (src<TAB>dst per line)");
  cmd->add_option("--features", g.features, "feature CSV, one row per node");
  cmd->add_option("--labels", g.labels, "label file, one class id per line");
}

// Flags take precedence over config entries.
Graph load_from(const GraphArgs& args, const TrainConfig* cfg) {
  auto pick = [](const std::string& flag, const std::optional<fs::path>& fallback) -> std::optional<fs::path> {
    if (!flag.empty()) return fs::path(flag);
    return fallback;
  };
  auto edges = pick(args.edges, cfg ? cfg->edges : std::nullopt);
  auto features = pick(args.features, cfg ? cfg->features : std::nullopt);
  auto labels = pick(args.labels, cfg ? cfg->labels : std::nullopt);
  if (!edges || !features) throw ValidationError("both --edges and --features are required");
  LoadOptions opt;
  opt.row_normalize = args.row_normalize || (cfg && cfg->row_normalize);
  return load_graph(*edges, *features, labels, opt);
}

void print_summary(const Scores& s) {
  if (s.acc) {
    std::cout << "ACC=" << format_real(*s.acc) << ",NMI=" << format_real(*s.nmi) << ",ARI=" << csv_value(s.ari)
              << '\n';
  }
  std::cout << "density=" << (s.density ? format_real(*s.density) : "undefined");
  if (s.entropy) std::cout << ",entropy=" << format_real(*s.entropy);
  std::cout << '\n';
}

int cmd_ricci(const GraphArgs& ga, double lambda, const std::string& out_dir) {
  Graph g = load_from(ga, nullptr);
  fs::create_directories(out_dir);
  RicciTable t = compute_ricci_table(g, lambda);
  ricci_cache::save(t, fs::path(out_dir) / "ricci.bin");
  write_ricci_csv(g, t, fs::path(out_dir) / "ricci.csv", fs::path(out_dir) / "ricci_nodes.csv");
  std::cout << "edges=" << g.num_edges();
  if (!t.edge_ricci.empty()) {
    auto [lo, hi] = std::minmax_element(t.edge_ricci.begin(), t.edge_ricci.end());
    std::cout << ",mean=" << format_real(t.mean_edge()) << ",min=" << format_real(*lo) << ",max=" << format_real(*hi);
  }
  std::cout << '\n';
  return kOk;
}

int cmd_train(const GraphArgs& ga, const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<double> lambda, const std::string& out_dir, std::string checkpoint_path) {
  TrainConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (lambda) cfg.lambda = *lambda;
  cfg.validate();
  Graph g = load_from(ga, &cfg);
  fs::create_directories(out_dir);
  if (checkpoint_path.empty()) checkpoint_path = (fs::path(out_dir) / "checkpoint.bin").string();

  RicciTable ricci = ricci_cache::load_or_compute(g, cfg.lambda, fs::path(out_dir) / "ricci.bin");
  Model model = initialize(cfg, g);
  TrainResult res = train(std::move(model), g, ricci);

  std::ofstream metrics(fs::path(out_dir) / "metrics.csv");
  std::ofstream curves(fs::path(out_dir) / "curves.csv");
  if (!metrics || !curves) throw IoError("cannot write CSV output in " + out_dir);
  write_metrics_csv(res.log, metrics);
  write_curves_csv(res.log, curves);
  checkpoint::save(res.model, checkpoint_path);

  if (res.diverged) {
    std::cerr << "error: training diverged (" << res.failure << "); last finite parameters saved to "
              << checkpoint_path << '\n';
    return kDiverged;
  }
  if (res.spherical_overflows > 0) std::cerr << "note: " << res.spherical_overflows << " spherical overflows\n";
  if (res.degenerate_aggregates > 0) {
    std::cerr << "note: " << res.degenerate_aggregates << " degenerate aggregates fell back to self\n";
  }
  print_summary(res.log.back().scores);
  return kOk;
}

int cmd_eval(const GraphArgs& ga, const std::string& config_path, const std::string& checkpoint_path) {
  TrainConfig cfg = load_config(config_path);
  Graph g = load_from(ga, &cfg);
  Model model = initialize(cfg, g);
  checkpoint::load(model, checkpoint_path);
  auto labels = to_labels(soft_assignment(model, g));
  print_summary(score(g, labels));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curvature-aware attributed graph clustering"};
  app.require_subcommand(1);

  GraphArgs ga;
  std::string config;
  std::string out = ".";
  std::string ckpt;
  double lambda = 0.5;
  std::uint64_t seed = 0;

  auto* ricci = app.add_subcommand("ricci", "compute Ollivier-Ricci curvature of every edge");
  add_graph_flags(ricci, ga);
  ricci->add_option("--lambda", lambda, "mass kept on the node itself")->check(CLI::Range(0.0, 1.0));
  ricci->add_option("--out", out, "output directory");

  auto* train_cmd = app.add_subcommand("train", "train encoder and centroids");
  add_graph_flags(train_cmd, ga);
  train_cmd->add_option("--config", config, "key=value config file")->required();
  auto* seed_opt = train_cmd->add_option("--seed", seed, "overrides the config seed");
  auto* lambda_opt = train_cmd->add_option("--lambda", lambda, "overrides the config lambda");
  train_cmd->add_option("--out", out, "output directory");
  train_cmd->add_option("--checkpoint", ckpt, "checkpoint path (default <out>/checkpoint.bin)");

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint without training");
  add_graph_flags(eval_cmd, ga);
  eval_cmd->add_option("--config", config, "config the checkpoint was trained with")->required();
  eval_cmd->add_option("--checkpoint", ckpt, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  try {
    if (*ricci) return cmd_ricci(ga, lambda, out);
    if (*train_cmd) {
      std::optional<std::uint64_t> s;
      std::optional<double> l;
      if (*seed_opt) s = seed;
      if (*lambda_opt) l = lambda;
      return cmd_train(ga, config, s, l, out, ckpt);
    }
    return cmd_eval(ga, config, ckpt);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kCheckpoint;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInput;
  } catch (const ValidationError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInput;
  } catch (const IoError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInput;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
