// Writes a stochastic-block-model fixture: edges.tsv, features.csv, labels.csv.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "curvclust/graph.hpp"
#include "curvclust/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"SBM fixture generator"};
  curvclust::synthetic::SbmOptions o;
  std::string out = ".";
  app.add_option("--blocks", o.blocks);
  app.add_option("--block-size", o.block_size);
  app.add_option("--p-in", o.p_in);
  app.add_option("--p-out", o.p_out);
  app.add_option("--features", o.num_features);
  app.add_option("--shift", o.feature_shift);
  app.add_option("--noise", o.feature_noise);
  app.add_option("--seed", o.seed);
  app.add_option("--out", out);
  CLI11_PARSE(app, argc, argv);

  try {
    namespace fs = std::filesystem;
    fs::create_directories(out);
    auto g = curvclust::synthetic::stochastic_block_model(o);
    curvclust::save_graph(g, fs::path(out) / "edges.tsv", fs::path(out) / "features.csv",
                          fs::path(out) / "labels.csv");
    std::cout << "nodes=" << g.num_nodes() << ",edges=" << g.num_edges() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
