#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/autodiff.hpp"
#include "curvclust/config.hpp"
#include "curvclust/encoder.hpp"
#include "curvclust/errors.hpp"
#include "curvclust/geometry_ad.hpp"
#include "curvclust/graph.hpp"
#include "curvclust/losses.hpp"
#include "curvclust/manifold.hpp"
#include "curvclust/metrics.hpp"
#include "curvclust/params.hpp"
#include "curvclust/ricci.hpp"

namespace curvclust {

using ad::Matrix;

namespace names {
inline std::string centroid_free() { return "centroid.free"; }
inline std::string centroid(std::size_t m) { return "centroid.r" + std::to_string(m); }
inline std::string view(std::size_t m) { return "rgc.view" + std::to_string(m); }
inline std::string critic() { return "rgc.S"; }
}  // namespace names

// Parameters plus the fixed architecture they belong to.
struct Model {
  TrainConfig config;
  ProductManifold manifold;  // initial curvatures; learned ones live in `params`
  EncoderShape shape;
  ParamStore params;

  ProductManifold current_manifold() const { return with_learned_curvatures(manifold, params); }

  // Identifies the architecture; checkpoints only load into a matching model.
  std::string signature() const {
    std::ostringstream o;
    o << "d0=" << manifold.free.dim << ";factors=";
    for (const auto& f : manifold.restricted) o << (f.sign < 0 ? '-' : '+') << f.dim << ',';
    o << ";k=" << config.k << ";features=" << shape.num_features << ";layers=" << shape.num_layers
      << ";hidden=" << shape.mlp_hidden;
    return o.str();
  }
};

// Encoder, curvature MLP and contrast parameters; centroids are added by
// init_centroids.
inline Model make_model(const TrainConfig& config, std::size_t num_features, std::mt19937_64& rng) {
  config.validate();
  Model model;
  model.config = config;
  model.manifold = config.manifold();
  model.shape = {num_features, config.layers, config.hidden};
  add_encoder_params(model.params, model.manifold, model.shape, rng);
  const auto d0 = static_cast<Eigen::Index>(config.d0);
  model.params.add(names::critic(), glorot_uniform(d0, d0, rng));
  for (std::size_t m = 0; m < model.manifold.num_restricted(); ++m) {
    const auto dm = static_cast<Eigen::Index>(model.manifold.restricted[m].dim);
    model.params.add(names::view(m), glorot_uniform(d0 - 1, dm, rng));
  }
  return model;
}

// K distinct node embeddings drawn without replacement become the initial
// centroids. Returns the chosen node ids.
inline std::vector<std::size_t> init_centroids(Model& model, const EmbeddingSet& z, std::size_t k,
                                               std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(z.free.rows());
  if (k > n) throw ValidationError("K exceeds the number of nodes");
  if (k == 0) throw ValidationError("K must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates with an explicit uniform draw keeps the selection
  // identical across standard libraries.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(order[i], order[j]);
  }
  order.resize(k);
  Matrix cf(static_cast<Eigen::Index>(k), z.free.cols());
  for (std::size_t r = 0; r < k; ++r) cf.row(static_cast<Eigen::Index>(r)) = z.free.row(static_cast<Eigen::Index>(order[r]));
  model.params.add(names::centroid_free(), cf);
  for (std::size_t m = 0; m < z.restricted.size(); ++m) {
    Matrix c(static_cast<Eigen::Index>(k), z.restricted[m].cols());
    for (std::size_t r = 0; r < k; ++r) {
      c.row(static_cast<Eigen::Index>(r)) = z.restricted[m].row(static_cast<Eigen::Index>(order[r]));
    }
    model.params.add(names::centroid(m), c, ParamKind::kCentroidRestricted, static_cast<int>(m));
  }
  return order;
}

// Loss values of one forward pass.
struct LossValues {
  double J = 0.0;
  double ricci = 0.0;
  double curvature = 0.0;
  double contrast = 0.0;
};

struct Forward {
  EncodedViews views;
  std::vector<ad::Var> centroids;  // free block first
  ad::Var pi;
  loss::RicciLoss ricci;
  ad::Var estimates;
  ad::Var curvature;
  std::vector<loss::FactorContrast> contrast;
  ad::Var rgc;
  ad::Var J;
  EncoderDiagnostics diagnostics;

  LossValues values() const { return {J.scalar(), ricci.total.scalar(), curvature.scalar(), rgc.scalar()}; }
};

// Embeddings, centroids and soft assignment only.
inline Forward assign(const BoundParams& p, const Model& model, ad::Tape& tape, const Matrix& features,
                      const geo::Neighborhoods& nb) {
  Forward f;
  f.views = encode(p, model.manifold, model.shape, tape.constant(features), nb, &f.diagnostics);
  f.centroids.push_back(p[names::centroid_free()]);
  for (std::size_t m = 0; m < model.manifold.num_restricted(); ++m) f.centroids.push_back(p[names::centroid(m)]);
  std::vector<ad::Var> views{f.views.free};
  views.insert(views.end(), f.views.restricted.begin(), f.views.restricted.end());
  f.pi = loss::soft_assign(views, f.centroids, f.views.curvatures);
  return f;
}

// Full objective J = L_ric + alpha1 L_curv + alpha2 L_rgc.
inline Forward forward(const BoundParams& p, const Model& model, ad::Tape& tape, const Graph& g,
                       const RicciTable& ricci, const geo::Neighborhoods& nb) {
  const auto& cfg = model.config;
  Forward f = assign(p, model, tape, g.features(), nb);
  f.ricci = loss::ricci_loss(g, ricci, f.pi, cfg.alpha0);
  f.estimates = estimate_node_curvature(p, f.views.free, f.views.curvatures);
  f.curvature = loss::curvature_loss(ricci, f.estimates);

  ad::Var s = p[names::critic()];
  f.rgc = tape.constant(0.0);
  for (std::size_t m = 0; m < model.manifold.num_restricted(); ++m) {
    const auto& c = f.views.curvatures[m];
    ad::Var w = p[names::view(m)];
    ad::Var images = loss::view_image(c, w, f.views.restricted[m], &f.diagnostics.glt);
    ad::Var centroid_images = loss::view_image(c, w, f.centroids[m + 1], &f.diagnostics.glt);
    f.contrast.push_back(loss::factor_contrast(images, centroid_images, f.views.free, f.centroids[0], f.pi, s,
                                               cfg.beta, cfg.reweight_gradient));
    f.rgc = ad::add(f.rgc, f.contrast.back().total());
  }

  auto check = [](ad::Var v, const char* what) {
    if (!std::isfinite(v.scalar())) throw DivergenceError(std::string("non-finite ") + what);
  };
  check(f.ricci.total, "L_ric");
  check(f.curvature, "L_curv");
  check(f.rgc, "L_rgc");
  f.J = ad::add(f.ricci.total, ad::add(ad::scale(f.curvature, cfg.alpha1), ad::scale(f.rgc, cfg.alpha2)));
  check(f.J, "J");
  return f;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

// Retract every restricted-centroid row onto its factor under the current
// curvature.
inline void retract_centroids(Model& model) {
  const ProductManifold cur = model.current_manifold();
  for (auto& prm : model.params.all()) {
    if (prm.kind != ParamKind::kCentroidRestricted) continue;
    const auto& f = cur.restricted.at(static_cast<std::size_t>(prm.factor));
    for (Eigen::Index r = 0; r < prm.value.rows(); ++r) {
      Vector row = prm.value.row(r).transpose();
      prm.value.row(r) = project_to_factor(f, row).transpose();
    }
  }
}

// Adam moments for every parameter, then retraction of manifold-resident
// centroid rows. A zero learning rate leaves parameters untouched.
inline void adam_step(Model& model, const std::vector<Matrix>& grads, AdamState& st) {
  const auto& cfg = model.config;
  auto& ps = model.params.all();
  if (st.m.empty()) {
    for (const auto& p : ps) {
      st.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      st.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++st.step;
  if (cfg.lr == 0.0) return;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grads[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grads[i].cwiseAbs2();
    ps[i].value.array() -=
        cfg.lr * (st.m[i].array() / c1) / ((st.v[i].array() / c2).sqrt() + cfg.eps);
  }
  retract_centroids(model);
}

// ---------------------------------------------------------------------------
// Evaluation

struct Scores {
  std::optional<double> nmi;
  std::optional<double> ari;
  std::optional<double> acc;
  std::optional<double> density;
  std::optional<double> entropy;
};

inline std::vector<int> to_labels(const Matrix& pi) {
  auto h = loss::hard_labels(pi);
  return {h.begin(), h.end()};
}

inline Scores score(const Graph& g, const std::vector<int>& pred) {
  Scores s;
  s.density = metrics::cluster_density(g, pred);
  if (g.labels()) {
    const auto& truth = *g.labels();
    s.nmi = metrics::nmi(pred, truth);
    if (pred.size() >= 2) s.ari = metrics::ari(pred, truth);
    s.acc = metrics::acc(pred, truth);
    s.entropy = metrics::cluster_entropy(pred, truth);
  }
  return s;
}

struct EpochRecord {
  std::size_t epoch = 0;
  LossValues loss;
  Scores scores;
};

struct TrainResult {
  Model model;  // final parameters, or the last finite ones after divergence
  Matrix pi;
  std::vector<int> labels;
  std::vector<EpochRecord> log;
  bool diverged = false;
  std::string failure;
  std::size_t spherical_overflows = 0;
  std::size_t degenerate_aggregates = 0;
};

// Builds the model and its centroids from the configured seed.
inline Model initialize(const TrainConfig& cfg, const Graph& g) {
  std::mt19937_64 rng(cfg.seed);
  Model model = make_model(cfg, static_cast<std::size_t>(g.num_features()), rng);
  const auto nb = geo::Neighborhoods::of(g);
  ad::Tape tape;
  BoundParams p(tape, model.params, false);
  auto views = encode(p, model.manifold, model.shape, tape.constant(g.features()), nb);
  init_centroids(model, views.values(), cfg.k, rng);
  return model;
}

// Forward on a constant tape: soft assignment under the model's parameters.
inline Matrix soft_assignment(const Model& model, const Graph& g) {
  const auto nb = geo::Neighborhoods::of(g);
  ad::Tape tape;
  BoundParams p(tape, model.params, false);
  return assign(p, model, tape, g.features(), nb).pi.value();
}

using EpochCallback = std::function<void(const EpochRecord&)>;

// Row e of the log describes the parameters after e updates; `epochs`
// updates are applied in total.
inline TrainResult train(Model model, const Graph& g, const RicciTable& ricci, const EpochCallback& on_epoch = {}) {
  if (ricci.graph_hash != g.structure_hash() || ricci.edge_ricci.size() != g.num_edges()) {
    throw ValidationError("curvature table belongs to a different graph");
  }
  const auto nb = geo::Neighborhoods::of(g);
  TrainResult out;
  AdamState adam;
  const std::size_t epochs = model.config.epochs;
  Model last_good = model;
  for (std::size_t e = 0;; ++e) {
    ad::Tape tape;
    BoundParams p(tape, model.params, true);
    Forward f;
    try {
      f = forward(p, model, tape, g, ricci, nb);
    } catch (const DivergenceError& err) {
      out.diverged = true;
      out.failure = "epoch " + std::to_string(e) + ": " + err.what();
      break;
    }
    last_good = model;
    out.spherical_overflows += f.diagnostics.glt.spherical_overflows;
    out.degenerate_aggregates += f.diagnostics.degenerate_aggregates;
    out.pi = f.pi.value();
    out.labels = to_labels(out.pi);
    EpochRecord rec{e, f.values(), score(g, out.labels)};
    out.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (e == epochs) break;

    tape.backward(f.J);
    std::vector<Matrix> grads;
    grads.reserve(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) grads.push_back(tape.grad(p.leaf(i)));
    adam_step(model, grads, adam);
  }
  out.model = out.diverged ? std::move(last_good) : std::move(model);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, version, signature, parameters, trailing FNV-1a checksum.

namespace checkpoint {

inline constexpr char kMagic[4] = {'C', 'C', 'K', 'P'};
inline constexpr std::uint32_t kVersion = 1;

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline void save(const Model& model, const std::filesystem::path& path) {
  std::string buf;
  auto put = [&buf](const auto& x) { buf.append(reinterpret_cast<const char*>(&x), sizeof(x)); };
  auto put_str = [&](const std::string& s) {
    put(static_cast<std::uint64_t>(s.size()));
    buf += s;
  };
  buf.append(kMagic, 4);
  put(kVersion);
  put_str(model.signature());
  put(static_cast<std::uint64_t>(model.params.size()));
  for (const auto& p : model.params.all()) {
    put_str(p.name);
    put(static_cast<std::int32_t>(p.kind));
    put(static_cast<std::int32_t>(p.factor));
    put(static_cast<std::uint64_t>(p.value.rows()));
    put(static_cast<std::uint64_t>(p.value.cols()));
    buf.append(reinterpret_cast<const char*>(p.value.data()), sizeof(double) * static_cast<std::size_t>(p.value.size()));
  }
  put(fnv1a(buf));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw CheckpointError("short write to " + path.string());
}

// Replaces the parameters of `model` (which fixes the expected signature).
inline void load(Model& model, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t) || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint: " + path.string());
  }
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + buf.size() - sizeof(stored), sizeof(stored));
  buf.resize(buf.size() - sizeof(stored));
  if (fnv1a(buf) != stored) throw CheckpointError("checkpoint checksum mismatch: " + path.string());

  std::size_t at = 4;
  auto get = [&](auto& x) {
    if (at + sizeof(x) > buf.size()) throw CheckpointError("truncated checkpoint");
    std::memcpy(&x, buf.data() + at, sizeof(x));
    at += sizeof(x);
  };
  auto get_str = [&]() {
    std::uint64_t n = 0;
    get(n);
    if (n > buf.size() - at) throw CheckpointError("truncated checkpoint");
    std::string s = buf.substr(at, n);
    at += n;
    return s;
  };
  std::uint32_t version = 0;
  get(version);
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const std::string sig = get_str();
  if (sig != model.signature()) {
    throw CheckpointError("checkpoint signature '" + sig + "' does not match '" + model.signature() + "'");
  }
  std::uint64_t count = 0;
  get(count);
  if (count > buf.size()) throw CheckpointError("corrupt checkpoint");
  ParamStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_str();
    std::int32_t kind = 0;
    std::int32_t factor = 0;
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    get(kind);
    get(factor);
    get(rows);
    get(cols);
    if (kind < 0 || kind > 2 || rows > buf.size() || cols > buf.size() ||
        rows * cols * sizeof(double) > buf.size() - at) {
      throw CheckpointError("corrupt checkpoint entry " + name);
    }
    Matrix v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::memcpy(v.data(), buf.data() + at, rows * cols * sizeof(double));
    at += rows * cols * sizeof(double);
    store.add(std::move(name), std::move(v), static_cast<ParamKind>(kind), factor);
  }
  if (at != buf.size()) throw CheckpointError("trailing bytes in checkpoint");
  // The encoder layout must match what this model would create.
  for (const auto& p : model.params.all()) {
    if (!store.contains(p.name)) throw CheckpointError("checkpoint lacks parameter " + p.name);
    const auto& q = store.at(p.name);
    if (q.value.rows() != p.value.rows() || q.value.cols() != p.value.cols()) {
      throw CheckpointError("shape mismatch for parameter " + p.name);
    }
  }
  model.params = std::move(store);
}

}  // namespace checkpoint

// ---------------------------------------------------------------------------
// CSV output

inline std::string csv_value(const std::optional<double>& x) { return x ? format_real(*x) : std::string(); }

inline void write_metrics_csv(const std::vector<EpochRecord>& log, std::ostream& out) {
  out << "epoch,J,L_ric,L_curv,L_rgc,nmi,ari,acc\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << format_real(r.loss.J) << ',' << format_real(r.loss.ricci) << ','
        << format_real(r.loss.curvature) << ',' << format_real(r.loss.contrast) << ',' << csv_value(r.scores.nmi)
        << ',' << csv_value(r.scores.ari) << ',' << csv_value(r.scores.acc) << '\n';
  }
}

inline void write_curves_csv(const std::vector<EpochRecord>& log, std::ostream& out) {
  out << "epoch,density,entropy\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << csv_value(r.scores.density) << ',' << csv_value(r.scores.entropy) << '\n';
  }
}

}  // namespace curvclust
