#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "curvclust/errors.hpp"
#include "curvclust/graph.hpp"
#include "curvclust/manifold.hpp"

namespace curvclust {

struct TrainConfig {
  std::size_t k = 3;
  std::size_t m_factors = 3;
  std::vector<std::size_t> dims{32, 16, 16};
  std::vector<int> signs{-1, -1, 1};
  std::size_t d0 = 32;
  double lambda = 0.5;
  double alpha0 = 1.0;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double beta = 2.0;
  double lr = 0.002;
  std::size_t epochs = 300;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // Optional keys.
  std::size_t hidden = 16;
  std::size_t layers = 2;
  bool row_normalize = false;
  bool reweight_gradient = false;
  std::optional<std::filesystem::path> edges;
  std::optional<std::filesystem::path> features;
  std::optional<std::filesystem::path> labels;

  ProductManifold manifold() const {
    ProductManifold p;
    p.free.dim = d0;
    for (std::size_t m = 0; m < m_factors; ++m) {
      p.restricted.push_back(RestrictedFactor::with_curvature(static_cast<double>(signs[m]), dims[m]));
    }
    p.validate();
    return p;
  }

  void validate() const {
    if (k == 0) throw ConfigError("k must be positive");
    if (dims.size() != m_factors) throw ConfigError("dims must list m_factors entries");
    if (signs.size() != m_factors) throw ConfigError("signs must list m_factors entries");
    for (int s : signs) {
      if (s != 1 && s != -1) throw ConfigError("signs entries must be 1 or -1");
    }
    for (auto d : dims) {
      if (d == 0) throw ConfigError("dims entries must be positive");
    }
    if (d0 < 2) throw ConfigError("d0 must be at least 2");
    if (!(lambda >= 0.0 && lambda < 1.0)) throw ConfigError("lambda must lie in [0, 1)");
    if (alpha0 < 0.0 || alpha1 < 0.0 || alpha2 < 0.0) throw ConfigError("alpha weights must be nonnegative");
    if (!(beta >= 1.0) || beta != static_cast<double>(static_cast<long>(beta))) {
      throw ConfigError("beta must be a positive integer");
    }
    if (lr < 0.0) throw ConfigError("lr must be nonnegative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("beta1 and beta2 must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (hidden == 0 || layers == 0) throw ConfigError("hidden and layers must be positive");
  }
};

namespace config_detail {

template <class T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError("bad integer for '" + key + "': " + v);
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError("bad number for '" + key + "': " + v);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("bad boolean for '" + key + "': " + v);
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<T>(key, std::string(detail::trim(item))));
  return out;
}

}  // namespace config_detail

inline const std::vector<std::string>& required_config_keys() {
  static const std::vector<std::string> keys{"k",      "m_factors", "dims",  "signs", "d0", "lambda",
                                             "alpha0", "alpha1",    "alpha2", "beta",  "lr", "epochs",
                                             "seed",   "beta1",     "beta2", "eps"};
  return keys;
}

// key=value lines; '#' starts a comment. Relative paths resolve against the
// config file's directory.
inline TrainConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  using namespace config_detail;
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto s = detail::trim(line);
    if (s.empty()) continue;
    auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    std::string key(detail::trim(s.substr(0, eq)));
    std::string value(detail::trim(s.substr(eq + 1)));
    if (!kv.emplace(key, value).second) throw ConfigError("duplicate key '" + key + "'");
  }
  for (const auto& key : required_config_keys()) {
    if (!kv.contains(key)) throw ConfigError("missing config key '" + key + "'");
  }
  TrainConfig c;
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  for (const auto& [key, v] : kv) {
    if (key == "k") c.k = parse_int<std::size_t>(key, v);
    else if (key == "m_factors") c.m_factors = parse_int<std::size_t>(key, v);
    else if (key == "dims") c.dims = parse_list<std::size_t>(key, v);
    else if (key == "signs") c.signs = parse_list<int>(key, v);
    else if (key == "d0") c.d0 = parse_int<std::size_t>(key, v);
    else if (key == "lambda") c.lambda = parse_double(key, v);
    else if (key == "alpha0") c.alpha0 = parse_double(key, v);
    else if (key == "alpha1") c.alpha1 = parse_double(key, v);
    else if (key == "alpha2") c.alpha2 = parse_double(key, v);
    else if (key == "beta") c.beta = parse_double(key, v);
    else if (key == "lr") c.lr = parse_double(key, v);
    else if (key == "epochs") c.epochs = parse_int<std::size_t>(key, v);
    else if (key == "seed") c.seed = parse_int<std::uint64_t>(key, v);
    else if (key == "beta1") c.beta1 = parse_double(key, v);
    else if (key == "beta2") c.beta2 = parse_double(key, v);
    else if (key == "eps") c.eps = parse_double(key, v);
    else if (key == "hidden") c.hidden = parse_int<std::size_t>(key, v);
    else if (key == "layers") c.layers = parse_int<std::size_t>(key, v);
    else if (key == "row_normalize") c.row_normalize = parse_bool(key, v);
    else if (key == "reweight_gradient") c.reweight_gradient = parse_bool(key, v);
    else if (key == "edges") c.edges = path(v);
    else if (key == "features") c.features = path(v);
    else if (key == "labels") c.labels = path(v);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

inline TrainConfig load_config(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  return parse_config(in, p.parent_path());
}

inline std::string format_config(const TrainConfig& c) {
  std::ostringstream o;
  auto list = [](const auto& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
    return s;
  };
  o << "k=" << c.k << "\nm_factors=" << c.m_factors << "\ndims=" << list(c.dims) << "\nsigns=" << list(c.signs)
    << "\nd0=" << c.d0 << "\nlambda=" << format_real(c.lambda) << "\nalpha0=" << format_real(c.alpha0)
    << "\nalpha1=" << format_real(c.alpha1) << "\nalpha2=" << format_real(c.alpha2)
    << "\nbeta=" << format_real(c.beta) << "\nlr=" << format_real(c.lr) << "\nepochs=" << c.epochs
    << "\nseed=" << c.seed << "\nbeta1=" << format_real(c.beta1) << "\nbeta2=" << format_real(c.beta2)
    << "\neps=" << format_real(c.eps) << "\nhidden=" << c.hidden << "\nlayers=" << c.layers
    << "\nrow_normalize=" << (c.row_normalize ? 1 : 0) << "\nreweight_gradient=" << (c.reweight_gradient ? 1 : 0)
    << '\n';
  if (c.edges) o << "edges=" << c.edges->string() << '\n';
  if (c.features) o << "features=" << c.features->string() << '\n';
  if (c.labels) o << "labels=" << c.labels->string() << '\n';
  return o.str();
}

}  // namespace curvclust
