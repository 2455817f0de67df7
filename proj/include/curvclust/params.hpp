#pragma once

#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "curvclust/autodiff.hpp"
#include "curvclust/errors.hpp"

namespace curvclust {

// How the optimizer treats a parameter after its moment update.
enum class ParamKind : int {
  kEuclidean = 0,
  kCurvature = 1,          // unconstrained magnitude of a restricted factor
  kCentroidRestricted = 2  // rows retracted onto restricted factor `factor`
};

struct Param {
  std::string name;
  Eigen::MatrixXd value;
  ParamKind kind = ParamKind::kEuclidean;
  int factor = -1;
};

// Named parameters in a fixed insertion order. The order defines checkpoint
// layout and the leaf order on each training tape.
class ParamStore {
 public:
  std::size_t add(std::string name, Eigen::MatrixXd value, ParamKind kind = ParamKind::kEuclidean,
                  int factor = -1) {
    if (index_.contains(name)) throw std::logic_error("duplicate parameter " + name);
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), std::move(value), kind, factor});
    return params_.size() - 1;
  }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  Param& at(const std::string& name) { return params_[index(name)]; }
  const Param& at(const std::string& name) const { return params_[index(name)]; }
  Eigen::MatrixXd& value(const std::string& name) { return at(name).value; }
  const Eigen::MatrixXd& value(const std::string& name) const { return at(name).value; }

  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Tape leaves for every parameter of a store, in store order.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ParamStore& store, bool trainable = true) : store_(&store) {
    leaves_.reserve(store.size());
    for (const auto& p : store.all()) {
      leaves_.push_back(trainable ? tape.variable(p.value) : tape.constant(p.value));
    }
  }
  // Leaves already on a tape, one per parameter in store order.
  BoundParams(const ParamStore& store, std::vector<ad::Var> leaves) : store_(&store), leaves_(std::move(leaves)) {
    if (leaves_.size() != store.size()) throw std::logic_error("one leaf per parameter expected");
  }

  ad::Var operator[](const std::string& name) const { return leaves_[store_->index(name)]; }
  ad::Var leaf(std::size_t i) const { return leaves_.at(i); }
  std::size_t size() const { return leaves_.size(); }

 private:
  const ParamStore* store_;
  std::vector<ad::Var> leaves_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Eigen::MatrixXd glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  }
  return m;
}

}  // namespace curvclust
