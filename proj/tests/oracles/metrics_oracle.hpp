#pragma once

// Brute-force clustering scores computed straight from their definitions.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

using LabelVec = std::vector<int>;

// Pair-counting form of the adjusted Rand index.
inline double ari(const LabelVec& p, const LabelVec& t) {
  double a = 0, b = 0, c = 0, d = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const bool sp = p[i] == p[j];
      const bool st = t[i] == t[j];
      if (sp && st) {
        a += 1;
      } else if (sp) {
        b += 1;
      } else if (st) {
        c += 1;
      } else {
        d += 1;
      }
    }
  }
  return 2.0 * (a * d - b * c) / ((a + b) * (b + d) + (a + c) * (c + d));
}

inline double nmi(const LabelVec& p, const LabelVec& t) {
  const double n = static_cast<double>(p.size());
  std::map<int, double> cp, ct;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cp[p[i]] += 1;
    ct[t[i]] += 1;
    joint[{p[i], t[i]}] += 1;
  }
  double hp = 0, ht = 0, mi = 0;
  for (auto [_, x] : cp) hp -= x / n * std::log(x / n);
  for (auto [_, x] : ct) ht -= x / n * std::log(x / n);
  for (auto [key, x] : joint) mi += x / n * std::log((x / n) / ((cp[key.first] / n) * (ct[key.second] / n)));
  return mi / (0.5 * (hp + ht));
}

// Every injective map from predicted ids to class ids, padded with dummies.
inline double acc(const LabelVec& p, const LabelVec& t) {
  std::set<int> sp(p.begin(), p.end()), st(t.begin(), t.end());
  std::vector<int> pid(sp.begin(), sp.end()), tid(st.begin(), st.end());
  const std::size_t k = std::max(pid.size(), tid.size());
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto a = static_cast<std::size_t>(std::find(pid.begin(), pid.end(), p[i]) - pid.begin());
      const auto mapped = static_cast<std::size_t>(perm[a]);
      if (mapped < tid.size() && tid[mapped] == t[i]) ++hit;
    }
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(p.size());
}

}  // namespace oracle
