#include <random>

#include <gtest/gtest.h>

#include "curvclust/losses.hpp"
#include "curvclust/manifold.hpp"
#include "oracles/finite_diff.hpp"
#include "oracles/naive_losses.hpp"
#include "test_util.hpp"

using namespace curvclust;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

Matrix random_pi(Eigen::Index n, Eigen::Index k, std::mt19937_64& rng, double spread = 1.0) {
  Matrix logits = testutil::random_matrix(n, k, rng, spread);
  Matrix pi(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    pi.row(i) = e / e.sum();
  }
  return pi;
}

Matrix one_hot(const std::vector<int>& labels, int k) {
  Matrix pi = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), k);
  for (std::size_t i = 0; i < labels.size(); ++i) pi(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return pi;
}

std::vector<std::pair<int, int>> pairs(const Graph& g) {
  std::vector<std::pair<int, int>> out;
  for (auto [u, v] : g.edges()) out.emplace_back(static_cast<int>(u), static_cast<int>(v));
  return out;
}

double ricci_value(const Graph& g, const RicciTable& t, const Matrix& pi, double alpha0) {
  Tape tape;
  return loss::ricci_loss(g, t, tape.constant(pi), alpha0).total.scalar();
}

struct ContrastInstance {
  Matrix images;
  Matrix free;
  Matrix centroid_images;
  Matrix free_centroids;
  Matrix pi;
  Matrix s;
};

ContrastInstance random_instance(Eigen::Index n, Eigen::Index k, Eigen::Index d, std::mt19937_64& rng) {
  return {testutil::random_matrix(n, d, rng, 0.7), testutil::random_matrix(n, d, rng, 0.7),
          testutil::random_matrix(k, d, rng, 0.7), testutil::random_matrix(k, d, rng, 0.7), random_pi(n, k, rng),
          testutil::random_matrix(d, d, rng, 0.5)};
}

}  // namespace

TEST(SoftAssign, Examples) {
  Tape t;
  Matrix z = Matrix::Zero(1, 1);
  Matrix c(2, 1);
  c << 1.0, 2.0;
  Matrix pi = loss::soft_assign({t.constant(z)}, {t.constant(c)}, {}).value();
  const double e1 = std::exp(-1.0);
  const double e2 = std::exp(-2.0);
  EXPECT_NEAR(pi(0, 0), e1 / (e1 + e2), 1e-15);
  EXPECT_NEAR(pi(0, 1), e2 / (e1 + e2), 1e-15);

  Matrix eq(3, 2);
  eq << 1, 0, -1, 0, 0, 1;
  Matrix uni = loss::soft_assign({t.constant(Matrix::Zero(1, 2))}, {t.constant(eq)}, {}).value();
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(uni(0, k), 1.0 / 3.0, 1e-15);

  Matrix near(2, 1);
  near << 0.0, 50.0;
  Matrix sharp = loss::soft_assign({t.constant(z)}, {t.constant(near)}, {}).value();
  EXPECT_GT(sharp(0, 0), 1.0 - 1e-15);
}

TEST(SoftAssign, ProductDistancesAndRowSums) {
  std::mt19937_64 rng(1);
  ProductManifold p;
  p.free.dim = 3;
  p.restricted = {RestrictedFactor::with_curvature(-1.0, 2), RestrictedFactor::with_curvature(1.0, 2)};
  const int n = 6;
  const int k = 3;
  std::vector<Matrix> views{testutil::random_matrix(n, 3, rng)};
  std::vector<Matrix> cents{testutil::random_matrix(k, 3, rng)};
  for (const auto& f : p.restricted) {
    Matrix v(n, 3);
    Matrix c(k, 3);
    for (int i = 0; i < n; ++i) v.row(i) = testutil::random_point(f, rng).transpose();
    for (int j = 0; j < k; ++j) c.row(j) = testutil::random_point(f, rng).transpose();
    views.push_back(v);
    cents.push_back(c);
  }
  Tape t;
  std::vector<Var> vv;
  std::vector<Var> cc;
  for (auto& m : views) vv.push_back(t.constant(m));
  for (auto& m : cents) cc.push_back(t.constant(m));
  std::vector<geo::Curvature> cs;
  for (const auto& f : p.restricted) cs.push_back(geo::bind_curvature(t.constant(f.magnitude_param), f.sign));
  Matrix pi = loss::soft_assign(vv, cc, cs).value();
  for (int i = 0; i < n; ++i) {
    EXPECT_NEAR(pi.row(i).sum(), 1.0, 1e-12);
    std::vector<double> logits;
    for (int j = 0; j < k; ++j) {
      ProductPoint a;
      ProductPoint b;
      for (std::size_t m = 0; m < views.size(); ++m) {
        a.blocks.push_back(views[m].row(i).transpose());
        b.blocks.push_back(cents[m].row(j).transpose());
      }
      logits.push_back(-product_distance(p, a, b));
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l);
    for (int j = 0; j < k; ++j) EXPECT_NEAR(pi(i, j), std::exp(logits[j]) / z, 1e-9);
  }
}

TEST(SoftAssign, HardLabelsBreakTiesLow) {
  Matrix pi(3, 3);
  pi << 0.4, 0.4, 0.2, 0.1, 0.45, 0.45, 0.2, 0.3, 0.5;
  EXPECT_EQ(loss::hard_labels(pi), (std::vector<Eigen::Index>{0, 1, 2}));
}

TEST(RicciLoss, Examples) {
  Graph g = Graph::build(4, {{0, 1}, {1, 2}, {2, 3}}, Matrix::Zero(4, 1));
  RicciTable ones;
  ones.edge_ricci = {1.0, 1.0, 1.0};
  Tape t;
  auto hard = loss::ricci_loss(g, ones, t.constant(one_hot({0, 0, 0, 0}, 2)), 1.0);
  EXPECT_NEAR(hard.intra.scalar(), 1.0, 1e-15);
  EXPECT_NEAR(hard.inter.scalar(), 0.0, 1e-15);
  EXPECT_NEAR(hard.total.scalar(), -1.0, 1e-15);

  RicciTable r;
  r.edge_ricci = {0.3, -0.2, 0.5};
  const double mean = 0.6 / 3.0;
  for (int K : {2, 3, 5}) {
    auto u = loss::ricci_loss(g, r, t.constant(Matrix::Constant(4, K, 1.0 / K)), 1.0);
    EXPECT_NEAR(u.intra.scalar(), mean / K, 1e-15);
    EXPECT_NEAR(u.inter.scalar(), mean * (K - 1) / (K * K), 1e-15);
  }

  Graph empty = Graph::build(3, {}, Matrix::Zero(3, 1));
  EXPECT_EQ(loss::ricci_loss(empty, RicciTable{}, t.constant(Matrix::Constant(3, 2, 0.5)), 1.0).total.scalar(), 0.0);
  EXPECT_THROW(loss::ricci_loss(g, RicciTable{}, t.constant(Matrix::Constant(4, 2, 0.5)), 1.0), ValidationError);
}

TEST(RicciLoss, MatchesNaiveOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> a0(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g = testutil::random_graph(6, 0.6, 1, rng);
    if (g.num_edges() == 0) continue;
    auto table = compute_ricci_table(g, 0.5);
    const int K = 1 + trial % 3;
    Matrix pi = random_pi(6, K, rng);
    const double alpha0 = a0(rng);
    double intra = 0.0;
    double inter = 0.0;
    const double ref = oracle::ricci_loss(pairs(g), table.edge_ricci, pi, alpha0, &intra, &inter);
    Tape t;
    auto l = loss::ricci_loss(g, table, t.constant(pi), alpha0);
    EXPECT_NEAR(l.total.scalar(), ref, 1e-10);
    EXPECT_NEAR(l.intra.scalar(), intra, 1e-10);
    EXPECT_NEAR(l.inter.scalar(), inter, 1e-10);
  }
}

// With alpha0 = 0 and hard assignments, blending a node whose incident edges
// are all intra-cluster toward the other clusters lowers the agreement of
// those edges. L_Ric then moves opposite to the sign of their curvature.
TEST(RicciLoss, MonotoneInIntraAgreement) {
  std::mt19937_64 rng(3);
  int checked_pos = 0;
  int checked_neg = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Graph g = testutil::random_graph(9, 0.35, 1, rng);
    if (g.num_edges() == 0) continue;
    auto table = compute_ricci_table(g, 0.5);
    std::vector<int> labels(9);
    for (auto& y : labels) y = static_cast<int>(rng() % 2);
    const Matrix base = one_hot(labels, 2);
    for (NodeId i = 0; i < 9; ++i) {
      if (g.degree(i) == 0) continue;
      bool all_intra = true;
      bool all_pos = true;
      bool all_neg = true;
      for (NodeId j : g.neighbors(i)) {
        all_intra = all_intra && labels[i] == labels[j];
        const double r = table.edge_ricci[*g.edge_index(i, j)];
        all_pos = all_pos && r >= 0.0;
        all_neg = all_neg && r <= 0.0;
      }
      if (!all_intra || !(all_pos || all_neg)) continue;
      double prev = ricci_value(g, table, base, 0.0);
      for (double s = 0.1; s <= 1.0; s += 0.1) {
        Matrix pi = base;
        pi(i, labels[i]) = 1.0 - s;
        pi(i, 1 - labels[i]) = s;
        const double cur = ricci_value(g, table, pi, 0.0);
        if (all_pos) {
          EXPECT_GE(cur, prev - 1e-15);
        } else {
          EXPECT_LE(cur, prev + 1e-15);
        }
        prev = cur;
      }
      (all_pos ? checked_pos : checked_neg)++;
    }
  }
  EXPECT_GT(checked_pos, 20);
  EXPECT_GT(checked_neg, 0);
}

TEST(RicciLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  Graph g = testutil::random_graph(8, 0.4, 1, rng);
  auto table = compute_ricci_table(g, 0.5);
  auto r = oracle::check_gradients(
      [&](Tape&, const std::vector<Var>& v) { return loss::ricci_loss(g, table, ad::softmax_rows(v[0]), 0.7).total; },
      {testutil::random_matrix(8, 3, rng)});
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(CurvatureLoss, Examples) {
  RicciTable t;
  t.node_ricci = {0.5, std::nullopt, -0.25, 0.0};
  Tape tape;
  Matrix same(4, 1);
  same << 0.5, 123.0, -0.25, 0.0;
  EXPECT_NEAR(loss::curvature_loss(t, tape.constant(same)).scalar(), 0.0, 1e-15);
  Matrix off = same.array() + 0.3;
  EXPECT_NEAR(loss::curvature_loss(t, tape.constant(off)).scalar(), 0.09, 1e-15);
  RicciTable none;
  none.node_ricci.assign(3, std::nullopt);
  EXPECT_EQ(loss::curvature_loss(none, tape.constant(Matrix::Ones(3, 1))).scalar(), 0.0);
  EXPECT_THROW(loss::curvature_loss(t, tape.constant(Matrix::Ones(3, 1))), ShapeError);
}

TEST(CurvatureLoss, MatchesNaiveOracleAndGradient) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    Graph g = testutil::random_graph(7, 0.3, 1, rng);
    auto table = compute_ricci_table(g, 0.5);
    Matrix est = testutil::random_matrix(7, 1, rng);
    std::vector<double> e(est.data(), est.data() + 7);
    Tape t;
    EXPECT_NEAR(loss::curvature_loss(table, t.constant(est)).scalar(), oracle::curvature_loss(table.node_ricci, e),
                1e-12);
    auto r = oracle::check_gradients(
        [&](Tape&, const std::vector<Var>& v) { return loss::curvature_loss(table, v[0]); }, {est});
    EXPECT_TRUE(r.ok) << r.detail;
  }
}

TEST(ViewImage, Properties) {
  std::mt19937_64 rng(6);
  for (double c : {-1.0, -0.3, 0.5, 1.0}) {
    auto f = RestrictedFactor::with_curvature(c, 3);
    Matrix w = testutil::random_matrix(4, 3, rng, 0.3);
    Matrix pts(6, 4);
    pts.row(0) = pole(f).transpose();
    for (int i = 1; i < 6; ++i) pts.row(i) = testutil::random_point(f, rng, 0.5).transpose();
    Tape t;
    auto cv = geo::bind_curvature(t.constant(f.magnitude_param), f.sign);
    Matrix img = loss::view_image(cv, t.constant(w), t.constant(pts)).value();
    ASSERT_EQ(img.cols(), 5);
    EXPECT_NEAR(img.row(0).norm(), 0.0, 1e-15);
    auto target = RestrictedFactor::with_curvature(c, 4);
    for (int i = 0; i < 6; ++i) {
      EXPECT_EQ(img(i, 0), 0.0);
      Vector moved = glt(f, w, pts.row(i).transpose());
      EXPECT_NEAR(img.row(i).norm(), factor_distance(target, pole(target), moved), 1e-6);
    }
  }
}

TEST(Similarity, Examples) {
  std::mt19937_64 rng(7);
  Eigen::VectorXd e = Eigen::VectorXd::Unit(4, 2);
  EXPECT_DOUBLE_EQ(loss::similarity(e, e, Matrix::Identity(4, 4)), 1.0);
  Matrix s = testutil::random_matrix(4, 4, rng);
  Eigen::VectorXd x = testutil::random_matrix(4, 1, rng);
  Eigen::VectorXd y = testutil::random_matrix(4, 1, rng);
  Eigen::VectorXd z = testutil::random_matrix(4, 1, rng);
  EXPECT_EQ(loss::similarity(Eigen::VectorXd::Zero(4), y, s), 0.0);
  EXPECT_EQ(loss::similarity(x, Eigen::VectorXd::Zero(4), s), 0.0);
  EXPECT_NEAR(loss::similarity(2.0 * x + z, y, s), 2.0 * loss::similarity(x, y, s) + loss::similarity(z, y, s), 1e-12);
  EXPECT_NEAR(loss::similarity(x, 3.0 * y - z, s), 3.0 * loss::similarity(x, y, s) - loss::similarity(x, z, s), 1e-12);
}

TEST(DualWeight, Examples) {
  EXPECT_EQ(loss::dual_weight(1.0, 1.0, 2.0), 0.0);
  EXPECT_EQ(loss::dual_weight(0.0, 1.0, 2.0), 1.0);
  EXPECT_NEAR(loss::dual_weight(0.5, 0.2, 2.0), 0.09, 1e-15);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    EXPECT_GE(loss::dual_weight(a, u(rng), 1.0 + i % 3), 0.0);
    EXPECT_EQ(loss::dual_weight(a, a, 1.0 + i % 3), 0.0);
  }
}

TEST(N2N, Examples) {
  std::mt19937_64 rng(9);
  Tape t;
  Var one = t.constant(testutil::random_matrix(1, 3, rng));
  Var pi1 = t.constant(Matrix::Ones(1, 2) * 0.5);
  Var s = t.constant(testutil::random_matrix(3, 3, rng));
  EXPECT_NEAR(loss::n2n_loss(one, one, pi1, s, 2.0).scalar(), 0.0, 1e-15);

  const int n = 5;
  Var x = t.constant(testutil::random_matrix(n, 3, rng));
  Var zero_s = t.constant(Matrix::Zero(3, 3));
  Var pi = t.constant(random_pi(n, 2, rng));
  EXPECT_NEAR(loss::n2n_loss(x, x, pi, zero_s, 2.0).scalar(), n * std::log(n), 1e-12);
  EXPECT_NEAR(loss::n2n_loss(x, x, pi, zero_s, 2.0, true).scalar(), n * std::log(n), 1e-12);
}

TEST(N2C, Examples) {
  std::mt19937_64 rng(10);
  Tape t;
  const int n = 4;
  Var x = t.constant(testutil::random_matrix(n, 3, rng));
  Var s = t.constant(testutil::random_matrix(3, 3, rng));
  Var c1 = t.constant(testutil::random_matrix(1, 3, rng));
  Var pi1 = t.constant(Matrix::Ones(n, 1));
  EXPECT_NEAR(loss::n2c_loss(x, c1, pi1, s, 2.0, true).scalar(), 0.0, 1e-15);
  EXPECT_NEAR(loss::n2c_loss(x, c1, pi1, s, 2.0, false).scalar(), 0.0, 1e-15);

  Var c3 = t.constant(testutil::random_matrix(3, 3, rng));
  Var pi3 = t.constant(random_pi(n, 3, rng));
  Var zero_s = t.constant(Matrix::Zero(3, 3));
  EXPECT_NEAR(loss::n2c_loss(x, c3, pi3, zero_s, 2.0, true).scalar(), n * std::log(3.0), 1e-12);
}

TEST(Contrast, MatchesNaiveOracles) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 2 + trial % 5;
    const Eigen::Index k = 1 + trial % 3;
    const double beta = 1.0 + trial % 3;
    auto in = random_instance(n, k, 4, rng);
    Tape t;
    auto fc = loss::factor_contrast(t.constant(in.images), t.constant(in.centroid_images), t.constant(in.free),
                                    t.constant(in.free_centroids), t.constant(in.pi), t.constant(in.s), beta);
    const double a = oracle::n2n(in.images, in.free, in.pi, in.s, beta);
    const double b = oracle::n2n_reverse(in.images, in.free, in.pi, in.s, beta);
    const double c = oracle::n2c(in.images, in.free_centroids, in.pi, in.s, beta);
    const double d = oracle::n2c_reverse(in.free, in.centroid_images, in.pi, in.s, beta);
    EXPECT_NEAR(fc.n2n.scalar(), a, 1e-10);
    EXPECT_NEAR(fc.n2n_reverse.scalar(), b, 1e-10);
    EXPECT_NEAR(fc.n2c.scalar(), c, 1e-10);
    EXPECT_NEAR(fc.n2c_reverse.scalar(), d, 1e-10);
    EXPECT_NEAR(fc.total().scalar(), a + b + c + d, 1e-10);
  }
}

TEST(Contrast, TermCountScalesWithFactors) {
  std::mt19937_64 rng(12);
  auto one = random_instance(5, 3, 4, rng);
  auto two = random_instance(5, 3, 4, rng);
  two.free = one.free;
  two.free_centroids = one.free_centroids;
  two.pi = one.pi;
  two.s = one.s;
  Tape t;
  auto run = [&](const ContrastInstance& in) {
    return loss::factor_contrast(t.constant(in.images), t.constant(in.centroid_images), t.constant(in.free),
                                 t.constant(in.free_centroids), t.constant(in.pi), t.constant(in.s), 2.0);
  };
  auto f1 = run(one);
  auto f2 = run(two);
  double expect = 0.0;
  for (const auto* in : {&one, &two}) {
    expect += oracle::n2n(in->images, in->free, in->pi, in->s, 2.0) +
              oracle::n2n_reverse(in->images, in->free, in->pi, in->s, 2.0) +
              oracle::n2c(in->images, in->free_centroids, in->pi, in->s, 2.0) +
              oracle::n2c_reverse(in->free, in->centroid_images, in->pi, in->s, 2.0);
  }
  EXPECT_NEAR(ad::add(f1.total(), f2.total()).scalar(), expect, 1e-10);
}

TEST(Contrast, LargeLogitsStayFinite) {
  std::mt19937_64 rng(13);
  auto in = random_instance(5, 2, 3, rng);
  in.images *= 30.0;
  Tape t;
  Var l = loss::n2n_loss(t.variable(in.images), t.constant(in.free), t.constant(in.pi), t.constant(in.s), 2.0);
  EXPECT_TRUE(std::isfinite(l.scalar()));
}

// With the reweighting blocked, the analytic gradient is that of the loss
// whose dual weights are frozen at their current values.
TEST(Contrast, BlockedGradientsMatchFrozenWeightDifferences) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 4; ++trial) {
    auto in = random_instance(5, 3, 4, rng);
    const double beta = 2.0;
    auto sims = [](const std::vector<Matrix>& x) {
      // x: images, centroid_images, free, free_centroids, s
      return std::vector<Matrix>{x[0] * x[4] * x[2].transpose(), Matrix((x[0] * x[4] * x[2].transpose()).transpose()),
                                 x[0] * x[4] * x[3].transpose(), Matrix((x[1] * x[4] * x[2].transpose()).transpose())};
    };
    const std::vector<Matrix> base{in.images, in.centroid_images, in.free, in.free_centroids, in.s};
    const Matrix agree = in.pi * in.pi.transpose();
    const std::vector<Matrix> p{agree, agree, in.pi, in.pi};
    std::vector<Matrix> w;
    for (std::size_t q = 0; q < 4; ++q) w.push_back((p[q] - sims(base)[q]).array().abs().pow(beta).matrix());
    std::vector<int> diag(5);
    std::vector<int> top(5);
    for (int i = 0; i < 5; ++i) {
      diag[i] = i;
      top[i] = oracle::argmax_row(in.pi, i);
    }
    auto frozen = [&](const std::vector<Matrix>& x) {
      auto a = sims(x);
      return oracle::fixed_weight_nll(a[0], w[0], diag) + oracle::fixed_weight_nll(a[1], w[1], diag) +
             oracle::fixed_weight_nll(a[2], w[2], top) + oracle::fixed_weight_nll(a[3], w[3], top);
    };
    Tape t;
    std::vector<Var> v;
    for (const auto& m : base) v.push_back(t.variable(m));
    auto fc = loss::factor_contrast(v[0], v[1], v[2], v[3], t.constant(in.pi), v[4], beta);
    EXPECT_NEAR(fc.total().scalar(), frozen(base), 1e-10);
    t.backward(fc.total());
    std::vector<Matrix> x = base;
    for (std::size_t q = 0; q < base.size(); ++q) {
      const Matrix g = t.grad(v[q]);
      for (Eigen::Index e = 0; e < base[q].size(); ++e) {
        const double h = 1e-5;
        x[q](e) = base[q](e) + h;
        const double up = frozen(x);
        x[q](e) = base[q](e) - h;
        const double down = frozen(x);
        x[q](e) = base[q](e);
        const double num = (up - down) / (2 * h);
        const double diff = std::abs(num - g(e));
        if (diff > 1e-8) {
          EXPECT_LE(diff / std::max(std::abs(num), std::abs(g(e))), 1e-3) << "input " << q << " entry " << e;
        }
      }
    }
  }
}

TEST(Contrast, FlowingGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 4; ++trial) {
    auto in = random_instance(5, 3, 4, rng);
    auto r = oracle::check_gradients(
        [](Tape&, const std::vector<Var>& v) {
          Var pi = ad::softmax_rows(v[5]);
          return loss::factor_contrast(v[0], v[1], v[2], v[3], pi, v[4], 2.0, true).total();
        },
        {in.images, in.centroid_images, in.free, in.free_centroids, in.s, testutil::random_matrix(5, 3, rng)});
    EXPECT_TRUE(r.ok) << r.detail;
  }
}

TEST(Contrast, BlockedWeightsIgnoreMembershipGradient) {
  std::mt19937_64 rng(15);
  auto in = random_instance(4, 2, 3, rng);
  Tape t;
  Var logits = t.variable(testutil::random_matrix(4, 2, rng));
  Var l = loss::n2n_loss(t.constant(in.images), t.constant(in.free), ad::softmax_rows(logits), t.variable(in.s), 2.0);
  t.backward(l);
  EXPECT_EQ(t.grad(logits), Matrix::Zero(4, 2));
}
