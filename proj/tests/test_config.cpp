#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "curvclust/config.hpp"
#include "test_util.hpp"

using namespace curvclust;

namespace {

const char* kFull =
    "k=3\nm_factors=2\ndims=8,4\nsigns=-1,1\nd0=6\nlambda=0.5\nalpha0=1\nalpha1=0.5\nalpha2=2\n"
    "beta=2\nlr=0.002\nepochs=10\nseed=4\nbeta1=0.9\nbeta2=0.999\neps=1e-8\n";

std::string without(const std::string& key) {
  std::istringstream in(kFull);
  std::string line;
  std::string out;
  while (std::getline(in, line)) {
    if (line.rfind(key + "=", 0) != 0) out += line + "\n";
  }
  return out;
}

TrainConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace

TEST(Config, ParsesEveryRequiredKey) {
  auto c = parse(std::string("# comment\n\n") + kFull + "row_normalize=1\nhidden=5  # trailing\n");
  EXPECT_EQ(c.k, 3u);
  EXPECT_EQ(c.m_factors, 2u);
  EXPECT_EQ(c.dims, (std::vector<std::size_t>{8, 4}));
  EXPECT_EQ(c.signs, (std::vector<int>{-1, 1}));
  EXPECT_EQ(c.d0, 6u);
  EXPECT_EQ(c.alpha1, 0.5);
  EXPECT_EQ(c.alpha2, 2.0);
  EXPECT_EQ(c.epochs, 10u);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.eps, 1e-8);
  EXPECT_TRUE(c.row_normalize);
  EXPECT_EQ(c.hidden, 5u);
  EXPECT_FALSE(c.reweight_gradient);
  auto m = c.manifold();
  ASSERT_EQ(m.num_restricted(), 2u);
  EXPECT_EQ(m.restricted[0].sign, -1);
  EXPECT_EQ(m.restricted[1].dim, 4u);
}

TEST(Config, MissingKeyIsNamed) {
  for (const auto& key : required_config_keys()) {
    try {
      parse(without(key));
      FAIL() << "no error for missing " << key;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("'" + key + "'"), std::string::npos) << e.what();
    }
  }
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(parse(std::string(kFull) + "bogus=1\n"), ConfigError);
  EXPECT_THROW(parse(std::string(kFull) + "k=4\n"), ConfigError);
  EXPECT_THROW(parse(without("beta") + "beta=1.5\n"), ConfigError);
  EXPECT_THROW(parse(without("signs") + "signs=-1,2\n"), ConfigError);
  EXPECT_THROW(parse(without("dims") + "dims=8\n"), ConfigError);
  EXPECT_THROW(parse(without("lambda") + "lambda=1\n"), ConfigError);
  EXPECT_THROW(parse(without("k") + "k=three\n"), ConfigError);
  EXPECT_THROW(parse(without("k") + "k=0\n"), ConfigError);
  EXPECT_THROW(parse(std::string(kFull) + "just text\n"), ConfigError);
}

TEST(Config, FormatRoundTrips) {
  auto c = parse(kFull);
  auto again = parse(format_config(c));
  EXPECT_EQ(format_config(again), format_config(c));
}

TEST(Config, RelativePathsResolveAgainstConfigDirectory) {
  auto dir = testutil::temp_dir("config_paths");
  testutil::write_file(dir / "run.cfg", std::string(kFull) + "edges=data/e.tsv\nfeatures=/abs/f.csv\n");
  auto c = load_config(dir / "run.cfg");
  EXPECT_EQ(*c.edges, dir / "data/e.tsv");
  EXPECT_EQ(*c.features, std::filesystem::path("/abs/f.csv"));
  EXPECT_FALSE(c.labels.has_value());
  EXPECT_THROW(load_config(dir / "absent.cfg"), IoError);
}
