#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "popsynth/metrics.hpp"
#include "popsynth/synth.hpp"

using namespace popsynth;

TEST(Synth, ToyBalanced) {
  SyntheticSpec s;
  s.kind = GeneratorKind::toy;
  s.size = 1000;
  s.balanced = true;
  const auto pool = synth_generate(s);
  std::map<std::vector<double>, int> counts;
  for (const auto& r : pool.rows) ++counts[r];
  EXPECT_EQ(counts, (std::map<std::vector<double>, int>{{{0, 0}, 500}, {{1, 1}, 500}}));
  EXPECT_EQ((*pool.schema)[0].name, "X");
}

TEST(Synth, ToyBinomial) {
  SyntheticSpec s;
  s.kind = GeneratorKind::toy;
  s.size = 1000;
  s.seed = 17;
  const auto pool = synth_generate(s);
  int s0 = 0;
  for (const auto& r : pool.rows) {
    ASSERT_EQ(r[0], r[1]);
    s0 += r[0] == 0;
  }
  // 4 standard deviations of Binomial(1000, 0.5)
  EXPECT_NEAR(s0, 500, 64);
  EXPECT_EQ(synth_generate(s).rows, pool.rows);
}

TEST(Synth, SingleClassIsIndependent) {
  SyntheticSpec s;
  s.classes = 1;
  s.variables = 6;
  s.size = 10000;
  s.seed = 5;
  const auto d = to_categorical(synth_generate(s));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j < 6; ++j) EXPECT_LT(cramers_v(d, i, j).value_or(0.0), 0.05);
}

TEST(Synth, LatentClassesInduceDependence) {
  SyntheticSpec s;
  s.classes = 4;
  s.variables = 6;
  s.size = 5000;
  s.seed = 6;
  const auto d = to_categorical(synth_generate(s));
  const auto v = pairwise_cramers_v(d);
  EXPECT_GT(*std::max_element(v.begin(), v.end()), 0.1);
}

TEST(Synth, BnGroundTruthMatchesEnumeratedJoint) {
  SyntheticSpec s;
  s.kind = GeneratorKind::bn_ground_truth;
  s.variables = 4;
  s.widths = {2, 3, 2, 2};
  s.size = 100000;
  s.seed = 7;
  const auto gt = make_bn_ground_truth(s);
  EXPECT_TRUE(gt.dag.is_acyclic());
  const auto d = to_categorical(synth_generate(s));
  std::map<std::vector<int>, double> freq;
  for (const auto& r : d.rows) freq[r] += 1e-5;
  double tv = 0.0, mass = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 2; ++c)
        for (int e = 0; e < 2; ++e) {
          const std::vector<int> row{a, b, c, e};
          const double p = joint_probability(gt.cpts, row);
          mass += p;
          tv += std::abs(p - freq[row]);
        }
  EXPECT_NEAR(mass, 1.0, 1e-12);
  EXPECT_LT(0.5 * tv, 0.01);
}

TEST(Synth, RangeErrors) {
  const auto bad = [](auto mutate) {
    SyntheticSpec s;
    mutate(s);
    EXPECT_THROW(synth_generate(s), ConfigError);
  };
  bad([](SyntheticSpec& s) { s.classes = 0; });
  bad([](SyntheticSpec& s) { s.variables = 65; });
  bad([](SyntheticSpec& s) { s.width = 1; });
  bad([](SyntheticSpec& s) { s.strength = -1; });
  bad([](SyntheticSpec& s) { s.size = 0; });
  bad([](SyntheticSpec& s) { s.widths = {2, 2}; });
  EXPECT_THROW(synthetic_spec_from_json(json{{"kind", "mixture"}}), ConfigError);
  EXPECT_THROW(synthetic_spec_from_json(json{{"classes", "four"}}), ConfigError);
  const auto s = synthetic_spec_from_json(json{{"kind", "toy"}, {"size", 10}});
  EXPECT_EQ(s.kind, GeneratorKind::toy);
}
