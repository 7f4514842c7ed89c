#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "popsynth/bayesnet.hpp"

using namespace popsynth;
using namespace testutil;

namespace {

CategoricalData toy_codes(int each) {
  CategoricalData d{{2, 2}, {}};
  for (int k = 0; k < each; ++k) {
    d.rows.push_back({0, 0});
    d.rows.push_back({1, 1});
  }
  return d;
}

/// Hand-specified network; tables[v][config] over node v's values.
CptSet make_cpts(const Dag& dag, const std::vector<int>& card, const std::vector<std::vector<std::vector<double>>>& tables) {
  CptSet set;
  for (std::size_t v = 0; v < dag.size(); ++v) {
    Cpt c;
    c.parents = dag.parents(v);
    for (std::size_t p : c.parents) c.parent_cardinality.push_back(card[p]);
    c.cardinality = card[v];
    for (std::size_t k = 0; k < tables[v].size(); ++k) c.observed[k] = tables[v][k];
    set.nodes.push_back(std::move(c));
  }
  return set;
}

CategoricalData sample_codes(const Dag& dag, const CptSet& cpts, const std::vector<int>& card, std::size_t n,
                             std::uint64_t seed) {
  Rng rng(seed);
  return {card, ancestral_sample(dag, cpts, n, rng)};
}

std::vector<std::pair<std::size_t, std::size_t>> skeleton(const Dag& d) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t v = 0; v < d.size(); ++v)
    for (std::size_t p : d.parents(v)) e.emplace_back(std::min(p, v), std::max(p, v));
  std::sort(e.begin(), e.end());
  return e;
}

CategoricalData independent_codes(std::size_t vars, int card, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  CategoricalData d{std::vector<int>(vars, card), {}};
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<int> r(vars);
    for (auto& x : r) x = std::uniform_int_distribution<int>(0, card - 1)(rng);
    d.rows.push_back(r);
  }
  return d;
}

}  // namespace

TEST(MutualInformation, Cases) {
  CategoricalData indep{{2, 2}, {{0, 0}, {0, 1}, {1, 0}, {1, 1}}};
  EXPECT_NEAR(mutual_information(indep, 0, 1), 0.0, 1e-15);
  CategoricalData same{{2, 2}, {{0, 0}, {1, 1}}};
  EXPECT_NEAR(mutual_information(same, 0, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(mutual_information(toy_codes(500), 0, 1), std::log(2.0), 1e-15);
  const auto r = independent_codes(3, 3, 200, 4);
  EXPECT_DOUBLE_EQ(mutual_information(r, 0, 2), mutual_information(r, 2, 0));
  EXPECT_GE(mutual_information(r, 0, 1), 0.0);
  EXPECT_THROW(mutual_information(CategoricalData{{2, 2}, {}}, 0, 1), InsufficientDataError);
}

TEST(Mdl, PenaltyAndLikelihoodByHand) {
  const auto d = toy_codes(500);
  Dag empty(2), connected(2);
  connected.add_edge(0, 1);
  const double n = 1000;
  const double ll_empty = 2 * n * std::log(0.5);
  EXPECT_NEAR(mdl_score(empty, d), ll_empty - 0.5 * std::log(n) * 2, 1e-9);
  EXPECT_NEAR(mdl_score(connected, d), n * std::log(0.5) - 0.5 * std::log(n) * 3, 1e-9);
}

TEST(Mdl, ToyConnectedBeatsDisconnectedAndDirectionsTie) {
  const auto d = toy_codes(500);
  Dag empty(2), xy(2), yx(2);
  xy.add_edge(0, 1);
  yx.add_edge(1, 0);
  EXPECT_GT(mdl_score(xy, d), mdl_score(empty, d));
  EXPECT_NEAR(mdl_score(xy, d), mdl_score(yx, d), 1e-9);
}

TEST(Mdl, EmptyGraphWinsOnProductDistribution) {
  // Exact product table: every combination equally often.
  CategoricalData d{{3, 3}, {}};
  for (int k = 0; k < 50; ++k)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) d.rows.push_back({a, b});
  Dag empty(2), edge(2);
  edge.add_edge(0, 1);
  EXPECT_GE(mdl_score(empty, d), mdl_score(edge, d));
}

TEST(ChowLiu, TwoVariables) {
  const Dag d = chow_liu(toy_codes(10));
  EXPECT_TRUE(d.has_edge(0, 1));
  EXPECT_EQ(d.edge_count(), 1u);
}

TEST(ChowLiu, RecoversChainSkeleton) {
  Dag chain(3);
  chain.add_edge(0, 1);
  chain.add_edge(1, 2);
  const std::vector<int> card{2, 2, 2};
  const auto cpts = make_cpts(chain, card,
                              {{{0.5, 0.5}}, {{0.9, 0.1}, {0.1, 0.9}}, {{0.85, 0.15}, {0.15, 0.85}}});
  const auto data = sample_codes(chain, cpts, card, 20000, 1);
  EXPECT_EQ(skeleton(chow_liu(data)), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 2}}));
  // brute force over the three spanning trees on 3 nodes
  const double m01 = mutual_information(data, 0, 1), m02 = mutual_information(data, 0, 2),
               m12 = mutual_information(data, 1, 2);
  EXPECT_GT(m01 + m12, m01 + m02);
  EXPECT_GT(m01 + m12, m02 + m12);
}

TEST(ChowLiu, SpanningTreeProperties) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto d = independent_codes(6, 3, 300, s);
    const Dag t = chow_liu(d);
    EXPECT_EQ(t.edge_count(), 5u);
    EXPECT_TRUE(t.is_acyclic());
    EXPECT_TRUE(t.parents(0).empty());
    for (std::size_t v = 1; v < 6; ++v) {
      EXPECT_EQ(t.parents(v).size(), 1u);
      EXPECT_TRUE(t.reachable(0, v));
    }
  }
  EXPECT_THROW(chow_liu(CategoricalData{{2}, {{0}}}), ConfigError);
}

TEST(Greedy, IndependentDataGivesEmptyGraph) {
  EXPECT_EQ(greedy_search(independent_codes(5, 3, 2000, 3)).edge_count(), 0u);
}

TEST(Greedy, ToyGivesConnectedGraph) {
  const Dag d = greedy_search(toy_codes(500));
  EXPECT_EQ(d.edge_count(), 1u);
  EXPECT_TRUE(d.has_edge(0, 1) || d.has_edge(1, 0));
}

TEST(Greedy, AtLeastChowLiuScoreAndAcyclic) {
  Rng rng(5);
  for (std::uint64_t s = 0; s < 4; ++s) {
    CategoricalData d{{3, 3, 2, 3, 2, 2}, {}};
    for (int k = 0; k < 800; ++k) {
      const int a = std::uniform_int_distribution<int>(0, 2)(rng);
      const int b = (a + (uniform01(rng) < 0.8 ? 0 : 1)) % 3;
      const int c = uniform01(rng) < 0.7 ? b % 2 : 1 - b % 2;
      const int e = std::uniform_int_distribution<int>(0, 2)(rng);
      const int f = uniform01(rng) < 0.9 ? (a + e) % 2 : 1 - (a + e) % 2;
      d.rows.push_back({a, b, c, e, f, std::uniform_int_distribution<int>(0, 1)(rng)});
    }
    const Dag g = greedy_search(d);
    EXPECT_TRUE(g.is_acyclic());
    EXPECT_GE(mdl_score(g, d), mdl_score(chow_liu(d), d) - 1e-9);
    EXPECT_GE(mdl_score(g, d), mdl_score(Dag(6), d));
    StructureOptions cap{1};
    const Dag g1 = greedy_search(d, cap);
    for (std::size_t v = 0; v < 6; ++v) EXPECT_LE(g1.parents(v).size(), 1u);
  }
}

TEST(Exact, SmallCases) {
  EXPECT_EQ(exact_search(independent_codes(2, 2, 5000, 1)).edge_count(), 0u);
  const auto toy = toy_codes(500);
  const Dag e = exact_search(toy);
  EXPECT_EQ(e.edge_count(), 1u);
  EXPECT_NEAR(mdl_score(e, toy), mdl_score(greedy_search(toy), toy), 1e-9);
  // exhaustive enumeration of the three 2-node structures
  Dag a(2), b(2), c(2);
  b.add_edge(0, 1);
  c.add_edge(1, 0);
  const double best = std::max({mdl_score(a, toy), mdl_score(b, toy), mdl_score(c, toy)});
  EXPECT_NEAR(mdl_score(e, toy), best, 1e-9);
}

TEST(Exact, VStructureScoresAtLeastTruth) {
  Dag v(4);
  v.add_edge(0, 2);
  v.add_edge(1, 2);
  v.add_edge(2, 3);
  const std::vector<int> card{2, 2, 2, 2};
  const auto cpts = make_cpts(v, card,
                              {{{0.5, 0.5}},
                               {{0.4, 0.6}},
                               {{0.95, 0.05}, {0.2, 0.8}, {0.25, 0.75}, {0.05, 0.95}},
                               {{0.8, 0.2}, {0.3, 0.7}}});
  const auto data = sample_codes(v, cpts, card, 5000, 2);
  const Dag e = exact_search(data);
  EXPECT_GE(mdl_score(e, data), mdl_score(v, data) - 1e-9);
  EXPECT_GE(mdl_score(e, data), mdl_score(greedy_search(data), data) - 1e-9);
  EXPECT_TRUE(e.is_acyclic());
}

TEST(Exact, OptimalOverAllThreeNodeDags) {
  const auto data = [] {
    Rng rng(3);
    CategoricalData d{{2, 3, 2}, {}};
    for (int k = 0; k < 400; ++k) {
      const int a = uniform01(rng) < 0.3 ? 1 : 0;
      const int b = uniform01(rng) < 0.7 ? a : std::uniform_int_distribution<int>(0, 2)(rng);
      const int c = uniform01(rng) < 0.8 ? (a ^ (b == 2)) : uniform01(rng) < 0.5;
      d.rows.push_back({a, b, c});
    }
    return d;
  }();
  double best = -std::numeric_limits<double>::infinity();
  // every DAG on 3 nodes: each ordered pair absent / present, keep the acyclic ones
  const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}, {1, 0}, {0, 2}, {2, 0}, {1, 2}, {2, 1}};
  for (int mask = 0; mask < 64; ++mask) {
    Dag d(3);
    for (int b = 0; b < 6; ++b)
      if (mask >> b & 1) d.add_edge(pairs[static_cast<std::size_t>(b)].first, pairs[static_cast<std::size_t>(b)].second);
    if (d.is_acyclic()) best = std::max(best, mdl_score(d, data));
  }
  EXPECT_NEAR(mdl_score(exact_search(data), data), best, 1e-9);
}

TEST(Exact, LimitError) {
  EXPECT_THROW(exact_search(independent_codes(13, 2, 10, 1)), ExactSearchLimitError);
  EXPECT_THROW(exact_search(independent_codes(5, 2, 10, 1), 4), ExactSearchLimitError);
  try {
    exact_search(independent_codes(13, 2, 10, 1));
  } catch (const ExactSearchLimitError& e) {
    EXPECT_NE(std::string(e.what()).find("greedy"), std::string::npos);
  }
}

TEST(Sampling, DeterministicCptsGiveIdenticalRows) {
  Dag d(3);
  d.add_edge(0, 1);
  const std::vector<int> card{2, 3, 2};
  const auto cpts = make_cpts(d, card, {{{0, 1}}, {{1, 0, 0}, {0, 0, 1}}, {{1, 0}}});
  const auto data = sample_codes(d, cpts, card, 100, 1);
  for (const auto& r : data.rows) EXPECT_EQ(r, (std::vector<int>{1, 2, 0}));
}

TEST(Sampling, ToyNetworkEmitsOnlyPrototypes) {
  const auto toy = toy_codes(500);
  const Dag d = chow_liu(toy);
  const auto cpts = fit_cpts(d, toy);
  Rng rng(6);
  const auto rows = ancestral_sample(d, cpts, 10000, rng);
  std::size_t s0 = 0;
  for (const auto& r : rows) {
    ASSERT_EQ(r[0], r[1]);
    s0 += r[0] == 0;
  }
  EXPECT_GE(s0, 4700u);
  EXPECT_LE(s0, 5300u);
}

TEST(Sampling, MatchesEnumeratedJoint) {
  Dag d(3);
  d.add_edge(0, 1);
  d.add_edge(0, 2);
  d.add_edge(1, 2);
  const std::vector<int> card{2, 3, 2};
  const auto cpts = make_cpts(d, card,
                              {{{0.35, 0.65}},
                               {{0.2, 0.5, 0.3}, {0.6, 0.1, 0.3}},
                               {{0.9, 0.1}, {0.4, 0.6}, {0.5, 0.5}, {0.1, 0.9}, {0.7, 0.3}, {0.25, 0.75}}});
  const auto data = sample_codes(d, cpts, card, 100000, 7);
  std::map<std::vector<int>, double> freq;
  for (const auto& r : data.rows) freq[r] += 1e-5;
  double tv = 0.0, mass = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 2; ++c) {
        const std::vector<int> row{a, b, c};
        const double p = joint_probability(cpts, row);
        mass += p;
        tv += std::abs(p - freq[row]);
      }
  EXPECT_NEAR(mass, 1.0, 1e-12);
  EXPECT_LT(0.5 * tv, 0.01);
}

TEST(Cpts, RefitReproducesTables) {
  Dag d(3);
  d.add_edge(0, 1);
  d.add_edge(1, 2);
  const std::vector<int> card{3, 2, 2};
  const auto cpts = make_cpts(d, card,
                              {{{0.2, 0.3, 0.5}}, {{0.9, 0.1}, {0.5, 0.5}, {0.2, 0.8}}, {{0.7, 0.3}, {0.1, 0.9}}});
  const auto data = sample_codes(d, cpts, card, 100000, 8);
  const auto refit = fit_cpts(d, data);
  for (std::size_t v = 0; v < 3; ++v)
    for (const auto& [config, p] : cpts.nodes[v].observed) {
      const auto q = refit.nodes[v].distribution(config);
      double tv = 0.0, sum = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        tv += std::abs(p[k] - q[k]);
        sum += q[k];
      }
      EXPECT_LT(0.5 * tv, 0.02);
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Cpts, UnseenConfigurationIsUniform) {
  Dag d(2);
  d.add_edge(0, 1);
  CategoricalData data{{3, 4}, {{0, 1}, {0, 2}, {1, 3}}};
  const auto cpts = fit_cpts(d, data);
  EXPECT_EQ(cpts.nodes[1].distribution(2), std::vector<double>(4, 0.25));
  EXPECT_EQ(cpts.nodes[1].distribution(0), (std::vector<double>{0, 0.5, 0.5, 0}));
}

TEST(Model, LearnAndSerialize) {
  const auto toy = toy_codes(500);
  for (auto alg : {StructureAlgorithm::chow_liu, StructureAlgorithm::greedy, StructureAlgorithm::exact}) {
    BayesNetModel m;
    m.algorithm = alg;
    m.dag = learn_structure(toy, alg);
    m.cpts = fit_cpts(m.dag, toy);
    m.score = mdl_score(m.dag, toy);
    const auto back = bayesnet_from_json(json::parse(bayesnet_to_json(m).dump()));
    EXPECT_EQ(back.dag, m.dag);
    EXPECT_EQ(back.algorithm, alg);
    EXPECT_EQ(back.score, m.score);
    EXPECT_EQ(back.cpts.nodes[1].observed, m.cpts.nodes[1].observed);
  }
  EXPECT_EQ(parse_structure_algorithm("tree"), StructureAlgorithm::chow_liu);
  EXPECT_THROW(parse_structure_algorithm("astar"), ConfigError);
}

TEST(Dag, CycleDetection) {
  Dag d(3);
  d.add_edge(0, 1);
  d.add_edge(1, 2);
  EXPECT_TRUE(d.is_acyclic());
  EXPECT_EQ(*d.topological_order(), (std::vector<std::size_t>{0, 1, 2}));
  d.add_edge(2, 0);
  EXPECT_FALSE(d.is_acyclic());
  EXPECT_THROW(d.add_edge(1, 1), ConfigError);
}
