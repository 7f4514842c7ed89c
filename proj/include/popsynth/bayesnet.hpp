#pragma once

// Discrete Bayesian networks: structure learning (Chow-Liu tree, greedy
// hill-climbing and exact dynamic programming under the MDL score), CPT
// estimation and ancestral sampling.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "popsynth/dataset.hpp"
#include "popsynth/error.hpp"
#include "popsynth/random.hpp"

namespace popsynth {

class Dag {
 public:
  Dag() = default;
  explicit Dag(std::size_t nodes) : parents_(nodes) {}

  std::size_t size() const noexcept { return parents_.size(); }
  const std::vector<std::size_t>& parents(std::size_t node) const { return parents_.at(node); }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& p : parents_) n += p.size();
    return n;
  }

  bool has_edge(std::size_t from, std::size_t to) const {
    const auto& p = parents_.at(to);
    return std::binary_search(p.begin(), p.end(), from);
  }

  void add_edge(std::size_t from, std::size_t to) {
    if (from >= size() || to >= size() || from == to) throw ConfigError("invalid edge");
    auto& p = parents_[to];
    auto it = std::lower_bound(p.begin(), p.end(), from);
    if (it == p.end() || *it != from) p.insert(it, from);
  }

  void remove_edge(std::size_t from, std::size_t to) {
    auto& p = parents_.at(to);
    auto it = std::lower_bound(p.begin(), p.end(), from);
    if (it != p.end() && *it == from) p.erase(it);
  }

  void set_parents(std::size_t node, std::vector<std::size_t> parents) {
    std::sort(parents.begin(), parents.end());
    parents_.at(node) = std::move(parents);
  }

  /// True when a directed path leads from `from` to `to` (including from == to).
  bool reachable(std::size_t from, std::size_t to) const {
    std::vector<std::vector<std::size_t>> children(size());
    for (std::size_t v = 0; v < size(); ++v)
      for (std::size_t p : parents_[v]) children[p].push_back(v);
    std::vector<char> seen(size(), 0);
    std::vector<std::size_t> stack{from};
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      if (v == to) return true;
      if (seen[v]) continue;
      seen[v] = 1;
      for (std::size_t c : children[v]) stack.push_back(c);
    }
    return false;
  }

  /// Kahn's algorithm, lowest index first among ready nodes.
  std::optional<std::vector<std::size_t>> topological_order() const {
    std::vector<std::size_t> indegree(size());
    std::vector<std::vector<std::size_t>> children(size());
    for (std::size_t v = 0; v < size(); ++v) {
      indegree[v] = parents_[v].size();
      for (std::size_t p : parents_[v]) {
        if (p >= size()) return std::nullopt;
        children[p].push_back(v);
      }
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t v = 0; v < size(); ++v)
      if (indegree[v] == 0) ready.push(v);
    std::vector<std::size_t> order;
    while (!ready.empty()) {
      const std::size_t v = ready.top();
      ready.pop();
      order.push_back(v);
      for (std::size_t c : children[v])
        if (--indegree[c] == 0) ready.push(c);
    }
    if (order.size() != size()) return std::nullopt;
    return order;
  }

  bool is_acyclic() const { return topological_order().has_value(); }

  friend bool operator==(const Dag&, const Dag&) = default;

 private:
  std::vector<std::vector<std::size_t>> parents_;
};

// ---------------------------------------------------------------------------
// Scores

/// Empirical mutual information (nats) between columns i and j.
inline double mutual_information(const CategoricalData& data, std::size_t i, std::size_t j) {
  if (data.size() == 0) throw InsufficientDataError("mutual information of an empty pool");
  const auto di = static_cast<std::size_t>(data.cardinality.at(i));
  const auto dj = static_cast<std::size_t>(data.cardinality.at(j));
  std::vector<double> joint(di * dj, 0.0), pi(di, 0.0), pj(dj, 0.0);
  for (const auto& r : data.rows) {
    joint[static_cast<std::size_t>(r[i]) * dj + static_cast<std::size_t>(r[j])] += 1.0;
    pi[static_cast<std::size_t>(r[i])] += 1.0;
    pj[static_cast<std::size_t>(r[j])] += 1.0;
  }
  const double n = static_cast<double>(data.size());
  double mi = 0.0;
  for (std::size_t a = 0; a < di; ++a)
    for (std::size_t b = 0; b < dj; ++b) {
      const double c = joint[a * dj + b];
      if (c > 0) mi += c / n * std::log(c * n / (pi[a] * pj[b]));
    }
  return std::max(mi, 0.0);
}

/// Log-likelihood of node `v` under maximum-likelihood CPTs given `parents`,
/// minus (log N / 2) times its free-parameter count (D_v - 1) * prod D_p.
inline double local_mdl(const CategoricalData& data, std::size_t v, std::span<const std::size_t> parents) {
  const std::size_t n = data.size();
  if (n == 0) throw InsufficientDataError("MDL score of an empty pool");
  const auto dv = static_cast<std::uint64_t>(data.cardinality[v]);
  double configs = 1.0;
  for (std::size_t p : parents) configs *= data.cardinality[p];

  std::vector<std::uint64_t> keys(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::uint64_t c = 0;
    for (std::size_t p : parents)
      c = c * static_cast<std::uint64_t>(data.cardinality[p]) + static_cast<std::uint64_t>(data.rows[r][p]);
    keys[r] = c * dv + static_cast<std::uint64_t>(data.rows[r][v]);
  }
  std::sort(keys.begin(), keys.end());

  double ll = 0.0;
  std::size_t r = 0;
  while (r < n) {
    const std::uint64_t config = keys[r] / dv;
    double group = 0.0;
    while (r < n && keys[r] / dv == config) {
      const std::uint64_t key = keys[r];
      std::size_t run = 0;
      while (r < n && keys[r] == key) ++run, ++r;
      const double c = static_cast<double>(run);
      ll += c * std::log(c);
      group += c;
    }
    ll -= group * std::log(group);
  }
  const double free_params = (static_cast<double>(dv) - 1.0) * configs;
  return ll - 0.5 * std::log(static_cast<double>(n)) * free_params;
}

/// Decomposable MDL score of a DAG; higher is better.
inline double mdl_score(const Dag& dag, const CategoricalData& data) {
  if (dag.size() != data.variables()) throw SchemaMismatchError("DAG and data disagree on variable count");
  double s = 0.0;
  for (std::size_t v = 0; v < dag.size(); ++v) s += local_mdl(data, v, dag.parents(v));
  return s;
}

// ---------------------------------------------------------------------------
// Structure learning

/// Maximum spanning tree over pairwise mutual information, rooted at node 0
/// with edges directed away from the root. Equal weights prefer the
/// lexicographically lowest (i, j).
inline Dag chow_liu(const CategoricalData& data) {
  const std::size_t n = data.variables();
  if (n < 2) throw ConfigError("Chow-Liu needs at least two variables");
  if (data.size() == 0) throw InsufficientDataError("Chow-Liu on an empty pool");
  struct Edge {
    double weight;
    std::size_t i, j;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back({mutual_information(data, i, j), i, j});
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.weight > b.weight; });

  std::vector<std::size_t> root(n);
  std::iota(root.begin(), root.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (root[x] != x) x = root[x] = root[root[x]];
    return x;
  };
  std::vector<std::vector<std::size_t>> adjacent(n);
  for (const auto& e : edges) {
    const auto a = find(e.i), b = find(e.j);
    if (a == b) continue;
    root[a] = b;
    adjacent[e.i].push_back(e.j);
    adjacent[e.j].push_back(e.i);
  }

  Dag dag(n);
  std::vector<char> visited(n, 0);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  visited[0] = 1;
  while (!frontier.empty()) {
    const std::size_t v = frontier.front();
    frontier.pop();
    auto nbrs = adjacent[v];
    std::sort(nbrs.begin(), nbrs.end());
    for (std::size_t w : nbrs) {
      if (visited[w]) continue;
      visited[w] = 1;
      dag.add_edge(v, w);
      frontier.push(w);
    }
  }
  return dag;
}

struct StructureOptions {
  std::optional<std::size_t> max_parents;
};

namespace detail {

class LocalScoreCache {
 public:
  explicit LocalScoreCache(const CategoricalData& data) : data_(data) {}

  double operator()(std::size_t v, std::vector<std::size_t> parents) {
    std::sort(parents.begin(), parents.end());
    auto key = std::make_pair(v, parents);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const double s = local_mdl(data_, v, parents);
    cache_.emplace(std::move(key), s);
    return s;
  }

 private:
  const CategoricalData& data_;
  std::map<std::pair<std::size_t, std::vector<std::size_t>>, double> cache_;
};

inline std::vector<std::size_t> with(std::vector<std::size_t> s, std::size_t x) {
  s.push_back(x);
  return s;
}

inline std::vector<std::size_t> without(std::vector<std::size_t> s, std::size_t x) {
  s.erase(std::remove(s.begin(), s.end(), x), s.end());
  return s;
}

}  // namespace detail

/// Hill climbing from the empty graph over single-edge additions, removals
/// and reversals, taking the best improving move until none improves the
/// MDL score. Every intermediate graph is acyclic.
inline Dag greedy_search(const CategoricalData& data, const StructureOptions& options = {}) {
  const std::size_t n = data.variables();
  if (data.size() == 0) throw InsufficientDataError("greedy search on an empty pool");
  const std::size_t cap = options.max_parents.value_or(n);
  detail::LocalScoreCache local(data);
  Dag dag(n);
  constexpr double kMinGain = 1e-9;

  enum class Move { add, remove, reverse };
  for (;;) {
    double best_gain = kMinGain;
    std::optional<std::tuple<Move, std::size_t, std::size_t>> best;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const auto& pj = dag.parents(j);
        if (dag.has_edge(i, j)) {
          const double removal = local(j, detail::without(pj, i)) - local(j, pj);
          if (removal > best_gain) {
            best_gain = removal;
            best = {Move::remove, i, j};
          }
          const auto& pi = dag.parents(i);
          if (pi.size() < cap) {
            Dag trial = dag;
            trial.remove_edge(i, j);
            if (!trial.reachable(i, j)) {
              const double reversal = removal + local(i, detail::with(pi, j)) - local(i, pi);
              if (reversal > best_gain) {
                best_gain = reversal;
                best = {Move::reverse, i, j};
              }
            }
          }
        } else if (!dag.has_edge(j, i) && pj.size() < cap && !dag.reachable(j, i)) {
          const double addition = local(j, detail::with(pj, i)) - local(j, pj);
          if (addition > best_gain) {
            best_gain = addition;
            best = {Move::add, i, j};
          }
        }
      }
    }
    if (!best) break;
    const auto [move, i, j] = *best;
    switch (move) {
      case Move::add:
        dag.add_edge(i, j);
        break;
      case Move::remove:
        dag.remove_edge(i, j);
        break;
      case Move::reverse:
        dag.remove_edge(i, j);
        dag.add_edge(j, i);
        break;
    }
  }
  return dag;
}

inline constexpr std::size_t kDefaultExactLimit = 12;

/// Globally MDL-optimal DAG by dynamic programming over variable subsets:
/// best parent set of every node within every candidate subset, then the best
/// sink order. Memory and time grow as n * 2^n.
inline Dag exact_search(const CategoricalData& data, std::size_t max_vars = kDefaultExactLimit,
                        const StructureOptions& options = {}) {
  const std::size_t n = data.variables();
  if (n > max_vars || n >= 31)
    throw ExactSearchLimitError("exact structure search is limited to " + std::to_string(max_vars) +
                                " variables (got " + std::to_string(n) + "); use greedy search");
  if (data.size() == 0) throw InsufficientDataError("exact search on an empty pool");
  if (n == 0) return Dag(0);
  const std::size_t cap = options.max_parents.value_or(n);
  const std::size_t m = n - 1;
  const std::size_t subsets = std::size_t{1} << m;
  constexpr double kNone = -std::numeric_limits<double>::infinity();

  // best_parents[v][mask]: best parent set (as mask over the other nodes) within mask.
  std::vector<std::vector<double>> best_score(n, std::vector<double>(subsets, kNone));
  std::vector<std::vector<std::uint32_t>> best_set(n, std::vector<std::uint32_t>(subsets, 0));
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<std::size_t> others;
    for (std::size_t u = 0; u < n; ++u)
      if (u != v) others.push_back(u);
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) <= cap) {
        std::vector<std::size_t> parents;
        for (std::size_t b = 0; b < m; ++b)
          if (mask >> b & 1U) parents.push_back(others[b]);
        best_score[v][mask] = local_mdl(data, v, parents);
        best_set[v][mask] = static_cast<std::uint32_t>(mask);
      }
      for (std::size_t b = 0; b < m; ++b) {
        if (!(mask >> b & 1U)) continue;
        const std::size_t sub = mask ^ (std::size_t{1} << b);
        if (best_score[v][sub] > best_score[v][mask]) {
          best_score[v][mask] = best_score[v][sub];
          best_set[v][mask] = best_set[v][sub];
        }
      }
    }
  }

  auto local_mask = [](std::size_t mask, std::size_t v) {
    return (mask & ((std::size_t{1} << v) - 1)) | ((mask >> (v + 1)) << v);
  };
  const std::size_t full = (std::size_t{1} << n) - 1;
  std::vector<double> order_score(full + 1, kNone);
  std::vector<std::uint8_t> sink(full + 1, 0);
  order_score[0] = 0.0;
  for (std::size_t s = 1; s <= full; ++s) {
    for (std::size_t v = 0; v < n; ++v) {
      if (!(s >> v & 1U)) continue;
      const std::size_t rest = s ^ (std::size_t{1} << v);
      const double cand = order_score[rest] + best_score[v][local_mask(rest, v)];
      if (cand > order_score[s]) {
        order_score[s] = cand;
        sink[s] = static_cast<std::uint8_t>(v);
      }
    }
  }

  Dag dag(n);
  for (std::size_t s = full; s != 0;) {
    const std::size_t v = sink[s];
    const std::size_t rest = s ^ (std::size_t{1} << v);
    const std::uint32_t pm = best_set[v][local_mask(rest, v)];
    std::vector<std::size_t> parents;
    for (std::size_t b = 0; b < m; ++b)
      if (pm >> b & 1U) parents.push_back(b < v ? b : b + 1);
    dag.set_parents(v, std::move(parents));
    s = rest;
  }
  return dag;
}

// ---------------------------------------------------------------------------
// Parameters and sampling

struct Cpt {
  std::vector<std::size_t> parents;
  std::vector<int> parent_cardinality;
  int cardinality = 0;
  std::map<std::uint64_t, std::vector<double>> observed;  // parent configuration -> P(node | config)

  std::uint64_t configuration(const std::vector<int>& row) const {
    std::uint64_t c = 0;
    for (std::size_t k = 0; k < parents.size(); ++k)
      c = c * static_cast<std::uint64_t>(parent_cardinality[k]) + static_cast<std::uint64_t>(row[parents[k]]);
    return c;
  }

  /// Maximum-likelihood frequencies for observed parent configurations; an
  /// unobserved configuration gets pseudo-count 1 per value, i.e. uniform.
  std::vector<double> distribution(std::uint64_t config) const {
    auto it = observed.find(config);
    if (it != observed.end()) return it->second;
    return std::vector<double>(static_cast<std::size_t>(cardinality), 1.0 / cardinality);
  }
};

struct CptSet {
  std::vector<Cpt> nodes;
};

inline CptSet fit_cpts(const Dag& dag, const CategoricalData& data) {
  if (dag.size() != data.variables()) throw SchemaMismatchError("DAG and data disagree on variable count");
  if (data.size() == 0) throw InsufficientDataError("cannot fit CPTs to an empty pool");
  CptSet set;
  for (std::size_t v = 0; v < dag.size(); ++v) {
    Cpt cpt;
    cpt.parents = dag.parents(v);
    for (std::size_t p : cpt.parents) cpt.parent_cardinality.push_back(data.cardinality[p]);
    cpt.cardinality = data.cardinality[v];
    for (const auto& row : data.rows) {
      auto& counts = cpt.observed[cpt.configuration(row)];
      if (counts.empty()) counts.assign(static_cast<std::size_t>(cpt.cardinality), 0.0);
      counts[static_cast<std::size_t>(row[v])] += 1.0;
    }
    for (auto& [config, p] : cpt.observed) {
      const double total = std::accumulate(p.begin(), p.end(), 0.0);
      for (double& x : p) x /= total;
    }
    set.nodes.push_back(std::move(cpt));
  }
  return set;
}

/// P(row) under the factorization.
inline double joint_probability(const CptSet& cpts, const std::vector<int>& row) {
  double p = 1.0;
  for (std::size_t v = 0; v < cpts.nodes.size(); ++v)
    p *= cpts.nodes[v].distribution(cpts.nodes[v].configuration(row))[static_cast<std::size_t>(row[v])];
  return p;
}

inline std::vector<std::vector<int>> ancestral_sample(const Dag& dag, const CptSet& cpts, std::size_t count,
                                                      Rng& rng) {
  const auto order = dag.topological_order();
  if (!order) throw ConfigError("network structure is cyclic");
  std::vector<std::vector<int>> rows;
  rows.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<int> row(dag.size(), 0);
    for (std::size_t v : *order) {
      const auto& cpt = cpts.nodes[v];
      row[v] = static_cast<int>(sample_index(cpt.distribution(cpt.configuration(row)), rng));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

enum class StructureAlgorithm { chow_liu, greedy, exact };

inline std::string_view to_string(StructureAlgorithm a) {
  switch (a) {
    case StructureAlgorithm::chow_liu:
      return "chow-liu";
    case StructureAlgorithm::greedy:
      return "greedy";
    case StructureAlgorithm::exact:
      return "exact";
  }
  return "?";
}

inline StructureAlgorithm parse_structure_algorithm(std::string_view s) {
  if (s == "chow-liu" || s == "tree") return StructureAlgorithm::chow_liu;
  if (s == "greedy") return StructureAlgorithm::greedy;
  if (s == "exact") return StructureAlgorithm::exact;
  throw ConfigError("unknown structure algorithm '" + std::string(s) + "'");
}

struct BayesNetModel {
  StructureAlgorithm algorithm = StructureAlgorithm::chow_liu;
  Dag dag;
  CptSet cpts;
  double score = 0.0;
  double runtime_seconds = 0.0;
};

inline Dag learn_structure(const CategoricalData& data, StructureAlgorithm algorithm,
                           const StructureOptions& options = {}) {
  switch (algorithm) {
    case StructureAlgorithm::chow_liu:
      return chow_liu(data);
    case StructureAlgorithm::greedy:
      return greedy_search(data, options);
    case StructureAlgorithm::exact:
      return exact_search(data, kDefaultExactLimit, options);
  }
  throw ConfigError("unknown structure algorithm");
}

inline json bayesnet_to_json(const BayesNetModel& m) {
  json nodes = json::array();
  for (std::size_t v = 0; v < m.dag.size(); ++v) {
    const auto& cpt = m.cpts.nodes[v];
    json table = json::array();
    for (const auto& [config, p] : cpt.observed) table.push_back({{"config", config}, {"p", p}});
    nodes.push_back({{"node", v},
                     {"parents", cpt.parents},
                     {"parent_cardinality", cpt.parent_cardinality},
                     {"cardinality", cpt.cardinality},
                     {"table", table}});
  }
  return {{"format", "popsynth-bn"},
          {"version", 1},
          {"algorithm", std::string(to_string(m.algorithm))},
          {"score", m.score},
          {"runtime_seconds", m.runtime_seconds},
          {"nodes", nodes}};
}

inline BayesNetModel bayesnet_from_json(const json& j) {
  try {
    BayesNetModel m;
    m.algorithm = parse_structure_algorithm(j.at("algorithm").get<std::string>());
    m.score = j.at("score").get<double>();
    m.runtime_seconds = j.value("runtime_seconds", 0.0);
    const auto& nodes = j.at("nodes");
    m.dag = Dag(nodes.size());
    for (std::size_t v = 0; v < nodes.size(); ++v) {
      const auto& jn = nodes[v];
      Cpt cpt;
      cpt.parents = jn.at("parents").get<std::vector<std::size_t>>();
      cpt.parent_cardinality = jn.at("parent_cardinality").get<std::vector<int>>();
      cpt.cardinality = jn.at("cardinality").get<int>();
      for (const auto& e : jn.at("table"))
        cpt.observed.emplace(e.at("config").get<std::uint64_t>(), e.at("p").get<std::vector<double>>());
      m.dag.set_parents(v, cpt.parents);
      m.cpts.nodes.push_back(std::move(cpt));
    }
    if (!m.dag.is_acyclic()) throw ConfigError("serialized network is cyclic");
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed network document: ") + e.what());
  }
}

}  // namespace popsynth
