#pragma once

// Systematic-scan Gibbs sampler whose full conditionals are frequency tables
// counted from the training pool.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "popsynth/dataset.hpp"
#include "popsynth/error.hpp"
#include "popsynth/random.hpp"

namespace popsynth {

/// Values of all variables except the target, in schema order.
using Context = std::vector<int>;

struct ConditionalTable {
  std::size_t target = 0;
  int cardinality = 0;
  std::map<Context, std::vector<double>> probabilities;

  const std::vector<double>* find(const Context& ctx) const {
    auto it = probabilities.find(ctx);
    return it == probabilities.end() ? nullptr : &it->second;
  }
};

inline Context context_of(const std::vector<int>& row, std::size_t target) {
  Context ctx;
  ctx.reserve(row.size() - 1);
  for (std::size_t i = 0; i < row.size(); ++i)
    if (i != target) ctx.push_back(row[i]);
  return ctx;
}

inline std::vector<ConditionalTable> estimate_conditionals(const CategoricalData& train) {
  if (train.size() == 0) throw InsufficientDataError("cannot estimate conditionals from an empty pool");
  std::vector<ConditionalTable> tables(train.variables());
  for (std::size_t i = 0; i < tables.size(); ++i) {
    auto& t = tables[i];
    t.target = i;
    t.cardinality = train.cardinality[i];
    for (const auto& row : train.rows) {
      auto& counts = t.probabilities[context_of(row, i)];
      if (counts.empty()) counts.assign(static_cast<std::size_t>(t.cardinality), 0.0);
      counts[static_cast<std::size_t>(row[i])] += 1.0;
    }
    for (auto& [ctx, p] : t.probabilities) {
      double total = 0.0;
      for (double c : p) total += c;
      for (double& c : p) c /= total;
    }
  }
  return tables;
}

/// Numericals are binned with the schema edges before counting.
inline std::vector<ConditionalTable> estimate_conditionals(const AgentPool& train) {
  return estimate_conditionals(to_categorical(train));
}

/// One sweep: every variable in schema order is redrawn from its conditional
/// given the freshest values of the others.
inline void gibbs_step(std::vector<int>& state, const std::vector<ConditionalTable>& tables, Rng& rng) {
  if (state.size() != tables.size()) throw SchemaMismatchError("chain state width does not match tables");
  for (const auto& t : tables) {
    const auto* p = t.find(context_of(state, t.target));
    if (!p)
      throw UnreachableContextError("context for variable " + std::to_string(t.target) +
                                    " was never observed in training");
    state[t.target] = static_cast<int>(sample_index(*p, rng));
  }
}

struct ChainStats {
  std::uint64_t iterations = 0;
  std::uint64_t restarts = 0;
};

/// Drives a chain: `warmup` discarded iterations, then `count` kept states,
/// one every `thinning` iterations. `step(state)` advances the state and
/// `emit(state)` receives each kept one. Iterations total warmup + thinning*count.
template <class Step, class Emit>
ChainStats run_chain_with(std::vector<int> state, std::size_t warmup, std::size_t thinning, std::size_t count,
                          Step&& step, Emit&& emit) {
  if (thinning < 1) throw ConfigError("thinning interval must be at least 1");
  ChainStats stats;
  for (std::size_t k = 0; k < warmup; ++k) {
    step(state);
    ++stats.iterations;
  }
  for (std::size_t c = 0; c < count; ++c) {
    for (std::size_t k = 0; k < thinning; ++k) {
      step(state);
      ++stats.iterations;
    }
    emit(state);
  }
  return stats;
}

struct ChainConfig {
  std::size_t warmup = 20000;
  std::size_t thinning = 20;
  std::size_t target_count = 0;
  std::size_t chains = 1;                // each from a random training row unless `starts` given
  std::vector<std::vector<int>> starts;  // explicit initial rows, one per chain
  bool restart_on_unreachable = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (thinning < 1) throw ConfigError("thinning interval must be at least 1");
    if (chains < 1 && starts.empty()) throw ConfigError("at least one chain is required");
  }
};

struct ChainDiagnostics {
  std::uint64_t iterations = 0;
  std::uint64_t restarts = 0;
  std::size_t chains = 0;
  std::size_t distinct_rows = 0;
};

inline json to_json(const ChainDiagnostics& d) {
  return {{"iterations", d.iterations},
          {"restarts", d.restarts},
          {"chains", d.chains},
          {"distinct_rows", d.distinct_rows}};
}

struct ChainResult {
  std::vector<std::vector<int>> rows;
  ChainDiagnostics diagnostics;
};

/// Runs the configured chains and splits `target_count` evenly between them.
/// `train` supplies random starting rows and restart points.
inline ChainResult run_chain(const std::vector<ConditionalTable>& tables, const CategoricalData& train,
                             const ChainConfig& config) {
  config.validate();
  const std::size_t chains = config.starts.empty() ? config.chains : config.starts.size();
  if (config.starts.empty() && train.size() == 0)
    throw InsufficientDataError("no training rows to start the chain from");
  ChainResult result;
  result.diagnostics.chains = chains;
  for (std::size_t c = 0; c < chains; ++c) {
    Rng rng(derive_seed(config.seed, c));
    const std::size_t count = config.target_count / chains + (c < config.target_count % chains ? 1 : 0);
    auto random_train_row = [&] {
      return train.rows[std::uniform_int_distribution<std::size_t>(0, train.size() - 1)(rng)];
    };
    std::vector<int> start = config.starts.empty() ? random_train_row() : config.starts[c];
    std::uint64_t restarts = 0;
    auto step = [&](std::vector<int>& state) {
      try {
        gibbs_step(state, tables, rng);
      } catch (const UnreachableContextError&) {
        if (!config.restart_on_unreachable || train.size() == 0) throw;
        state = random_train_row();
        ++restarts;
      }
    };
    auto emit = [&](const std::vector<int>& state) { result.rows.push_back(state); };
    const ChainStats s = run_chain_with(std::move(start), config.warmup, config.thinning, count, step, emit);
    result.diagnostics.iterations += s.iterations;
    result.diagnostics.restarts += restarts;
  }
  result.diagnostics.distinct_rows = std::set<std::vector<int>>(result.rows.begin(), result.rows.end()).size();
  return result;
}

struct GibbsOutput {
  AgentPool pool;
  ChainDiagnostics diagnostics;
};

/// Fits tables to `train` and samples a pool. Numerical bins are mapped back to
/// uniform values inside the bin.
inline GibbsOutput gibbs_sample(const AgentPool& train, const ChainConfig& config) {
  const CategoricalData codes = to_categorical(train);
  const auto tables = estimate_conditionals(codes);
  auto chain = run_chain(tables, codes, config);
  Rng rng(derive_seed(config.seed, "gibbs/values"));
  return {from_categorical(train.schema, chain.rows, Provenance::generated, rng), chain.diagnostics};
}

inline json tables_to_json(const std::vector<ConditionalTable>& tables) {
  json out = json::array();
  for (const auto& t : tables) {
    json entries = json::array();
    for (const auto& [ctx, p] : t.probabilities) entries.push_back({{"context", ctx}, {"p", p}});
    out.push_back({{"target", t.target}, {"cardinality", t.cardinality}, {"entries", entries}});
  }
  return out;
}

inline std::vector<ConditionalTable> tables_from_json(const json& j) {
  std::vector<ConditionalTable> tables;
  for (const auto& jt : j) {
    ConditionalTable t;
    t.target = jt.at("target").get<std::size_t>();
    t.cardinality = jt.at("cardinality").get<int>();
    for (const auto& e : jt.at("entries"))
      t.probabilities.emplace(e.at("context").get<Context>(), e.at("p").get<std::vector<double>>());
    tables.push_back(std::move(t));
  }
  return tables;
}

}  // namespace popsynth
