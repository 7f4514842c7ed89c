#pragma once

// Reference generators: independent per-variable marginals, and uniform
// resampling of the training rows.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "popsynth/dataset.hpp"
#include "popsynth/error.hpp"
#include "popsynth/random.hpp"

namespace popsynth {

struct MarginalModel {
  std::vector<std::vector<double>> probabilities;  // per variable, over its categories or bins
};

inline MarginalModel fit_marginals(const CategoricalData& data) {
  if (data.size() == 0) throw InsufficientDataError("cannot fit marginals to an empty pool");
  MarginalModel m;
  for (std::size_t v = 0; v < data.variables(); ++v) {
    std::vector<double> p(static_cast<std::size_t>(data.cardinality[v]), 0.0);
    for (const auto& row : data.rows) p[static_cast<std::size_t>(row[v])] += 1.0;
    for (double& x : p) x /= static_cast<double>(data.size());
    m.probabilities.push_back(std::move(p));
  }
  return m;
}

inline std::vector<std::vector<int>> marginal_sample(const MarginalModel& model, std::size_t count, Rng& rng) {
  std::vector<std::vector<int>> rows(count, std::vector<int>(model.probabilities.size()));
  for (auto& row : rows)
    for (std::size_t v = 0; v < row.size(); ++v)
      row[v] = static_cast<int>(sample_index(model.probabilities[v], rng));
  return rows;
}

/// Every variable drawn independently; numericals uniformly inside the drawn bin.
inline AgentPool marginal_sample(const SchemaPtr& schema, const MarginalModel& model, std::size_t count,
                                 std::uint64_t seed) {
  Rng rng(seed);
  const auto codes = marginal_sample(model, count, rng);
  return from_categorical(schema, codes, Provenance::generated, rng);
}

/// I.i.d. uniform draws with replacement from the training rows.
inline AgentPool resample_training(const AgentPool& train, std::size_t count, std::uint64_t seed) {
  if (train.empty()) throw InsufficientDataError("cannot resample an empty training pool");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  AgentPool out{train.schema, {}, Provenance::generated};
  out.rows.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.rows.push_back(train.rows[pick(rng)]);
  return out;
}

inline json marginals_to_json(const MarginalModel& m) {
  return {{"format", "popsynth-marginals"}, {"version", 1}, {"probabilities", m.probabilities}};
}

inline MarginalModel marginals_from_json(const json& j) {
  try {
    return {j.at("probabilities").get<std::vector<std::vector<double>>>()};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed marginal model: ") + e.what());
  }
}

}  // namespace popsynth
