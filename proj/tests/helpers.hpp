#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "popsynth/dataset.hpp"

namespace testutil {

using namespace popsynth;

inline VariableSpec cat(std::string name, int d) {
  VariableSpec v{std::move(name), VariableKind::categorical, {}, {}};
  for (int c = 0; c < d; ++c) v.categories.push_back("c" + std::to_string(c));
  return v;
}

inline VariableSpec num(std::string name, std::vector<double> edges, bool integer = false) {
  return {std::move(name), integer ? VariableKind::numerical_int : VariableKind::numerical_cont, std::move(edges), {}};
}

inline SchemaPtr make_schema(std::vector<VariableSpec> vars, SchemaMode mode = SchemaMode::discretize_all) {
  return std::make_shared<const Schema>(std::move(vars), mode);
}

inline SchemaPtr categorical_schema(const std::vector<int>& widths) {
  std::vector<VariableSpec> vars;
  for (std::size_t i = 0; i < widths.size(); ++i) vars.push_back(cat("v" + std::to_string(i), widths[i]));
  return make_schema(std::move(vars));
}

inline AgentPool pool_of(const SchemaPtr& schema, const std::vector<std::vector<int>>& codes,
                         Provenance p = Provenance::train) {
  AgentPool pool{schema, {}, p};
  for (const auto& c : codes) pool.rows.emplace_back(c.begin(), c.end());
  return pool;
}

inline AgentPool toy_pool(std::size_t n_each) {
  auto schema = make_schema({{"X", VariableKind::binary, {}, {"0", "1"}}, {"Y", VariableKind::binary, {}, {"0", "1"}}});
  std::vector<std::vector<int>> rows;
  for (std::size_t k = 0; k < n_each; ++k) {
    rows.push_back({0, 0});
    rows.push_back({1, 1});
  }
  return pool_of(schema, rows);
}

/// Upper 1% point of the chi-square distribution (Wilson-Hilferty).
inline double chi2_critical_01(double df) {
  const double z = 2.3263478740408408;
  const double a = 2.0 / (9.0 * df);
  return df * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

inline double chi2_statistic(const std::vector<double>& observed, const std::vector<double>& expected_prob) {
  double n = 0.0;
  for (double o : observed) n += o;
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = n * expected_prob[i];
    if (e > 0) stat += (observed[i] - e) * (observed[i] - e) / e;
  }
  return stat;
}

}  // namespace testutil
