#pragma once

// Benchmark populations with known structure, standing in for survey
// micro-data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "popsynth/bayesnet.hpp"
#include "popsynth/dataset.hpp"
#include "popsynth/error.hpp"
#include "popsynth/random.hpp"

namespace popsynth {

enum class GeneratorKind { latent_class, bn_ground_truth, toy };

inline GeneratorKind parse_generator_kind(std::string_view s) {
  if (s == "latent-class") return GeneratorKind::latent_class;
  if (s == "bn-ground-truth") return GeneratorKind::bn_ground_truth;
  if (s == "toy-appendix-a" || s == "toy") return GeneratorKind::toy;
  throw ConfigError("unknown synthetic generator '" + std::string(s) + "'");
}

inline std::string_view to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::latent_class:
      return "latent-class";
    case GeneratorKind::bn_ground_truth:
      return "bn-ground-truth";
    case GeneratorKind::toy:
      return "toy";
  }
  return "?";
}

/// Parameter ranges: classes 1..64, variables 1..64, widths 2..32,
/// strength 0..20, max_parents 1..4, size >= 1.
struct SyntheticSpec {
  GeneratorKind kind = GeneratorKind::latent_class;
  std::size_t classes = 4;
  std::size_t variables = 10;
  std::vector<int> widths;  // per variable; empty: `width` everywhere
  int width = 3;
  double strength = 2.0;  // scale of the random logits; 0 gives uniform tables
  std::size_t max_parents = 2;
  std::size_t size = 10000;
  std::uint64_t seed = 1;
  bool balanced = false;  // toy: exactly half s0, half s1 (shuffled)

  int width_of(std::size_t v) const { return widths.empty() ? width : widths.at(v); }

  void validate() const {
    if (size < 1) throw ConfigError("synthetic population size must be positive");
    if (kind == GeneratorKind::toy) return;
    if (classes < 1 || classes > 64) throw ConfigError("class count must be in 1..64");
    if (variables < 1 || variables > 64) throw ConfigError("variable count must be in 1..64");
    if (!widths.empty() && widths.size() != variables) throw ConfigError("widths must list every variable");
    for (std::size_t v = 0; v < variables; ++v)
      if (width_of(v) < 2 || width_of(v) > 32) throw ConfigError("category widths must be in 2..32");
    if (!(strength >= 0.0 && strength <= 20.0)) throw ConfigError("dependence strength must be in 0..20");
    if (max_parents < 1 || max_parents > 4) throw ConfigError("max_parents must be in 1..4");
  }
};

inline SyntheticSpec synthetic_spec_from_json(const json& j) {
  try {
    SyntheticSpec s;
    s.kind = parse_generator_kind(j.value("kind", std::string("latent-class")));
    s.classes = j.value("classes", s.classes);
    s.variables = j.value("variables", s.variables);
    s.widths = j.value("widths", s.widths);
    s.width = j.value("width", s.width);
    s.strength = j.value("strength", s.strength);
    s.max_parents = j.value("max_parents", s.max_parents);
    s.size = j.value("size", s.size);
    s.seed = j.value("seed", s.seed);
    s.balanced = j.value("balanced", s.balanced);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed synthetic generator spec: ") + e.what());
  }
}

inline SchemaPtr synthetic_schema(const SyntheticSpec& spec) {
  std::vector<VariableSpec> vars;
  if (spec.kind == GeneratorKind::toy) {
    vars.push_back({"X", VariableKind::binary, {}, {"0", "1"}});
    vars.push_back({"Y", VariableKind::binary, {}, {"0", "1"}});
  } else {
    for (std::size_t v = 0; v < spec.variables; ++v) {
      char name[16];
      std::snprintf(name, sizeof name, "x%02zu", v);
      VariableSpec var{name, VariableKind::categorical, {}, {}};
      for (int c = 0; c < spec.width_of(v); ++c) var.categories.push_back(std::to_string(c));
      vars.push_back(std::move(var));
    }
  }
  return std::make_shared<const Schema>(std::move(vars), SchemaMode::discretize_all);
}

namespace detail {

inline std::vector<double> random_simplex(std::size_t n, double strength, Rng& rng) {
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) {
    x = std::exp(strength * standard_normal(rng));
    total += x;
  }
  for (auto& x : p) x /= total;
  return p;
}

}  // namespace detail

struct BnGroundTruth {
  Dag dag;
  CptSet cpts;
};

/// Random DAG over the variable order: node v > 0 takes 1..max_parents
/// parents among earlier nodes; every parent configuration gets a random
/// softmax table.
inline BnGroundTruth make_bn_ground_truth(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synth/structure"));
  BnGroundTruth gt{Dag(spec.variables), {}};
  for (std::size_t v = 1; v < spec.variables; ++v) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min(spec.max_parents, v))(rng);
    std::vector<std::size_t> candidates(v);
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(k);
    gt.dag.set_parents(v, candidates);
  }
  for (std::size_t v = 0; v < spec.variables; ++v) {
    Cpt cpt;
    cpt.parents = gt.dag.parents(v);
    cpt.cardinality = spec.width_of(v);
    std::uint64_t configs = 1;
    for (std::size_t p : cpt.parents) {
      cpt.parent_cardinality.push_back(spec.width_of(p));
      configs *= static_cast<std::uint64_t>(spec.width_of(p));
    }
    for (std::uint64_t c = 0; c < configs; ++c)
      cpt.observed[c] = detail::random_simplex(static_cast<std::size_t>(cpt.cardinality), spec.strength, rng);
    gt.cpts.nodes.push_back(std::move(cpt));
  }
  return gt;
}

inline AgentPool synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  const SchemaPtr schema = synthetic_schema(spec);
  Rng rng(derive_seed(spec.seed, "synth/rows"));
  std::vector<std::vector<int>> codes;
  codes.reserve(spec.size);

  switch (spec.kind) {
    case GeneratorKind::toy: {
      if (spec.balanced) {
        for (std::size_t k = 0; k < spec.size; ++k) {
          const int s = k < spec.size / 2 ? 0 : 1;
          codes.push_back({s, s});
        }
        std::shuffle(codes.begin(), codes.end(), rng);
      } else {
        std::bernoulli_distribution coin(0.5);
        for (std::size_t k = 0; k < spec.size; ++k) {
          const int s = coin(rng) ? 1 : 0;
          codes.push_back({s, s});
        }
      }
      break;
    }
    case GeneratorKind::latent_class: {
      Rng params(derive_seed(spec.seed, "synth/structure"));
      std::vector<double> class_weights(spec.classes);
      for (auto& w : class_weights) w = std::gamma_distribution<double>(4.0, 1.0)(params);
      std::vector<std::vector<std::vector<double>>> tables(spec.classes);
      for (auto& t : tables)
        for (std::size_t v = 0; v < spec.variables; ++v)
          t.push_back(detail::random_simplex(static_cast<std::size_t>(spec.width_of(v)), spec.strength, params));
      for (std::size_t k = 0; k < spec.size; ++k) {
        const std::size_t cls = sample_index(class_weights, rng);
        std::vector<int> row(spec.variables);
        for (std::size_t v = 0; v < spec.variables; ++v)
          row[v] = static_cast<int>(sample_index(tables[cls][v], rng));
        codes.push_back(std::move(row));
      }
      break;
    }
    case GeneratorKind::bn_ground_truth: {
      const auto gt = make_bn_ground_truth(spec);
      codes = ancestral_sample(gt.dag, gt.cpts, spec.size, rng);
      break;
    }
  }
  return from_categorical(schema, codes, Provenance::train, rng);
}

}  // namespace popsynth
