#pragma once

// End-to-end experiment: ingest or synthesize, split, fit every configured
// method, sample, evaluate, and write the report with its plot-ready data.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "popsynth/baselines.hpp"
#include "popsynth/bayesnet.hpp"
#include "popsynth/dataset.hpp"
#include "popsynth/error.hpp"
#include "popsynth/gibbs.hpp"
#include "popsynth/metrics.hpp"
#include "popsynth/random.hpp"
#include "popsynth/synth.hpp"
#include "popsynth/vae.hpp"

namespace popsynth {

namespace fs = std::filesystem;

enum class MethodType { vae, gibbs, bayesnet, marginal, resample };

inline MethodType parse_method_type(std::string_view s) {
  if (s == "vae") return MethodType::vae;
  if (s == "gibbs") return MethodType::gibbs;
  if (s == "bn" || s == "bayesnet") return MethodType::bayesnet;
  if (s == "marginal") return MethodType::marginal;
  if (s == "resample") return MethodType::resample;
  throw ConfigError("unknown method type '" + std::string(s) + "'");
}

inline std::string_view to_string(MethodType t) {
  switch (t) {
    case MethodType::vae:
      return "vae";
    case MethodType::gibbs:
      return "gibbs";
    case MethodType::bayesnet:
      return "bn";
    case MethodType::marginal:
      return "marginal";
    case MethodType::resample:
      return "resample";
  }
  return "?";
}

inline constexpr std::string_view kMarginalMethod = "marginal-sampler";
inline constexpr std::string_view kResampleMethod = "resampled-training";

struct MethodSpec {
  std::string name;  // report label, unique within a config
  MethodType type = MethodType::marginal;
  json params = json::object();
};

struct ExperimentConfig {
  std::optional<fs::path> schema_path;
  std::optional<fs::path> data_path;
  std::optional<SyntheticSpec> synthetic;
  std::uint64_t seed = 0;  // master seed
  double train_fraction = 0.2;
  double validation_fraction = 0.25;
  std::optional<std::uint64_t> split_seed;  // default: derived from the master seed
  std::size_t count = 10000;
  std::vector<std::string> projection;  // variable names; empty: first four
  std::size_t pca_components = 5;
  std::vector<MethodSpec> methods;  // configured methods followed by the two baselines
  fs::path output_dir = "out";

  const MethodSpec& method(std::string_view name) const {
    for (const auto& m : methods)
      if (m.name == name) return m;
    throw ConfigError("no method named '" + std::string(name) + "' in the config");
  }
};

namespace detail {

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string default_method_name(MethodType type, const json& params) {
  if (type == MethodType::bayesnet) return "bn-" + params.value("algorithm", std::string("chow-liu"));
  if (type == MethodType::marginal) return std::string(kMarginalMethod);
  if (type == MethodType::resample) return std::string(kResampleMethod);
  return std::string(to_string(type));
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace detail

/// Relative paths resolve against `base_dir` (the config file's directory).
inline ExperimentConfig config_from_json(const json& j, const fs::path& base_dir = {}) {
  try {
    ExperimentConfig c;
    if (j.contains("schema")) c.schema_path = detail::resolve(base_dir, j.at("schema").get<std::string>());
    if (j.contains("data")) c.data_path = detail::resolve(base_dir, j.at("data").get<std::string>());
    if (j.contains("synthetic")) c.synthetic = synthetic_spec_from_json(j.at("synthetic"));
    if (c.data_path && c.synthetic) throw ConfigError("config names both a data file and a synthetic generator");
    if (!c.data_path && !c.synthetic) throw ConfigError("config needs either `data` or `synthetic`");
    if (c.data_path && !c.schema_path) throw ConfigError("a data file needs a `schema`");
    c.seed = j.value("seed", c.seed);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.train_fraction = s.value("train_fraction", c.train_fraction);
      c.validation_fraction = s.value("validation_fraction", c.validation_fraction);
      if (s.contains("seed")) c.split_seed = s.at("seed").get<std::uint64_t>();
    }
    if (j.contains("count")) {
      const auto n = j.at("count").get<long long>();
      if (n <= 0) throw ConfigError("generation count must be positive");
      c.count = static_cast<std::size_t>(n);
    }
    c.projection = j.value("projection", c.projection);
    c.pca_components = j.value("pca_components", c.pca_components);
    if (c.pca_components == 0) throw ConfigError("pca_components must be positive");
    if (j.contains("output_dir")) c.output_dir = detail::resolve(base_dir, j.at("output_dir").get<std::string>());

    std::set<std::string> names;
    for (const auto& jm : j.value("methods", json::array())) {
      MethodSpec m;
      m.type = parse_method_type(jm.at("type").get<std::string>());
      if (m.type == MethodType::marginal || m.type == MethodType::resample)
        throw ConfigError("baselines are always included; do not list them as methods");
      m.params = jm;
      m.name = jm.value("name", detail::default_method_name(m.type, jm));
      if (!names.insert(m.name).second) throw ConfigError("duplicate method name '" + m.name + "'");
      c.methods.push_back(std::move(m));
    }
    for (MethodType t : {MethodType::marginal, MethodType::resample}) {
      MethodSpec m{detail::default_method_name(t, {}), t, json::object()};
      if (!names.insert(m.name).second) throw ConfigError("method name '" + m.name + "' is reserved");
      c.methods.push_back(std::move(m));
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const fs::path& path) {
  return config_from_json(detail::read_json_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Data preparation

/// Named seed substreams of the master seed.
inline std::uint64_t split_seed(const ExperimentConfig& c) {
  return c.split_seed ? *c.split_seed : derive_seed(c.seed, "split");
}
inline std::uint64_t method_seed(const ExperimentConfig& c, std::string_view method, std::string_view stage) {
  return derive_seed(derive_seed(c.seed, "method/" + std::string(method)), stage);
}

inline AgentPool load_population(const ExperimentConfig& c) {
  if (c.synthetic) return synth_generate(*c.synthetic);
  std::ifstream in(*c.data_path);
  if (!in) throw DataError("cannot open data file " + c.data_path->string());
  const RawTable table = read_csv(in);
  auto schema = std::make_shared<const Schema>(schema_from_json(detail::read_json_file(*c.schema_path), &table));
  return pool_from_table(table, schema, Provenance::train);
}

/// Splits of one experiment. `estimation` is train + validation, the data
/// every non-VAE method fits on; the VAE holds out `validation` for selection.
struct PreparedData {
  SchemaPtr schema;
  AgentPool train;
  AgentPool validation;
  AgentPool test;
  AgentPool estimation;
  Standardization standardization;  // fitted on `estimation`
  std::vector<std::size_t> projection;
};

inline std::vector<std::size_t> resolve_projection(const ExperimentConfig& c, const Schema& schema) {
  std::vector<std::size_t> idx;
  if (c.projection.empty()) {
    for (std::size_t v = 0; v < std::min<std::size_t>(4, schema.size()); ++v) idx.push_back(v);
    return idx;
  }
  for (const auto& name : c.projection) {
    const auto i = schema.index_of(name);
    if (!i) throw ConfigError("projection variable '" + name + "' is not in the schema");
    idx.push_back(*i);
  }
  return idx;
}

inline PreparedData assemble_prepared(Splits s, const ExperimentConfig& c) {
  PreparedData p;
  p.schema = s.train.schema;
  p.estimation = concat(s.train, s.validation, Provenance::train);
  p.train = std::move(s.train);
  p.validation = std::move(s.validation);
  p.test = std::move(s.test);
  p.standardization = fit_standardization(p.estimation);
  p.projection = resolve_projection(c, *p.schema);
  for (const auto& m : c.methods)
    if (m.type == MethodType::bayesnet && p.schema->mode() != SchemaMode::discretize_all)
      throw ConfigError("Bayesian network methods need a discretize-all schema");
  return p;
}

inline PreparedData prepare_data(const ExperimentConfig& c) {
  const AgentPool pool = load_population(c);
  return assemble_prepared(split(pool, c.train_fraction, c.validation_fraction, split_seed(c)), c);
}

namespace detail {

inline AgentPool read_pool_file(const fs::path& path, const SchemaPtr& schema, Provenance prov) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  auto pool = pool_from_table(read_csv(in), schema, prov);
  validate_pool(pool);
  return pool;
}

inline std::string pool_csv(const AgentPool& pool) {
  std::ostringstream out;
  write_pool_csv(out, pool);
  return out.str();
}

}  // namespace detail

/// prepared/{schema.json, standardization.json, train.csv, validation.csv, test.csv, encoded_train.csv}
inline void write_prepared(const fs::path& out, const PreparedData& p) {
  const fs::path dir = out / "prepared";
  detail::write_json(dir / "schema.json", schema_to_json(*p.schema));
  detail::write_json(dir / "standardization.json", standardization_to_json(p.standardization));
  detail::write_text(dir / "train.csv", detail::pool_csv(p.train));
  detail::write_text(dir / "validation.csv", detail::pool_csv(p.validation));
  detail::write_text(dir / "test.csv", detail::pool_csv(p.test));
  const EncodedMatrix enc = one_hot_encode(p.estimation, p.standardization);
  std::ostringstream e;
  for (Eigen::Index c = 0; c < enc.values.cols(); ++c) e << (c ? "," : "") << "c" << c;
  e << '\n';
  for (Eigen::Index r = 0; r < enc.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < enc.values.cols(); ++c)
      e << (c ? "," : "") << detail::format_number(enc.values(r, c));
    e << '\n';
  }
  detail::write_text(dir / "encoded_train.csv", e.str());
}

inline PreparedData read_prepared(const fs::path& out, const ExperimentConfig& c) {
  const fs::path dir = out / "prepared";
  if (!fs::exists(dir / "schema.json")) throw ConfigError("no prepared data in " + out.string() + "; run `prepare`");
  auto schema = std::make_shared<const Schema>(schema_from_json(detail::read_json_file(dir / "schema.json")));
  Splits s{detail::read_pool_file(dir / "train.csv", schema, Provenance::train),
           detail::read_pool_file(dir / "validation.csv", schema, Provenance::validation),
           detail::read_pool_file(dir / "test.csv", schema, Provenance::test)};
  return assemble_prepared(std::move(s), c);
}

// ---------------------------------------------------------------------------
// Methods

inline TrainConfig vae_train_config(const MethodSpec& m, std::uint64_t seed) {
  TrainConfig t;
  const json& p = m.params;
  t.epochs = p.value("epochs", t.epochs);
  t.batch_size = p.value("batch_size", t.batch_size);
  t.learning_rate = p.value("learning_rate", t.learning_rate);
  t.rho = p.value("rho", t.rho);
  t.hidden_options = p.value("hidden", t.hidden_options);
  t.latent_options = p.value("latent_dim", t.latent_options);
  t.beta_options = p.value("beta", t.beta_options);
  t.selection_variables = p.value("selection_variables", t.selection_variables);
  t.selection_samples = p.value("selection_samples", t.selection_samples);
  t.sample_categoricals = p.value("sample_categoricals", t.sample_categoricals);
  t.seed = seed;
  t.validate();
  return t;
}

inline ChainConfig gibbs_chain_config(const MethodSpec& m, std::size_t count, std::uint64_t seed) {
  ChainConfig c;
  c.warmup = m.params.value("warmup", c.warmup);
  c.thinning = m.params.value("thinning", c.thinning);
  c.chains = m.params.value("chains", c.chains);
  c.restart_on_unreachable = m.params.value("restart_on_unreachable", c.restart_on_unreachable);
  c.target_count = count;
  c.seed = seed;
  c.validate();
  return c;
}

/// A fitted method: its serialized model, deterministic descriptive details
/// for the report, and an optional training log.
struct FittedMethod {
  json model;
  json details = json::object();
  std::string log_csv;
};

struct SampledMethod {
  AgentPool pool;
  json details = json::object();
};

namespace detail {

/// Latent means and log-variances of the most frequent distinct rows.
inline json latent_summary(const VaeModel& model, const AgentPool& data, std::size_t limit = 8) {
  std::map<Row, std::size_t> counts;
  for (const auto& r : data.rows) ++counts[r];
  std::vector<std::pair<Row, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > limit) ranked.resize(limit);
  json out = json::array();
  for (const auto& [row, n] : ranked) {
    AgentPool one{data.schema, {row}, Provenance::train};
    const Eigen::VectorXd x = one_hot_encode(one, model.standardization).values.row(0).transpose();
    const LatentParams lp = encode(model, x);
    out.push_back({{"row", row},
                   {"count", n},
                   {"mean", std::vector<double>(lp.mean.data(), lp.mean.data() + lp.mean.size())},
                   {"log_variance",
                    std::vector<double>(lp.log_variance.data(), lp.log_variance.data() + lp.log_variance.size())}});
  }
  return out;
}

inline json dag_edges(const Dag& dag) {
  json edges = json::array();
  for (std::size_t v = 0; v < dag.size(); ++v)
    for (std::size_t p : dag.parents(v)) edges.push_back({p, v});
  return edges;
}

}  // namespace detail

inline FittedMethod fit_method(const MethodSpec& m, const PreparedData& data, const ExperimentConfig& c) {
  FittedMethod f;
  switch (m.type) {
    case MethodType::vae: {
      const TrainConfig tc = vae_train_config(m, method_seed(c, m.name, "fit"));
      auto gs = grid_search(data.train, data.validation, tc);
      const auto& best = gs.points[gs.best_index];
      json grid = json::array();
      for (std::size_t g = 0; g < gs.points.size(); ++g)
        grid.push_back({{"hidden", gs.points[g].hidden},
                        {"latent_dim", gs.points[g].latent_dim},
                        {"beta", gs.points[g].beta},
                        {"validation_srmse", gs.scores[g]}});
      f.model = vae_to_json(gs.best);
      f.model["sample_categoricals"] = tc.sample_categoricals;
      f.details = {{"grid", grid},
                   {"selected", gs.best_index},
                   {"hidden", best.hidden},
                   {"latent_dim", best.latent_dim},
                   {"beta", best.beta},
                   {"latent", detail::latent_summary(gs.best, data.train)}};
      std::ostringstream log;
      write_training_log(log, gs.history);
      f.log_csv = log.str();
      break;
    }
    case MethodType::gibbs: {
      const auto tables = estimate_conditionals(to_categorical(data.estimation));
      f.model = {{"format", "popsynth-gibbs"}, {"version", 1}, {"tables", tables_to_json(tables)}};
      std::size_t contexts = 0;
      for (const auto& t : tables) contexts += t.probabilities.size();
      f.details = {{"contexts", contexts}};
      break;
    }
    case MethodType::bayesnet: {
      const CategoricalData codes = to_categorical(data.estimation);
      BayesNetModel bn;
      bn.algorithm = parse_structure_algorithm(m.params.value("algorithm", std::string("chow-liu")));
      StructureOptions opts;
      if (m.params.contains("max_parents")) opts.max_parents = m.params.at("max_parents").get<std::size_t>();
      const auto t0 = std::chrono::steady_clock::now();
      bn.dag = learn_structure(codes, bn.algorithm, opts);
      bn.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      bn.cpts = fit_cpts(bn.dag, codes);
      bn.score = mdl_score(bn.dag, codes);
      f.model = bayesnet_to_json(bn);
      f.details = {{"algorithm", std::string(to_string(bn.algorithm))},
                   {"edges", detail::dag_edges(bn.dag)},
                   {"mdl_score", bn.score}};
      break;
    }
    case MethodType::marginal:
      f.model = marginals_to_json(fit_marginals(to_categorical(data.estimation)));
      break;
    case MethodType::resample:
      f.model = {{"format", "popsynth-resample"}, {"version", 1}};
      break;
  }
  return f;
}

inline SampledMethod sample_method(const MethodSpec& m, const json& model, const PreparedData& data,
                                   std::size_t count, const ExperimentConfig& c) {
  const std::uint64_t seed = method_seed(c, m.name, "sample");
  SampledMethod s;
  switch (m.type) {
    case MethodType::vae: {
      const VaeModel vae = vae_from_json(model);
      if (!(schema_to_json(*vae.schema) == schema_to_json(*data.schema)))
        throw SchemaMismatchError("VAE checkpoint schema differs from the prepared data");
      s.pool = sample(vae, count, seed, model.value("sample_categoricals", false));
      s.pool.schema = data.schema;
      break;
    }
    case MethodType::gibbs: {
      const auto tables = tables_from_json(model.at("tables"));
      const CategoricalData codes = to_categorical(data.estimation);
      auto chain = run_chain(tables, codes, gibbs_chain_config(m, count, seed));
      Rng rng(derive_seed(seed, "gibbs/values"));
      s.pool = from_categorical(data.schema, chain.rows, Provenance::generated, rng);
      s.details = to_json(chain.diagnostics);
      break;
    }
    case MethodType::bayesnet: {
      const BayesNetModel bn = bayesnet_from_json(model);
      if (bn.dag.size() != data.schema->size()) throw SchemaMismatchError("network size differs from the schema");
      Rng rng(seed);
      const auto codes = ancestral_sample(bn.dag, bn.cpts, count, rng);
      s.pool = from_categorical(data.schema, codes, Provenance::generated, rng);
      break;
    }
    case MethodType::marginal:
      s.pool = marginal_sample(data.schema, marginals_from_json(model), count, seed);
      break;
    case MethodType::resample:
      s.pool = resample_training(data.estimation, count, seed);
      break;
  }
  validate_pool(s.pool);
  return s;
}

// ---------------------------------------------------------------------------
// Pipeline

/// Wraps a stage so its failure names the stage; the error kind is preserved.
template <class F>
auto run_stage(std::string_view stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage '" + std::string(stage) + "': " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::internal, "stage '" + std::string(stage) + "': " + e.what());
  }
}

inline fs::path model_path(const fs::path& out, std::string_view method) {
  return out / "models" / (std::string(method) + ".json");
}
inline fs::path pool_path(const fs::path& out, std::string_view method) {
  return out / "pools" / (std::string(method) + ".csv");
}

inline void persist_fitted(const fs::path& out, const MethodSpec& m, const FittedMethod& f) {
  detail::write_json(model_path(out, m.name), {{"model", f.model}, {"details", f.details}});
  if (!f.log_csv.empty()) detail::write_text(out / "logs" / (m.name + "_training.csv"), f.log_csv);
}

inline void persist_sampled(const fs::path& out, const MethodSpec& m, const SampledMethod& s) {
  detail::write_text(pool_path(out, m.name), detail::pool_csv(s.pool));
  if (!s.details.empty()) detail::write_json(out / "logs" / (m.name + "_sampling.json"), s.details);
}

struct MethodRun {
  std::string name;
  AgentPool pool;
  json details = json::object();
  double fit_seconds = 0.0;
  double sample_seconds = 0.0;
};

namespace detail {

inline std::string view_name(std::size_t v) {
  static constexpr const char* names[] = {"marginal", "bivariate", "trivariate", "projected", "pairwise"};
  return names[v];
}

/// scatter/<method>/<view>.csv: bin, test frequency, method frequency.
inline void write_scatter(const fs::path& out, const std::vector<NamedPool>& pools, const PreparedData& data) {
  const CategoricalData test = to_categorical(data.test);
  const ViewReference ref(test, data.projection);
  for (const auto& p : pools) {
    const CategoricalData codes = to_categorical(p.pool);
    for (std::size_t v = 0; v < 5; ++v) {
      const auto est = v < 4 ? view_frequencies(codes, ref.subsets[v]) : pairwise_cramers_v(codes);
      const auto& tr = v < 4 ? ref.frequencies[v] : ref.cramers;
      std::ostringstream s;
      s << "bin,test,method\n";
      for (std::size_t b = 0; b < tr.size(); ++b)
        s << b << ',' << format_number(tr[b]) << ',' << format_number(est[b]) << '\n';
      write_text(out / "scatter" / p.name / (view_name(v) + ".csv"), s.str());
    }
  }
}

/// pca/<pool>.csv: leading principal coordinates, basis fitted on the
/// estimation set. pca/explained_variance.csv lists the spectrum.
inline void write_pca(const fs::path& out, const std::vector<NamedPool>& pools, const PreparedData& data,
                      std::size_t k) {
  const Eigen::MatrixXd train = one_hot_encode(data.estimation, data.standardization).values;
  if (train.rows() < 2) return;
  const Pca pca = pca_fit(train);
  std::ostringstream ev;
  ev << "component,explained_variance,ratio\n";
  for (Eigen::Index c = 0; c < pca.explained_variance.size(); ++c)
    ev << c + 1 << ',' << format_number(pca.explained_variance(c)) << ','
       << format_number(pca.total_variance > 0 ? pca.explained_variance(c) / pca.total_variance : 0.0) << '\n';
  write_text(out / "pca" / "explained_variance.csv", ev.str());
  auto dump = [&](const std::string& name, const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd proj = pca_project(pca, x, k);
    std::ostringstream s;
    for (Eigen::Index c = 0; c < proj.cols(); ++c) s << (c ? "," : "") << "pc" << c + 1;
    s << '\n';
    for (Eigen::Index r = 0; r < proj.rows(); ++r) {
      for (Eigen::Index c = 0; c < proj.cols(); ++c) s << (c ? "," : "") << format_number(proj(r, c));
      s << '\n';
    }
    write_text(out / "pca" / (name + ".csv"), s.str());
  };
  dump(std::string(kTrainingSetRow), train);
  for (const auto& p : pools) dump(p.name, one_hot_encode(p.pool, data.standardization).values);
}

}  // namespace detail

inline json design_flags(const ExperimentConfig& c) {
  return {{"bin_edges", "uniform over the observed range when a bin count is given"},
          {"standardization", "mean and population std of the estimation set"},
          {"vae_kl", "encoder outputs log-variance"},
          {"vae_hardening", "argmax per categorical block unless sample_categoricals"},
          {"vae_numeric_decode", "standardized numerics de-standardized, rounded for integers, clamped to edges"},
          {"gibbs_tables", "full-context frequency tables from the estimation set"},
          {"bn_cpts", "maximum likelihood; unseen parent configurations uniform"},
          {"bin_values", "generated bins drawn uniformly inside the bin"},
          {"cramers_v_undefined", "scored as 0"},
          {"count", c.count}};
}

/// Scores the pools and assembles the report. Runtimes are kept out of the
/// report so identical seeds give identical bytes; see timings.json.
inline EvalReport assemble_report(const std::vector<MethodRun>& runs, const PreparedData& data,
                                  const ExperimentConfig& c) {
  std::vector<NamedPool> pools;
  for (const auto& r : runs) pools.push_back({r.name, r.pool});
  EvalReport report = evaluate(pools, data.test, data.estimation, data.projection, data.standardization);
  json seeds = {{"master", c.seed}, {"split", split_seed(c)}};
  json methods = json::object();
  for (const auto& r : runs) {
    const auto& spec = c.method(r.name);
    seeds[r.name] = {{"fit", method_seed(c, r.name, "fit")}, {"sample", method_seed(c, r.name, "sample")}};
    methods[r.name] = {{"type", std::string(to_string(spec.type))}, {"params", spec.params}, {"details", r.details}};
  }
  std::vector<std::string> projection;
  for (std::size_t v : data.projection) projection.push_back((*data.schema)[v].name);
  report.metadata = {{"seeds", seeds},
                     {"schema", schema_to_json(*data.schema)},
                     {"source", c.synthetic ? json{{"synthetic", std::string(to_string(c.synthetic->kind))},
                                                   {"seed", c.synthetic->seed},
                                                   {"size", c.synthetic->size}}
                                            : json{{"data", c.data_path->filename().string()}}},
                     {"splits",
                      {{"train_fraction", c.train_fraction},
                       {"validation_fraction", c.validation_fraction},
                       {"train", data.train.size()},
                       {"validation", data.validation.size()},
                       {"test", data.test.size()}}},
                     {"projection", projection},
                     {"methods", methods},
                     {"design", design_flags(c)}};
  return report;
}

inline void write_report(const fs::path& out, const EvalReport& report) {
  detail::write_json(out / "report.json", report_to_json(report));
  std::ostringstream csv;
  write_report_csv(csv, report);
  detail::write_text(out / "report.csv", csv.str());
}

inline void write_timings(const fs::path& out, const std::vector<MethodRun>& runs) {
  json t = json::object();
  for (const auto& r : runs) t[r.name] = {{"fit_seconds", r.fit_seconds}, {"sample_seconds", r.sample_seconds}};
  detail::write_json(out / "timings.json", t);
}

/// Fits and samples one method, persisting model, log, and pool.
inline MethodRun run_method(const MethodSpec& m, const PreparedData& data, const ExperimentConfig& c,
                            const fs::path& out) {
  using clock = std::chrono::steady_clock;
  MethodRun r;
  r.name = m.name;
  const auto t0 = clock::now();
  FittedMethod f = run_stage("fit " + m.name, [&] { return fit_method(m, data, c); });
  const auto t1 = clock::now();
  SampledMethod s = run_stage("sample " + m.name, [&] { return sample_method(m, f.model, data, c.count, c); });
  const auto t2 = clock::now();
  run_stage("persist " + m.name, [&] {
    persist_fitted(out, m, f);
    persist_sampled(out, m, s);
  });
  r.pool = std::move(s.pool);
  r.details = std::move(f.details);
  if (!s.details.empty()) r.details["sampling"] = std::move(s.details);
  r.fit_seconds = std::chrono::duration<double>(t1 - t0).count();
  r.sample_seconds = std::chrono::duration<double>(t2 - t1).count();
  return r;
}

inline void write_report_artifacts(const fs::path& out, const std::vector<MethodRun>& runs,
                                   const PreparedData& data, const ExperimentConfig& c, const EvalReport& report) {
  std::vector<NamedPool> pools;
  for (const auto& r : runs) pools.push_back({r.name, r.pool});
  write_report(out, report);
  detail::write_scatter(out, pools, data);
  detail::write_pca(out, pools, data, c.pca_components);
}

/// Full pipeline. Methods run concurrently on independent seed substreams.
/// On failure a FAILED marker names the stage; artifacts already written stay
/// in place but are flagged partial by that marker.
inline EvalReport run_pipeline(const ExperimentConfig& c, bool parallel = true) {
  const fs::path out = c.output_dir;
  fs::create_directories(out);
  fs::remove(out / "FAILED");
  try {
    const PreparedData data = run_stage("prepare", [&] { return prepare_data(c); });
    run_stage("write prepared", [&] { write_prepared(out, data); });

    std::vector<MethodRun> runs;
    if (parallel) {
      std::vector<std::future<MethodRun>> jobs;
      for (const auto& m : c.methods)
        jobs.push_back(std::async(std::launch::async, [&, mp = &m] { return run_method(*mp, data, c, out); }));
      std::optional<Error> first;
      for (auto& j : jobs) {
        try {
          runs.push_back(j.get());
        } catch (const Error& e) {
          if (!first) first = e;
        }
      }
      if (first) throw *first;
    } else {
      for (const auto& m : c.methods) runs.push_back(run_method(m, data, c, out));
    }

    EvalReport report = run_stage("evaluate", [&] { return assemble_report(runs, data, c); });
    run_stage("write report", [&] { write_report_artifacts(out, runs, data, c, report); });
    write_timings(out, runs);
    return report;
  } catch (const Error& e) {
    detail::write_text(out / "FAILED", std::string(e.what()) + "\n");
    throw;
  }
}

/// Re-scores pools already on disk, e.g. after staged `train`/`sample` calls.
inline EvalReport evaluate_outputs(const ExperimentConfig& c) {
  const fs::path out = c.output_dir;
  const PreparedData data = read_prepared(out, c);
  std::vector<MethodRun> runs;
  for (const auto& m : c.methods) {
    const fs::path pp = pool_path(out, m.name);
    if (!fs::exists(pp)) throw ConfigError("no pool for method '" + m.name + "'; run `sample` first");
    MethodRun r;
    r.name = m.name;
    r.pool = run_stage("load " + m.name, [&] { return detail::read_pool_file(pp, data.schema, Provenance::generated); });
    const fs::path mp = model_path(out, m.name);
    if (fs::exists(mp)) r.details = detail::read_json_file(mp).value("details", json::object());
    const fs::path sp = out / "logs" / (m.name + "_sampling.json");
    if (fs::exists(sp)) r.details["sampling"] = detail::read_json_file(sp);
    runs.push_back(std::move(r));
  }
  EvalReport report = run_stage("evaluate", [&] { return assemble_report(runs, data, c); });
  run_stage("write report", [&] { write_report_artifacts(out, runs, data, c, report); });
  return report;
}

/// Human-readable table from report.json.
inline std::string render_report(const EvalReport& report) {
  std::ostringstream s;
  s << "| method | Marg. | Bivar. | Trivar. | Basic | Pair. | mu_NS | sigma_NS |\n";
  s << "|---|---|---|---|---|---|---|---|\n";
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  for (const auto& r : report.rows)
    s << "| " << r.method << " | " << num(r.marginal.srmse) << " | " << num(r.bivariate.srmse) << " | "
      << num(r.trivariate.srmse) << " | " << num(r.projected.srmse) << " | " << num(r.pairwise.srmse) << " | "
      << num(r.diversity.mu_ns) << " | " << num(r.diversity.sigma_ns) << " |\n";
  return s.str();
}

}  // namespace popsynth
