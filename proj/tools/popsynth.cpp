// popsynth command-line driver.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "popsynth/pipeline.hpp"

namespace fs = std::filesystem;
using namespace popsynth;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string method;
  std::optional<long long> count;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.count) {
    if (*o.count <= 0) throw ConfigError("--count must be positive");
    c.count = static_cast<std::size_t>(*o.count);
  }
  return c;
}

void cmd_synth(const Options& o) {
  const json j = detail::read_json_file(o.config);
  SyntheticSpec spec = synthetic_spec_from_json(j.contains("synthetic") ? j.at("synthetic") : j);
  if (o.seed) spec.seed = *o.seed;
  if (o.count) {
    if (*o.count <= 0) throw ConfigError("--count must be positive");
    spec.size = static_cast<std::size_t>(*o.count);
  }
  const fs::path out = o.out.empty() ? fs::path(".") : fs::path(o.out);
  const AgentPool pool = synth_generate(spec);
  detail::write_text(out / "data.csv", detail::pool_csv(pool));
  detail::write_json(out / "schema.json", schema_to_json(*pool.schema));
  std::cout << "wrote " << pool.size() << " rows to " << (out / "data.csv").string() << '\n';
}

void cmd_prepare(const Options& o) {
  const ExperimentConfig c = load(o);
  const PreparedData p = run_stage("prepare", [&] { return prepare_data(c); });
  write_prepared(c.output_dir, p);
  std::cout << "train " << p.train.size() << ", validation " << p.validation.size() << ", test " << p.test.size()
            << '\n';
}

void cmd_train(const Options& o) {
  const ExperimentConfig c = load(o);
  if (!o.method.empty()) (void)c.method(o.method);
  const PreparedData p = read_prepared(c.output_dir, c);
  for (const auto& m : c.methods) {
    if (!o.method.empty() && m.name != o.method) continue;
    persist_fitted(c.output_dir, m, run_stage("fit " + m.name, [&] { return fit_method(m, p, c); }));
    std::cout << "trained " << m.name << '\n';
  }
}

void cmd_sample(const Options& o) {
  const ExperimentConfig c = load(o);
  if (!o.method.empty()) (void)c.method(o.method);
  const PreparedData p = read_prepared(c.output_dir, c);
  for (const auto& m : c.methods) {
    if (!o.method.empty() && m.name != o.method) continue;
    const fs::path mp = model_path(c.output_dir, m.name);
    if (!fs::exists(mp)) throw ConfigError("no model for '" + m.name + "'; run `train` first");
    const json model = detail::read_json_file(mp).at("model");
    const SampledMethod s = run_stage("sample " + m.name, [&] { return sample_method(m, model, p, c.count, c); });
    persist_sampled(c.output_dir, m, s);
    std::cout << "sampled " << s.pool.size() << " agents from " << m.name << '\n';
  }
}

void cmd_evaluate(const Options& o) {
  const ExperimentConfig c = load(o);
  std::cout << render_report(evaluate_outputs(c));
}

void cmd_run(const Options& o) {
  const ExperimentConfig c = load(o);
  std::cout << render_report(run_pipeline(c));
}

void cmd_report(const Options& o) {
  fs::path out = o.out;
  if (out.empty()) {
    if (o.config.empty()) throw ConfigError("report needs --out or --config");
    out = load(o).output_dir;
  }
  const EvalReport report = report_from_json(detail::read_json_file(out / "report.json"));
  std::ostringstream csv;
  write_report_csv(csv, report);
  detail::write_text(out / "report.csv", csv.str());
  const std::string table = render_report(report);
  detail::write_text(out / "report.md", table);
  std::cout << table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic population generation and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto add = [&](const char* name, const char* help, bool needs_config, void (*fn)(const Options&)) {
    auto* sub = app.add_subcommand(name, help);
    auto* cfg = sub->add_option("--config", o.config, "experiment config (JSON)");
    if (needs_config) cfg->required();
    sub->add_option("--seed", o.seed, "master seed override");
    sub->add_option("--out", o.out, "output directory override");
    sub->add_option("--method", o.method, "restrict to one method");
    sub->add_option("--count", o.count, "agents to generate");
    sub->callback([fn, &o] { fn(o); });
  };
  add("synth", "generate a synthetic benchmark population", true, cmd_synth);
  add("prepare", "split and encode the data", true, cmd_prepare);
  add("train", "fit methods on prepared data", true, cmd_train);
  add("sample", "sample pools from fitted methods", true, cmd_sample);
  add("evaluate", "score sampled pools against the test split", true, cmd_evaluate);
  add("run", "full pipeline", true, cmd_run);
  add("report", "re-render an existing report", false, cmd_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::config);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(ErrorKind::internal);
  }
  return 0;
}
