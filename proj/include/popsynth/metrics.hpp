#pragma once

// Distribution-similarity metrics between pools of agents: multiway bin
// frequencies, SRMSE / Pearson / R^2 over concatenated views, pairwise
// Cramer's V, nearest-sample diversity, and PCA.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "popsynth/dataset.hpp"
#include "popsynth/error.hpp"

namespace popsynth {

struct FrequencyDistribution {
  std::vector<std::size_t> subset;
  std::vector<int> cardinality;     // D_i for each subset variable
  std::vector<double> frequencies;  // row-major over the product bin space

  std::size_t bin_count() const noexcept { return frequencies.size(); }
};

inline constexpr std::size_t kMaxBins = std::size_t{1} << 26;

/// Relative frequency of every value combination of `subset`, including the
/// empty ones. The first subset variable is the most significant index.
inline FrequencyDistribution frequency_distribution(const CategoricalData& data,
                                                    std::span<const std::size_t> subset) {
  if (subset.empty()) throw ConfigError("frequency distribution over an empty subset");
  if (data.size() == 0) throw InsufficientDataError("frequency distribution of an empty pool");
  FrequencyDistribution fd;
  fd.subset.assign(subset.begin(), subset.end());
  std::size_t bins = 1;
  for (std::size_t v : subset) {
    if (v >= data.variables()) throw ConfigError("subset variable out of range");
    const int d = data.cardinality[v];
    fd.cardinality.push_back(d);
    bins *= static_cast<std::size_t>(d);
    if (bins > kMaxBins) throw ConfigError("bin space of subset is too large");
  }
  fd.frequencies.assign(bins, 0.0);
  const double w = 1.0 / static_cast<double>(data.size());
  for (const auto& row : data.rows) {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < subset.size(); ++k)
      idx = idx * static_cast<std::size_t>(fd.cardinality[k]) + static_cast<std::size_t>(row[subset[k]]);
    fd.frequencies[idx] += w;
  }
  return fd;
}

/// RMSE over bins divided by the mean reference frequency.
inline double srmse(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size() || reference.empty())
    throw IncomparableDistributionsError("distributions have different bin counts (" +
                                         std::to_string(estimate.size()) + " vs " +
                                         std::to_string(reference.size()) + ")");
  double sq = 0.0, total = 0.0;
  for (std::size_t b = 0; b < reference.size(); ++b) {
    const double d = estimate[b] - reference[b];
    sq += d * d;
    total += reference[b];
  }
  if (!(total > 0.0)) throw IncomparableDistributionsError("reference distribution has zero mass");
  const double nb = static_cast<double>(reference.size());
  return std::sqrt(sq / nb) * nb / total;
}

inline void check_comparable(const FrequencyDistribution& a, const FrequencyDistribution& b) {
  if (a.subset != b.subset || a.cardinality != b.cardinality)
    throw IncomparableDistributionsError("distributions are over different bin spaces");
}

inline double srmse(const FrequencyDistribution& estimate, const FrequencyDistribution& reference) {
  check_comparable(estimate, reference);
  return srmse(estimate.frequencies, reference.frequencies);
}

/// Pearson correlation and R^2 (reference as observed, estimate as
/// prediction). Either is empty when its denominator vanishes.
struct CorrR2 {
  std::optional<double> corr;
  std::optional<double> r2;
};

inline CorrR2 corr_r2(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size() || reference.empty())
    throw IncomparableDistributionsError("distributions have different bin counts");
  const double n = static_cast<double>(reference.size());
  const double me = std::accumulate(estimate.begin(), estimate.end(), 0.0) / n;
  const double mr = std::accumulate(reference.begin(), reference.end(), 0.0) / n;
  double see = 0, srr = 0, ser = 0, res = 0;
  for (std::size_t b = 0; b < reference.size(); ++b) {
    const double de = estimate[b] - me, dr = reference[b] - mr;
    see += de * de;
    srr += dr * dr;
    ser += de * dr;
    res += (reference[b] - estimate[b]) * (reference[b] - estimate[b]);
  }
  CorrR2 out;
  if (see > 0.0 && srr > 0.0) out.corr = ser / std::sqrt(see * srr);
  if (srr > 0.0) out.r2 = 1.0 - res / srr;
  return out;
}

inline CorrR2 corr_r2(const FrequencyDistribution& estimate, const FrequencyDistribution& reference) {
  check_comparable(estimate, reference);
  return corr_r2(estimate.frequencies, reference.frequencies);
}

/// Cramer's V of the contingency table of variables i and j, without bias
/// correction. Levels never observed are dropped from the table; a variable
/// with a single observed level makes V undefined.
inline std::optional<double> cramers_v(const CategoricalData& data, std::size_t i, std::size_t j) {
  if (data.size() == 0) throw InsufficientDataError("Cramer's V of an empty pool");
  const auto di = static_cast<std::size_t>(data.cardinality.at(i));
  const auto dj = static_cast<std::size_t>(data.cardinality.at(j));
  std::vector<double> table(di * dj, 0.0), ri(di, 0.0), cj(dj, 0.0);
  for (const auto& row : data.rows) {
    const auto a = static_cast<std::size_t>(row[i]), b = static_cast<std::size_t>(row[j]);
    table[a * dj + b] += 1.0;
    ri[a] += 1.0;
    cj[b] += 1.0;
  }
  const double n = static_cast<double>(data.size());
  const auto levels_i = std::count_if(ri.begin(), ri.end(), [](double c) { return c > 0; });
  const auto levels_j = std::count_if(cj.begin(), cj.end(), [](double c) { return c > 0; });
  const auto k = std::min(levels_i, levels_j) - 1;
  if (k <= 0) return std::nullopt;
  double chi2 = 0.0;
  for (std::size_t a = 0; a < di; ++a) {
    if (ri[a] == 0) continue;
    for (std::size_t b = 0; b < dj; ++b) {
      if (cj[b] == 0) continue;
      const double e = ri[a] * cj[b] / n;
      const double d = table[a * dj + b] - e;
      chi2 += d * d / e;
    }
  }
  return std::clamp(std::sqrt(chi2 / (n * static_cast<double>(k))), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Diversity

struct DiversityStats {
  double mu_ns = 0.0;
  double sigma_ns = 0.0;
};

/// For each generated row (one row per sample, encoded space), the RMSE to
/// its exact nearest training row; returns mean and population std.
inline DiversityStats nearest_sample_stats(const Eigen::MatrixXd& generated, const Eigen::MatrixXd& train) {
  if (train.rows() == 0) throw InsufficientDataError("nearest-sample search over an empty training pool");
  if (generated.rows() == 0) return {};
  if (generated.cols() != train.cols())
    throw SchemaMismatchError("generated and training encodings differ in width");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor g = generated, t = train;
  const Eigen::Index n = g.cols();
  std::vector<double> nearest(static_cast<std::size_t>(g.rows()));
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    const double* x = g.data() + r * n;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index s = 0; s < t.rows() && best > 0.0; ++s) {
      const double* y = t.data() + s * n;
      double acc = 0.0;
      for (Eigen::Index c = 0; c < n && acc < best; ++c) {
        const double d = x[c] - y[c];
        acc += d * d;
      }
      best = std::min(best, acc);
    }
    nearest[static_cast<std::size_t>(r)] = std::sqrt(best / static_cast<double>(n));
  }
  const double m = std::accumulate(nearest.begin(), nearest.end(), 0.0) / static_cast<double>(nearest.size());
  double var = 0.0;
  for (double d : nearest) var += (d - m) * (d - m);
  return {m, std::sqrt(var / static_cast<double>(nearest.size()))};
}

// ---------------------------------------------------------------------------
// Views

enum class View { marginal, bivariate, trivariate, projected };

inline std::vector<std::vector<std::size_t>> view_subsets(std::size_t variables, View view,
                                                          std::span<const std::size_t> projection) {
  std::vector<std::vector<std::size_t>> out;
  switch (view) {
    case View::marginal:
      for (std::size_t i = 0; i < variables; ++i) out.push_back({i});
      break;
    case View::bivariate:
      for (std::size_t i = 0; i < variables; ++i)
        for (std::size_t j = i + 1; j < variables; ++j) out.push_back({i, j});
      break;
    case View::trivariate:
      for (std::size_t i = 0; i < variables; ++i)
        for (std::size_t j = i + 1; j < variables; ++j)
          for (std::size_t k = j + 1; k < variables; ++k) out.push_back({i, j, k});
      break;
    case View::projected:
      out.emplace_back(projection.begin(), projection.end());
      break;
  }
  return out;
}

/// Bin frequencies of every subset, concatenated in subset order.
inline std::vector<double> view_frequencies(const CategoricalData& data,
                                            const std::vector<std::vector<std::size_t>>& subsets) {
  std::vector<double> out;
  for (const auto& s : subsets) {
    auto fd = frequency_distribution(data, s);
    out.insert(out.end(), fd.frequencies.begin(), fd.frequencies.end());
  }
  return out;
}

/// Cramer's V of every variable pair; undefined pairs contribute 0.
inline std::vector<double> pairwise_cramers_v(const CategoricalData& data) {
  std::vector<double> out;
  for (std::size_t i = 0; i < data.variables(); ++i)
    for (std::size_t j = i + 1; j < data.variables(); ++j) out.push_back(cramers_v(data, i, j).value_or(0.0));
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct ViewScore {
  double srmse = 0.0;
  std::optional<double> corr;
  std::optional<double> r2;
};

inline ViewScore score_view(std::span<const double> estimate, std::span<const double> reference) {
  auto cr = corr_r2(estimate, reference);
  return {srmse(estimate, reference), cr.corr, cr.r2};
}

struct MethodScores {
  std::string method;
  ViewScore marginal, bivariate, trivariate, projected, pairwise;
  DiversityStats diversity;
};

struct EvalReport {
  std::vector<MethodScores> rows;
  json metadata = json::object();

  const MethodScores* find(std::string_view method) const {
    for (const auto& r : rows)
      if (r.method == method) return &r;
    return nullptr;
  }
};

struct NamedPool {
  std::string name;
  AgentPool pool;
};

inline constexpr std::string_view kTrainingSetRow = "training-set";

/// Precomputed reference vectors of the test pool, reused for every method.
struct ViewReference {
  std::vector<std::vector<std::vector<std::size_t>>> subsets;  // per View
  std::vector<std::vector<double>> frequencies;               // per View
  std::vector<double> cramers;

  ViewReference(const CategoricalData& test, std::span<const std::size_t> projection) {
    for (View v : {View::marginal, View::bivariate, View::trivariate, View::projected}) {
      subsets.push_back(view_subsets(test.variables(), v, projection));
      frequencies.push_back(view_frequencies(test, subsets.back()));
    }
    cramers = pairwise_cramers_v(test);
  }
};

/// Views without any subset (e.g. trivariate on two variables) keep SRMSE 0
/// and missing Corr/R^2.
inline MethodScores score_pool(std::string name, const CategoricalData& data, const ViewReference& ref) {
  MethodScores m;
  m.method = std::move(name);
  ViewScore* slots[] = {&m.marginal, &m.bivariate, &m.trivariate, &m.projected};
  for (std::size_t v = 0; v < 4; ++v)
    if (!ref.subsets[v].empty()) *slots[v] = score_view(view_frequencies(data, ref.subsets[v]), ref.frequencies[v]);
  if (!ref.cramers.empty()) m.pairwise = score_view(pairwise_cramers_v(data), ref.cramers);
  return m;
}

/// Scores every method pool against `test`, followed by a reference row for
/// the training set itself. Diversity is measured against the training set
/// in the encoded space of `standardization`; the training-set row measures
/// it against the test set instead.
inline EvalReport evaluate(std::span<const NamedPool> methods, const AgentPool& test, const AgentPool& train,
                           std::span<const std::size_t> projection, const Standardization& standardization) {
  if (projection.empty()) throw ConfigError("projection subset is empty");
  for (std::size_t v : projection)
    if (v >= test.schema->size()) throw ConfigError("projection variable out of range");
  const CategoricalData test_codes = to_categorical(test);
  const ViewReference ref(test_codes, projection);
  const Eigen::MatrixXd train_enc = one_hot_encode(train, standardization).values;

  EvalReport report;
  for (const auto& m : methods) {
    if (m.pool.empty()) throw InsufficientDataError("method '" + m.name + "' produced no agents");
    auto scores = score_pool(m.name, to_categorical(m.pool), ref);
    scores.diversity = nearest_sample_stats(one_hot_encode(m.pool, standardization).values, train_enc);
    report.rows.push_back(std::move(scores));
  }
  auto reference = score_pool(std::string(kTrainingSetRow), to_categorical(train), ref);
  reference.diversity = nearest_sample_stats(train_enc, one_hot_encode(test, standardization).values);
  report.rows.push_back(std::move(reference));
  return report;
}

inline json to_json(const ViewScore& s) {
  return {{"srmse", s.srmse},
          {"corr", s.corr ? json(*s.corr) : json(nullptr)},
          {"r2", s.r2 ? json(*s.r2) : json(nullptr)}};
}

inline json report_to_json(const EvalReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"method", r.method},
                    {"marginal", to_json(r.marginal)},
                    {"bivariate", to_json(r.bivariate)},
                    {"trivariate", to_json(r.trivariate)},
                    {"projected", to_json(r.projected)},
                    {"pairwise", to_json(r.pairwise)},
                    {"mu_ns", r.diversity.mu_ns},
                    {"sigma_ns", r.diversity.sigma_ns}});
  return {{"columns", {"Marg.", "Bivar.", "Trivar.", "Basic", "Pair.", "mu_NS", "sigma_NS"}},
          {"rows", rows},
          {"metadata", report.metadata}};
}

inline ViewScore view_score_from_json(const json& j) {
  ViewScore s;
  s.srmse = j.at("srmse").get<double>();
  if (!j.at("corr").is_null()) s.corr = j.at("corr").get<double>();
  if (!j.at("r2").is_null()) s.r2 = j.at("r2").get<double>();
  return s;
}

inline EvalReport report_from_json(const json& j) {
  EvalReport report;
  for (const auto& r : j.at("rows")) {
    MethodScores m;
    m.method = r.at("method").get<std::string>();
    m.marginal = view_score_from_json(r.at("marginal"));
    m.bivariate = view_score_from_json(r.at("bivariate"));
    m.trivariate = view_score_from_json(r.at("trivariate"));
    m.projected = view_score_from_json(r.at("projected"));
    m.pairwise = view_score_from_json(r.at("pairwise"));
    m.diversity = {r.at("mu_ns").get<double>(), r.at("sigma_ns").get<double>()};
    report.rows.push_back(std::move(m));
  }
  report.metadata = j.value("metadata", json::object());
  return report;
}

/// SRMSE table with one row per method and one column per view, followed by
/// the diversity statistics.
inline void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "method,Marg.,Bivar.,Trivar.,Basic,Pair.,mu_NS,sigma_NS\n";
  for (const auto& r : report.rows) {
    out << r.method;
    for (double v : {r.marginal.srmse, r.bivariate.srmse, r.trivariate.srmse, r.projected.srmse,
                     r.pairwise.srmse, r.diversity.mu_ns, r.diversity.sigma_ns})
      out << ',' << detail::format_number(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// PCA

struct Pca {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components;  // n x k, orthonormal columns
  Eigen::VectorXd explained_variance;  // nonincreasing
  double total_variance = 0.0;         // trace of the sample covariance
};

/// Principal components of `x` (one sample per row) from the eigendecomposition
/// of the sample covariance. Components with numerically zero variance are
/// dropped, so k may be smaller than the column count.
inline Pca pca_fit(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw InsufficientDataError("PCA needs at least two rows");
  Pca p;
  p.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - p.mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  p.total_variance = cov.trace();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const double cutoff = 1e-12 * std::max(1.0, values.size() ? values(values.size() - 1) : 0.0);
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values(i) > cutoff) ++kept;
  p.components.resize(cov.rows(), kept);
  p.explained_variance.resize(kept);
  for (Eigen::Index c = 0; c < kept; ++c) {
    const Eigen::Index src = values.size() - 1 - c;
    p.components.col(c) = solver.eigenvectors().col(src);
    p.explained_variance(c) = values(src);
  }
  return p;
}

inline Eigen::MatrixXd pca_project(const Pca& pca, const Eigen::MatrixXd& x, std::size_t k) {
  if (x.cols() != pca.components.rows()) throw SchemaMismatchError("PCA input width mismatch");
  const auto kk = std::min<Eigen::Index>(static_cast<Eigen::Index>(k), pca.components.cols());
  return (x.rowwise() - pca.mean) * pca.components.leftCols(kk);
}

}  // namespace popsynth
