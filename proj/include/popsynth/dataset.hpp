#pragma once

// Variable schema, agent pools and their numeric encodings.
//
// A pool row stores one double per schema variable. Categorical and binary
// variables hold the category index; numerical variables hold the raw value.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "popsynth/error.hpp"
#include "popsynth/random.hpp"

namespace popsynth {

using json = nlohmann::json;

enum class VariableKind { numerical_int, numerical_cont, categorical, binary };

inline std::string_view to_string(VariableKind kind) {
  switch (kind) {
    case VariableKind::numerical_int:
      return "numerical-int";
    case VariableKind::numerical_cont:
      return "numerical-cont";
    case VariableKind::categorical:
      return "categorical";
    case VariableKind::binary:
      return "binary";
  }
  return "?";
}

inline VariableKind parse_variable_kind(std::string_view text) {
  if (text == "numerical-int") return VariableKind::numerical_int;
  if (text == "numerical-cont") return VariableKind::numerical_cont;
  if (text == "categorical") return VariableKind::categorical;
  if (text == "binary") return VariableKind::binary;
  throw ConfigError("unknown variable kind '" + std::string(text) + "'");
}

struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::categorical;
  std::vector<double> bin_edges;         // numerical only
  std::vector<std::string> categories;  // categorical / binary only

  bool is_numerical() const noexcept {
    return kind == VariableKind::numerical_int || kind == VariableKind::numerical_cont;
  }

  /// D_i: the number of one-hot slots (categories, or bins of a numerical).
  std::size_t category_count() const noexcept {
    return is_numerical() ? (bin_edges.empty() ? 0 : bin_edges.size() - 1) : categories.size();
  }

  void validate() const {
    if (name.empty()) throw ConfigError("variable with empty name");
    if (is_numerical()) {
      if (bin_edges.size() < 3)
        throw ConfigError("numerical variable '" + name + "' needs at least two bins");
      for (std::size_t i = 1; i < bin_edges.size(); ++i)
        if (!(bin_edges[i] > bin_edges[i - 1]))
          throw ConfigError("bin edges of '" + name + "' are not strictly ascending");
    } else {
      if (categories.size() < 2)
        throw ConfigError("categorical variable '" + name + "' needs at least two categories");
      if (kind == VariableKind::binary && categories.size() != 2)
        throw ConfigError("binary variable '" + name + "' must have exactly two categories");
      std::set<std::string> seen(categories.begin(), categories.end());
      if (seen.size() != categories.size())
        throw ConfigError("categories of '" + name + "' are not unique");
    }
  }

  std::optional<std::size_t> category_index(std::string_view label) const {
    for (std::size_t i = 0; i < categories.size(); ++i)
      if (categories[i] == label) return i;
    return std::nullopt;
  }
};

enum class SchemaMode { discretize_all, mixed };

inline std::string_view to_string(SchemaMode mode) {
  return mode == SchemaMode::mixed ? "mixed" : "discretize-all";
}

inline SchemaMode parse_schema_mode(std::string_view text) {
  if (text == "discretize-all") return SchemaMode::discretize_all;
  if (text == "mixed") return SchemaMode::mixed;
  throw ConfigError("unknown schema mode '" + std::string(text) + "'");
}

class Schema {
 public:
  Schema() = default;
  Schema(std::vector<VariableSpec> variables, SchemaMode mode)
      : variables_(std::move(variables)), mode_(mode) {
    if (variables_.empty()) throw ConfigError("schema declares no variables");
    std::set<std::string> names;
    for (const auto& v : variables_) {
      v.validate();
      if (!names.insert(v.name).second) throw ConfigError("duplicate variable name '" + v.name + "'");
    }
  }

  const std::vector<VariableSpec>& variables() const noexcept { return variables_; }
  std::size_t size() const noexcept { return variables_.size(); }
  const VariableSpec& operator[](std::size_t i) const { return variables_.at(i); }
  SchemaMode mode() const noexcept { return mode_; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < variables_.size(); ++i)
      if (variables_[i].name == name) return i;
    return std::nullopt;
  }

  /// True when variable i is represented by a one-hot block in the encoding.
  bool one_hot(std::size_t i) const {
    return !variables_.at(i).is_numerical() || mode_ == SchemaMode::discretize_all;
  }

  /// n: sum of one-hot widths plus one column per continuous numerical.
  std::size_t encoded_width() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < variables_.size(); ++i)
      n += one_hot(i) ? variables_[i].category_count() : 1;
    return n;
  }

  std::vector<int> category_counts() const {
    std::vector<int> counts;
    counts.reserve(variables_.size());
    for (const auto& v : variables_) counts.push_back(static_cast<int>(v.category_count()));
    return counts;
  }

  bool fully_categorical() const {
    return std::none_of(variables_.begin(), variables_.end(),
                        [](const VariableSpec& v) { return v.is_numerical(); });
  }

  /// Same variables, different mode.
  Schema with_mode(SchemaMode mode) const { return Schema(variables_, mode); }

 private:
  std::vector<VariableSpec> variables_;
  SchemaMode mode_ = SchemaMode::discretize_all;
};

using SchemaPtr = std::shared_ptr<const Schema>;

enum class Provenance { train, validation, test, generated };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::train:
      return "train";
    case Provenance::validation:
      return "validation";
    case Provenance::test:
      return "test";
    case Provenance::generated:
      return "generated";
  }
  return "?";
}

inline Provenance parse_provenance(std::string_view text) {
  if (text == "train") return Provenance::train;
  if (text == "validation") return Provenance::validation;
  if (text == "test") return Provenance::test;
  if (text == "generated") return Provenance::generated;
  throw DataError("unknown provenance '" + std::string(text) + "'");
}

using Row = std::vector<double>;

struct AgentPool {
  SchemaPtr schema;
  std::vector<Row> rows;
  Provenance provenance = Provenance::train;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
};

// ---------------------------------------------------------------------------
// Discretization

inline std::size_t discretize(double value, const VariableSpec& spec) {
  if (!spec.is_numerical() || spec.bin_edges.size() < 2)
    throw ConfigError("variable '" + spec.name + "' has no bin edges");
  const auto& edges = spec.bin_edges;
  if (!(value >= edges.front() && value <= edges.back()))
    throw OutOfRangeError("value " + std::to_string(value) + " of variable '" + spec.name +
                          "' lies outside [" + std::to_string(edges.front()) + ", " +
                          std::to_string(edges.back()) + "]");
  if (value == edges.back()) return edges.size() - 2;
  auto it = std::upper_bound(edges.begin(), edges.end(), value);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

inline std::vector<double> build_uniform_edges(std::span<const double> column, std::size_t k) {
  if (k < 2) throw ConfigError("uniform binning needs at least two bins");
  if (column.empty()) throw InsufficientDataError("cannot bin an empty column");
  auto [lo_it, hi_it] = std::minmax_element(column.begin(), column.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw DegenerateColumnError("constant column cannot be binned");
  std::vector<double> edges(k + 1);
  for (std::size_t i = 0; i <= k; ++i)
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k);
  edges.back() = hi;
  return edges;
}

/// Representative value of a bin: its midpoint, rounded for integer variables.
inline double bin_midpoint(const VariableSpec& spec, std::size_t bin) {
  const double mid = 0.5 * (spec.bin_edges.at(bin) + spec.bin_edges.at(bin + 1));
  return spec.kind == VariableKind::numerical_int ? std::round(mid) : mid;
}

/// Uniform draw inside a bin. Integer variables draw among the integers the
/// bin contains, falling back to the rounded midpoint when it contains none.
inline double draw_in_bin(const VariableSpec& spec, std::size_t bin, Rng& rng) {
  const double lo = spec.bin_edges.at(bin), hi = spec.bin_edges.at(bin + 1);
  const bool last = bin + 2 == spec.bin_edges.size();
  if (spec.kind == VariableKind::numerical_int) {
    const auto kmin = static_cast<long long>(std::ceil(lo));
    const auto kmax = static_cast<long long>(last ? std::floor(hi) : std::ceil(hi) - 1);
    if (kmin > kmax) return bin_midpoint(spec, bin);
    return static_cast<double>(std::uniform_int_distribution<long long>(kmin, kmax)(rng));
  }
  return lo + (hi - lo) * uniform01(rng);
}

// ---------------------------------------------------------------------------
// Categorical view: every variable as an integer code, numericals binned.

struct CategoricalData {
  std::vector<int> cardinality;
  std::vector<std::vector<int>> rows;

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t variables() const noexcept { return cardinality.size(); }
};

inline CategoricalData to_categorical(const AgentPool& pool) {
  const Schema& schema = *pool.schema;
  CategoricalData data;
  data.cardinality = schema.category_counts();
  data.rows.reserve(pool.size());
  for (const Row& row : pool.rows) {
    if (row.size() != schema.size()) throw SchemaMismatchError("row width does not match schema");
    std::vector<int> codes(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
      const auto& spec = schema[i];
      if (spec.is_numerical()) {
        codes[i] = static_cast<int>(discretize(row[i], spec));
      } else {
        const double v = row[i];
        if (!(v >= 0.0 && v < static_cast<double>(spec.categories.size())) || v != std::floor(v))
          throw UnknownCategoryError("invalid category index for '" + spec.name + "'");
        codes[i] = static_cast<int>(v);
      }
    }
    data.rows.push_back(std::move(codes));
  }
  return data;
}

/// Builds a pool from integer codes. Numerical variables get a uniform draw
/// inside the coded bin, so `rng` is only consumed when the schema has any.
inline AgentPool from_categorical(const SchemaPtr& schema, std::span<const std::vector<int>> codes,
                                  Provenance provenance, Rng& rng) {
  AgentPool pool{schema, {}, provenance};
  pool.rows.reserve(codes.size());
  for (const auto& c : codes) {
    Row row(schema->size());
    for (std::size_t i = 0; i < row.size(); ++i) {
      const auto& spec = (*schema)[i];
      row[i] = spec.is_numerical() ? draw_in_bin(spec, static_cast<std::size_t>(c[i]), rng)
                                   : static_cast<double>(c[i]);
    }
    pool.rows.push_back(std::move(row));
  }
  return pool;
}

/// Throws if any row value does not conform to its variable.
inline void validate_pool(const AgentPool& pool) {
  if (!pool.schema) throw SchemaMismatchError("pool has no schema");
  for (const Row& row : pool.rows) {
    if (row.size() != pool.schema->size()) throw SchemaMismatchError("row width does not match schema");
    for (std::size_t i = 0; i < row.size(); ++i) {
      const auto& spec = (*pool.schema)[i];
      if (!std::isfinite(row[i])) throw NumericInputError("non-finite value in '" + spec.name + "'");
      if (spec.is_numerical()) {
        discretize(row[i], spec);
      } else if (row[i] < 0 || row[i] >= static_cast<double>(spec.categories.size()) ||
                 row[i] != std::floor(row[i])) {
        throw UnknownCategoryError("invalid category index for '" + spec.name + "'");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// One-hot encoding with standardized continuous numericals.

struct ColumnBlock {
  std::size_t variable = 0;
  std::size_t offset = 0;
  std::size_t width = 0;
  bool one_hot = true;
};

inline std::vector<ColumnBlock> column_layout(const Schema& schema) {
  std::vector<ColumnBlock> blocks;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const bool oh = schema.one_hot(i);
    const std::size_t width = oh ? schema[i].category_count() : 1;
    blocks.push_back({i, offset, width, oh});
    offset += width;
  }
  return blocks;
}

/// Per-variable (mean, std); entries for one-hot variables stay (0, 1).
struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline Standardization identity_standardization(const Schema& schema) {
  return {std::vector<double>(schema.size(), 0.0), std::vector<double>(schema.size(), 1.0)};
}

inline Standardization fit_standardization(const AgentPool& train) {
  const Schema& schema = *train.schema;
  Standardization st = identity_standardization(schema);
  if (train.empty()) return st;
  const double n = static_cast<double>(train.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema.one_hot(i)) continue;
    double mean = 0.0;
    for (const Row& r : train.rows) mean += r[i];
    mean /= n;
    double var = 0.0;
    for (const Row& r : train.rows) var += (r[i] - mean) * (r[i] - mean);
    const double sd = std::sqrt(var / n);
    st.mean[i] = mean;
    st.stddev[i] = sd > 0.0 ? sd : 1.0;  // constant column: leave centred only
  }
  return st;
}

struct EncodedMatrix {
  SchemaPtr schema;
  Eigen::MatrixXd values;  // N x n
  std::vector<ColumnBlock> column_map;
  Standardization standardization;
};

inline EncodedMatrix one_hot_encode(const AgentPool& pool, const Standardization& st) {
  const Schema& schema = *pool.schema;
  EncodedMatrix m{pool.schema, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pool.size()),
                                                    static_cast<Eigen::Index>(schema.encoded_width())),
                  column_layout(schema), st};
  for (std::size_t r = 0; r < pool.size(); ++r) {
    const Row& row = pool.rows[r];
    if (row.size() != schema.size()) throw SchemaMismatchError("row width does not match schema");
    for (const ColumnBlock& b : m.column_map) {
      const auto& spec = schema[b.variable];
      const double v = row[b.variable];
      if (!std::isfinite(v)) throw NumericInputError("non-finite value in '" + spec.name + "'");
      const auto ri = static_cast<Eigen::Index>(r);
      if (!b.one_hot) {
        m.values(ri, static_cast<Eigen::Index>(b.offset)) =
            (v - st.mean[b.variable]) / st.stddev[b.variable];
        continue;
      }
      std::size_t slot;
      if (spec.is_numerical()) {
        slot = discretize(v, spec);
      } else {
        if (v < 0 || v >= static_cast<double>(spec.categories.size()) || v != std::floor(v))
          throw UnknownCategoryError("unknown category for variable '" + spec.name + "'");
        slot = static_cast<std::size_t>(v);
      }
      m.values(ri, static_cast<Eigen::Index>(b.offset + slot)) = 1.0;
    }
  }
  return m;
}

/// Encodes a training pool using its own standardization statistics.
inline EncodedMatrix one_hot_encode(const AgentPool& train) {
  return one_hot_encode(train, fit_standardization(train));
}

/// Inverse of the encoding. One-hot blocks may hold probabilities: the
/// category is the argmax (ties to the lowest index). Discretized numericals
/// decode to the bin midpoint; continuous ones are de-standardized and
/// clamped to the outer bin edges.
inline AgentPool decode_rows(const EncodedMatrix& m) {
  const Schema& schema = *m.schema;
  if (static_cast<std::size_t>(m.values.cols()) != schema.encoded_width())
    throw SchemaMismatchError("encoded width " + std::to_string(m.values.cols()) +
                              " does not match schema width " +
                              std::to_string(schema.encoded_width()));
  const auto layout = column_layout(schema);
  AgentPool pool{m.schema, {}, Provenance::generated};
  pool.rows.reserve(static_cast<std::size_t>(m.values.rows()));
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    Row row(schema.size());
    for (const ColumnBlock& b : layout) {
      const auto& spec = schema[b.variable];
      const auto off = static_cast<Eigen::Index>(b.offset);
      if (b.one_hot) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < b.width; ++j)
          if (m.values(r, off + static_cast<Eigen::Index>(j)) >
              m.values(r, off + static_cast<Eigen::Index>(best)))
            best = j;
        row[b.variable] = spec.is_numerical() ? bin_midpoint(spec, best) : static_cast<double>(best);
      } else {
        double v = m.standardization.mean[b.variable] +
                   m.values(r, off) * m.standardization.stddev[b.variable];
        if (spec.kind == VariableKind::numerical_int) v = std::round(v);
        row[b.variable] = std::clamp(v, spec.bin_edges.front(), spec.bin_edges.back());
      }
    }
    pool.rows.push_back(std::move(row));
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Splits

struct Splits {
  AgentPool train;
  AgentPool validation;
  AgentPool test;
};

/// Seeded shuffle, then `train_frac` of the rows become the model-estimation
/// set, of which `val_frac_of_train` is held out for validation.
inline Splits split(const AgentPool& pool, double train_frac, double val_frac_of_train,
                    std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0) || !(val_frac_of_train > 0.0 && val_frac_of_train < 1.0))
    throw ConfigError("split fractions must lie in (0, 1)");
  const std::size_t n = pool.size();
  const auto estimation = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_frac));
  const auto validation =
      static_cast<std::size_t>(std::llround(static_cast<double>(estimation) * val_frac_of_train));
  if (estimation >= n || validation == 0 || validation >= estimation)
    throw InsufficientDataError("pool of " + std::to_string(n) + " rows is too small to split");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Splits s{{pool.schema, {}, Provenance::train},
           {pool.schema, {}, Provenance::validation},
           {pool.schema, {}, Provenance::test}};
  for (std::size_t k = 0; k < n; ++k) {
    const Row& row = pool.rows[order[k]];
    if (k < estimation - validation)
      s.train.rows.push_back(row);
    else if (k < estimation)
      s.validation.rows.push_back(row);
    else
      s.test.rows.push_back(row);
  }
  return s;
}

/// Concatenation of two pools over the same schema.
inline AgentPool concat(const AgentPool& a, const AgentPool& b, Provenance provenance) {
  AgentPool out{a.schema, a.rows, provenance};
  out.rows.insert(out.rows.end(), b.rows.begin(), b.rows.end());
  return out;
}

// ---------------------------------------------------------------------------
// CSV

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline bool is_missing(std::string_view s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null";
}

}  // namespace detail

inline RawTable read_csv(std::istream& in) {
  RawTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV input is empty");
  t.header = detail::split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != t.header.size())
      throw DataError("CSV row " + std::to_string(t.rows.size() + 1) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

/// Converts a raw table to a pool. Columns must follow schema order; an
/// optional trailing `provenance` column overrides `provenance`. Rows with
/// missing values are rejected.
inline AgentPool pool_from_table(const RawTable& table, const SchemaPtr& schema, Provenance provenance) {
  const std::size_t nv = schema->size();
  bool has_prov = table.header.size() == nv + 1 && table.header.back() == "provenance";
  if (table.header.size() != nv && !has_prov)
    throw SchemaMismatchError("CSV has " + std::to_string(table.header.size()) +
                              " columns, schema declares " + std::to_string(nv));
  for (std::size_t i = 0; i < nv; ++i)
    if (table.header[i] != (*schema)[i].name)
      throw SchemaMismatchError("CSV column " + std::to_string(i) + " is '" + table.header[i] +
                                "', schema expects '" + (*schema)[i].name + "'");
  AgentPool pool{schema, {}, provenance};
  pool.rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& fields = table.rows[r];
    Row row(nv);
    for (std::size_t i = 0; i < nv; ++i) {
      const auto& spec = (*schema)[i];
      const std::string& f = fields[i];
      if (detail::is_missing(f))
        throw DataError("missing value for '" + spec.name + "' in row " + std::to_string(r + 1));
      if (spec.is_numerical()) {
        auto v = detail::parse_number(f);
        if (!v) throw DataError("non-numeric value '" + f + "' for '" + spec.name + "'");
        discretize(*v, spec);  // range check
        row[i] = *v;
      } else {
        auto idx = spec.category_index(f);
        if (!idx) throw UnknownCategoryError("unknown category '" + f + "' for '" + spec.name + "'");
        row[i] = static_cast<double>(*idx);
      }
    }
    if (has_prov) pool.provenance = parse_provenance(fields.back());
    pool.rows.push_back(std::move(row));
  }
  return pool;
}

inline std::string format_value(const VariableSpec& spec, double v) {
  if (!spec.is_numerical()) return spec.categories.at(static_cast<std::size_t>(v));
  return detail::format_number(v);
}

/// Header identical to the schema; generated pools carry a provenance column.
inline void write_pool_csv(std::ostream& out, const AgentPool& pool) {
  const Schema& schema = *pool.schema;
  const bool with_prov = pool.provenance == Provenance::generated;
  for (std::size_t i = 0; i < schema.size(); ++i)
    out << (i ? "," : "") << detail::csv_field(schema[i].name);
  if (with_prov) out << ",provenance";
  out << '\n';
  for (const Row& row : pool.rows) {
    for (std::size_t i = 0; i < schema.size(); ++i)
      out << (i ? "," : "") << detail::csv_field(format_value(schema[i], row[i]));
    if (with_prov) out << ',' << to_string(pool.provenance);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Schema JSON

inline json schema_to_json(const Schema& schema) {
  json vars = json::array();
  for (const auto& v : schema.variables()) {
    json j{{"name", v.name}, {"kind", std::string(to_string(v.kind))}};
    if (v.is_numerical())
      j["bin_edges"] = v.bin_edges;
    else
      j["categories"] = v.categories;
    vars.push_back(std::move(j));
  }
  return json{{"mode", std::string(to_string(schema.mode()))}, {"variables", std::move(vars)}};
}

/// Parses a schema document. A numerical variable may give `bins: k` instead
/// of explicit `bin_edges`; the edges are then spread uniformly over the
/// observed range of that column in `data`.
inline Schema schema_from_json(const json& doc, const RawTable* data = nullptr) {
  try {
    const SchemaMode mode = parse_schema_mode(doc.value("mode", std::string("discretize-all")));
    std::vector<VariableSpec> vars;
    for (const auto& jv : doc.at("variables")) {
      VariableSpec v;
      v.name = jv.at("name").get<std::string>();
      v.kind = parse_variable_kind(jv.at("kind").get<std::string>());
      if (v.is_numerical()) {
        if (jv.contains("bin_edges")) {
          v.bin_edges = jv.at("bin_edges").get<std::vector<double>>();
        } else {
          const auto k = jv.at("bins").get<std::size_t>();
          if (!data) throw ConfigError("variable '" + v.name + "' gives a bin count but no data was supplied");
          auto col = std::find(data->header.begin(), data->header.end(), v.name);
          if (col == data->header.end()) throw SchemaMismatchError("no CSV column named '" + v.name + "'");
          const auto ci = static_cast<std::size_t>(col - data->header.begin());
          std::vector<double> values;
          values.reserve(data->rows.size());
          for (const auto& r : data->rows) {
            if (detail::is_missing(r[ci])) throw DataError("missing value for '" + v.name + "'");
            auto x = detail::parse_number(r[ci]);
            if (!x) throw DataError("non-numeric value '" + r[ci] + "' for '" + v.name + "'");
            values.push_back(*x);
          }
          v.bin_edges = build_uniform_edges(values, k);
        }
      } else if (v.kind == VariableKind::binary && !jv.contains("categories")) {
        v.categories = {"0", "1"};
      } else {
        v.categories = jv.at("categories").get<std::vector<std::string>>();
      }
      vars.push_back(std::move(v));
    }
    return Schema(std::move(vars), mode);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed schema document: ") + e.what());
  }
}

inline json standardization_to_json(const Standardization& st) {
  return json{{"mean", st.mean}, {"std", st.stddev}};
}

inline Standardization standardization_from_json(const json& j) {
  return {j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
}

}  // namespace popsynth
