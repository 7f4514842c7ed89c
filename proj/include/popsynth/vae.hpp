#pragma once

// Variational autoencoder over one-hot / standardized agent encodings.
//
// The encoder maps an encoded row to the mean and log-variance of a diagonal
// Gaussian latent; the decoder mirrors the encoder's hidden stack and ends in
// one head per schema variable (softmax for one-hot blocks, linear for
// continuous numericals).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "popsynth/dataset.hpp"
#include "popsynth/error.hpp"
#include "popsynth/metrics.hpp"
#include "popsynth/neural.hpp"
#include "popsynth/random.hpp"

namespace popsynth {

inline constexpr double kProbabilityFloor = 1e-12;

struct VaeArchitecture {
  std::vector<std::size_t> hidden;  // encoder hidden widths; decoder uses the reverse
  std::size_t latent_dim = 5;
  double beta = 1.0;
};

struct VaeModel {
  SchemaPtr schema;
  Standardization standardization;
  Mlp encoder;
  Mlp decoder;
  VaeArchitecture architecture;

  std::size_t latent_dim() const noexcept { return architecture.latent_dim; }
  double beta() const noexcept { return architecture.beta; }
};

/// Decoder heads following the schema's column layout.
inline std::vector<OutputHead> schema_heads(const Schema& schema) {
  std::vector<OutputHead> heads;
  for (const auto& b : column_layout(schema))
    heads.push_back({b.one_hot ? HeadKind::softmax : HeadKind::linear, b.offset, b.width});
  return heads;
}

inline VaeModel make_vae(const SchemaPtr& schema, Standardization standardization,
                         const VaeArchitecture& arch, Rng& rng) {
  if (arch.latent_dim == 0) throw ConfigError("latent dimensionality must be positive");
  if (!(arch.beta > 0.0)) throw ConfigError("beta must be positive");
  const std::size_t n = schema->encoded_width();
  const std::size_t dz = arch.latent_dim;

  std::vector<std::size_t> enc{n};
  enc.insert(enc.end(), arch.hidden.begin(), arch.hidden.end());
  enc.push_back(2 * dz);
  std::vector<std::size_t> dec{dz};
  dec.insert(dec.end(), arch.hidden.rbegin(), arch.hidden.rend());
  dec.push_back(n);

  VaeModel m;
  m.schema = schema;
  m.standardization = std::move(standardization);
  m.architecture = arch;
  m.encoder = make_mlp(enc, {{HeadKind::linear, 0, dz}, {HeadKind::linear, dz, dz}}, rng);
  m.decoder = make_mlp(dec, schema_heads(*schema), rng);
  return m;
}

struct LatentParams {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_variance;
};

inline LatentParams encode(const VaeModel& model, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != model.schema->encoded_width())
    throw SchemaMismatchError("encoded row has width " + std::to_string(x.size()) + ", expected " +
                              std::to_string(model.schema->encoded_width()));
  const Eigen::VectorXd out = forward(model.encoder, x);
  const auto dz = static_cast<Eigen::Index>(model.latent_dim());
  return {out.head(dz), out.tail(dz)};
}

/// z = mean + exp(log_variance / 2) * epsilon.
inline Eigen::VectorXd reparameterize(const LatentParams& lp, const Eigen::VectorXd& epsilon) {
  if (epsilon.size() != lp.mean.size() || lp.log_variance.size() != lp.mean.size())
    throw SchemaMismatchError("latent dimensionality mismatch");
  return lp.mean + ((0.5 * lp.log_variance.array()).exp() * epsilon.array()).matrix();
}

inline Eigen::VectorXd decode(const VaeModel& model, const Eigen::VectorXd& z) {
  return forward(model.decoder, z);
}

struct LossTerms {
  double total = 0.0;
  double numeric = 0.0;
  double categorical = 0.0;
  double kl = 0.0;
};

/// Per-row loss: squared error on continuous columns (halved), cross-entropy
/// on one-hot blocks, plus beta times KL(N(mean, exp(log_variance)) || N(0, I)).
inline LossTerms loss(const VaeModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& xhat,
                      const LatentParams& lp) {
  LossTerms t;
  for (const auto& h : model.decoder.heads) {
    for (std::size_t j = h.offset; j < h.offset + h.width; ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      if (h.kind == HeadKind::linear) {
        t.numeric += 0.5 * (x(c) - xhat(c)) * (x(c) - xhat(c));
      } else if (x(c) != 0.0) {
        t.categorical -= x(c) * std::log(std::max(xhat(c), kProbabilityFloor));
      }
    }
  }
  const auto& lv = lp.log_variance.array();
  t.kl = -0.5 * (1.0 + lv - lp.mean.array().square() - lv.exp()).sum();
  t.total = t.numeric + t.categorical + model.beta() * t.kl;
  return t;
}

struct VaeGradients {
  MlpGradients encoder;
  MlpGradients decoder;
};

/// Mean loss over the batch (`x` is n x B, `epsilon` is D_Z x B) and, when
/// `grads` is non-null, its gradient with respect to every parameter.
inline LossTerms loss_and_gradients(const VaeModel& model, const Eigen::MatrixXd& x,
                                    const Eigen::MatrixXd& epsilon, VaeGradients* grads) {
  const auto dz = static_cast<Eigen::Index>(model.latent_dim());
  const Eigen::Index batch = x.cols();
  if (epsilon.rows() != dz || epsilon.cols() != batch) throw SchemaMismatchError("epsilon shape mismatch");
  if (batch == 0) return {};

  const ForwardCache enc = forward(model.encoder, x);
  const auto mean = enc.output.topRows(dz);
  const auto logvar = enc.output.bottomRows(dz);
  const Eigen::MatrixXd sigma = (0.5 * logvar.array()).exp().matrix();
  const Eigen::MatrixXd z = mean + (sigma.array() * epsilon.array()).matrix();
  const ForwardCache dec = forward(model.decoder, z);
  const Eigen::MatrixXd& xhat = dec.output;

  const double inv_b = 1.0 / static_cast<double>(batch);
  LossTerms t;
  Eigen::MatrixXd g_out = Eigen::MatrixXd::Zero(xhat.rows(), batch);
  for (const auto& h : model.decoder.heads) {
    const auto off = static_cast<Eigen::Index>(h.offset), w = static_cast<Eigen::Index>(h.width);
    for (Eigen::Index c = 0; c < batch; ++c) {
      for (Eigen::Index r = off; r < off + w; ++r) {
        if (h.kind == HeadKind::linear) {
          const double d = xhat(r, c) - x(r, c);
          t.numeric += 0.5 * d * d;
          g_out(r, c) = d * inv_b;
        } else if (x(r, c) != 0.0) {
          const double p = xhat(r, c);
          t.categorical -= x(r, c) * std::log(std::max(p, kProbabilityFloor));
          if (p > kProbabilityFloor) g_out(r, c) = -x(r, c) / p * inv_b;
        }
      }
    }
  }
  const Eigen::ArrayXXd lv = logvar.array();
  t.kl = -0.5 * (1.0 + lv - mean.array().square() - lv.exp()).sum();
  t.numeric *= inv_b;
  t.categorical *= inv_b;
  t.kl *= inv_b;
  t.total = t.numeric + t.categorical + model.beta() * t.kl;
  if (!grads) return t;

  grads->decoder = backward(model.decoder, dec, g_out);
  const Eigen::MatrixXd& g_z = grads->decoder.input;
  const double beta = model.beta();
  Eigen::MatrixXd g_enc(2 * dz, batch);
  g_enc.topRows(dz) = g_z + beta * inv_b * mean;
  g_enc.bottomRows(dz) = (g_z.array() * epsilon.array() * 0.5 * sigma.array() +
                          beta * inv_b * 0.5 * (lv.exp() - 1.0))
                             .matrix();
  grads->encoder = backward(model.encoder, enc, g_enc);
  return t;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  double rho = 0.9;
  std::vector<std::vector<std::size_t>> hidden_options{{25}, {50}, {100}, {50, 25}, {100, 50}, {100, 50, 25}};
  std::vector<std::size_t> latent_options{5, 10, 25};
  std::vector<double> beta_options{0.01, 0.05, 0.1, 0.5, 1.0, 10.0, 100.0};
  std::vector<std::size_t> selection_variables;  // empty: the first four
  std::size_t selection_samples = 10000;
  bool sample_categoricals = false;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (hidden_options.empty() || latent_options.empty() || beta_options.empty())
      throw ConfigError("hyperparameter grid is empty");
    for (double b : beta_options)
      if (!(b > 0.0)) throw ConfigError("beta must be positive");
  }
};

struct EpochLoss {
  std::size_t grid_point = 0;
  std::size_t epoch = 0;
  LossTerms mean;
};

struct TrainResult {
  VaeModel model;
  std::vector<EpochLoss> history;
};

/// Minibatch RMSprop on the rows of `train` for `epochs` passes. Each epoch
/// reshuffles the rows; every row draws a fresh epsilon per step.
inline TrainResult train(VaeModel model, const EncodedMatrix& train, std::size_t epochs, std::size_t batch_size,
                         double learning_rate, double rho, Rng& rng, std::size_t grid_point = 0) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (static_cast<std::size_t>(train.values.cols()) != model.schema->encoded_width())
    throw SchemaMismatchError("training matrix width does not match the model");
  TrainResult result{std::move(model), {}};
  VaeModel& m = result.model;
  if (epochs == 0 || train.values.rows() == 0) return result;

  RmspropState enc_opt = make_rmsprop(m.encoder, learning_rate, rho);
  RmspropState dec_opt = make_rmsprop(m.decoder, learning_rate, rho);
  const Eigen::MatrixXd data = train.values.transpose();  // n x N
  const auto n_rows = static_cast<std::size_t>(data.cols());
  const auto dz = static_cast<Eigen::Index>(m.latent_dim());
  std::vector<Eigen::Index> order(n_rows);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossTerms sum;
    for (std::size_t start = 0; start < n_rows; start += batch_size) {
      const std::size_t b = std::min(batch_size, n_rows - start);
      Eigen::MatrixXd xb(data.rows(), static_cast<Eigen::Index>(b));
      for (std::size_t k = 0; k < b; ++k) xb.col(static_cast<Eigen::Index>(k)) = data.col(order[start + k]);
      Eigen::MatrixXd eps(dz, static_cast<Eigen::Index>(b));
      for (Eigen::Index c = 0; c < eps.cols(); ++c)
        for (Eigen::Index r = 0; r < dz; ++r) eps(r, c) = standard_normal(rng);
      const std::string where = "grid point " + std::to_string(grid_point) + ", epoch " + std::to_string(epoch);
      VaeGradients g;
      LossTerms t;
      try {
        t = loss_and_gradients(m, xb, eps, &g);
      } catch (const NumericInputError& e) {
        throw DivergenceError(std::string(e.what()) + " at " + where);
      }
      if (!std::isfinite(t.total)) throw DivergenceError("non-finite loss at " + where);
      const double w = static_cast<double>(b);
      sum.total += t.total * w;
      sum.numeric += t.numeric * w;
      sum.categorical += t.categorical * w;
      sum.kl += t.kl * w;
      rmsprop_step(m.encoder, g.encoder, enc_opt, "encoder");
      rmsprop_step(m.decoder, g.decoder, dec_opt, "decoder");
    }
    const double inv = 1.0 / static_cast<double>(n_rows);
    result.history.push_back(
        {grid_point, epoch, {sum.total * inv, sum.numeric * inv, sum.categorical * inv, sum.kl * inv}});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sampling

/// Draws z ~ N(0, I), decodes, and hardens each categorical block by argmax
/// (or by sampling from its softmax when `sample_categoricals`).
inline AgentPool sample(const VaeModel& model, std::size_t count, std::uint64_t seed,
                        bool sample_categoricals = false) {
  Rng rng(seed);
  const auto dz = static_cast<Eigen::Index>(model.latent_dim());
  const auto layout = column_layout(*model.schema);
  AgentPool pool{model.schema, {}, Provenance::generated};
  pool.rows.reserve(count);
  constexpr std::size_t kChunk = 4096;
  for (std::size_t start = 0; start < count; start += kChunk) {
    const auto b = static_cast<Eigen::Index>(std::min(kChunk, count - start));
    Eigen::MatrixXd z(dz, b);
    for (Eigen::Index c = 0; c < b; ++c)
      for (Eigen::Index r = 0; r < dz; ++r) z(r, c) = standard_normal(rng);
    Eigen::MatrixXd out = forward(model.decoder, z).output;
    if (sample_categoricals) {
      for (const auto& blk : layout) {
        if (!blk.one_hot) continue;
        const auto off = static_cast<Eigen::Index>(blk.offset), w = static_cast<Eigen::Index>(blk.width);
        for (Eigen::Index c = 0; c < b; ++c) {
          Eigen::VectorXd p = out.col(c).segment(off, w);
          const auto pick = static_cast<Eigen::Index>(
              sample_index(std::span<const double>(p.data(), static_cast<std::size_t>(w)), rng));
          out.col(c).segment(off, w).setZero();
          out(off + pick, c) = 1.0;
        }
      }
    }
    EncodedMatrix em{model.schema, out.transpose(), layout, model.standardization};
    auto decoded = decode_rows(em);
    for (auto& r : decoded.rows) pool.rows.push_back(std::move(r));
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Grid search

struct GridPoint {
  std::vector<std::size_t> hidden;
  std::size_t latent_dim = 5;
  double beta = 1.0;
};

inline std::vector<GridPoint> expand_grid(const TrainConfig& config) {
  std::vector<GridPoint> points;
  for (const auto& h : config.hidden_options)
    for (std::size_t dz : config.latent_options)
      for (double beta : config.beta_options) points.push_back({h, dz, beta});
  return points;
}

inline std::vector<std::size_t> selection_subset(const TrainConfig& config, const Schema& schema) {
  if (!config.selection_variables.empty()) {
    for (std::size_t v : config.selection_variables)
      if (v >= schema.size()) throw ConfigError("selection variable out of range");
    return config.selection_variables;
  }
  std::vector<std::size_t> s(std::min<std::size_t>(4, schema.size()));
  std::iota(s.begin(), s.end(), std::size_t{0});
  return s;
}

struct GridSearchResult {
  VaeModel best;
  std::size_t best_index = 0;
  std::vector<GridPoint> points;
  std::vector<double> scores;  // validation SRMSE of the projected joint, per grid point
  std::vector<EpochLoss> history;
};

/// Trains one model per grid point on `train` and keeps the one whose hardened
/// samples best match `validation` on the joint of the selection variables.
/// Standardization comes from `train`. Every grid point draws its RNG streams
/// from (seed, grid index), so results do not depend on evaluation order.
inline GridSearchResult grid_search(const AgentPool& train_pool, const AgentPool& validation,
                                    const TrainConfig& config) {
  config.validate();
  if (train_pool.empty()) throw InsufficientDataError("VAE training pool is empty");
  if (validation.empty()) throw InsufficientDataError("VAE validation pool is empty");
  const Standardization st = fit_standardization(train_pool);
  const EncodedMatrix enc = one_hot_encode(train_pool, st);
  const auto subset = selection_subset(config, *train_pool.schema);
  const auto val_fd = frequency_distribution(to_categorical(validation), subset);

  GridSearchResult out;
  out.points = expand_grid(config);
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < out.points.size(); ++g) {
    const auto& p = out.points[g];
    Rng init_rng(derive_seed(config.seed, "vae/init/" + std::to_string(g)));
    Rng train_rng(derive_seed(config.seed, "vae/train/" + std::to_string(g)));
    VaeModel model = make_vae(train_pool.schema, st, {p.hidden, p.latent_dim, p.beta}, init_rng);
    auto trained = train(std::move(model), enc, config.epochs, config.batch_size, config.learning_rate,
                         config.rho, train_rng, g);
    out.history.insert(out.history.end(), trained.history.begin(), trained.history.end());
    const auto generated = sample(trained.model, config.selection_samples,
                                  derive_seed(config.seed, "vae/select/" + std::to_string(g)),
                                  config.sample_categoricals);
    const double score = srmse(frequency_distribution(to_categorical(generated), subset), val_fd);
    out.scores.push_back(score);
    if (score < best_score) {
      best_score = score;
      out.best_index = g;
      out.best = std::move(trained.model);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint

inline constexpr int kVaeCheckpointVersion = 1;

inline json vae_to_json(const VaeModel& m) {
  return {{"format", "popsynth-vae"},
          {"version", kVaeCheckpointVersion},
          {"schema", schema_to_json(*m.schema)},
          {"standardization", standardization_to_json(m.standardization)},
          {"hidden", m.architecture.hidden},
          {"latent_dim", m.architecture.latent_dim},
          {"beta", m.architecture.beta},
          {"encoder", mlp_to_json(m.encoder)},
          {"decoder", mlp_to_json(m.decoder)}};
}

inline VaeModel vae_from_json(const json& j) {
  try {
    if (j.at("format") != "popsynth-vae" || j.at("version").get<int>() != kVaeCheckpointVersion)
      throw ConfigError("unsupported VAE checkpoint format");
    VaeModel m;
    m.schema = std::make_shared<const Schema>(schema_from_json(j.at("schema")));
    m.standardization = standardization_from_json(j.at("standardization"));
    m.architecture = {j.at("hidden").get<std::vector<std::size_t>>(), j.at("latent_dim").get<std::size_t>(),
                      j.at("beta").get<double>()};
    m.encoder = mlp_from_json(j.at("encoder"));
    m.decoder = mlp_from_json(j.at("decoder"));
    if (static_cast<std::size_t>(m.encoder.input_width()) != m.schema->encoded_width() ||
        static_cast<std::size_t>(m.decoder.output_width()) != m.schema->encoded_width())
      throw ConfigError("checkpoint networks do not match its schema");
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed VAE checkpoint: ") + e.what());
  }
}

/// Training log rows: grid point, epoch, numeric, categorical, KL, total.
inline void write_training_log(std::ostream& out, const std::vector<EpochLoss>& history) {
  out << "grid_point,epoch,numeric,categorical,kl,total\n";
  for (const auto& e : history)
    out << e.grid_point << ',' << e.epoch << ',' << detail::format_number(e.mean.numeric) << ','
        << detail::format_number(e.mean.categorical) << ',' << detail::format_number(e.mean.kl) << ','
        << detail::format_number(e.mean.total) << '\n';
}

}  // namespace popsynth
