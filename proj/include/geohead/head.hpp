#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geohead/errors.hpp"
#include "geohead/features.hpp"
#include "geohead/loss.hpp"
#include "geohead/random.hpp"

namespace geohead {

// Shape of one model: key-head kind and outcome count, plus the number of
// single-outcome minor heads used only during training.
struct HeadConfig {
  HeadKind kind = HeadKind::pmop;
  int outcomes = 5;
  int embedding_dim = 768;
  int minor_features = 0;
  CovarianceActivation covariance_activation = CovarianceActivation::lower_bounded;
  LossCombination loss_combination = LossCombination::average;

  void validate() const {
    if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
    if (outcomes < 1) throw ConfigError("outcomes must be >= 1");
    if (!is_multi_outcome(kind) && outcomes != 1) {
      throw ConfigError("single-outcome kinds require outcomes == 1");
    }
    if (is_multi_outcome(kind) && outcomes < 2) {
      throw ConfigError("multi-outcome kinds require outcomes >= 2");
    }
    if (minor_features < 0) throw ConfigError("minor_features must be >= 0");
  }
};

// Minor heads are always single-outcome, matching the key head's family.
inline HeadKind minor_kind(HeadKind key) {
  return is_probabilistic(key) ? HeadKind::psop : HeadKind::gsop;
}

inline int minor_output_size(HeadKind key) {
  return output_size(minor_kind(key), 1);
}

// Plain affine map from embedding space to raw head outputs.
struct LinearHead {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> weight;  // [in_dim * out_dim], weight[e * out_dim + o]
  std::vector<double> bias;    // [out_dim]

  static LinearHead zeros(int in_dim, int out_dim) {
    LinearHead h;
    h.in_dim = in_dim;
    h.out_dim = out_dim;
    h.weight.assign(static_cast<std::size_t>(in_dim) * static_cast<std::size_t>(out_dim), 0.0);
    h.bias.assign(static_cast<std::size_t>(out_dim), 0.0);
    return h;
  }

  std::vector<double> forward(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != in_dim) {
      throw std::invalid_argument("LinearHead::forward: dimension mismatch");
    }
    std::vector<double> out(bias);
    for (int e = 0; e < in_dim; ++e) {
      const double xe = x[static_cast<std::size_t>(e)];
      if (xe == 0.0) continue;
      const double* w = weight.data() + static_cast<std::size_t>(e) * static_cast<std::size_t>(out_dim);
      for (int o = 0; o < out_dim; ++o) out[static_cast<std::size_t>(o)] += xe * w[o];
    }
    return out;
  }
};

// Raw outputs -> ParsedOutput: points verbatim, weights through softmax,
// covariances through the activation, peaks sorted by descending weight.
inline ParsedOutput parse_output(std::span<const double> raw, HeadKind kind,
                                 int outcomes,
                                 CovarianceActivation act = CovarianceActivation::lower_bounded) {
  const int n = output_size(kind, outcomes);
  if (static_cast<int>(raw.size()) != n) {
    throw std::invalid_argument("parse_output: raw length mismatch");
  }
  const bool multi = is_multi_outcome(kind);
  const bool prob = is_probabilistic(kind);
  const int m = outcomes;

  ParsedOutput out;
  out.kind = kind;
  out.points.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    out.points.push_back({raw[static_cast<std::size_t>(2 * i)],
                          raw[static_cast<std::size_t>(2 * i + 1)]});
  }
  if (multi) {
    out.weights = softmax(raw.subspan(static_cast<std::size_t>(2 * m),
                                      static_cast<std::size_t>(m)));
  }
  if (prob) {
    const int cov_off = multi ? 3 * m : 2 * m;
    out.sigmas.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      out.sigmas.push_back(apply_cov_activation(
          raw[static_cast<std::size_t>(cov_off + i)], act));
    }
  }
  if (multi && m > 1) {
    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
      if (out.weights[ia] != out.weights[ib]) return out.weights[ia] > out.weights[ib];
      if (out.points[ia].lon != out.points[ib].lon) return out.points[ia].lon < out.points[ib].lon;
      return out.points[ia].lat < out.points[ib].lat;
    });
    ParsedOutput sorted;
    sorted.kind = kind;
    for (int i : order) {
      const auto idx = static_cast<std::size_t>(i);
      sorted.points.push_back(out.points[idx]);
      sorted.weights.push_back(out.weights[idx]);
      if (prob) sorted.sigmas.push_back(out.sigmas[idx]);
    }
    return sorted;
  }
  return out;
}

// Cosine decay from lr_max at step 0 to lr_min at step == total_steps.
inline double cosine_lr(long step, long total_steps, double lr_max = 1e-5,
                        double lr_min = 1e-6) {
  if (total_steps <= 0) {
    throw std::invalid_argument("cosine_lr: total_steps must be positive");
  }
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("cosine_lr: step out of range");
  }
  if (lr_max < lr_min) {
    throw std::invalid_argument("cosine_lr: lr_max must be >= lr_min");
  }
  return lr_min + 0.5 * (lr_max - lr_min) *
                      (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                      static_cast<double>(total_steps)));
}

// Everything needed to reproduce and apply a trained model.
struct ModelBundle {
  HeadConfig config;
  EncoderSpec encoder;
  LinearHead key_head;
  std::vector<LinearHead> minor_heads;
};

// Evaluation and prediction go through the key head only; minor heads exist
// purely as training-time auxiliaries.
inline ParsedOutput predict_embedding(const ModelBundle& bundle,
                                      std::span<const double> embedding) {
  return parse_output(bundle.key_head.forward(embedding), bundle.config.kind,
                      bundle.config.outcomes, bundle.config.covariance_activation);
}

inline ParsedOutput predict_text(const ModelBundle& bundle, std::string_view key_text) {
  const std::string cleaned = clean_text(key_text);
  if (cleaned.empty()) {
    throw std::invalid_argument("predict_text: missing key feature text");
  }
  return predict_embedding(bundle, encode(bundle.encoder, cleaned));
}

// ---------------------------------------------------------------------------
// Training

// One sample, already composed and encoded. minor[k] is absent when the k-th
// minor feature composed to an empty string for this tweet.
struct TrainSample {
  EmbeddingVector key;
  std::vector<std::optional<EmbeddingVector>> minor;
  GeoPoint label;
  std::string tweet_id;
};

struct TrainOptions {
  int epochs = 3;
  int batch_size = 16;
  double lr_max = 1e-5;
  double lr_min = 1e-6;
  std::uint64_t seed = 0;
  double dev_fraction = 0.0;  // carve a development split for per-epoch SAE
};

struct LossLogRow {
  long step = 0;
  double kf_spat = 0.0;
  std::optional<double> mf_spat;
  std::optional<double> prob;
  double total = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // mean of batch totals
  std::optional<double> dev_mean_sae_km;
  std::optional<double> dev_median_sae_km;
};

struct TrainResult {
  ModelBundle bundle;
  std::vector<LossLogRow> log;
  std::vector<EpochStats> epoch_stats;
  long steps = 0;
  double tweets_per_second = 0.0;
};

// Seeded k-means (k-means++ start, squared degree distance) over a label
// subsample. Gives each outcome a starting position inside the label
// distribution, so the optimizer only has to route weights and fine-tune
// positions instead of dragging biases across the whole map.
inline std::vector<GeoPoint> anchor_points(std::span<const GeoPoint> labels,
                                           int k, std::uint64_t seed) {
  if (labels.empty()) throw std::invalid_argument("anchor_points: no labels");
  if (k < 1) throw std::invalid_argument("anchor_points: k must be >= 1");

  Rng rng(seed);
  constexpr std::size_t kMaxSample = 2048;
  std::vector<GeoPoint> pts;
  if (labels.size() <= kMaxSample) {
    pts.assign(labels.begin(), labels.end());
  } else {
    std::vector<std::size_t> idx(labels.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    pts.reserve(kMaxSample);
    for (std::size_t i = 0; i < kMaxSample; ++i) pts.push_back(labels[idx[i]]);
  }

  std::vector<GeoPoint> centers;
  centers.reserve(static_cast<std::size_t>(k));
  centers.push_back(pts[rng.index(pts.size())]);
  std::vector<double> dist2(pts.size());
  while (static_cast<int>(centers.size()) < k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double best = squared_euclidean_deg(pts[i], centers[0]);
      for (std::size_t c = 1; c < centers.size(); ++c) {
        best = std::min(best, squared_euclidean_deg(pts[i], centers[c]));
      }
      dist2[i] = best;
      sum += best;
    }
    if (sum <= 0.0) {
      // all remaining points coincide with a center; duplicate anchors
      centers.push_back(pts[centers.size() % pts.size()]);
      continue;
    }
    double target = rng.uniform() * sum;
    std::size_t chosen = pts.size() - 1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      target -= dist2[i];
      if (target <= 0.0) {
        chosen = i;
        break;
      }
    }
    centers.push_back(pts[chosen]);
  }

  std::vector<int> assign(pts.size(), -1);
  for (int iter = 0; iter < 25; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      int best = 0;
      double best_d = squared_euclidean_deg(pts[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = squared_euclidean_deg(pts[i], centers[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> slon(static_cast<std::size_t>(k), 0.0);
    std::vector<double> slat(static_cast<std::size_t>(k), 0.0);
    std::vector<long> cnt(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto c = static_cast<std::size_t>(assign[i]);
      slon[c] += pts[i].lon;
      slat[c] += pts[i].lat;
      ++cnt[c];
    }
    for (int c = 0; c < k; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      if (cnt[cc] > 0) {
        centers[cc] = {slon[cc] / static_cast<double>(cnt[cc]),
                       slat[cc] / static_cast<double>(cnt[cc])};
      } else {
        centers[cc] = pts[rng.index(pts.size())];  // revive empty cluster
      }
    }
  }
  std::sort(centers.begin(), centers.end(), [](const GeoPoint& a, const GeoPoint& b) {
    if (a.lon != b.lon) return a.lon < b.lon;
    return a.lat < b.lat;
  });
  return centers;
}

namespace detail {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
};

// weight init: uniform(-1/sqrt(dim), 1/sqrt(dim)); bias init: anchor
// coordinates for point slots, zero for weight logits, +2 for covariance
// slots so the model starts out uncertain rather than overconfident.
inline LinearHead init_head(HeadKind kind, int outcomes, int embedding_dim,
                            std::span<const GeoPoint> anchors, Rng& rng) {
  LinearHead head = LinearHead::zeros(embedding_dim, output_size(kind, outcomes));
  const double scale = 1.0 / std::sqrt(static_cast<double>(embedding_dim));
  for (double& w : head.weight) w = rng.uniform(-scale, scale);
  for (int i = 0; i < outcomes; ++i) {
    head.bias[static_cast<std::size_t>(2 * i)] = anchors[static_cast<std::size_t>(i)].lon;
    head.bias[static_cast<std::size_t>(2 * i + 1)] = anchors[static_cast<std::size_t>(i)].lat;
  }
  if (is_probabilistic(kind)) {
    const int cov_off = is_multi_outcome(kind) ? 3 * outcomes : 2 * outcomes;
    for (int i = 0; i < outcomes; ++i) {
      head.bias[static_cast<std::size_t>(cov_off + i)] = 2.0;
    }
  }
  return head;
}

inline void accumulate_linear_gradient(std::vector<double>& gw,
                                       std::vector<double>& gb,
                                       std::span<const double> x,
                                       std::span<const double> gout,
                                       double scale) {
  const std::size_t out_dim = gout.size();
  for (std::size_t o = 0; o < out_dim; ++o) gb[o] += scale * gout[o];
  for (std::size_t e = 0; e < x.size(); ++e) {
    const double xe = x[e];
    if (xe == 0.0) continue;
    const double f = scale * xe;
    double* row = gw.data() + e * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) row[o] += f * gout[o];
  }
}

inline double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Weighted great-circle error of the key-head prediction, clamped for
// reporting.
inline double prediction_sae_km(const ParsedOutput& out, const GeoPoint& label) {
  double acc = 0.0;
  for (int i = 0; i < out.outcomes(); ++i) {
    acc += out.weight(i) *
           haversine_km(label, clamp_to_valid(out.points[static_cast<std::size_t>(i)]));
  }
  return acc;
}

}  // namespace detail

// Mini-batch gradient descent on the multitask loss with the cosine schedule.
// Deterministic for a fixed seed: data order, head init, and every reduction
// are seeded or sequential.
inline TrainResult train(const std::vector<TrainSample>& samples,
                         const HeadConfig& config, const EncoderSpec& encoder,
                         const TrainOptions& opts) {
  config.validate();
  if (samples.empty()) throw DataError("train: empty dataset");
  if (opts.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (opts.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(opts.lr_max >= opts.lr_min) || !(opts.lr_min > 0.0)) {
    throw ConfigError("train: need lr_max >= lr_min > 0");
  }
  if (opts.dev_fraction < 0.0 || opts.dev_fraction >= 1.0) {
    throw ConfigError("train: dev_fraction must be in [0, 1)");
  }
  for (const auto& s : samples) {
    if (static_cast<int>(s.key.size()) != config.embedding_dim) {
      throw DataError("train: key embedding dimension mismatch");
    }
    if (static_cast<int>(s.minor.size()) != config.minor_features) {
      throw DataError("train: minor feature count mismatch");
    }
    if (!is_finite(s.label)) throw DataError("train: non-finite label");
  }

  // Deterministic shuffle and dev carve-out.
  Rng data_rng(mix_seed(opts.seed, "data"));
  std::vector<std::size_t> indices(samples.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  data_rng.shuffle(indices);
  auto n_dev = static_cast<std::size_t>(opts.dev_fraction * static_cast<double>(samples.size()));
  n_dev = std::min(n_dev, samples.size() - 1);
  std::vector<std::size_t> dev_idx(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(n_dev));
  std::vector<std::size_t> train_idx(indices.begin() + static_cast<std::ptrdiff_t>(n_dev), indices.end());

  std::vector<GeoPoint> train_labels;
  train_labels.reserve(train_idx.size());
  for (auto i : train_idx) train_labels.push_back(samples[i].label);

  // Independent init streams per head, so adding or removing minor features
  // leaves the key head's starting point untouched.
  ModelBundle bundle;
  bundle.config = config;
  bundle.encoder = encoder;
  {
    const auto anchors = anchor_points(train_labels, config.outcomes,
                                       mix_seed(opts.seed, "anchors", 0));
    Rng head_rng(mix_seed(opts.seed, "head", 0));
    bundle.key_head = detail::init_head(config.kind, config.outcomes,
                                        config.embedding_dim, anchors, head_rng);
  }
  const HeadKind mkind = minor_kind(config.kind);
  for (int k = 0; k < config.minor_features; ++k) {
    const auto anchors = anchor_points(train_labels, 1,
                                       mix_seed(opts.seed, "anchors", static_cast<std::uint64_t>(k) + 1));
    Rng head_rng(mix_seed(opts.seed, "head", static_cast<std::uint64_t>(k) + 1));
    bundle.minor_heads.push_back(
        detail::init_head(mkind, 1, config.embedding_dim, anchors, head_rng));
  }

  detail::AdamState key_w_state(bundle.key_head.weight.size());
  detail::AdamState key_b_state(bundle.key_head.bias.size());
  std::vector<detail::AdamState> minor_w_states;
  std::vector<detail::AdamState> minor_b_states;
  for (const auto& h : bundle.minor_heads) {
    minor_w_states.emplace_back(h.weight.size());
    minor_b_states.emplace_back(h.bias.size());
  }

  const long n_train = static_cast<long>(train_idx.size());
  const long batches_per_epoch = (n_train + opts.batch_size - 1) / opts.batch_size;
  const long total_steps = static_cast<long>(opts.epochs) * batches_per_epoch;

  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(total_steps));

  std::vector<double> key_gw(bundle.key_head.weight.size());
  std::vector<double> key_gb(bundle.key_head.bias.size());
  std::vector<std::vector<double>> minor_gw;
  std::vector<std::vector<double>> minor_gb;
  for (const auto& h : bundle.minor_heads) {
    minor_gw.emplace_back(h.weight.size());
    minor_gb.emplace_back(h.bias.size());
  }

  const auto t_start = std::chrono::steady_clock::now();
  long step = 0;
  long samples_seen = 0;
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    data_rng.shuffle(train_idx);
    double epoch_loss_sum = 0.0;
    long epoch_batches = 0;
    for (long b = 0; b < batches_per_epoch; ++b) {
      const auto begin = static_cast<std::size_t>(b) * static_cast<std::size_t>(opts.batch_size);
      const auto end = std::min(begin + static_cast<std::size_t>(opts.batch_size), train_idx.size());
      const auto batch_n = static_cast<double>(end - begin);
      const double lr = cosine_lr(step, total_steps, opts.lr_max, opts.lr_min);

      std::fill(key_gw.begin(), key_gw.end(), 0.0);
      std::fill(key_gb.begin(), key_gb.end(), 0.0);
      for (auto& g : minor_gw) std::fill(g.begin(), g.end(), 0.0);
      for (auto& g : minor_gb) std::fill(g.begin(), g.end(), 0.0);

      double kf_spat_sum = 0.0;
      double mf_spat_sum = 0.0;
      long mf_terms = 0;
      double prob_sum = 0.0;
      long prob_terms = 0;
      double total_sum = 0.0;

      for (std::size_t si = begin; si < end; ++si) {
        const TrainSample& s = samples[train_idx[si]];
        long features = 1;
        for (const auto& mv : s.minor) features += mv.has_value() ? 1 : 0;
        const double scale = 1.0 / (batch_n * static_cast<double>(features));

        const auto key_raw = bundle.key_head.forward(s.key);
        const auto key_res = feature_loss_and_gradient(
            s.label, key_raw, config.kind, config.outcomes,
            config.covariance_activation, config.loss_combination);
        double sample_total = key_res.loss.total;
        kf_spat_sum += key_res.loss.spatial;
        if (key_res.loss.probabilistic) {
          prob_sum += *key_res.loss.probabilistic;
          ++prob_terms;
        }
        detail::accumulate_linear_gradient(key_gw, key_gb, s.key,
                                           key_res.gradient, scale);

        for (int k = 0; k < config.minor_features; ++k) {
          const auto& mv = s.minor[static_cast<std::size_t>(k)];
          if (!mv) continue;
          const auto& mh = bundle.minor_heads[static_cast<std::size_t>(k)];
          const auto m_raw = mh.forward(*mv);
          const auto m_res = feature_loss_and_gradient(
              s.label, m_raw, mkind, 1, config.covariance_activation,
              config.loss_combination);
          sample_total += m_res.loss.total;
          mf_spat_sum += m_res.loss.spatial;
          ++mf_terms;
          if (m_res.loss.probabilistic) {
            prob_sum += *m_res.loss.probabilistic;
            ++prob_terms;
          }
          detail::accumulate_linear_gradient(minor_gw[static_cast<std::size_t>(k)],
                                             minor_gb[static_cast<std::size_t>(k)],
                                             *mv, m_res.gradient, scale);
        }
        total_sum += sample_total / static_cast<double>(features);
      }

      const double batch_total = total_sum / batch_n;
      if (!std::isfinite(batch_total)) {
        throw NumericError("train: non-finite loss at step " +
                           std::to_string(step + 1) + " (lr=" + std::to_string(lr) + ")");
      }

      key_w_state.step(bundle.key_head.weight, key_gw, lr);
      key_b_state.step(bundle.key_head.bias, key_gb, lr);
      for (std::size_t k = 0; k < bundle.minor_heads.size(); ++k) {
        minor_w_states[k].step(bundle.minor_heads[k].weight, minor_gw[k], lr);
        minor_b_states[k].step(bundle.minor_heads[k].bias, minor_gb[k], lr);
      }

      ++step;
      samples_seen += static_cast<long>(end - begin);
      epoch_loss_sum += batch_total;
      ++epoch_batches;

      LossLogRow row;
      row.step = step;
      row.kf_spat = kf_spat_sum / batch_n;
      if (config.minor_features > 0 && mf_terms > 0) {
        row.mf_spat = mf_spat_sum / static_cast<double>(mf_terms);
      }
      if (prob_terms > 0) row.prob = prob_sum / static_cast<double>(prob_terms);
      row.total = batch_total;
      result.log.push_back(row);
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = epoch_batches > 0 ? epoch_loss_sum / static_cast<double>(epoch_batches) : 0.0;
    if (!dev_idx.empty()) {
      std::vector<double> dev_sae;
      dev_sae.reserve(dev_idx.size());
      double sum = 0.0;
      for (auto i : dev_idx) {
        const auto parsed = predict_embedding(bundle, samples[i].key);
        const double sae = detail::prediction_sae_km(parsed, samples[i].label);
        dev_sae.push_back(sae);
        sum += sae;
      }
      es.dev_mean_sae_km = sum / static_cast<double>(dev_sae.size());
      es.dev_median_sae_km = detail::median_of(std::move(dev_sae));
    }
    result.epoch_stats.push_back(es);
  }

  const auto elapsed = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
  result.bundle = std::move(bundle);
  result.steps = step;
  result.tweets_per_second =
      elapsed > 0.0 ? static_cast<double>(samples_seen) / elapsed : 0.0;
  return result;
}

// ---------------------------------------------------------------------------
// Dataset assembly: records -> encoded training samples.

struct BuildStats {
  long used = 0;
  long skipped_no_key = 0;
  long skipped_no_embedding = 0;
  std::vector<long> minor_present;
};

// Compose, clean, and encode one feature set per configured head. Key text
// must be non-empty; empty minor compositions become absent features. When an
// embedding store is given for a slot it replaces the encoder for that slot.
inline std::vector<TrainSample> build_training_set(
    std::span<const TweetRecord> records, const HeadConfig& config,
    FeatureSet kf, std::span<const FeatureSet> mf, const EncoderSpec& encoder,
    const EmbeddingStore* kf_store = nullptr,
    std::span<const EmbeddingStore* const> mf_stores = {},
    BuildStats* stats_out = nullptr) {
  config.validate();
  if (static_cast<int>(mf.size()) != config.minor_features) {
    throw ConfigError("build_training_set: minor feature list does not match config");
  }
  if (!mf_stores.empty() && mf_stores.size() != mf.size()) {
    throw ConfigError("build_training_set: need one embedding store per minor feature");
  }

  BuildStats stats;
  stats.minor_present.assign(mf.size(), 0);
  std::vector<TrainSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.label) throw DataError("build_training_set: record without label: " + r.tweet_id);
    TrainSample s;
    s.label = *r.label;
    s.tweet_id = r.tweet_id;

    if (kf_store != nullptr) {
      auto it = kf_store->find(r.tweet_id);
      if (it == kf_store->end()) {
        ++stats.skipped_no_embedding;
        continue;
      }
      s.key = it->second;
    } else {
      const std::string key_text = clean_text(compose_feature(r, kf));
      if (key_text.empty()) {
        ++stats.skipped_no_key;
        continue;
      }
      s.key = encode(encoder, key_text);
    }
    if (static_cast<int>(s.key.size()) != config.embedding_dim) {
      throw DataError("build_training_set: embedding dimension mismatch for " + r.tweet_id);
    }

    s.minor.resize(mf.size());
    for (std::size_t k = 0; k < mf.size(); ++k) {
      if (!mf_stores.empty() && mf_stores[k] != nullptr) {
        auto it = mf_stores[k]->find(r.tweet_id);
        if (it != mf_stores[k]->end()) {
          if (static_cast<int>(it->second.size()) != config.embedding_dim) {
            throw DataError("build_training_set: minor embedding dimension mismatch for " + r.tweet_id);
          }
          s.minor[k] = it->second;
        }
      } else {
        const std::string text = clean_text(compose_feature(r, mf[k]));
        if (!text.empty()) s.minor[k] = encode(encoder, text);
      }
      if (s.minor[k]) ++stats.minor_present[k];
    }
    out.push_back(std::move(s));
    ++stats.used;
  }
  if (stats_out != nullptr) *stats_out = stats;
  return out;
}

}  // namespace geohead
