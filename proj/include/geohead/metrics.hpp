#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geohead/head.hpp"
#include "geohead/loss.hpp"
#include "geohead/random.hpp"

namespace geohead {

// Simple accuracy error: great-circle km to the prediction. Multi-outcome
// predictions use the weighted linear combination over peaks.
inline double sae(const GeoPoint& label, const ParsedOutput& pred) {
  double acc = 0.0;
  for (int i = 0; i < pred.outcomes(); ++i) {
    acc += pred.weight(i) * haversine_km(label, pred.points[static_cast<std::size_t>(i)]);
  }
  return acc;
}

// Percentage of samples within 161 km (100 miles), boundary inclusive.
inline double acc_at_161(std::span<const double> per_sample_sae) {
  if (per_sample_sae.empty()) {
    throw std::invalid_argument("acc_at_161: empty input");
  }
  long hits = 0;
  for (double d : per_sample_sae) hits += d <= 161.0 ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(per_sample_sae.size());
}

// Comprehensive accuracy error: Monte Carlo expected great-circle distance
// between the label and points drawn from the predicted distribution.
// Sampling happens in degree space where sigma lives; distances in km.
inline double cae(const GeoPoint& label, const ParsedOutput& pred,
                  int n_per_peak, std::uint64_t seed) {
  if (!is_probabilistic(pred.kind) || pred.sigmas.empty()) {
    throw std::invalid_argument("cae: prediction has no covariance");
  }
  if (n_per_peak < 1) throw std::invalid_argument("cae: n_per_peak must be >= 1");
  Rng rng(seed);
  double acc = 0.0;
  for (int i = 0; i < pred.outcomes(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const double std_deg = std::sqrt(pred.sigmas[idx]);
    double sum = 0.0;
    for (int s = 0; s < n_per_peak; ++s) {
      const GeoPoint draw{pred.points[idx].lon + std_deg * rng.normal(),
                          pred.points[idx].lat + std_deg * rng.normal()};
      sum += haversine_km(label, draw);
    }
    acc += pred.weight(i) * (sum / static_cast<double>(n_per_peak));
  }
  return acc;
}

// chi-square quantile with 2 degrees of freedom at probability alpha; closed
// form, so no numerics library is needed. q(0.95) = 5.991465.
inline double chi2_quantile_2dof(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("chi2_quantile_2dof: alpha must be in (0, 1)");
  }
  return -2.0 * std::log(1.0 - alpha);
}

// Prediction region area covered by alpha of the density. Reported in
// degrees^2 because sigma is a degree-space variance.
inline double pra(const ParsedOutput& pred, double alpha = 0.95) {
  if (!is_probabilistic(pred.kind) || pred.sigmas.empty()) {
    throw std::invalid_argument("pra: prediction has no covariance");
  }
  const double q = chi2_quantile_2dof(alpha);
  double weighted_sigma = 0.0;
  for (int i = 0; i < pred.outcomes(); ++i) {
    weighted_sigma += pred.weight(i) * pred.sigmas[static_cast<std::size_t>(i)];
  }
  return std::numbers::pi * q * weighted_sigma;
}

// Per-sample coverage score: weight-averaged indicator that the label falls
// inside each peak's alpha-region. The default membership test is the
// squared-Mahalanobis reading D^2/sigma <= q; strict_paper switches to the
// literal D/sigma <= q.
inline double coverage_score(const GeoPoint& label, const ParsedOutput& pred,
                             double alpha = 0.95, bool strict_paper = false) {
  if (!is_probabilistic(pred.kind) || pred.sigmas.empty()) {
    throw std::invalid_argument("coverage_score: prediction has no covariance");
  }
  const double q = chi2_quantile_2dof(alpha);
  double score = 0.0;
  for (int i = 0; i < pred.outcomes(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const double d2 = squared_euclidean_deg(label, pred.points[idx]);
    const double stat = strict_paper ? std::sqrt(d2) / pred.sigmas[idx]
                                     : d2 / pred.sigmas[idx];
    score += pred.weight(i) * (stat <= q ? 1.0 : 0.0);
  }
  return score;
}

inline double cov(std::span<const GeoPoint> labels,
                  std::span<const ParsedOutput> preds, double alpha = 0.95,
                  bool strict_paper = false) {
  if (labels.empty() || labels.size() != preds.size()) {
    throw std::invalid_argument("cov: labels and predictions must align");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sum += coverage_score(labels[i], preds[i], alpha, strict_paper);
  }
  return sum / static_cast<double>(labels.size());
}

inline double mean_of(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return values.empty() ? 0.0 : sum / static_cast<double>(values.size());
}

inline double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Aggregated report. Probabilistic fields are absent for geospatial models.
// PRA values are degree^2 areas; everything else with a unit is km or percent.
struct MetricsReport {
  long n_samples = 0;
  double mean_sae = 0.0;
  double median_sae = 0.0;
  double acc_at_161 = 0.0;
  std::optional<double> mean_cae;
  std::optional<double> median_cae;
  std::optional<double> mean_pra;
  std::optional<double> median_pra;
  std::optional<double> cov;
  long clamped_predictions = 0;
};

struct EvalOptions {
  FeatureSet vf = FeatureSet::non_geo;
  double alpha = 0.95;
  int cae_samples = 100;
  std::uint64_t seed = 0;
  bool strict_paper_cov = false;
  bool with_cae = true;
};

// Metrics over precomputed (label, prediction) pairs; tweet ids seed the
// per-sample Monte Carlo streams so the result is order-independent.
inline MetricsReport summarize_predictions(std::span<const GeoPoint> labels,
                                           std::span<const ParsedOutput> preds,
                                           std::span<const std::string> tweet_ids,
                                           const EvalOptions& opts,
                                           long clamped_predictions = 0) {
  if (labels.empty()) throw DataError("summarize_predictions: no samples");
  if (labels.size() != preds.size() ||
      (!tweet_ids.empty() && tweet_ids.size() != labels.size())) {
    throw std::invalid_argument("summarize_predictions: input sizes disagree");
  }
  const bool prob = is_probabilistic(preds[0].kind);
  std::vector<double> saes, caes, pras;
  saes.reserve(labels.size());
  double cov_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    saes.push_back(sae(labels[i], preds[i]));
    if (prob) {
      if (opts.with_cae) {
        const std::uint64_t s =
            tweet_ids.empty() ? mix_seed(opts.seed, "cae", i)
                              : mix_seed(opts.seed, tweet_ids[i]);
        caes.push_back(cae(labels[i], preds[i], opts.cae_samples, s));
      }
      pras.push_back(pra(preds[i], opts.alpha));
      cov_sum += coverage_score(labels[i], preds[i], opts.alpha, opts.strict_paper_cov);
    }
  }
  MetricsReport rep;
  rep.n_samples = static_cast<long>(labels.size());
  rep.mean_sae = mean_of(saes);
  rep.median_sae = median_of(saes);
  rep.acc_at_161 = acc_at_161(saes);
  rep.clamped_predictions = clamped_predictions;
  if (prob) {
    if (opts.with_cae) {
      rep.mean_cae = mean_of(caes);
      rep.median_cae = median_of(std::move(caes));
    }
    rep.mean_pra = mean_of(pras);
    rep.median_pra = median_of(std::move(pras));
    rep.cov = cov_sum / static_cast<double>(labels.size());
  }
  return rep;
}

// Full evaluation: compose the evaluation feature, encode, predict through
// the key head, clamp for reporting, and accumulate all metrics. Evaluation
// features are restricted to the always-available compositions.
inline MetricsReport evaluate(std::span<const TweetRecord> records,
                              const ModelBundle& bundle, const EvalOptions& opts,
                              const EmbeddingStore* vf_store = nullptr) {
  if (records.empty()) throw DataError("evaluate: empty dataset");
  if (opts.vf != FeatureSet::text_only && opts.vf != FeatureSet::non_geo) {
    throw ConfigError("evaluation feature must be TEXT-ONLY or NON-GEO");
  }
  std::vector<GeoPoint> labels;
  std::vector<ParsedOutput> preds;
  std::vector<std::string> ids;
  labels.reserve(records.size());
  preds.reserve(records.size());
  ids.reserve(records.size());
  long clamped = 0;
  for (const auto& r : records) {
    if (!r.label) throw DataError("evaluate: record without label: " + r.tweet_id);
    ParsedOutput parsed;
    if (vf_store != nullptr) {
      auto it = vf_store->find(r.tweet_id);
      if (it == vf_store->end()) {
        throw DataError("evaluate: no embedding for tweet " + r.tweet_id);
      }
      parsed = predict_embedding(bundle, it->second);
    } else {
      parsed = predict_embedding(
          bundle, encode(bundle.encoder, clean_text(compose_feature(r, opts.vf))));
    }
    for (auto& p : parsed.points) p = clamp_to_valid(p, &clamped);
    labels.push_back(*r.label);
    preds.push_back(std::move(parsed));
    ids.push_back(r.tweet_id);
  }
  return summarize_predictions(labels, preds, ids, opts, clamped);
}

// Grouped evaluation for per-country style breakdowns. Groups keep first
// appearance order.
inline std::vector<std::pair<std::string, MetricsReport>> evaluate_grouped(
    std::span<const TweetRecord> records, const ModelBundle& bundle,
    const EvalOptions& opts, const std::string& group_key,
    const EmbeddingStore* vf_store = nullptr) {
  auto key_of = [&](const TweetRecord& r) -> std::string {
    if (group_key == "country") return r.place_country;
    if (group_key == "place_type") return r.place_type;
    if (group_key == "user") return r.user_id;
    throw ConfigError("unknown group-by key: " + group_key);
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<TweetRecord>> groups;
  for (const auto& r : records) {
    auto key = key_of(r);
    if (!groups.contains(key)) order.push_back(key);
    groups[key].push_back(r);
  }
  std::vector<std::pair<std::string, MetricsReport>> out;
  out.reserve(order.size());
  for (const auto& key : order) {
    out.emplace_back(key, evaluate(groups[key], bundle, opts, vf_store));
  }
  return out;
}

}  // namespace geohead
