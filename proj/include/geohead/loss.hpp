#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geohead/gmm.hpp"

namespace geohead {

// Head kinds: {Geospatial, Probabilistic} x {Single, Multiple} outcome.
enum class HeadKind { gsop, gmop, psop, pmop };

enum class CovarianceActivation { lower_bounded, unlimited };

// How the spatial and probabilistic components combine into the per-feature
// loss of a probabilistic head. Average is the production setting; the other
// two exist for ablations.
enum class LossCombination { average, sum, prob_only };

inline bool is_probabilistic(HeadKind k) {
  return k == HeadKind::psop || k == HeadKind::pmop;
}

inline bool is_multi_outcome(HeadKind k) {
  return k == HeadKind::gmop || k == HeadKind::pmop;
}

inline const char* to_string(HeadKind k) {
  switch (k) {
    case HeadKind::gsop: return "gsop";
    case HeadKind::gmop: return "gmop";
    case HeadKind::psop: return "psop";
    case HeadKind::pmop: return "pmop";
  }
  return "?";
}

inline HeadKind parse_head_kind(std::string_view s) {
  std::string t;
  for (char c : s) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "gsop") return HeadKind::gsop;
  if (t == "gmop") return HeadKind::gmop;
  if (t == "psop") return HeadKind::psop;
  if (t == "pmop") return HeadKind::pmop;
  throw std::invalid_argument("unknown head kind: " + std::string(s));
}

inline double apply_cov_activation(double c_raw, CovarianceActivation act) {
  return act == CovarianceActivation::lower_bounded ? softplus_lb(c_raw)
                                                    : softplus(c_raw);
}

// Raw output vector layout, shared by parsing, loss, and checkpoints:
//   [ lon_1 lat_1 ... lon_M lat_M | w_1 ... w_M (multi only) | c_1 ... c_M (prob only) ]
inline int output_size(HeadKind kind, int outcomes) {
  if (outcomes < 1) {
    throw std::invalid_argument("output_size: outcomes must be >= 1");
  }
  switch (kind) {
    case HeadKind::gsop:
      if (outcomes != 1) throw std::invalid_argument("output_size: GSOP is single-outcome");
      return 2;
    case HeadKind::psop:
      if (outcomes != 1) throw std::invalid_argument("output_size: PSOP is single-outcome");
      return 3;
    case HeadKind::gmop:
      return 3 * outcomes;
    case HeadKind::pmop:
      return 4 * outcomes;
  }
  throw std::invalid_argument("output_size: unknown kind");
}

// Post-activation view of one head's raw outputs. Weights are already
// softmax-normalized (empty for single-outcome kinds, where the implicit
// weight is 1); sigmas are post-activation (empty for geospatial kinds).
struct ParsedOutput {
  HeadKind kind = HeadKind::gsop;
  std::vector<GeoPoint> points;
  std::vector<double> weights;
  std::vector<double> sigmas;

  int outcomes() const { return static_cast<int>(points.size()); }
  double weight(int i) const {
    return weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
  }
};

inline GmmPrediction to_gmm_prediction(const ParsedOutput& out) {
  if (!is_probabilistic(out.kind)) {
    throw std::invalid_argument("to_gmm_prediction: output has no covariance");
  }
  GmmPrediction pred;
  pred.peaks.reserve(out.points.size());
  for (int i = 0; i < out.outcomes(); ++i) {
    pred.peaks.push_back({out.points[static_cast<std::size_t>(i)],
                          out.sigmas[static_cast<std::size_t>(i)],
                          out.weight(i)});
  }
  return pred;
}

struct LossBreakdown {
  double spatial = 0.0;                   // degrees^2, >= 0
  std::optional<double> probabilistic;    // nats; absent for geospatial kinds
  double total = 0.0;
};

namespace detail {

inline void check_kind(const ParsedOutput& out, HeadKind expected, const char* op) {
  if (out.kind != expected) {
    throw std::invalid_argument(std::string(op) + ": parsed output kind mismatch");
  }
  if (out.points.empty()) {
    throw std::invalid_argument(std::string(op) + ": no outcome points");
  }
}

inline void check_weights_normalized(const ParsedOutput& out, const char* op) {
  if (out.weights.size() != out.points.size()) {
    throw std::invalid_argument(std::string(op) + ": weight count mismatch");
  }
  double sum = 0.0;
  for (double w : out.weights) sum += w;
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument(std::string(op) + ": weights not normalized");
  }
}

inline double nll_term(double d2, double sigma, const char* op) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument(std::string(op) + ": sigma must be positive");
  }
  return d2 / (2.0 * sigma) + std::log(2.0 * std::numbers::pi * sigma);
}

inline double combine(double spatial, double prob, LossCombination comb) {
  switch (comb) {
    case LossCombination::average: return 0.5 * (spatial + prob);
    case LossCombination::sum: return spatial + prob;
    case LossCombination::prob_only: return prob;
  }
  return 0.5 * (spatial + prob);
}

}  // namespace detail

// GSOP: squared Euclidean degree distance, nothing else.
inline LossBreakdown loss_gsop(const GeoPoint& label, const ParsedOutput& out) {
  detail::check_kind(out, HeadKind::gsop, "loss_gsop");
  const double d2 = squared_euclidean_deg(label, out.points[0]);
  return {d2, std::nullopt, d2};
}

// PSOP: negative log-likelihood of the label under the predicted Gaussian,
// combined with the spatial term.
inline LossBreakdown loss_psop(const GeoPoint& label, const ParsedOutput& out,
                               LossCombination comb = LossCombination::average) {
  detail::check_kind(out, HeadKind::psop, "loss_psop");
  if (out.sigmas.size() != 1) {
    throw std::invalid_argument("loss_psop: expected exactly one sigma");
  }
  const double d2 = squared_euclidean_deg(label, out.points[0]);
  const double prob = detail::nll_term(d2, out.sigmas[0], "loss_psop");
  return {d2, prob, detail::combine(d2, prob, comb)};
}

// GMOP: weight-averaged squared distances over the M outcomes.
inline LossBreakdown loss_gmop(const GeoPoint& label, const ParsedOutput& out) {
  detail::check_kind(out, HeadKind::gmop, "loss_gmop");
  detail::check_weights_normalized(out, "loss_gmop");
  double spatial = 0.0;
  for (int i = 0; i < out.outcomes(); ++i) {
    spatial += out.weights[static_cast<std::size_t>(i)] *
               squared_euclidean_deg(label, out.points[static_cast<std::size_t>(i)]);
  }
  return {spatial, std::nullopt, spatial};
}

// PMOP: weight-averaged spatial and NLLH terms.
inline LossBreakdown loss_pmop(const GeoPoint& label, const ParsedOutput& out,
                               LossCombination comb = LossCombination::average) {
  detail::check_kind(out, HeadKind::pmop, "loss_pmop");
  detail::check_weights_normalized(out, "loss_pmop");
  if (out.sigmas.size() != out.points.size()) {
    throw std::invalid_argument("loss_pmop: sigma count mismatch");
  }
  double spatial = 0.0;
  double prob = 0.0;
  for (int i = 0; i < out.outcomes(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const double d2 = squared_euclidean_deg(label, out.points[idx]);
    spatial += out.weights[idx] * d2;
    prob += out.weights[idx] * detail::nll_term(d2, out.sigmas[idx], "loss_pmop");
  }
  return {spatial, prob, detail::combine(spatial, prob, comb)};
}

inline LossBreakdown per_feature_loss(const GeoPoint& label, const ParsedOutput& out,
                                      LossCombination comb = LossCombination::average) {
  switch (out.kind) {
    case HeadKind::gsop: return loss_gsop(label, out);
    case HeadKind::gmop: return loss_gmop(label, out);
    case HeadKind::psop: return loss_psop(label, out, comb);
    case HeadKind::pmop: return loss_pmop(label, out, comb);
  }
  throw std::invalid_argument("per_feature_loss: unknown kind");
}

// Arithmetic mean of the per-feature totals for one tweet. Summation is
// left-to-right so batch reductions are bitwise reproducible.
inline double total_loss(std::span<const LossBreakdown> features) {
  if (features.empty()) {
    throw std::invalid_argument("total_loss: no feature losses");
  }
  double sum = 0.0;
  for (const auto& f : features) sum += f.total;
  return sum / static_cast<double>(features.size());
}

struct FeatureLossResult {
  LossBreakdown loss;
  std::vector<double> gradient;  // d(loss.total) / d(raw output)
};

// Loss of one feature head plus its closed-form gradient with respect to the
// raw output vector, chained through softmax and the covariance activation.
//
// With W = softmax(w), sigma_i = act(c_i), D_i^2 the squared degree distance,
// nll_i = D_i^2/(2 sigma_i) + log(2 pi sigma_i), and (a, b) the combination
// coefficients, L = a * sum W_i D_i^2 + b * sum W_i nll_i and:
//   dL/d mu_i = W_i * (2a + b / sigma_i) * (mu_i - y)
//   dL/d w_j  = W_j * (a (D_j^2 - L_spat) + b (nll_j - L_prob))
//   dL/d c_j  = b * W_j * (1/sigma_j - D_j^2/(2 sigma_j^2)) * sigmoid(c_j)
inline FeatureLossResult feature_loss_and_gradient(
    const GeoPoint& label, std::span<const double> raw, HeadKind kind,
    int outcomes, CovarianceActivation act = CovarianceActivation::lower_bounded,
    LossCombination comb = LossCombination::average) {
  const int n = output_size(kind, outcomes);
  if (static_cast<int>(raw.size()) != n) {
    throw std::invalid_argument("feature_loss_and_gradient: raw length mismatch");
  }
  require_finite(label, "feature_loss_and_gradient");

  const bool multi = is_multi_outcome(kind);
  const bool prob = is_probabilistic(kind);
  const int m = outcomes;
  const int weights_off = 2 * m;
  const int cov_off = multi ? 3 * m : 2 * m;

  std::vector<double> weights =
      multi ? softmax(raw.subspan(static_cast<std::size_t>(weights_off),
                                  static_cast<std::size_t>(m)))
            : std::vector<double>{1.0};

  std::vector<double> dlon(static_cast<std::size_t>(m));
  std::vector<double> dlat(static_cast<std::size_t>(m));
  std::vector<double> d2(static_cast<std::size_t>(m));
  std::vector<double> sigma;
  std::vector<double> nll;
  if (prob) {
    sigma.resize(static_cast<std::size_t>(m));
    nll.resize(static_cast<std::size_t>(m));
  }

  double l_spat = 0.0;
  double l_prob = 0.0;
  for (int i = 0; i < m; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    dlon[idx] = raw[static_cast<std::size_t>(2 * i)] - label.lon;
    dlat[idx] = raw[static_cast<std::size_t>(2 * i + 1)] - label.lat;
    d2[idx] = dlon[idx] * dlon[idx] + dlat[idx] * dlat[idx];
    l_spat += weights[idx] * d2[idx];
    if (prob) {
      sigma[idx] = apply_cov_activation(raw[static_cast<std::size_t>(cov_off + i)], act);
      nll[idx] = detail::nll_term(d2[idx], sigma[idx], "feature_loss_and_gradient");
      l_prob += weights[idx] * nll[idx];
    }
  }

  double a = 1.0;
  double b = 0.0;
  if (prob) {
    switch (comb) {
      case LossCombination::average: a = 0.5; b = 0.5; break;
      case LossCombination::sum: a = 1.0; b = 1.0; break;
      case LossCombination::prob_only: a = 0.0; b = 1.0; break;
    }
  }

  FeatureLossResult res;
  res.loss.spatial = l_spat;
  if (prob) res.loss.probabilistic = l_prob;
  res.loss.total = prob ? a * l_spat + b * l_prob : l_spat;

  res.gradient.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < m; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const double coef =
        weights[idx] * (2.0 * a + (prob ? b / sigma[idx] : 0.0));
    res.gradient[static_cast<std::size_t>(2 * i)] = coef * dlon[idx];
    res.gradient[static_cast<std::size_t>(2 * i + 1)] = coef * dlat[idx];
    if (multi) {
      double g = a * (d2[idx] - l_spat);
      if (prob) g += b * (nll[idx] - l_prob);
      res.gradient[static_cast<std::size_t>(weights_off + i)] = weights[idx] * g;
    }
    if (prob) {
      const double c_raw = raw[static_cast<std::size_t>(cov_off + i)];
      const double dnll_dsigma =
          1.0 / sigma[idx] - d2[idx] / (2.0 * sigma[idx] * sigma[idx]);
      res.gradient[static_cast<std::size_t>(cov_off + i)] =
          b * weights[idx] * dnll_dsigma * sigmoid(c_raw);
    }
  }
  return res;
}

inline std::vector<double> loss_gradient(
    const GeoPoint& label, std::span<const double> raw, HeadKind kind,
    int outcomes, CovarianceActivation act = CovarianceActivation::lower_bounded,
    LossCombination comb = LossCombination::average) {
  return feature_loss_and_gradient(label, raw, kind, outcomes, act, comb).gradient;
}

}  // namespace geohead
