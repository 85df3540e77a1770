#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "geohead/geo.hpp"

namespace geohead {

// Lower bound for the covariance scalar. Keeps the 2-D spherical Gaussian
// peak height 1/(2*pi*sigma) at or below 1, so densities stay in [0, 1] and
// the negative log-likelihood stays non-negative.
inline constexpr double kSigmaFloor = 1.0 / (2.0 * std::numbers::pi);

// log(1 + e^x), branch-stabilized for large |x|.
inline double softplus(double c_raw) {
  if (!std::isfinite(c_raw)) {
    throw std::invalid_argument("softplus: non-finite input");
  }
  if (c_raw > 30.0) return c_raw;             // log1p(e^-x) below double noise
  if (c_raw < -30.0) return std::exp(c_raw);  // log1p(y) ~ y
  return std::log1p(std::exp(c_raw));
}

// SoftPlus shifted up by kSigmaFloor. Shares the softplus evaluation path so
// the offset between the two activations is a plain floating-point add.
inline double softplus_lb(double c_raw) {
  return softplus(c_raw) + kSigmaFloor;
}

// Derivative of softplus (and softplus_lb) with respect to the raw input.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Max-subtracted softmax; tolerates arbitrarily large raw values.
inline std::vector<double> softmax(std::span<const double> raw) {
  if (raw.empty()) throw std::invalid_argument("softmax: empty input");
  double max_raw = raw[0];
  for (double v : raw) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("softmax: non-finite input");
    }
    max_raw = std::max(max_raw, v);
  }
  std::vector<double> out(raw.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = std::exp(raw[i] - max_raw);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// One spherical Gaussian component: mean in degrees, covariance sigma * I
// with sigma in degrees^2, and a mixture weight in [0, 1].
struct GaussianPeak {
  GeoPoint mu;
  double sigma = kSigmaFloor;
  double weight = 1.0;
};

inline double gaussian_pdf(const GeoPoint& y, const GaussianPeak& peak) {
  if (!(peak.sigma > 0.0)) {
    throw std::invalid_argument("gaussian_pdf: sigma must be positive");
  }
  const double d2 = squared_euclidean_deg(y, peak.mu);
  return std::exp(-d2 / (2.0 * peak.sigma)) /
         (2.0 * std::numbers::pi * peak.sigma);
}

// Parsed probabilistic prediction: M weighted spherical peaks, kept sorted by
// descending weight (ties broken by ascending lon, then lat).
struct GmmPrediction {
  std::vector<GaussianPeak> peaks;
};

inline void sort_peaks(std::vector<GaussianPeak>& peaks) {
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const GaussianPeak& a, const GaussianPeak& b) {
                     if (a.weight != b.weight) return a.weight > b.weight;
                     if (a.mu.lon != b.mu.lon) return a.mu.lon < b.mu.lon;
                     return a.mu.lat < b.mu.lat;
                   });
}

inline void validate(const GmmPrediction& pred) {
  if (pred.peaks.empty()) {
    throw std::invalid_argument("GmmPrediction: need at least one peak");
  }
  double sum = 0.0;
  for (const auto& p : pred.peaks) {
    if (!(p.sigma > 0.0)) {
      throw std::invalid_argument("GmmPrediction: sigma must be positive");
    }
    if (!(p.weight >= 0.0 && p.weight <= 1.0)) {
      throw std::invalid_argument("GmmPrediction: weight outside [0, 1]");
    }
    require_finite(p.mu, "GmmPrediction");
    sum += p.weight;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("GmmPrediction: weights must sum to 1");
  }
}

inline double gmm_density(const GeoPoint& y, const GmmPrediction& pred) {
  double acc = 0.0;
  for (const auto& p : pred.peaks) acc += p.weight * gaussian_pdf(y, p);
  return acc;
}

}  // namespace geohead
