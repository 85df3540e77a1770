#pragma once

// Central finite-difference gradient oracle for the per-feature loss,
// independent of the analytic gradient path: it only re-evaluates the loss.

#include <cmath>
#include <span>
#include <vector>

#include "geohead/loss.hpp"
#include "geohead/random.hpp"

namespace fd {

inline std::vector<double> gradient(const geohead::GeoPoint& label,
                                    std::span<const double> raw,
                                    geohead::HeadKind kind, int outcomes,
                                    geohead::CovarianceActivation act,
                                    geohead::LossCombination comb,
                                    double h = 1e-4) {
  std::vector<double> x(raw.begin(), raw.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up =
        geohead::feature_loss_and_gradient(label, x, kind, outcomes, act, comb).loss.total;
    x[i] = orig - h;
    const double down =
        geohead::feature_loss_and_gradient(label, x, kind, outcomes, act, comb).loss.total;
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

struct CheckResult {
  bool ok = true;
  double worst_rel = 0.0;
};

// rel error < tol componentwise, with an absolute floor for near-zero entries.
inline CheckResult compare(std::span<const double> analytic,
                           std::span<const double> numeric,
                           double rel_tol = 1e-4, double abs_floor = 1e-8) {
  CheckResult res;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::abs(analytic[i] - numeric[i]);
    if (diff <= abs_floor) continue;
    const double denom = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    const double rel = diff / denom;
    res.worst_rel = std::max(res.worst_rel, rel);
    if (rel >= rel_tol) res.ok = false;
  }
  return res;
}

// A random raw output vector with coordinates, logits, and covariance inputs
// in realistic ranges.
inline std::vector<double> random_raw(geohead::Rng& rng, geohead::HeadKind kind,
                                      int outcomes) {
  const int n = geohead::output_size(kind, outcomes);
  const bool multi = geohead::is_multi_outcome(kind);
  const int cov_off = multi ? 3 * outcomes : 2 * outcomes;
  std::vector<double> raw(static_cast<std::size_t>(n));
  for (int i = 0; i < 2 * outcomes; ++i) {
    raw[static_cast<std::size_t>(i)] = rng.uniform(-60, 60);
  }
  if (multi) {
    for (int i = 0; i < outcomes; ++i) {
      raw[static_cast<std::size_t>(2 * outcomes + i)] = rng.uniform(-3, 3);
    }
  }
  if (geohead::is_probabilistic(kind)) {
    for (int i = 0; i < outcomes; ++i) {
      raw[static_cast<std::size_t>(cov_off + i)] = rng.uniform(-4, 4);
    }
  }
  return raw;
}

}  // namespace fd
