#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "geohead/gmm.hpp"

namespace geohead {

// Summary grid for per-user aggregation: the Cartesian product of all
// longitude values (10-degree ground grid union peak longitudes) with all
// latitude values (same construction). z is row-major by longitude index.
struct SummaryGrid {
  std::vector<double> lon_values;
  std::vector<double> lat_values;
  std::vector<double> z;

  std::size_t n_lon() const { return lon_values.size(); }
  std::size_t n_lat() const { return lat_values.size(); }
  double at(std::size_t i, std::size_t j) const { return z[i * n_lat() + j]; }
};

namespace detail {

inline std::vector<double> sorted_unique(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

}  // namespace detail

// Grid coordinates only; scores are filled by summary_scores.
inline SummaryGrid build_grid(std::span<const GmmPrediction> preds) {
  if (preds.empty()) throw std::invalid_argument("build_grid: no predictions");
  std::vector<double> lons;
  std::vector<double> lats;
  for (int v = -180; v < 180; v += 10) lons.push_back(static_cast<double>(v));
  for (int v = -90; v <= 90; v += 10) lats.push_back(static_cast<double>(v));
  for (const auto& pred : preds) {
    for (const auto& peak : pred.peaks) {
      lons.push_back(peak.mu.lon);
      lats.push_back(peak.mu.lat);
    }
  }
  SummaryGrid grid;
  grid.lon_values = detail::sorted_unique(std::move(lons));
  grid.lat_values = detail::sorted_unique(std::move(lats));
  return grid;
}

// Z(i, j): mean over the S per-tweet predictions of the mixture density at
// grid point (lon_i, lat_j).
inline void summary_scores(SummaryGrid& grid, std::span<const GmmPrediction> preds) {
  if (preds.empty()) throw std::invalid_argument("summary_scores: no predictions");
  for (const auto& pred : preds) validate(pred);
  grid.z.assign(grid.n_lon() * grid.n_lat(), 0.0);
  const double inv_s = 1.0 / static_cast<double>(preds.size());
  for (std::size_t i = 0; i < grid.n_lon(); ++i) {
    for (std::size_t j = 0; j < grid.n_lat(); ++j) {
      const GeoPoint p{grid.lon_values[i], grid.lat_values[j]};
      double acc = 0.0;
      for (const auto& pred : preds) acc += gmm_density(p, pred);
      grid.z[i * grid.n_lat() + j] = acc * inv_s;
    }
  }
}

// Sliding maximum over the asymmetric index window [i-4, i+5] x [j-4, j+5],
// clipped at the matrix edges.
inline std::vector<double> maxima_filter(std::span<const double> z,
                                         std::size_t n_lon, std::size_t n_lat) {
  if (z.size() != n_lon * n_lat) {
    throw std::invalid_argument("maxima_filter: shape mismatch");
  }
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < n_lon; ++i) {
    const std::size_t i_lo = i >= 4 ? i - 4 : 0;
    const std::size_t i_hi = std::min(i + 5, n_lon - 1);
    for (std::size_t j = 0; j < n_lat; ++j) {
      const std::size_t j_lo = j >= 4 ? j - 4 : 0;
      const std::size_t j_hi = std::min(j + 5, n_lat - 1);
      double best = z[i_lo * n_lat + j_lo];
      for (std::size_t p = i_lo; p <= i_hi; ++p) {
        for (std::size_t q = j_lo; q <= j_hi; ++q) {
          best = std::max(best, z[p * n_lat + q]);
        }
      }
      out[i * n_lat + j] = best;
    }
  }
  return out;
}

// Top-K weighted location points for one user. weights are empty when a
// single point survives; scores are the raw summary values, non-increasing.
struct UserEstimate {
  std::vector<GeoPoint> points;
  std::vector<double> weights;
  std::vector<double> scores;
};

// Local maxima of the summary grid: cells equal to their windowed maximum
// with strictly positive score (exact-zero plateaus are density underflow,
// not candidate locations), deduplicated per connected equal-value plateau,
// ranked by score, weighted by softmax over the kept scores.
inline UserEstimate estimate_user(std::span<const GmmPrediction> preds, int top_k) {
  if (top_k < 1) throw std::invalid_argument("estimate_user: top_k must be >= 1");
  SummaryGrid grid = build_grid(preds);
  summary_scores(grid, preds);
  const auto mfz = maxima_filter(grid.z, grid.n_lon(), grid.n_lat());

  const std::size_t n_lon = grid.n_lon();
  const std::size_t n_lat = grid.n_lat();
  std::vector<char> candidate(grid.z.size(), 0);
  for (std::size_t c = 0; c < grid.z.size(); ++c) {
    candidate[c] = (grid.z[c] == mfz[c] && grid.z[c] > 0.0) ? 1 : 0;
  }

  // Plateau dedup: flood-fill 8-connected candidate cells with equal score;
  // scanning in (i, j) order makes the first cell of each component the
  // lexicographically smallest representative.
  struct Candidate {
    double score;
    std::size_t i, j;
  };
  std::vector<Candidate> reps;
  std::vector<char> visited(grid.z.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n_lon; ++i) {
    for (std::size_t j = 0; j < n_lat; ++j) {
      const std::size_t c = i * n_lat + j;
      if (!candidate[c] || visited[c]) continue;
      const double score = grid.z[c];
      reps.push_back({score, i, j});
      stack.assign(1, c);
      visited[c] = 1;
      while (!stack.empty()) {
        const std::size_t cur = stack.back();
        stack.pop_back();
        const std::size_t ci = cur / n_lat;
        const std::size_t cj = cur % n_lat;
        for (int di = -1; di <= 1; ++di) {
          for (int dj = -1; dj <= 1; ++dj) {
            if (di == 0 && dj == 0) continue;
            const auto ni = static_cast<std::ptrdiff_t>(ci) + di;
            const auto nj = static_cast<std::ptrdiff_t>(cj) + dj;
            if (ni < 0 || nj < 0 || ni >= static_cast<std::ptrdiff_t>(n_lon) ||
                nj >= static_cast<std::ptrdiff_t>(n_lat)) {
              continue;
            }
            const std::size_t nc = static_cast<std::size_t>(ni) * n_lat +
                                   static_cast<std::size_t>(nj);
            if (candidate[nc] && !visited[nc] && grid.z[nc] == score) {
              visited[nc] = 1;
              stack.push_back(nc);
            }
          }
        }
      }
    }
  }

  std::stable_sort(reps.begin(), reps.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });

  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(top_k), reps.size());
  UserEstimate est;
  est.points.reserve(keep);
  est.scores.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    est.points.push_back({grid.lon_values[reps[k].i], grid.lat_values[reps[k].j]});
    est.scores.push_back(reps[k].score);
  }
  if (keep > 1) est.weights = softmax(est.scores);
  return est;
}

}  // namespace geohead
