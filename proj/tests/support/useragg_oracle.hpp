#pragma once

// Naive reference implementation of per-user aggregation: scores every grid
// point directly, scans every window by brute force, and applies the same
// plateau and ranking rules. Shares no code with the production path beyond
// the density primitive.

#include <algorithm>
#include <cmath>
#include <set>
#include <span>
#include <vector>

#include "geohead/gmm.hpp"
#include "geohead/useragg.hpp"

namespace oracle {

inline geohead::UserEstimate estimate_user(
    std::span<const geohead::GmmPrediction> preds, int top_k) {
  std::set<double> lon_set, lat_set;
  for (int v = -180; v < 180; v += 10) lon_set.insert(v);
  for (int v = -90; v <= 90; v += 10) lat_set.insert(v);
  for (const auto& pred : preds) {
    for (const auto& peak : pred.peaks) {
      lon_set.insert(peak.mu.lon);
      lat_set.insert(peak.mu.lat);
    }
  }
  const std::vector<double> lons(lon_set.begin(), lon_set.end());
  const std::vector<double> lats(lat_set.begin(), lat_set.end());
  const std::size_t nl = lons.size();
  const std::size_t nt = lats.size();

  std::vector<std::vector<double>> z(nl, std::vector<double>(nt, 0.0));
  for (std::size_t i = 0; i < nl; ++i) {
    for (std::size_t j = 0; j < nt; ++j) {
      double acc = 0.0;
      for (const auto& pred : preds) {
        for (const auto& peak : pred.peaks) {
          const double dlon = lons[i] - peak.mu.lon;
          const double dlat = lats[j] - peak.mu.lat;
          const double d2 = dlon * dlon + dlat * dlat;
          acc += peak.weight * std::exp(-d2 / (2.0 * peak.sigma)) /
                 (2.0 * std::numbers::pi * peak.sigma);
        }
      }
      z[i][j] = acc / static_cast<double>(preds.size());
    }
  }

  // windowed maximum by full rescan
  auto window_max = [&](std::size_t i, std::size_t j) {
    double best = -1.0;
    for (std::ptrdiff_t p = -4; p <= 5; ++p) {
      for (std::ptrdiff_t q = -4; q <= 5; ++q) {
        const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i) + p;
        const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j) + q;
        if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(nl) ||
            jj >= static_cast<std::ptrdiff_t>(nt)) {
          continue;
        }
        best = std::max(best, z[static_cast<std::size_t>(ii)][static_cast<std::size_t>(jj)]);
      }
    }
    return best;
  };

  struct Cell {
    double score;
    std::size_t i, j;
  };
  std::vector<Cell> maxima;
  for (std::size_t i = 0; i < nl; ++i) {
    for (std::size_t j = 0; j < nt; ++j) {
      if (z[i][j] > 0.0 && z[i][j] == window_max(i, j)) maxima.push_back({z[i][j], i, j});
    }
  }

  // drop cells 8-adjacent to an equal-valued cell that precedes them in
  // (i, j) order and belongs to the same plateau component
  std::vector<Cell> reps;
  std::vector<std::vector<char>> taken(nl, std::vector<char>(nt, 0));
  for (const auto& cell : maxima) {
    bool joined = false;
    // flood from any already-taken equal neighbor
    std::vector<std::pair<std::size_t, std::size_t>> frontier{{cell.i, cell.j}};
    std::set<std::pair<std::size_t, std::size_t>> seen{{cell.i, cell.j}};
    while (!frontier.empty() && !joined) {
      const auto [ci, cj] = frontier.back();
      frontier.pop_back();
      for (std::ptrdiff_t di = -1; di <= 1 && !joined; ++di) {
        for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const std::ptrdiff_t ni = static_cast<std::ptrdiff_t>(ci) + di;
          const std::ptrdiff_t nj = static_cast<std::ptrdiff_t>(cj) + dj;
          if (ni < 0 || nj < 0 || ni >= static_cast<std::ptrdiff_t>(nl) ||
              nj >= static_cast<std::ptrdiff_t>(nt)) {
            continue;
          }
          const auto ui = static_cast<std::size_t>(ni);
          const auto uj = static_cast<std::size_t>(nj);
          if (z[ui][uj] != cell.score) continue;
          const bool is_max = z[ui][uj] == window_max(ui, uj);
          if (!is_max) continue;
          if (taken[ui][uj]) {
            joined = true;
            break;
          }
          if (seen.insert({ui, uj}).second) frontier.push_back({ui, uj});
        }
      }
    }
    taken[cell.i][cell.j] = 1;
    if (!joined) reps.push_back(cell);
  }

  std::stable_sort(reps.begin(), reps.end(), [](const Cell& a, const Cell& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(top_k), reps.size());

  geohead::UserEstimate est;
  for (std::size_t k = 0; k < keep; ++k) {
    est.points.push_back({lons[reps[k].i], lats[reps[k].j]});
    est.scores.push_back(reps[k].score);
  }
  if (keep > 1) est.weights = geohead::softmax(est.scores);
  return est;
}

}  // namespace oracle
