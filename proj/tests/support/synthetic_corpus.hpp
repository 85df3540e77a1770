#pragma once

// Seeded synthetic tweet corpus: five geographically separated city clusters
// at country scale, each with its own 30-token vocabulary plus a small shared
// vocabulary. Labels are the city center plus Gaussian jitter; user fields
// carry the city and country words, place fields carry the full geo context.
// Cluster separations run 173-613 km, all beyond the 161 km accuracy radius.

#include <cstdint>
#include <string>
#include <vector>

#include "geohead/features.hpp"
#include "geohead/geo.hpp"
#include "geohead/random.hpp"

namespace synth {

struct City {
  const char* name;
  const char* country;
  geohead::GeoPoint center;
};

inline const std::vector<City>& cities() {
  static const std::vector<City> kCities = {
      {"amsterdam", "netherlands", {4.90, 52.37}},
      {"brussels", "belgium", {4.35, 50.85}},
      {"paris", "france", {2.35, 48.86}},
      {"frankfurt", "germany", {8.68, 50.11}},
      {"zurich", "switzerland", {8.54, 47.37}},
  };
  return kCities;
}

struct CorpusOptions {
  int n_samples = 20000;
  std::uint64_t seed = 7;
  double jitter_deg = 0.15;
  int users_per_city = 400;
};

inline std::vector<geohead::TweetRecord> make_city_corpus(const CorpusOptions& opts) {
  const auto& c = cities();
  geohead::Rng rng(geohead::mix_seed(opts.seed, "corpus"));

  std::vector<std::vector<std::string>> vocab(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) {
    for (int w = 0; w < 30; ++w) {
      vocab[k].push_back("c" + std::to_string(k) + "w" + std::to_string(w));
    }
  }
  std::vector<std::string> shared;
  for (int w = 0; w < 10; ++w) shared.push_back("common" + std::to_string(w));

  std::vector<geohead::TweetRecord> records;
  records.reserve(static_cast<std::size_t>(opts.n_samples));
  for (int i = 0; i < opts.n_samples; ++i) {
    const std::size_t k = rng.index(c.size());
    geohead::TweetRecord r;
    r.tweet_id = "t" + std::to_string(i);
    r.user_id = "u" + std::to_string(k) + "-" +
                std::to_string(rng.index(static_cast<std::size_t>(opts.users_per_city)));
    r.timestamp = 1600000000 + static_cast<std::int64_t>(rng.index(90)) * 86400 +
                  static_cast<std::int64_t>(rng.index(86400));

    std::string text;
    const int n_tokens = 10 + static_cast<int>(rng.index(7));
    for (int t = 0; t < n_tokens; ++t) {
      if (!text.empty()) text += ' ';
      if (rng.uniform() < 0.85) {
        text += vocab[k][rng.index(vocab[k].size())];
      } else {
        text += shared[rng.index(shared.size())];
      }
    }
    r.text = text;
    r.user_location = std::string(c[k].name) + " " + c[k].country;
    r.user_description = "likes " + vocab[k][rng.index(vocab[k].size())];
    r.user_name = "name" + std::to_string(rng.index(20));
    r.user_screen_name = "sn" + std::to_string(rng.index(20));
    r.place_country = c[k].country;
    r.place_type = "city";
    r.place_location = c[k].name;
    r.place_name = c[k].name;
    r.place_full_name = std::string(c[k].name) + " " + c[k].country;
    r.label = geohead::GeoPoint{c[k].center.lon + opts.jitter_deg * rng.normal(),
                                c[k].center.lat + opts.jitter_deg * rng.normal()};
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace synth
