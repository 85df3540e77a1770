#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "geohead/errors.hpp"
#include "geohead/geo.hpp"
#include "geohead/random.hpp"

namespace geohead {

// One ingested tweet: content, author/place context, and the labeled
// coordinates when present. Optional string fields default to empty.
struct TweetRecord {
  std::string tweet_id;
  std::string user_id;
  std::int64_t timestamp = 0;  // UTC seconds
  std::string text;
  std::string user_location;
  std::string user_description;
  std::string user_name;
  std::string user_screen_name;
  std::string place_country;
  std::string place_type;
  std::string place_location;
  std::string place_name;
  std::string place_full_name;
  std::optional<GeoPoint> label;
};

enum class FeatureSet { text_only, user_only, geo_only, non_geo, all };

inline const char* to_string(FeatureSet fs) {
  switch (fs) {
    case FeatureSet::text_only: return "TEXT-ONLY";
    case FeatureSet::user_only: return "USER-ONLY";
    case FeatureSet::geo_only: return "GEO-ONLY";
    case FeatureSet::non_geo: return "NON-GEO";
    case FeatureSet::all: return "ALL";
  }
  return "?";
}

inline FeatureSet parse_feature_set(std::string_view s) {
  std::string t;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    t.push_back(c == '-' ? '_' : static_cast<char>(std::tolower(u)));
  }
  if (t == "text_only" || t == "text" || t == "to") return FeatureSet::text_only;
  if (t == "user_only" || t == "user" || t == "uo") return FeatureSet::user_only;
  if (t == "geo_only" || t == "geo" || t == "go") return FeatureSet::geo_only;
  if (t == "non_geo" || t == "ng") return FeatureSet::non_geo;
  if (t == "all" || t == "a") return FeatureSet::all;
  throw ConfigError("unknown feature set: " + std::string(s));
}

// Reserved separator between concatenated fields. Keeps compositions
// reversible: split_feature() recovers the original field slots.
inline constexpr const char* kFieldSeparator = " ⟂ ";

namespace detail {

inline void collect_fields(const TweetRecord& r, FeatureSet fs,
                           std::vector<std::string_view>& out) {
  const bool with_text = fs == FeatureSet::text_only ||
                         fs == FeatureSet::non_geo || fs == FeatureSet::all;
  const bool with_user = fs == FeatureSet::user_only ||
                         fs == FeatureSet::non_geo || fs == FeatureSet::all;
  const bool with_place = fs == FeatureSet::geo_only || fs == FeatureSet::all;
  if (with_text) out.push_back(r.text);
  if (with_user) {
    out.push_back(r.user_location);
    out.push_back(r.user_description);
    out.push_back(r.user_name);
    out.push_back(r.user_screen_name);
  }
  if (with_place) {
    out.push_back(r.place_country);
    out.push_back(r.place_type);
    out.push_back(r.place_location);
    out.push_back(r.place_name);
    out.push_back(r.place_full_name);
  }
}

}  // namespace detail

// Concatenate the fields of one feature set, in their table order, joined by
// kFieldSeparator. Missing fields stay as empty slots; a composition whose
// fields are all empty yields the empty string (the "skip this feature"
// signal for minor-feature training).
inline std::string compose_feature(const TweetRecord& r, FeatureSet fs) {
  std::vector<std::string_view> fields;
  detail::collect_fields(r, fs, fields);
  bool any = false;
  for (auto f : fields) any = any || !f.empty();
  if (!any) return {};
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += kFieldSeparator;
    out += fields[i];
  }
  return out;
}

// Inverse of compose_feature for debugging and tests.
inline std::vector<std::string> split_feature(std::string_view composed) {
  std::vector<std::string> parts;
  const std::string_view sep = kFieldSeparator;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = composed.find(sep, pos);
    if (next == std::string_view::npos) {
      parts.emplace_back(composed.substr(pos));
      break;
    }
    parts.emplace_back(composed.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return parts;
}

// Drop URL tokens, collapse runs of >= 3 identical ASCII punctuation bytes to
// one, and normalize whitespace. Multi-byte UTF-8 sequences pass through.
inline std::string clean_text(std::string_view s) {
  // URL tokens go first: anything whitespace-delimited starting with
  // http://, https://, or www.
  auto starts_with_icase = [](std::string_view hay, std::string_view prefix) {
    if (hay.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(hay[i])) != prefix[i]) return false;
    }
    return true;
  };
  std::string no_urls;
  std::size_t i = 0;
  while (i < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[i]))) {
      no_urls.push_back(s[i]);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    const std::string_view token = s.substr(i, j - i);
    if (!starts_with_icase(token, "http://") &&
        !starts_with_icase(token, "https://") &&
        !starts_with_icase(token, "www.")) {
      no_urls += token;
    }
    i = j;
  }

  // Collapse punctuation runs.
  std::string collapsed;
  collapsed.reserve(no_urls.size());
  i = 0;
  while (i < no_urls.size()) {
    const unsigned char c = static_cast<unsigned char>(no_urls[i]);
    std::size_t run = 1;
    while (i + run < no_urls.size() &&
           static_cast<unsigned char>(no_urls[i + run]) == c) {
      ++run;
    }
    const bool is_ascii_punct = c < 0x80 && std::ispunct(c);
    if (is_ascii_punct && run >= 3) {
      collapsed.push_back(static_cast<char>(c));
    } else {
      collapsed.append(run, static_cast<char>(c));
    }
    i += run;
  }

  // Whitespace normalization: runs to single spaces, trimmed ends.
  std::string out;
  out.reserve(collapsed.size());
  bool pending_space = false;
  for (char c : collapsed) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c);
  }
  return out;
}

// Drop every record of any user that posted more than max_per_day messages
// within one UTC calendar day. Record order is preserved.
inline std::vector<TweetRecord> filter_bots(std::span<const TweetRecord> records,
                                            int max_per_day = 20) {
  std::unordered_map<std::string, std::unordered_map<std::int64_t, int>> per_day;
  std::unordered_set<std::string> flagged;
  for (const auto& r : records) {
    // floor division keeps pre-1970 timestamps in the right day bucket
    std::int64_t day = r.timestamp / 86400;
    if (r.timestamp % 86400 < 0) --day;
    if (++per_day[r.user_id][day] > max_per_day) flagged.insert(r.user_id);
  }
  std::vector<TweetRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!flagged.contains(r.user_id)) out.push_back(r);
  }
  return out;
}

// Deterministic hashed bag-of-tokens embedding standing in for a frozen text
// encoder. Lowercased tokens split on whitespace and ASCII punctuation; each
// token lands in one of dim buckets with a hash-derived sign; the count
// vector is L2-normalized. Same (text, dim, seed) always gives the same
// vector, and the result depends only on the token multiset.
inline std::vector<double> encode_stub(std::string_view text, int dim,
                                       std::uint64_t seed,
                                       int max_tokens = 512) {
  if (dim < 8) throw std::invalid_argument("encode_stub: dim must be >= 8");
  std::vector<double> vec(static_cast<std::size_t>(dim), 0.0);
  std::string token;
  int n_tokens = 0;
  auto flush = [&]() {
    if (token.empty() || n_tokens >= max_tokens) {
      token.clear();
      return;
    }
    ++n_tokens;
    const std::uint64_t h = fnv1a64(token, seed);
    const auto idx = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim));
    vec[idx] += (h >> 63) ? -1.0 : 1.0;
    token.clear();
  };
  for (char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (c < 0x80 && (std::isspace(c) || std::ispunct(c))) {
      flush();
    } else if (c < 0x80) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      token.push_back(raw);
    }
  }
  flush();
  double norm2 = 0.0;
  for (double v : vec) norm2 += v * v;
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : vec) v *= inv;
  }
  return vec;
}

using EmbeddingVector = std::vector<double>;

// The encoder boundary: either the built-in hashed stub or externally
// computed embeddings keyed by tweet_id.
struct EncoderSpec {
  enum class Kind { hashed_stub, imported };
  Kind kind = Kind::hashed_stub;
  int dim = 768;
  std::uint64_t seed = 0;
  int max_tokens = 512;
  std::string provenance;
};

inline EmbeddingVector encode(const EncoderSpec& spec, std::string_view text) {
  if (spec.kind != EncoderSpec::Kind::hashed_stub) {
    throw ConfigError("encoder is imported; embeddings must be supplied by id");
  }
  return encode_stub(text, spec.dim, spec.seed, spec.max_tokens);
}

// ---------------------------------------------------------------------------
// Timestamps

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian date.
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace detail

// Accepts "YYYY-MM-DD[T ]HH:MM:SS[.fff][Z|+HH:MM|+HHMM|+HH]".
inline std::optional<std::int64_t> parse_iso8601_utc(std::string_view s) {
  auto digits = [&](std::size_t pos, int n, int& out) {
    if (pos + static_cast<std::size_t>(n) > s.size()) return false;
    int v = 0;
    for (int k = 0; k < n; ++k) {
      const char c = s[pos + static_cast<std::size_t>(k)];
      if (c < '0' || c > '9') return false;
      v = v * 10 + (c - '0');
    }
    out = v;
    return true;
  };
  int year, month, day, hour, minute, second;
  if (!digits(0, 4, year) || s.size() < 19) return std::nullopt;
  if (s[4] != '-' || s[7] != '-') return std::nullopt;
  if (!digits(5, 2, month) || !digits(8, 2, day)) return std::nullopt;
  if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
  if (!digits(11, 2, hour) || s[13] != ':' || !digits(14, 2, minute) ||
      s[16] != ':' || !digits(17, 2, second)) {
    return std::nullopt;
  }
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 ||
      minute > 59 || second > 60) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
  }
  std::int64_t offset = 0;
  if (pos < s.size()) {
    const char c = s[pos];
    if (c == 'Z') {
      ++pos;
    } else if (c == '+' || c == '-') {
      int oh = 0, om = 0;
      if (!digits(pos + 1, 2, oh)) return std::nullopt;
      std::size_t opos = pos + 3;
      if (opos < s.size() && s[opos] == ':') ++opos;
      if (opos + 2 <= s.size() && digits(opos, 2, om)) opos += 2;
      offset = (c == '+' ? 1 : -1) * (oh * 3600 + om * 60);
      pos = opos;
    }
  }
  if (pos != s.size()) return std::nullopt;
  return detail::days_from_civil(year, month, day) * 86400 + hour * 3600 +
         minute * 60 + second - offset;
}

inline std::string format_iso8601_utc(std::int64_t ts) {
  std::int64_t days = ts / 86400;
  std::int64_t rem = ts % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  // civil_from_days, inverse of the above
  std::int64_t z = days + 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : static_cast<unsigned>(-9));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                static_cast<long long>(y + (m <= 2)), m, d,
                static_cast<long long>(rem / 3600),
                static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  return buf;
}

// ---------------------------------------------------------------------------
// Tweet JSONL

struct LoadStats {
  long lines = 0;         // non-blank lines seen
  long parsed = 0;        // records returned
  long parse_errors = 0;  // structurally broken lines
  long missing_label = 0; // valid tweets without coordinates
  long invalid_label = 0; // coordinates outside the valid lon/lat window
};

namespace detail {

inline std::string json_string_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  return {};
}

}  // namespace detail

enum class TweetParseStatus { ok, malformed, missing_label, invalid_label };

// One tweet object -> record. Unknown keys are ignored; broken coordinates
// or an empty text field make the object malformed; out-of-range labels are
// rejected, never clamped, since a silently moved label corrupts training.
inline TweetParseStatus parse_tweet_json(const nlohmann::json& j, bool require_label,
                                         TweetRecord& out) {
  if (!j.is_object()) return TweetParseStatus::malformed;
  TweetRecord r;
  r.text = detail::json_string_field(j, "text");
  if (r.text.empty()) return TweetParseStatus::malformed;
  if (auto u = j.find("user"); u != j.end() && u->is_object()) {
    r.user_location = detail::json_string_field(*u, "location");
    r.user_description = detail::json_string_field(*u, "description");
    r.user_name = detail::json_string_field(*u, "name");
    r.user_screen_name = detail::json_string_field(*u, "screen_name");
  }
  if (auto p = j.find("place"); p != j.end() && p->is_object()) {
    r.place_country = detail::json_string_field(*p, "country");
    r.place_type = detail::json_string_field(*p, "place_type");
    r.place_location = detail::json_string_field(*p, "location");
    r.place_name = detail::json_string_field(*p, "name");
    r.place_full_name = detail::json_string_field(*p, "full_name");
  }
  if (auto c = j.find("coordinates"); c != j.end()) {
    if (!c->is_object() || !c->contains("lon") || !c->contains("lat") ||
        !(*c)["lon"].is_number() || !(*c)["lat"].is_number()) {
      return TweetParseStatus::malformed;
    }
    const GeoPoint p{(*c)["lon"].get<double>(), (*c)["lat"].get<double>()};
    if (!in_valid_range(p)) return TweetParseStatus::invalid_label;
    r.label = p;
  } else if (require_label) {
    return TweetParseStatus::missing_label;
  }
  r.tweet_id = detail::json_string_field(j, "tweet_id");
  r.user_id = detail::json_string_field(j, "user_id");
  if (auto ts = parse_iso8601_utc(detail::json_string_field(j, "created_at"))) {
    r.timestamp = *ts;
  }
  out = std::move(r);
  return TweetParseStatus::ok;
}

// Streaming JSONL reader. Malformed lines are counted and skipped; more than
// 10% malformed (broken JSON or corrupt labels) is a hard error. With
// require_label, records lacking coordinates are skipped and counted.
inline std::vector<TweetRecord> load_tweets_jsonl(const std::string& path,
                                                  bool require_label,
                                                  LoadStats* stats_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tweet file: " + path);
  LoadStats stats;
  std::vector<TweetRecord> records;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool blank = true;
    for (char c : line) blank = blank && std::isspace(static_cast<unsigned char>(c));
    if (blank) continue;
    ++stats.lines;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    TweetRecord r;
    const auto status = j.is_discarded() ? TweetParseStatus::malformed
                                         : parse_tweet_json(j, require_label, r);
    switch (status) {
      case TweetParseStatus::malformed:
        ++stats.parse_errors;
        continue;
      case TweetParseStatus::missing_label:
        ++stats.missing_label;
        continue;
      case TweetParseStatus::invalid_label:
        ++stats.invalid_label;
        continue;
      case TweetParseStatus::ok:
        break;
    }
    if (r.tweet_id.empty()) r.tweet_id = "line-" + std::to_string(line_no);
    records.push_back(std::move(r));
    ++stats.parsed;
  }
  const long malformed = stats.parse_errors + stats.invalid_label;
  if (stats.lines > 0 && malformed * 10 > stats.lines) {
    throw DataError("too many malformed lines in " + path + ": " +
                    std::to_string(malformed) + " of " +
                    std::to_string(stats.lines));
  }
  if (stats_out != nullptr) *stats_out = stats;
  return records;
}

inline nlohmann::json tweet_to_json(const TweetRecord& r) {
  nlohmann::json j;
  j["tweet_id"] = r.tweet_id;
  j["user_id"] = r.user_id;
  j["text"] = r.text;
  j["created_at"] = format_iso8601_utc(r.timestamp);
  j["user"] = {{"location", r.user_location},
               {"description", r.user_description},
               {"name", r.user_name},
               {"screen_name", r.user_screen_name}};
  j["place"] = {{"country", r.place_country},
                {"place_type", r.place_type},
                {"location", r.place_location},
                {"name", r.place_name},
                {"full_name", r.place_full_name}};
  if (r.label) j["coordinates"] = {{"lon", r.label->lon}, {"lat", r.label->lat}};
  return j;
}

inline void write_tweets_jsonl(const std::string& path,
                               std::span<const TweetRecord> records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write tweet file: " + path);
  for (const auto& r : records) out << tweet_to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Embedding files
//
// Header line: JSON object {"dim", "count", "seed", "provenance"}.
// Then one record per line: tweet_id followed by dim comma-separated decimal
// floats printed with 17 significant digits, which round-trips binary64
// exactly.

struct EmbeddingFileHeader {
  int dim = 0;
  long count = 0;
  std::uint64_t seed = 0;
  std::string provenance;
};

using EmbeddingStore = std::unordered_map<std::string, EmbeddingVector>;

inline void save_embeddings(
    const std::string& path, const EmbeddingFileHeader& header,
    std::span<const std::pair<std::string, EmbeddingVector>> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embedding file: " + path);
  nlohmann::json h;
  h["dim"] = header.dim;
  h["count"] = rows.size();
  h["seed"] = header.seed;
  h["provenance"] = header.provenance;
  out << h.dump() << '\n';
  char buf[40];
  for (const auto& [id, vec] : rows) {
    out << id;
    for (double v : vec) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

inline EmbeddingStore load_embeddings(const std::string& path,
                                      EmbeddingFileHeader* header_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("embedding file is empty: " + path);
  const auto h = nlohmann::json::parse(line, nullptr, false);
  if (h.is_discarded() || !h.is_object() || !h.contains("dim")) {
    throw DataError("bad embedding file header: " + path);
  }
  EmbeddingFileHeader header;
  header.dim = h["dim"].get<int>();
  header.count = h.value("count", 0L);
  header.seed = h.value("seed", std::uint64_t{0});
  header.provenance = h.value("provenance", std::string{});
  if (header.dim < 1) throw DataError("embedding file declares dim < 1: " + path);

  EmbeddingStore store;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t id_end = line.find(',');
    if (id_end == std::string::npos) {
      throw DataError("embedding line " + std::to_string(line_no) +
                      " has no values");
    }
    std::string id = line.substr(0, id_end);
    EmbeddingVector vec;
    vec.reserve(static_cast<std::size_t>(header.dim));
    const char* p = line.c_str() + id_end;
    while (*p == ',') {
      ++p;
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p || !std::isfinite(v)) {
        throw DataError("bad value in embedding line " + std::to_string(line_no));
      }
      vec.push_back(v);
      p = end;
    }
    if (*p != '\0' && *p != '\r') {
      throw DataError("trailing junk in embedding line " + std::to_string(line_no));
    }
    if (static_cast<int>(vec.size()) != header.dim) {
      throw DataError("embedding line " + std::to_string(line_no) + " has " +
                      std::to_string(vec.size()) + " values, expected " +
                      std::to_string(header.dim));
    }
    if (!store.emplace(std::move(id), std::move(vec)).second) {
      throw DataError("duplicate tweet_id in embedding line " +
                      std::to_string(line_no));
    }
  }
  if (header_out != nullptr) *header_out = header;
  return store;
}

}  // namespace geohead
