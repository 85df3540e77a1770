#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "geohead/features.hpp"
#include "geohead/random.hpp"

using namespace geohead;
namespace fs = std::filesystem;

namespace {

std::string temp_file(const char* name) {
  static const auto dir = [] {
    auto d = fs::temp_directory_path() /
             ("geohead-test-" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return (dir / name).string();
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("feature composition follows the field table") {
  TweetRecord r;
  r.text = "hi";
  CHECK(compose_feature(r, FeatureSet::text_only) == "hi");

  r.user_location = "Paris";
  r.user_description = "";
  r.user_name = "Ann";
  r.user_screen_name = "ann1";
  const std::string sep = kFieldSeparator;
  const std::string expected = "hi" + sep + "Paris" + sep + "" + sep + "Ann" + sep + "ann1";
  CHECK(compose_feature(r, FeatureSet::non_geo) == expected);

  // round-trip back into field slots
  const auto parts = split_feature(expected);
  REQUIRE(parts.size() == 5);
  CHECK(parts[0] == "hi");
  CHECK(parts[1] == "Paris");
  CHECK(parts[2].empty());
  CHECK(parts[3] == "Ann");
  CHECK(parts[4] == "ann1");

  // all place fields empty: the minor feature is absent
  CHECK(compose_feature(r, FeatureSet::geo_only).empty());

  r.place_country = "France";
  r.place_type = "city";
  r.place_location = "Paris";
  r.place_name = "Paris";
  r.place_full_name = "Paris France";
  const auto geo = split_feature(compose_feature(r, FeatureSet::geo_only));
  REQUIRE(geo.size() == 5);
  CHECK(geo[0] == "France");
  CHECK(geo[4] == "Paris France");
  CHECK(split_feature(compose_feature(r, FeatureSet::all)).size() == 10);
  CHECK(split_feature(compose_feature(r, FeatureSet::user_only)).size() == 4);
}

TEST_CASE("non-geo never leaks place fields, geo-only never leaks content") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    TweetRecord r;
    r.text = "text" + std::to_string(rng.next_u64() % 10000);
    r.user_location = "USERLOC" + std::to_string(i);
    r.user_name = "USERNAME" + std::to_string(i);
    r.user_description = "desc";
    r.user_screen_name = "sn";
    r.place_country = "PLACECOUNTRY" + std::to_string(i);
    r.place_name = "PLACENAME" + std::to_string(i);
    r.place_type = "PLACETYPE";
    r.place_location = "PLACELOC";
    r.place_full_name = "PLACEFULL";
    const auto ng = compose_feature(r, FeatureSet::non_geo);
    CHECK(ng.find("PLACE") == std::string::npos);
    const auto go = compose_feature(r, FeatureSet::geo_only);
    CHECK(go.find(r.text) == std::string::npos);
    CHECK(go.find("USER") == std::string::npos);
  }
}

TEST_CASE("text cleaning") {
  CHECK(clean_text("go https://t.co/abc now") == "go now");
  CHECK(clean_text("see www.example.com please") == "see please");
  CHECK(clean_text("HTTP://CAPS.example also") == "also");
  CHECK(clean_text("wow!!!!!") == "wow!");
  CHECK(clean_text("wow!!") == "wow!!");
  CHECK(clean_text("dots... and ---- dashes") == "dots. and - dashes");
  CHECK(clean_text("  spaced \t out \n text ") == "spaced out text");
  CHECK(clean_text("café müde 東京") == "café müde 東京");
  CHECK(clean_text("").empty());
  CHECK(clean_text("https://only.url").empty());
}

TEST_CASE("cleaning is idempotent") {
  Rng rng(17);
  const char* samples[] = {"hello!!! world https://x.y ...", "a  b   c",
                           "мир!!!! peace 東京...", "plain text"};
  for (const char* s : samples) {
    const auto once = clean_text(s);
    CHECK(clean_text(once) == once);
  }
}

TEST_CASE("cleaning commutes with composition for url-free non-blank fields") {
  TweetRecord r;
  r.text = "some   text!!!";
  r.user_location = " Paris ";
  r.user_description = "likes    cats";
  r.user_name = "Ann";
  r.user_screen_name = "ann1";
  const auto compose_then_clean = clean_text(compose_feature(r, FeatureSet::non_geo));
  TweetRecord cleaned = r;
  cleaned.text = clean_text(r.text);
  cleaned.user_location = clean_text(r.user_location);
  cleaned.user_description = clean_text(r.user_description);
  cleaned.user_name = clean_text(r.user_name);
  cleaned.user_screen_name = clean_text(r.user_screen_name);
  CHECK(compose_feature(cleaned, FeatureSet::non_geo) == compose_then_clean);
}

TEST_CASE("bot filter drops heavy posters wholesale") {
  std::vector<TweetRecord> records;
  auto add = [&](const std::string& user, std::int64_t ts) {
    TweetRecord r;
    r.tweet_id = "t" + std::to_string(records.size());
    r.user_id = user;
    r.timestamp = ts;
    r.text = "x";
    records.push_back(r);
  };
  // 21 tweets in one day: bot
  for (int i = 0; i < 21; ++i) add("bot", 86400 * 100 + i * 60);
  // exactly 20 in one day: kept
  for (int i = 0; i < 20; ++i) add("busy", 86400 * 100 + i * 60);
  // 15 + 15 across two days: kept
  for (int i = 0; i < 15; ++i) add("split", 86400 * 100 + i * 60);
  for (int i = 0; i < 15; ++i) add("split", 86400 * 101 + i * 60);

  const auto filtered = filter_bots(records);
  long bot = 0, busy = 0, split = 0;
  for (const auto& r : filtered) {
    bot += r.user_id == "bot";
    busy += r.user_id == "busy";
    split += r.user_id == "split";
  }
  CHECK(bot == 0);
  CHECK(busy == 20);
  CHECK(split == 30);

  // idempotent
  const auto twice = filter_bots(filtered);
  CHECK(twice.size() == filtered.size());
}

TEST_CASE("encoder stub basics") {
  CHECK_THROWS_AS(encode_stub("x", 4, 0), std::invalid_argument);

  const auto zero = encode_stub("", 32, 0);
  for (double v : zero) CHECK(v == 0.0);

  // order-free bag of tokens
  CHECK(encode_stub("a b", 64, 42) == encode_stub("b a", 64, 42));
  CHECK(encode_stub("Hello, WORLD!", 64, 42) == encode_stub("hello world", 64, 42));

  // deterministic
  CHECK(encode_stub("paris france", 128, 7) == encode_stub("paris france", 128, 7));
  // seed-sensitive
  CHECK(encode_stub("paris france", 128, 7) != encode_stub("paris france", 128, 8));

  // L2 normalized
  const auto v = encode_stub("some tokens here", 64, 1);
  double n2 = 0;
  for (double x : v) n2 += x * x;
  CHECK(n2 == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("stub embeddings of overlapping texts are closer") {
  const auto both = encode_stub("paris france", 768, 42);
  const auto paris = encode_stub("paris", 768, 42);
  const auto tokyo = encode_stub("tokyo", 768, 42);
  CHECK(cosine(both, paris) > cosine(both, tokyo));
}

TEST_CASE("stub depends only on the token multiset") {
  Rng rng(3);
  std::vector<std::string> tokens{"alpha", "beta", "gamma", "delta", "epsilon"};
  std::string fwd, rev;
  for (const auto& t : tokens) fwd += t + " ";
  for (auto it = tokens.rbegin(); it != tokens.rend(); ++it) rev += *it + " ";
  CHECK(encode_stub(fwd, 96, 11) == encode_stub(rev, 96, 11));
}

TEST_CASE("token cap truncates long inputs") {
  std::string text;
  for (int i = 0; i < 600; ++i) text += "tok" + std::to_string(i) + " ";
  const auto capped = encode_stub(text, 64, 0, 512);
  std::string first_512;
  for (int i = 0; i < 512; ++i) first_512 += "tok" + std::to_string(i) + " ";
  CHECK(capped == encode_stub(first_512, 64, 0, 512));
}

TEST_CASE("iso8601 parsing") {
  CHECK(parse_iso8601_utc("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_iso8601_utc("1970-01-02T00:00:00Z") == 86400);
  CHECK(parse_iso8601_utc("2021-03-04 12:30:00") == 1614861000);
  CHECK(parse_iso8601_utc("2021-03-04T12:30:00+01:00") == 1614861000 - 3600);
  CHECK(parse_iso8601_utc("2021-03-04T12:30:00.500Z") == 1614861000);
  CHECK_FALSE(parse_iso8601_utc("not a date").has_value());
  CHECK_FALSE(parse_iso8601_utc("2021-13-04T12:30:00Z").has_value());
  // round trip
  CHECK(parse_iso8601_utc(format_iso8601_utc(1614861000)) == 1614861000);
}

TEST_CASE("jsonl loading counts and skips") {
  const auto path = temp_file("tweets.jsonl");
  {
    std::ofstream out(path);
    out << R"({"tweet_id":"1","user_id":"u1","text":"hello","coordinates":{"lon":1.0,"lat":2.0},"created_at":"2021-01-01T00:00:00Z"})" << "\n";
    out << R"({"tweet_id":"2","user_id":"u1","text":"paris","user":{"location":"Paris"},"coordinates":{"lon":2.35,"lat":48.85}})" << "\n";
    out << R"({"tweet_id":"3","user_id":"u2","text":"labeled","place":{"country":"FR"},"coordinates":{"lon":0.0,"lat":0.0},"ignored_key":5})" << "\n";
  }
  LoadStats stats;
  const auto records = load_tweets_jsonl(path, true, &stats);
  REQUIRE(records.size() == 3);
  CHECK(stats.parsed == 3);
  CHECK(stats.parse_errors == 0);
  CHECK(records[0].label->lon == 1.0);
  CHECK(records[0].timestamp == 1609459200);
  CHECK(records[1].user_location == "Paris");
  CHECK(records[2].place_country == "FR");

  // missing coordinates in labeled mode: skipped and counted
  {
    std::ofstream out(path, std::ios::app);
    out << R"({"tweet_id":"4","user_id":"u3","text":"unlabeled"})" << "\n";
  }
  const auto again = load_tweets_jsonl(path, true, &stats);
  CHECK(again.size() == 3);
  CHECK(stats.missing_label == 1);
  const auto lenient = load_tweets_jsonl(path, false, &stats);
  CHECK(lenient.size() == 4);
  CHECK_FALSE(lenient[3].label.has_value());
}

TEST_CASE("out-of-range labels are rejected, not clamped") {
  const auto path = temp_file("badlabel.jsonl");
  {
    std::ofstream out(path);
    for (int i = 0; i < 20; ++i) {
      out << R"({"tweet_id":"g)" << i
          << R"(","text":"ok","coordinates":{"lon":1.0,"lat":2.0}})" << "\n";
    }
    out << R"({"tweet_id":"bad","text":"oops","coordinates":{"lon":260.0,"lat":2.0}})" << "\n";
  }
  LoadStats stats;
  const auto records = load_tweets_jsonl(path, true, &stats);
  CHECK(records.size() == 20);
  CHECK(stats.invalid_label == 1);
}

TEST_CASE("too many malformed lines is a hard error") {
  const auto path = temp_file("broken.jsonl");
  {
    std::ofstream out(path);
    out << "{not json}\n";
    out << R"({"tweet_id":"1","text":"fine","coordinates":{"lon":0.0,"lat":0.0}})" << "\n";
  }
  CHECK_THROWS_AS(load_tweets_jsonl(path, true), DataError);
  CHECK_THROWS_AS(load_tweets_jsonl("/nonexistent/nowhere.jsonl", true), IoError);
}

TEST_CASE("tweet jsonl round trip") {
  TweetRecord r;
  r.tweet_id = "42";
  r.user_id = "u9";
  r.timestamp = 1614861000;
  r.text = "café ⟂ test";
  r.user_location = "東京";
  r.place_country = "JP";
  r.label = GeoPoint{139.69, 35.68};
  const auto path = temp_file("roundtrip.jsonl");
  write_tweets_jsonl(path, std::vector<TweetRecord>{r});
  const auto back = load_tweets_jsonl(path, true);
  REQUIRE(back.size() == 1);
  CHECK(back[0].tweet_id == "42");
  CHECK(back[0].text == r.text);
  CHECK(back[0].user_location == r.user_location);
  CHECK(back[0].timestamp == r.timestamp);
  CHECK(back[0].label->lon == r.label->lon);
}

TEST_CASE("embedding files round-trip bit-exactly") {
  Rng rng(9);
  std::vector<std::pair<std::string, EmbeddingVector>> rows;
  for (int i = 0; i < 10; ++i) {
    EmbeddingVector v(16);
    for (auto& x : v) x = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
    rows.emplace_back("id" + std::to_string(i), v);
  }
  const auto path = temp_file("emb.csv");
  save_embeddings(path, {16, 10, 77, "stub"}, rows);
  EmbeddingFileHeader header;
  const auto store = load_embeddings(path, &header);
  CHECK(header.dim == 16);
  CHECK(header.seed == 77);
  REQUIRE(store.size() == 10);
  for (const auto& [id, vec] : rows) {
    const auto& got = store.at(id);
    REQUIRE(got.size() == vec.size());
    for (std::size_t i = 0; i < vec.size(); ++i) CHECK(got[i] == vec[i]);
  }
}

TEST_CASE("embedding rows of the wrong width name the line") {
  const auto path = temp_file("embbad.csv");
  {
    std::ofstream out(path);
    out << R"({"dim":4,"count":1,"seed":0,"provenance":""})" << "\n";
    out << "id0,1.0,2.0,3.0\n";  // 3 values, dim says 4
  }
  try {
    load_embeddings(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}
