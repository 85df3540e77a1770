// geohead command line: ingest/prepare tweet data, train wrapper-layer
// models, evaluate them, predict locations for new text, and aggregate
// per-tweet predictions into per-user location estimates.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
// failure.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "geohead/geohead.hpp"

using namespace geohead;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Relative inputs fall back to $GEOHEAD_DATA_DIR when they do not resolve
// from the working directory.
std::string resolve_input_path(const std::string& path) {
  if (path.empty() || fs::exists(path) || fs::path(path).is_absolute()) return path;
  if (const char* dir = std::getenv("GEOHEAD_DATA_DIR"); dir != nullptr && *dir != '\0') {
    const auto candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(resolve_input_path(path));
  if (!in) throw IoError("cannot open config file: " + path);
  json cfg = json::parse(in, nullptr, false);
  if (cfg.is_discarded() || !cfg.is_object()) {
    throw ConfigError("config file is not a JSON object: " + path);
  }
  return cfg;
}

// Precedence: CLI flag > config file > built-in default. The bound variable
// already holds CLI-or-default; the overlay only fires for unset flags.
struct ConfigOverlay {
  CLI::App* cmd;
  json cfg;

  template <typename T>
  void apply(const std::string& flag, const char* key, T& value) const {
    if (cmd->count(flag) == 0 && cfg.contains(key)) value = cfg.at(key).get<T>();
  }
};

std::string fmt_metric(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", *v);
  return buf;
}

std::string fmt_metric(double v) {
  return fmt_metric(std::optional<double>(v));
}

json report_to_json(const MetricsReport& rep) {
  json j;
  j["n_samples"] = rep.n_samples;
  j["mean_sae_km"] = rep.mean_sae;
  j["median_sae_km"] = rep.median_sae;
  j["acc_at_161"] = rep.acc_at_161;
  if (rep.mean_cae) j["mean_cae_km"] = *rep.mean_cae;
  if (rep.median_cae) j["median_cae_km"] = *rep.median_cae;
  if (rep.mean_pra) j["mean_pra_deg2"] = *rep.mean_pra;
  if (rep.median_pra) j["median_pra_deg2"] = *rep.median_pra;
  if (rep.cov) j["cov"] = *rep.cov;
  j["clamped_predictions"] = rep.clamped_predictions;
  j["pra_unit"] = "deg2";
  return j;
}

json prediction_to_json(const std::string& tweet_id, const std::string& user_id,
                        const ParsedOutput& parsed, long* clamp_events) {
  json peaks = json::array();
  for (int i = 0; i < parsed.outcomes(); ++i) {
    const GeoPoint p = clamp_to_valid(parsed.points[static_cast<std::size_t>(i)], clamp_events);
    json peak = {{"lon", p.lon}, {"lat", p.lat}, {"weight", parsed.weight(i)}};
    if (!parsed.sigmas.empty()) {
      peak["sigma"] = parsed.sigmas[static_cast<std::size_t>(i)];
    }
    peaks.push_back(std::move(peak));
  }
  return {{"type", "prediction"},
          {"tweet_id", tweet_id},
          {"user_id", user_id},
          {"kind", to_string(parsed.kind)},
          {"peaks", std::move(peaks)}};
}

std::string sanitize_for_filename(const std::string& s) {
  std::string out;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    out.push_back(std::isalnum(u) ? c : '_');
  }
  return out.empty() ? "anon" : out;
}

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
  std::string input;
  std::string output;
  std::string config_file;
  std::string emit_embeddings;
  std::string feature = "non_geo";
  int embedding_dim = 768;
  int max_tokens = 512;
  std::uint64_t seed = 0;
  int bot_threshold = 20;
  bool filter_bots_flag = false;
  bool allow_unlabeled = false;
};

int run_ingest(const IngestArgs& a) {
  LoadStats stats;
  auto records = load_tweets_jsonl(resolve_input_path(a.input), !a.allow_unlabeled, &stats);
  long bot_filtered = 0;
  if (a.filter_bots_flag) {
    const long before = static_cast<long>(records.size());
    records = filter_bots(records, a.bot_threshold);
    bot_filtered = before - static_cast<long>(records.size());
  }
  for (auto& r : records) {
    r.text = clean_text(r.text);
    r.user_location = clean_text(r.user_location);
    r.user_description = clean_text(r.user_description);
    r.user_name = clean_text(r.user_name);
    r.user_screen_name = clean_text(r.user_screen_name);
    r.place_country = clean_text(r.place_country);
    r.place_type = clean_text(r.place_type);
    r.place_location = clean_text(r.place_location);
    r.place_name = clean_text(r.place_name);
    r.place_full_name = clean_text(r.place_full_name);
  }
  // cleaning may empty a text field entirely (url-only tweets)
  const long before_clean = static_cast<long>(records.size());
  std::erase_if(records, [](const TweetRecord& r) { return r.text.empty(); });
  const long emptied = before_clean - static_cast<long>(records.size());

  if (!a.output.empty()) write_tweets_jsonl(a.output, records);

  if (!a.emit_embeddings.empty()) {
    const FeatureSet fs = parse_feature_set(a.feature);
    std::vector<std::pair<std::string, EmbeddingVector>> rows;
    rows.reserve(records.size());
    for (const auto& r : records) {
      const std::string text = compose_feature(r, fs);
      if (text.empty()) continue;
      rows.emplace_back(r.tweet_id, encode_stub(text, a.embedding_dim, a.seed, a.max_tokens));
    }
    EmbeddingFileHeader header;
    header.dim = a.embedding_dim;
    header.count = static_cast<long>(rows.size());
    header.seed = a.seed;
    header.provenance = std::string("hashed_stub feature=") + to_string(fs);
    save_embeddings(a.emit_embeddings, header, rows);
  }

  json summary = {{"lines", stats.lines},
                  {"parsed", stats.parsed},
                  {"parse_errors", stats.parse_errors},
                  {"missing_label", stats.missing_label},
                  {"invalid_label", stats.invalid_label},
                  {"bot_filtered", bot_filtered},
                  {"emptied_by_cleaning", emptied},
                  {"written", records.size()},
                  {"config",
                   {{"feature", a.feature},
                    {"embedding_dim", a.embedding_dim},
                    {"seed", a.seed},
                    {"max_tokens", a.max_tokens},
                    {"filter_bots", a.filter_bots_flag},
                    {"bot_threshold", a.bot_threshold}}}};
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string input;
  std::string out;
  std::string loss_log;
  std::string config_file;
  std::string kind = "pmop";
  int outcomes = 5;
  std::string kf = "non_geo";
  std::vector<std::string> mf;
  int embedding_dim = 768;
  std::uint64_t seed = 0;
  int epochs = 3;
  int batch_size = 16;
  double lr_max = 1e-5;
  double lr_min = 1e-6;
  std::string covariance = "lower_bounded";
  std::string loss_combination = "average";
  double dev_fraction = 0.1;
  int max_tokens = 512;
  std::string kf_embeddings;
  std::vector<std::string> mf_embeddings;
  bool filter_bots_flag = false;
  int bot_threshold = 20;
};

json effective_train_config(const TrainArgs& a) {
  return {{"kind", a.kind},
          {"outcomes", a.outcomes},
          {"kf", a.kf},
          {"mf", a.mf},
          {"embedding_dim", a.embedding_dim},
          {"seed", a.seed},
          {"epochs", a.epochs},
          {"batch_size", a.batch_size},
          {"lr_max", a.lr_max},
          {"lr_min", a.lr_min},
          {"covariance", a.covariance},
          {"loss_combination", a.loss_combination},
          {"dev_fraction", a.dev_fraction},
          {"max_tokens", a.max_tokens},
          {"filter_bots", a.filter_bots_flag}};
}

void write_loss_log(const std::string& path, const json& effective,
                    const HeadConfig& config, const std::vector<LossLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss log: " + path);
  out << "# config: " << effective.dump() << "\n";
  const bool with_mf = config.minor_features > 0;
  const bool with_prob = is_probabilistic(config.kind);
  out << "step,kf_spat";
  if (with_mf) out << ",mf_spat";
  if (with_prob) out << ",prob";
  out << ",total\n";
  char buf[64];
  for (const auto& row : rows) {
    out << row.step;
    std::snprintf(buf, sizeof(buf), ",%.9g", row.kf_spat);
    out << buf;
    if (with_mf) {
      if (row.mf_spat) {
        std::snprintf(buf, sizeof(buf), ",%.9g", *row.mf_spat);
        out << buf;
      } else {
        out << ",";
      }
    }
    if (with_prob) {
      if (row.prob) {
        std::snprintf(buf, sizeof(buf), ",%.9g", *row.prob);
        out << buf;
      } else {
        out << ",";
      }
    }
    std::snprintf(buf, sizeof(buf), ",%.9g", row.total);
    out << buf << "\n";
  }
}

int run_train(const TrainArgs& a) {
  HeadConfig config;
  config.kind = parse_head_kind(a.kind);
  config.outcomes = a.outcomes;
  config.embedding_dim = a.embedding_dim;
  config.minor_features = static_cast<int>(a.mf.size());
  config.covariance_activation = parse_covariance_activation(a.covariance);
  config.loss_combination = parse_loss_combination(a.loss_combination);
  config.validate();

  const FeatureSet kf = parse_feature_set(a.kf);
  std::vector<FeatureSet> mf;
  for (const auto& m : a.mf) mf.push_back(parse_feature_set(m));

  auto records = load_tweets_jsonl(resolve_input_path(a.input), true);
  if (a.filter_bots_flag) records = filter_bots(records, a.bot_threshold);
  if (records.empty()) throw DataError("train: no usable records in " + a.input);

  EncoderSpec enc;
  enc.dim = a.embedding_dim;
  enc.seed = a.seed;
  enc.max_tokens = a.max_tokens;
  enc.provenance = "hashed_stub";

  EmbeddingStore kf_store;
  const EmbeddingStore* kf_store_ptr = nullptr;
  std::vector<EmbeddingStore> mf_store_values;
  std::vector<const EmbeddingStore*> mf_store_ptrs;
  if (!a.kf_embeddings.empty()) {
    EmbeddingFileHeader header;
    kf_store = load_embeddings(resolve_input_path(a.kf_embeddings), &header);
    enc.kind = EncoderSpec::Kind::imported;
    enc.dim = header.dim;
    enc.seed = header.seed;
    enc.provenance = header.provenance.empty() ? "imported" : header.provenance;
    config.embedding_dim = header.dim;
    kf_store_ptr = &kf_store;
    if (!mf.empty() && a.mf_embeddings.empty()) {
      throw ConfigError("imported key embeddings require --mf-embeddings per minor feature");
    }
    if (a.mf_embeddings.size() != mf.size()) {
      throw ConfigError("need one --mf-embeddings file per --mf feature");
    }
    for (const auto& path : a.mf_embeddings) {
      EmbeddingFileHeader mh;
      mf_store_values.push_back(load_embeddings(resolve_input_path(path), &mh));
      if (mh.dim != header.dim) {
        throw ConfigError("minor embedding dim differs from key embedding dim");
      }
    }
    for (const auto& s : mf_store_values) mf_store_ptrs.push_back(&s);
  } else if (!a.mf_embeddings.empty()) {
    throw ConfigError("--mf-embeddings requires --kf-embeddings");
  }

  BuildStats stats;
  const auto samples = build_training_set(
      records, config, kf, mf, enc, kf_store_ptr,
      mf_store_ptrs.empty()
          ? std::span<const EmbeddingStore* const>{}
          : std::span<const EmbeddingStore* const>(mf_store_ptrs),
      &stats);
  if (samples.empty()) throw DataError("train: no usable samples after encoding");
  for (std::size_t k = 0; k < mf.size(); ++k) {
    if (stats.minor_present[k] == 0) {
      throw ConfigError(std::string("minor feature ") + to_string(mf[k]) +
                        " requested but no record provides it");
    }
  }

  TrainOptions topts;
  topts.epochs = a.epochs;
  topts.batch_size = a.batch_size;
  topts.lr_max = a.lr_max;
  topts.lr_min = a.lr_min;
  topts.seed = a.seed;
  topts.dev_fraction = a.dev_fraction;

  const auto result = train(samples, config, enc, topts);

  const json effective = effective_train_config(a);
  save_checkpoint(result.bundle, a.out, {{"config", effective}});
  const std::string log_path = a.loss_log.empty() ? a.out + ".loss.csv" : a.loss_log;
  write_loss_log(log_path, effective, config, result.log);

  json epochs_json = json::array();
  for (const auto& es : result.epoch_stats) {
    json e = {{"epoch", es.epoch}, {"train_loss", es.train_loss}};
    if (es.dev_mean_sae_km) e["dev_mean_sae_km"] = *es.dev_mean_sae_km;
    if (es.dev_median_sae_km) e["dev_median_sae_km"] = *es.dev_median_sae_km;
    epochs_json.push_back(std::move(e));
  }
  json summary = {{"checkpoint", a.out},
                  {"loss_log", log_path},
                  {"samples", samples.size()},
                  {"steps", result.steps},
                  {"final_loss", result.log.empty() ? 0.0 : result.log.back().total},
                  {"tweets_per_second", result.tweets_per_second},
                  {"epochs", std::move(epochs_json)},
                  {"config", effective}};
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string checkpoint;
  std::string input;
  std::string config_file;
  std::string vf = "non_geo";
  double alpha = 0.95;
  int cae_samples = 100;
  std::uint64_t seed = 0;
  std::string group_by;
  std::string json_out;
  std::string embeddings;
  bool strict_paper_cov = false;
  bool no_cae = false;
  bool filter_bots_flag = false;
  int bot_threshold = 20;
};

void print_report_table(const ModelBundle& bundle, const std::string& vf,
                        const MetricsReport& rep) {
  std::printf("%-6s %-9s %3s %7s %9s %9s %8s %9s %9s %9s %9s %7s\n", "model",
              "vf", "out", "n", "mean_sae", "med_sae", "acc@161", "mean_cae",
              "med_cae", "mean_pra", "med_pra", "cov");
  std::printf("%-6s %-9s %3d %7ld %9s %9s %8s %9s %9s %9s %9s %7s\n",
              to_string(bundle.config.kind), vf.c_str(), bundle.config.outcomes,
              rep.n_samples, fmt_metric(rep.mean_sae).c_str(),
              fmt_metric(rep.median_sae).c_str(), fmt_metric(rep.acc_at_161).c_str(),
              fmt_metric(rep.mean_cae).c_str(), fmt_metric(rep.median_cae).c_str(),
              fmt_metric(rep.mean_pra).c_str(), fmt_metric(rep.median_pra).c_str(),
              fmt_metric(rep.cov).c_str());
}

int run_evaluate(const EvaluateArgs& a) {
  const auto bundle = load_checkpoint(resolve_input_path(a.checkpoint));
  auto records = load_tweets_jsonl(resolve_input_path(a.input), true);
  if (a.filter_bots_flag) records = filter_bots(records, a.bot_threshold);

  EvalOptions opts;
  opts.vf = parse_feature_set(a.vf);
  opts.alpha = a.alpha;
  opts.cae_samples = a.cae_samples;
  opts.seed = a.seed;
  opts.strict_paper_cov = a.strict_paper_cov;
  opts.with_cae = !a.no_cae;

  EmbeddingStore store;
  const EmbeddingStore* store_ptr = nullptr;
  if (!a.embeddings.empty()) {
    store = load_embeddings(resolve_input_path(a.embeddings));
    store_ptr = &store;
  } else if (bundle.encoder.kind == EncoderSpec::Kind::imported) {
    throw ConfigError("checkpoint uses imported embeddings; pass --embeddings");
  }

  json out_json = {{"checkpoint", a.checkpoint},
                   {"vf", a.vf},
                   {"alpha", a.alpha},
                   {"seed", a.seed},
                   {"strict_paper_cov", a.strict_paper_cov},
                   {"model", config_to_json(bundle.config)}};

  if (a.group_by.empty()) {
    const auto rep = evaluate(records, bundle, opts, store_ptr);
    print_report_table(bundle, a.vf, rep);
    out_json["report"] = report_to_json(rep);
  } else {
    const auto groups = evaluate_grouped(records, bundle, opts, a.group_by, store_ptr);
    std::printf("%-20s %7s %9s %9s %8s\n", a.group_by.c_str(), "n", "mean_sae",
                "med_sae", "acc@161");
    json groups_json = json::object();
    for (const auto& [key, rep] : groups) {
      std::printf("%-20s %7ld %9s %9s %8s\n", key.c_str(), rep.n_samples,
                  fmt_metric(rep.mean_sae).c_str(), fmt_metric(rep.median_sae).c_str(),
                  fmt_metric(rep.acc_at_161).c_str());
      groups_json[key] = report_to_json(rep);
    }
    out_json["group_by"] = a.group_by;
    out_json["groups"] = std::move(groups_json);
  }

  if (!a.json_out.empty()) {
    std::ofstream out(a.json_out);
    if (!out) throw IoError("cannot write metrics JSON: " + a.json_out);
    out << out_json.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::vector<std::string> texts;
  std::string config_file;
  std::string vf = "non_geo";
  std::string out;
  std::string plot_prefix;
  std::string embeddings;
};

void write_plot_files(const std::string& prefix,
                      const std::vector<std::pair<std::string, ParsedOutput>>& preds) {
  std::ofstream peaks(prefix + ".peaks.csv");
  if (!peaks) throw IoError("cannot write plot file: " + prefix + ".peaks.csv");
  const bool prob = !preds.empty() && !preds.front().second.sigmas.empty();
  peaks << "tweet_id,rank,lon,lat,weight" << (prob ? ",sigma" : "") << "\n";
  char buf[128];
  for (const auto& [id, parsed] : preds) {
    for (int i = 0; i < parsed.outcomes(); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (prob) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,%.9g,%.9g,%.9g\n", id.c_str(), i,
                      parsed.points[idx].lon, parsed.points[idx].lat,
                      parsed.weight(i), parsed.sigmas[idx]);
      } else {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,%.9g,%.9g\n", id.c_str(), i,
                      parsed.points[idx].lon, parsed.points[idx].lat, parsed.weight(i));
      }
      peaks << buf;
    }
  }
  if (!prob) return;  // geospatial models have no density surface

  std::ofstream density(prefix + ".density.csv");
  if (!density) throw IoError("cannot write plot file: " + prefix + ".density.csv");
  density << "tweet_id,lon,lat,pdf\n";
  for (const auto& [id, parsed] : preds) {
    const auto gmm = to_gmm_prediction(parsed);
    double lon_lo = 1e9, lon_hi = -1e9, lat_lo = 1e9, lat_hi = -1e9, max_std = 0.0;
    for (const auto& peak : gmm.peaks) {
      lon_lo = std::min(lon_lo, peak.mu.lon);
      lon_hi = std::max(lon_hi, peak.mu.lon);
      lat_lo = std::min(lat_lo, peak.mu.lat);
      lat_hi = std::max(lat_hi, peak.mu.lat);
      max_std = std::max(max_std, std::sqrt(peak.sigma));
    }
    const double margin = std::max(1.0, 3.0 * max_std);
    lon_lo -= margin;
    lon_hi += margin;
    lat_lo -= margin;
    lat_hi += margin;
    constexpr int kGrid = 100;
    for (int gi = 0; gi < kGrid; ++gi) {
      for (int gj = 0; gj < kGrid; ++gj) {
        const double lon = lon_lo + (lon_hi - lon_lo) * gi / (kGrid - 1);
        const double lat = lat_lo + (lat_hi - lat_lo) * gj / (kGrid - 1);
        std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g\n", id.c_str(), lon, lat,
                      gmm_density({lon, lat}, gmm));
        density << buf;
      }
    }
  }
}

int run_predict(const PredictArgs& a) {
  const auto bundle = load_checkpoint(resolve_input_path(a.checkpoint));
  const FeatureSet vf = parse_feature_set(a.vf);
  if (vf != FeatureSet::text_only && vf != FeatureSet::non_geo) {
    throw ConfigError("prediction feature must be TEXT-ONLY or NON-GEO");
  }

  EmbeddingStore store;
  const EmbeddingStore* store_ptr = nullptr;
  if (!a.embeddings.empty()) {
    store = load_embeddings(resolve_input_path(a.embeddings));
    store_ptr = &store;
  } else if (bundle.encoder.kind == EncoderSpec::Kind::imported) {
    throw ConfigError("checkpoint uses imported embeddings; pass --embeddings");
  }

  std::ostream* out = &std::cout;
  std::ofstream file_out;
  if (!a.out.empty()) {
    file_out.open(a.out);
    if (!file_out) throw IoError("cannot write predictions: " + a.out);
    out = &file_out;
  }

  const json effective = {{"checkpoint", a.checkpoint},
                          {"vf", a.vf},
                          {"model", config_to_json(bundle.config)}};
  *out << json{{"type", "run_header"}, {"config", effective}}.dump() << "\n";

  struct Input {
    std::string id;
    std::string user_id;
    std::string text;          // composed key text (empty if via store)
    bool use_store = false;
    long line = 0;
  };
  std::vector<Input> inputs;
  long line_no = 0;
  long errors = 0;
  auto emit_error = [&](long line, const std::string& msg) {
    *out << json{{"type", "error"}, {"line", line}, {"message", msg}}.dump() << "\n";
    ++errors;
  };

  if (!a.input.empty()) {
    std::ifstream in(resolve_input_path(a.input));
    if (!in) throw IoError("cannot open input: " + a.input);
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      std::string stripped = line;
      while (!stripped.empty() && std::isspace(static_cast<unsigned char>(stripped.back()))) {
        stripped.pop_back();
      }
      if (stripped.empty()) {
        emit_error(line_no, "empty input line");
        continue;
      }
      if (stripped.front() == '{') {
        const auto j = json::parse(stripped, nullptr, false);
        TweetRecord r;
        if (j.is_discarded() ||
            parse_tweet_json(j, false, r) != TweetParseStatus::ok) {
          emit_error(line_no, "unparseable tweet object");
          continue;
        }
        if (r.tweet_id.empty()) r.tweet_id = "line-" + std::to_string(line_no);
        inputs.push_back({r.tweet_id, r.user_id,
                          clean_text(compose_feature(r, vf)), store_ptr != nullptr,
                          line_no});
      } else {
        inputs.push_back({"line-" + std::to_string(line_no), "",
                          clean_text(stripped), false, line_no});
      }
    }
  }
  for (std::size_t t = 0; t < a.texts.size(); ++t) {
    inputs.push_back({"text-" + std::to_string(t + 1), "", clean_text(a.texts[t]),
                      false, 0});
  }
  if (inputs.empty() && errors == 0) throw DataError("predict: no inputs given");

  long clamp_events = 0;
  long predictions = 0;
  std::vector<std::pair<std::string, ParsedOutput>> plotted;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& input = inputs[i];
    try {
      ParsedOutput parsed;
      if (input.use_store) {
        auto it = store.find(input.id);
        if (it == store.end()) throw DataError("no embedding for id " + input.id);
        parsed = predict_embedding(bundle, it->second);
      } else {
        if (input.text.empty()) throw DataError("empty key feature text");
        long words = 0;
        bool in_word = false;
        for (char c : input.text) {
          const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
          if (!space && !in_word) ++words;
          in_word = !space;
        }
        if (words > bundle.encoder.max_tokens) {
          std::cerr << "predict: input " << input.id << " exceeds the "
                    << bundle.encoder.max_tokens << "-token cap, truncating\n";
        }
        parsed = predict_embedding(bundle, encode(bundle.encoder, input.text));
      }
      *out << prediction_to_json(input.id, input.user_id, parsed, &clamp_events).dump()
           << "\n";
      ++predictions;
      if (!a.plot_prefix.empty()) plotted.emplace_back(input.id, parsed);
    } catch (const std::exception& e) {
      emit_error(input.line, e.what());
    }
  }

  if (!a.plot_prefix.empty() && !plotted.empty()) write_plot_files(a.plot_prefix, plotted);

  *out << json{{"type", "run_summary"},
               {"predictions", predictions},
               {"errors", errors},
               {"clamped_points", clamp_events}}.dump()
       << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// user-locate

struct UserLocateArgs {
  std::string checkpoint;
  std::string input;
  std::string from_predictions;
  std::string config_file;
  std::string vf = "non_geo";
  std::string out;
  std::string grid_dump;
  int top_k = 5;
};

json estimate_to_json(const std::string& user_id, std::size_t n_tweets,
                      const UserEstimate& est) {
  json points = json::array();
  for (std::size_t i = 0; i < est.points.size(); ++i) {
    json p = {{"lon", est.points[i].lon},
              {"lat", est.points[i].lat},
              {"score", est.scores[i]}};
    if (!est.weights.empty()) p["weight"] = est.weights[i];
    points.push_back(std::move(p));
  }
  return {{"type", "user_estimate"},
          {"user_id", user_id},
          {"n_tweets", n_tweets},
          {"points", std::move(points)}};
}

void dump_user_grid(const std::string& prefix, const std::string& user_id,
                    std::span<const GmmPrediction> preds) {
  SummaryGrid grid = build_grid(preds);
  summary_scores(grid, preds);
  const std::string path = prefix + "." + sanitize_for_filename(user_id) + ".grid.csv";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write grid dump: " + path);
  out << "lon,lat,score\n";
  char buf[96];
  for (std::size_t i = 0; i < grid.n_lon(); ++i) {
    for (std::size_t j = 0; j < grid.n_lat(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", grid.lon_values[i],
                    grid.lat_values[j], grid.at(i, j));
      out << buf;
    }
  }
}

int run_user_locate(const UserLocateArgs& a) {
  if (a.input.empty() == a.from_predictions.empty()) {
    throw ConfigError("user-locate needs exactly one of --input or --from-predictions");
  }

  // user_id -> GMM predictions, grouped in first-appearance order
  std::vector<std::string> order;
  std::map<std::string, std::vector<GmmPrediction>> by_user;
  auto add = [&](const std::string& user, GmmPrediction pred) {
    if (!by_user.contains(user)) order.push_back(user);
    by_user[user].push_back(std::move(pred));
  };

  if (!a.from_predictions.empty()) {
    std::ifstream in(resolve_input_path(a.from_predictions));
    if (!in) throw IoError("cannot open predictions: " + a.from_predictions);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue;
      if (j.value("type", "") != "prediction") continue;  // header/summary lines
      if (!j.contains("peaks")) continue;
      GmmPrediction pred;
      for (const auto& peak : j.at("peaks")) {
        if (!peak.contains("sigma")) {
          throw DataError("prediction at line " + std::to_string(line_no) +
                          " has no sigma; user-locate needs probabilistic output");
        }
        pred.peaks.push_back({{peak.at("lon").get<double>(), peak.at("lat").get<double>()},
                              peak.at("sigma").get<double>(),
                              peak.value("weight", 1.0)});
      }
      if (pred.peaks.empty()) continue;
      add(j.value("user_id", ""), std::move(pred));
    }
  } else {
    const auto bundle = load_checkpoint(resolve_input_path(a.checkpoint));
    if (!is_probabilistic(bundle.config.kind)) {
      throw ConfigError("user-locate requires a probabilistic (PSOP/PMOP) checkpoint");
    }
    const FeatureSet vf = parse_feature_set(a.vf);
    const auto records = load_tweets_jsonl(resolve_input_path(a.input), false);
    for (const auto& r : records) {
      const std::string text = clean_text(compose_feature(r, vf));
      if (text.empty()) {
        std::cerr << "user-locate: skipping tweet " << r.tweet_id
                  << " (no usable text)\n";
        continue;
      }
      const auto parsed = predict_embedding(bundle, encode(bundle.encoder, text));
      add(r.user_id, to_gmm_prediction(parsed));
    }
  }

  std::ostream* out = &std::cout;
  std::ofstream file_out;
  if (!a.out.empty()) {
    file_out.open(a.out);
    if (!file_out) throw IoError("cannot write estimates: " + a.out);
    out = &file_out;
  }
  const json effective = {{"checkpoint", a.checkpoint},
                          {"from_predictions", a.from_predictions},
                          {"vf", a.vf},
                          {"top_k", a.top_k}};
  *out << json{{"type", "run_header"}, {"config", effective}}.dump() << "\n";
  for (const auto& user : order) {
    const auto& preds = by_user[user];
    if (preds.empty()) {
      std::cerr << "user-locate: user " << user << " has no usable tweets, skipped\n";
      continue;
    }
    const auto est = estimate_user(preds, a.top_k);
    if (!a.grid_dump.empty()) dump_user_grid(a.grid_dump, user, preds);
    *out << estimate_to_json(user, preds.size(), est).dump() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geolocation prediction heads over text embeddings"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* cmd_ingest = app.add_subcommand("ingest", "clean and prepare tweet JSONL");
  cmd_ingest->add_option("--input", ingest.input, "tweet JSONL input")->required();
  cmd_ingest->add_option("--output", ingest.output, "normalized JSONL output");
  cmd_ingest->add_option("--config", ingest.config_file, "JSON config file");
  cmd_ingest->add_option("--emit-embeddings", ingest.emit_embeddings,
                         "write an embedding file for --feature");
  cmd_ingest->add_option("--feature", ingest.feature, "feature set to embed");
  cmd_ingest->add_option("--embedding-dim", ingest.embedding_dim, "stub dimension");
  cmd_ingest->add_option("--max-tokens", ingest.max_tokens, "token cap");
  cmd_ingest->add_option("--seed", ingest.seed, "stub seed");
  cmd_ingest->add_flag("--filter-bots", ingest.filter_bots_flag,
                       "drop users posting more than the per-day threshold");
  cmd_ingest->add_option("--bot-threshold", ingest.bot_threshold, "messages per day");
  cmd_ingest->add_flag("--allow-unlabeled", ingest.allow_unlabeled,
                       "keep records without coordinates");

  TrainArgs train_args;
  auto* cmd_train = app.add_subcommand("train", "train a wrapper-layer model");
  cmd_train->add_option("--input", train_args.input, "labeled tweet JSONL")->required();
  cmd_train->add_option("--out", train_args.out, "checkpoint output path")->required();
  cmd_train->add_option("--loss-log", train_args.loss_log, "per-step loss CSV path");
  cmd_train->add_option("--config", train_args.config_file, "JSON config file");
  cmd_train->add_option("--kind", train_args.kind, "gsop|gmop|psop|pmop");
  cmd_train->add_option("--outcomes", train_args.outcomes, "prediction outcomes M");
  cmd_train->add_option("--kf", train_args.kf, "key feature set");
  cmd_train->add_option("--mf", train_args.mf, "minor feature sets")->delimiter(',');
  cmd_train->add_option("--embedding-dim", train_args.embedding_dim, "embedding size");
  cmd_train->add_option("--seed", train_args.seed, "training seed");
  cmd_train->add_option("--epochs", train_args.epochs, "training epochs");
  cmd_train->add_option("--batch-size", train_args.batch_size, "minibatch size");
  cmd_train->add_option("--lr-max", train_args.lr_max, "cosine schedule start");
  cmd_train->add_option("--lr-min", train_args.lr_min, "cosine schedule end");
  cmd_train->add_option("--covariance", train_args.covariance, "lower_bounded|unlimited");
  cmd_train->add_option("--loss-combination", train_args.loss_combination,
                        "average|sum|prob_only");
  cmd_train->add_option("--dev-fraction", train_args.dev_fraction,
                        "development split fraction");
  cmd_train->add_option("--max-tokens", train_args.max_tokens, "token cap");
  cmd_train->add_option("--kf-embeddings", train_args.kf_embeddings,
                        "imported key-feature embedding file");
  cmd_train->add_option("--mf-embeddings", train_args.mf_embeddings,
                        "imported minor-feature embedding files");
  cmd_train->add_flag("--filter-bots", train_args.filter_bots_flag, "bot-filter the input");
  cmd_train->add_option("--bot-threshold", train_args.bot_threshold, "messages per day");

  EvaluateArgs eval_args;
  auto* cmd_eval = app.add_subcommand("evaluate", "evaluate a checkpoint");
  cmd_eval->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
  cmd_eval->add_option("--input", eval_args.input, "labeled tweet JSONL")->required();
  cmd_eval->add_option("--config", eval_args.config_file, "JSON config file");
  cmd_eval->add_option("--vf", eval_args.vf, "evaluation feature (text_only|non_geo)");
  cmd_eval->add_option("--alpha", eval_args.alpha, "prediction region level");
  cmd_eval->add_option("--cae-samples", eval_args.cae_samples, "Monte Carlo draws per peak");
  cmd_eval->add_option("--seed", eval_args.seed, "Monte Carlo seed");
  cmd_eval->add_option("--group-by", eval_args.group_by, "country|place_type|user");
  cmd_eval->add_option("--json", eval_args.json_out, "machine-readable report path");
  cmd_eval->add_option("--embeddings", eval_args.embeddings, "imported embedding file");
  cmd_eval->add_flag("--strict-paper-cov", eval_args.strict_paper_cov,
                     "coverage membership via D/sigma instead of D^2/sigma");
  cmd_eval->add_flag("--no-cae", eval_args.no_cae, "skip the Monte Carlo CAE metric");
  cmd_eval->add_flag("--filter-bots", eval_args.filter_bots_flag, "bot-filter the input");
  cmd_eval->add_option("--bot-threshold", eval_args.bot_threshold, "messages per day");

  PredictArgs predict_args;
  auto* cmd_predict = app.add_subcommand("predict", "predict locations for new text");
  cmd_predict->add_option("--checkpoint", predict_args.checkpoint, "model checkpoint")
      ->required();
  cmd_predict->add_option("--input", predict_args.input,
                          "input file: tweet JSONL or plain text lines");
  cmd_predict->add_option("--text", predict_args.texts, "inline input text (repeatable)");
  cmd_predict->add_option("--config", predict_args.config_file, "JSON config file");
  cmd_predict->add_option("--vf", predict_args.vf, "feature composed from JSONL inputs");
  cmd_predict->add_option("--out", predict_args.out, "prediction JSONL output");
  cmd_predict->add_option("--plot", predict_args.plot_prefix,
                          "emit peak scatter and density CSV files");
  cmd_predict->add_option("--embeddings", predict_args.embeddings,
                          "imported embedding file");

  UserLocateArgs locate_args;
  auto* cmd_locate = app.add_subcommand("user-locate",
                                        "estimate per-user home locations");
  cmd_locate->add_option("--checkpoint", locate_args.checkpoint, "model checkpoint");
  cmd_locate->add_option("--input", locate_args.input, "tweet JSONL grouped by user");
  cmd_locate->add_option("--from-predictions", locate_args.from_predictions,
                         "prediction JSONL from the predict subcommand");
  cmd_locate->add_option("--config", locate_args.config_file, "JSON config file");
  cmd_locate->add_option("--vf", locate_args.vf, "feature composed from JSONL inputs");
  cmd_locate->add_option("--out", locate_args.out, "estimate JSONL output");
  cmd_locate->add_option("--top-k", locate_args.top_k, "location points per user");
  cmd_locate->add_option("--grid-dump", locate_args.grid_dump,
                         "write per-user summary grids under this prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (cmd_ingest->parsed()) {
      const ConfigOverlay o{cmd_ingest, load_config_file(ingest.config_file)};
      o.apply("--feature", "feature", ingest.feature);
      o.apply("--embedding-dim", "embedding_dim", ingest.embedding_dim);
      o.apply("--max-tokens", "max_tokens", ingest.max_tokens);
      o.apply("--seed", "seed", ingest.seed);
      o.apply("--bot-threshold", "bot_threshold", ingest.bot_threshold);
      return run_ingest(ingest);
    }
    if (cmd_train->parsed()) {
      const ConfigOverlay o{cmd_train, load_config_file(train_args.config_file)};
      o.apply("--kind", "kind", train_args.kind);
      o.apply("--outcomes", "outcomes", train_args.outcomes);
      o.apply("--kf", "kf", train_args.kf);
      o.apply("--mf", "mf", train_args.mf);
      o.apply("--embedding-dim", "embedding_dim", train_args.embedding_dim);
      o.apply("--seed", "seed", train_args.seed);
      o.apply("--epochs", "epochs", train_args.epochs);
      o.apply("--batch-size", "batch_size", train_args.batch_size);
      o.apply("--lr-max", "lr_max", train_args.lr_max);
      o.apply("--lr-min", "lr_min", train_args.lr_min);
      o.apply("--covariance", "covariance", train_args.covariance);
      o.apply("--loss-combination", "loss_combination", train_args.loss_combination);
      o.apply("--dev-fraction", "dev_fraction", train_args.dev_fraction);
      o.apply("--max-tokens", "max_tokens", train_args.max_tokens);
      return run_train(train_args);
    }
    if (cmd_eval->parsed()) {
      const ConfigOverlay o{cmd_eval, load_config_file(eval_args.config_file)};
      o.apply("--vf", "vf", eval_args.vf);
      o.apply("--alpha", "alpha", eval_args.alpha);
      o.apply("--cae-samples", "cae_samples", eval_args.cae_samples);
      o.apply("--seed", "seed", eval_args.seed);
      o.apply("--group-by", "group_by", eval_args.group_by);
      return run_evaluate(eval_args);
    }
    if (cmd_predict->parsed()) {
      const ConfigOverlay o{cmd_predict, load_config_file(predict_args.config_file)};
      o.apply("--vf", "vf", predict_args.vf);
      return run_predict(predict_args);
    }
    if (cmd_locate->parsed()) {
      const ConfigOverlay o{cmd_locate, load_config_file(locate_args.config_file)};
      o.apply("--vf", "vf", locate_args.vf);
      o.apply("--top-k", "top_k", locate_args.top_k);
      return run_user_locate(locate_args);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
