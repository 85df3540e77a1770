#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "geohead/errors.hpp"
#include "geohead/head.hpp"

namespace geohead {

// Checkpoint container, schema version 1:
//
//   bytes 0..7   magic "GHCKPT\0\1"
//   bytes 8..11  schema version, uint32 little-endian
//   bytes 12..19 header length N, uint64 little-endian
//   bytes 20..   UTF-8 JSON header of N bytes
//   then, for each head listed in the header, in order:
//     in_dim * out_dim float64 little-endian (weight, row-major by input)
//     out_dim float64 little-endian (bias)
//
// The JSON header carries config, encoder spec, head shapes, and free-form
// provenance, which makes the file self-describing.

inline constexpr std::uint32_t kCheckpointSchemaVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'G', 'H', 'C', 'K', 'P', 'T', '\0', '\1'};

inline const char* to_string(CovarianceActivation a) {
  return a == CovarianceActivation::lower_bounded ? "lower_bounded" : "unlimited";
}

inline CovarianceActivation parse_covariance_activation(const std::string& s) {
  if (s == "lower_bounded" || s == "lb") return CovarianceActivation::lower_bounded;
  if (s == "unlimited" || s == "u") return CovarianceActivation::unlimited;
  throw ConfigError("unknown covariance activation: " + s);
}

inline const char* to_string(LossCombination c) {
  switch (c) {
    case LossCombination::average: return "average";
    case LossCombination::sum: return "sum";
    case LossCombination::prob_only: return "prob_only";
  }
  return "?";
}

inline LossCombination parse_loss_combination(const std::string& s) {
  if (s == "average") return LossCombination::average;
  if (s == "sum") return LossCombination::sum;
  if (s == "prob_only") return LossCombination::prob_only;
  throw ConfigError("unknown loss combination: " + s);
}

inline nlohmann::json config_to_json(const HeadConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"outcomes", c.outcomes},
          {"embedding_dim", c.embedding_dim},
          {"minor_features", c.minor_features},
          {"covariance_activation", to_string(c.covariance_activation)},
          {"loss_combination", to_string(c.loss_combination)}};
}

inline HeadConfig config_from_json(const nlohmann::json& j) {
  HeadConfig c;
  c.kind = parse_head_kind(j.at("kind").get<std::string>());
  c.outcomes = j.at("outcomes").get<int>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.minor_features = j.value("minor_features", 0);
  c.covariance_activation =
      parse_covariance_activation(j.value("covariance_activation", "lower_bounded"));
  c.loss_combination = parse_loss_combination(j.value("loss_combination", "average"));
  return c;
}

inline nlohmann::json encoder_to_json(const EncoderSpec& e) {
  return {{"kind", e.kind == EncoderSpec::Kind::hashed_stub ? "hashed_stub" : "imported"},
          {"dim", e.dim},
          {"seed", e.seed},
          {"max_tokens", e.max_tokens},
          {"provenance", e.provenance}};
}

inline EncoderSpec encoder_from_json(const nlohmann::json& j) {
  EncoderSpec e;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "hashed_stub") {
    e.kind = EncoderSpec::Kind::hashed_stub;
  } else if (kind == "imported") {
    e.kind = EncoderSpec::Kind::imported;
  } else {
    throw DataError("unknown encoder kind in checkpoint: " + kind);
  }
  e.dim = j.at("dim").get<int>();
  e.seed = j.value("seed", std::uint64_t{0});
  e.max_tokens = j.value("max_tokens", 512);
  e.provenance = j.value("provenance", std::string{});
  return e;
}

namespace detail {

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

inline void write_f64_le(std::ostream& out, double d) {
  write_u64_le(out, std::bit_cast<std::uint64_t>(d));
}

inline std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double read_f64_le(std::istream& in) {
  return std::bit_cast<double>(read_u64_le(in));
}

inline void write_head_matrices(std::ostream& out, const LinearHead& h) {
  for (double w : h.weight) write_f64_le(out, w);
  for (double b : h.bias) write_f64_le(out, b);
}

inline LinearHead read_head_matrices(std::istream& in, int in_dim, int out_dim) {
  LinearHead h = LinearHead::zeros(in_dim, out_dim);
  for (double& w : h.weight) w = read_f64_le(in);
  for (double& b : h.bias) b = read_f64_le(in);
  return h;
}

}  // namespace detail

inline void save_checkpoint(const ModelBundle& bundle, const std::string& path,
                            const nlohmann::json& provenance = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);

  nlohmann::json heads = nlohmann::json::array();
  heads.push_back({{"role", "key"},
                   {"in_dim", bundle.key_head.in_dim},
                   {"out_dim", bundle.key_head.out_dim}});
  for (std::size_t k = 0; k < bundle.minor_heads.size(); ++k) {
    heads.push_back({{"role", "minor"},
                     {"index", k},
                     {"in_dim", bundle.minor_heads[k].in_dim},
                     {"out_dim", bundle.minor_heads[k].out_dim}});
  }
  nlohmann::json header = {{"schema_version", kCheckpointSchemaVersion},
                           {"config", config_to_json(bundle.config)},
                           {"encoder", encoder_to_json(bundle.encoder)},
                           {"heads", heads},
                           {"provenance", provenance}};
  const std::string header_str = header.dump();

  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_u32_le(out, kCheckpointSchemaVersion);
  detail::write_u64_le(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  detail::write_head_matrices(out, bundle.key_head);
  for (const auto& h : bundle.minor_heads) detail::write_head_matrices(out, h);
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline ModelBundle load_checkpoint(const std::string& path,
                                   nlohmann::json* provenance_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);

  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  const std::uint32_t version = detail::read_u32_le(in);
  if (version != kCheckpointSchemaVersion) {
    throw DataError("unsupported checkpoint schema version " +
                    std::to_string(version) + " in " + path);
  }
  const std::uint64_t header_len = detail::read_u64_le(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("checkpoint truncated: " + path);
  const auto header = nlohmann::json::parse(header_str, nullptr, false);
  if (header.is_discarded()) throw DataError("corrupt checkpoint header: " + path);

  ModelBundle bundle;
  bundle.config = config_from_json(header.at("config"));
  bundle.config.validate();
  bundle.encoder = encoder_from_json(header.at("encoder"));

  const auto& heads = header.at("heads");
  if (!heads.is_array() || heads.empty()) {
    throw DataError("checkpoint lists no heads: " + path);
  }
  const auto& key = heads.at(0);
  if (key.at("role").get<std::string>() != "key") {
    throw DataError("first checkpoint head must be the key head: " + path);
  }
  const int expected_key_out = output_size(bundle.config.kind, bundle.config.outcomes);
  if (key.at("in_dim").get<int>() != bundle.config.embedding_dim ||
      key.at("out_dim").get<int>() != expected_key_out) {
    throw DataError("checkpoint key head shape disagrees with config: " + path);
  }
  bundle.key_head = detail::read_head_matrices(in, bundle.config.embedding_dim,
                                               expected_key_out);
  const int expected_minor_out = minor_output_size(bundle.config.kind);
  for (std::size_t k = 1; k < heads.size(); ++k) {
    const auto& mh = heads.at(k);
    if (mh.at("role").get<std::string>() != "minor" ||
        mh.at("in_dim").get<int>() != bundle.config.embedding_dim ||
        mh.at("out_dim").get<int>() != expected_minor_out) {
      throw DataError("checkpoint minor head shape disagrees with config: " + path);
    }
    bundle.minor_heads.push_back(detail::read_head_matrices(
        in, bundle.config.embedding_dim, expected_minor_out));
  }
  if (static_cast<int>(bundle.minor_heads.size()) != bundle.config.minor_features) {
    throw DataError("checkpoint minor head count disagrees with config: " + path);
  }
  if (provenance_out != nullptr) {
    *provenance_out = header.value("provenance", nlohmann::json::object());
  }
  return bundle;
}

}  // namespace geohead
