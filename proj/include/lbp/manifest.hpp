#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "lbp/errors.hpp"
#include "lbp/pipeline.hpp"

namespace lbp {

inline constexpr const char* kToolVersion = "lbp 0.1.0";

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256 failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

/// Everything needed to repeat a run: the resolved configuration (paths made
/// absolute), digests of every input it reads, its seeds, and the artifacts
/// it produced, named relative to the output directory.
struct RunManifest {
  std::string tool_version = kToolVersion;
  nlohmann::json config;
  std::string config_hash;
  std::map<std::string, std::string> inputs;     ///< absolute path -> sha256
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> artifacts;  ///< file name -> sha256
};

/// Copy of `c` with every path absolute, so the configuration no longer
/// depends on where it was loaded from.
inline PipelineConfig absolutized(const PipelineConfig& c) {
  PipelineConfig out = c;
  auto abs = [&](std::string& p) {
    if (!p.empty()) p = std::filesystem::absolute(c.resolve(p)).lexically_normal().string();
  };
  for (auto* p : {&out.corpus, &out.language, &out.world_file, &out.rules, &out.pairs,
                  &out.generator.training_corpus}) {
    abs(*p);
  }
  out.base_dir = "/";
  return out;
}

inline RunManifest make_manifest(const PipelineConfig& cfg) {
  const PipelineConfig abs = absolutized(cfg);
  RunManifest m;
  m.config = to_json(abs);
  m.config.erase("jobs");  // thread count never changes results
  m.config_hash = sha256_hex(m.config.dump());
  for (const auto& path : abs.input_files()) m.inputs[path] = sha256_file(path);
  m.seeds["seed"] = abs.seed;
  m.seeds["perception_seed"] = abs.perception_seed;
  if (abs.world) m.seeds["world_seed"] = abs.world->seed;
  return m;
}

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"tool_version", m.tool_version}, {"config", m.config},
          {"config_hash", m.config_hash},   {"inputs", m.inputs},
          {"seeds", m.seeds},               {"artifacts", m.artifacts}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config = j.at("config");
    m.config_hash = j.at("config_hash").get<std::string>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.artifacts = j.value("artifacts", std::map<std::string, std::string>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest '" + path + "' is not valid JSON: " + e.what());
  }
  return manifest_from_json(j);
}

/// The configuration a manifest records, after checking that it hashes to the
/// recorded value and that every input file still has its recorded digest.
inline PipelineConfig config_from_manifest(const RunManifest& m) {
  if (sha256_hex(m.config.dump()) != m.config_hash) {
    throw ConfigError("manifest config does not match its config_hash");
  }
  PipelineConfig c = config_from_json(m.config, "/");
  for (const auto& [path, digest] : m.inputs) {
    if (!std::filesystem::exists(path)) throw Error("manifest input '" + path + "' is missing");
    if (sha256_file(path) != digest) {
      throw Error("manifest input '" + path + "' changed since the recorded run");
    }
  }
  return c;
}

}  // namespace lbp
