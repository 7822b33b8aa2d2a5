#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "kgt/core.hpp"

namespace kgt {

// Key-value text config ("key = value" lines, '#' comments). Unknown keys
// are rejected against the registry of valid keys.
class Config {
 public:
  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config: " + path.string());
    Config cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto strip = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      if (strip(line).empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ParseError(path.filename().string() + ":" + std::to_string(lineno) +
                         ": expected key = value");
      cfg.values_[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw UsageError("config key '" + key + "' is not a number: " + it->second);
    }
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw UsageError("config key '" + key + "' is not an integer: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "1" || it->second == "true" || it->second == "yes") return true;
    if (it->second == "0" || it->second == "false" || it->second == "no") return false;
    throw UsageError("config key '" + key + "' is not a boolean: " + it->second);
  }

  void validate_keys(const std::set<std::string>& valid) const {
    for (const auto& [key, value] : values_) {
      if (valid.count(key)) continue;
      std::string known;
      for (const auto& k : valid) known += k + " ";
      throw UsageError("unknown config key '" + key + "'; valid keys: " + known);
    }
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      // backbone / model
      "d", "layers", "heads", "ffn_mult", "max_seq_len", "d_t", "d_s", "lora_rank", "text_dropout",
      "struct_dropout", "attn_lora", "attn_lora_rank", "attn_lora_alpha", "gamma_mode", "gamma",
      "prompt_mode",
      // training
      "epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps", "weight_decay",
      "grad_clip_norm", "seed", "valid_every",
      // structural pre-training
      "kge_kind", "kge_dim", "kge_epochs", "kge_batch_size", "kge_learning_rate", "kge_negatives",
      "kge_margin", "kge_seed",
      // text embedding
      "embed_dim", "embed_batch_size", "embed_retries", "embed_backoff_ms", "embed_concurrency",
      "embed_endpoint", "embed_model",
      // evaluation
      "filter_policy"};
  return keys;
}

}  // namespace kgt
