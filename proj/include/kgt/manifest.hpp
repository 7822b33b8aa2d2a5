#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgt/hash.hpp"

namespace kgt {

inline std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "missing";
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  return hex64(h);
}

inline std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string git_describe() {
  FILE* pipe = ::popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[128] = {};
  std::string out;
  while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
  ::pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

// Provenance record for one CLI run: inputs, seed, and a content hash for
// every artifact the command produced.
class RunManifest {
 public:
  RunManifest(std::string command, std::filesystem::path out_dir)
      : out_dir_(std::move(out_dir)) {
    data_["command"] = std::move(command);
    data_["git"] = git_describe();
    data_["started"] = iso8601_now();
  }

  void set(const std::string& key, const std::string& value) { data_[key] = value; }
  void set_uint(const std::string& key, std::uint64_t value) { data_[key] = value; }

  void add_output(const std::filesystem::path& path) { outputs_.push_back(path); }

  void write() {
    data_["finished"] = iso8601_now();
    nlohmann::json files = nlohmann::json::array();
    for (const auto& p : outputs_) {
      nlohmann::json f;
      f["path"] = std::filesystem::relative(p, out_dir_).string();
      f["bytes"] = std::filesystem::exists(p) ? std::filesystem::file_size(p) : 0;
      f["fnv1a64"] = file_hash(p);
      files.push_back(f);
    }
    data_["outputs"] = files;
    std::ofstream out(out_dir_ / "manifest.json");
    out << data_.dump(2) << "\n";
  }

 private:
  std::filesystem::path out_dir_;
  nlohmann::json data_;
  std::vector<std::filesystem::path> outputs_;
};

}  // namespace kgt
