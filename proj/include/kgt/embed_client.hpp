#pragma once

// HTTP client for the sentence-embedding service, split out so only the CLI
// and its tests pay for the httplib/json includes.

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "kgt/features.hpp"

namespace kgt {

struct EmbeddingEndpoint {
  std::string url;      // e.g. http://host:port/v1/embeddings
  std::string model;    // e.g. text-embedding-3-small
  std::string api_key;  // optional bearer token
  std::size_t dim = 1536;
  std::size_t batch_size = 64;
  std::size_t max_retries = 3;
  std::size_t backoff_ms = 200;
  std::size_t concurrency = 1;
};

namespace detail {

inline std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw UsageError("embedding endpoint URL needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/v1/embeddings"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::filesystem::path cache_file(const std::filesystem::path& dir, const std::string& text) {
  return dir / (hex64(fnv1a64(text)) + ".kgtf");
}

inline std::vector<std::vector<float>> fetch_embedding_batch(const EmbeddingEndpoint& ep,
                                                             const std::vector<std::string>& texts) {
  const auto [host, path] = split_url(ep.url);
  httplib::Client client(host);
  client.set_connection_timeout(10);
  client.set_read_timeout(60);
  httplib::Headers headers;
  if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);

  nlohmann::json req{{"model", ep.model}, {"input", texts}};
  const std::string body = req.dump();

  std::string last_error;
  for (std::size_t attempt = 0; attempt <= ep.max_retries; ++attempt) {
    if (attempt > 0 && ep.backoff_ms > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(ep.backoff_ms << (attempt - 1)));
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    nlohmann::json js;
    try {
      js = nlohmann::json::parse(res->body);
    } catch (const std::exception& e) {
      last_error = std::string("bad JSON response: ") + e.what();
      continue;
    }
    if (!js.contains("data") || !js["data"].is_array() || js["data"].size() != texts.size()) {
      last_error = "response data array missing or wrong length";
      continue;
    }
    std::vector<std::vector<float>> out(texts.size());
    bool ok = true;
    for (const auto& item : js["data"]) {
      if (!item.contains("index") || !item.contains("embedding")) {
        ok = false;
        break;
      }
      const auto idx = item["index"].get<std::size_t>();
      if (idx >= out.size()) {
        ok = false;
        break;
      }
      out[idx] = item["embedding"].get<std::vector<float>>();
    }
    if (!ok) {
      last_error = "malformed embedding item";
      continue;
    }
    return out;
  }
  throw DataError("after " + std::to_string(ep.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace detail

// One row per input text, in order. Vectors are cached on disk keyed by
// content hash; repeated calls are served from cache without touching the
// endpoint. Batches fan out over a bounded worker pool when concurrency > 1.
inline FeatureMatrix encode_text_remote(const std::vector<std::string>& texts, const EmbeddingEndpoint& ep,
                                        const std::filesystem::path& cache_dir) {
  std::filesystem::create_directories(cache_dir);
  FeatureMatrix m(texts.size(), ep.dim);
  std::vector<std::size_t> misses;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto path = detail::cache_file(cache_dir, texts[i]);
    if (!std::filesystem::exists(path)) {
      misses.push_back(i);
      continue;
    }
    const FeatureMatrix row = load_features(path);
    if (row.rows != 1 || row.cols != ep.dim)
      throw DataError("cached embedding dimension " + std::to_string(row.cols) + " != configured " +
                      std::to_string(ep.dim) + " for " + path.filename().string());
    std::copy(row.a.begin(), row.a.end(), m.row(i).begin());
  }
  if (misses.empty()) return m;

  // Deduplicate so repeated texts cost one request and land identical rows.
  std::vector<std::size_t> unique;
  std::unordered_map<std::string, std::size_t> first_of;
  for (std::size_t i : misses)
    if (first_of.emplace(texts[i], i).second) unique.push_back(i);

  struct Batch {
    std::size_t index = 0;
    std::vector<std::size_t> rows;
  };
  std::vector<Batch> batches;
  const std::size_t bs = std::max<std::size_t>(1, ep.batch_size);
  for (std::size_t off = 0; off < unique.size(); off += bs) {
    Batch b;
    b.index = batches.size();
    for (std::size_t k = off; k < std::min(unique.size(), off + bs); ++k) b.rows.push_back(unique[k]);
    batches.push_back(std::move(b));
  }

  std::mutex mu;
  std::string first_error;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t bi = next.fetch_add(1);
      if (bi >= batches.size()) return;
      const Batch& b = batches[bi];
      std::vector<std::string> batch_texts;
      for (std::size_t r : b.rows) batch_texts.push_back(texts[r]);
      try {
        const auto vectors = detail::fetch_embedding_batch(ep, batch_texts);
        for (std::size_t k = 0; k < b.rows.size(); ++k) {
          if (vectors[k].size() != ep.dim)
            throw DataError("service returned dimension " + std::to_string(vectors[k].size()) +
                            " != configured " + std::to_string(ep.dim));
          FeatureMatrix row(1, ep.dim);
          std::copy(vectors[k].begin(), vectors[k].end(), row.a.begin());
          detail::atomic_write(detail::cache_file(cache_dir, batch_texts[k]), encode_kgtf(row));
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        if (first_error.empty())
          first_error = "embedding batch " + std::to_string(b.index) + " (" +
                        std::to_string(b.rows.size()) + " texts) failed: " + e.what();
        return;
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(ep.concurrency, batches.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!first_error.empty()) throw DataError(first_error);

  for (std::size_t i : misses) {
    const FeatureMatrix row = load_features(detail::cache_file(cache_dir, texts[i]));
    std::copy(row.a.begin(), row.a.end(), m.row(i).begin());
  }
  return m;
}

}  // namespace kgt
