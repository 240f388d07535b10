#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include <json.hpp>

#include "artist/io/hash.hpp"

namespace artist::eval {

/// Judge score cache. With a path it is an append-only log of JSON lines
/// {"key", "score", "sum"} where "sum" is a checksum of key and score; any line
/// that fails to parse or verify makes the whole log unreadable.
class ScoreCache {
 public:
  ScoreCache() = default;

  explicit ScoreCache(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ifstream in(path_);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto fail = [&](const std::string& why) {
        return Error(ErrorCode::cache_corrupted, path_.string() + ":" + std::to_string(lineno) + ": " + why);
      };
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        throw fail("not valid JSON");
      }
      if (!j.is_object() || !j.contains("key") || !j.contains("score") || !j.contains("sum") ||
          !j["key"].is_string() || !j["score"].is_number_integer() || !j["sum"].is_string())
        throw fail("missing fields");
      const std::string key = j["key"];
      const int score = j["score"];
      if (j["sum"] != entry_sum(key, score)) throw fail("checksum mismatch");
      if (score < 1 || score > 5) throw fail("score outside [1, 5]");
      entries_[key] = score;
    }
  }

  static std::string make_key(const std::string& content_sha, const std::string& stylized_sha, const std::string& kind,
                              const std::string& style_prompt, const std::string& model_id) {
    return io::sha256_hex(nlohmann::json::array({content_sha, stylized_sha, kind, style_prompt, model_id}).dump());
  }

  std::optional<int> get(const std::string& key) const {
    std::shared_lock lock(mu_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& key, int score) {
    std::unique_lock lock(mu_);
    if (const auto it = entries_.find(key); it != entries_.end() && it->second == score) return;
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::app);
      ARTIST_CHECK(out.good(), ErrorCode::io, "cannot append to cache '" + path_.string() + "'");
      out << nlohmann::json{{"key", key}, {"score", score}, {"sum", entry_sum(key, score)}}.dump() << '\n';
      out.flush();
      ARTIST_CHECK(out.good(), ErrorCode::io, "cache append failed for '" + path_.string() + "'");
    }
    entries_[key] = score;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  static std::string entry_sum(const std::string& key, int score) {
    return io::sha256_hex(key + "\t" + std::to_string(score)).substr(0, 16);
  }

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::map<std::string, int> entries_;
};

}  // namespace artist::eval
