#pragma once

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <regex>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "artist/eval/clients.hpp"

namespace artist::eval {

inline std::string base64(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), int(bytes.size()));
  out.resize(std::size_t(n));
  return out;
}

/// Classic token bucket: `rate` tokens per second, at most `burst` stored.
class TokenBucket {
 public:
  TokenBucket(double rate, double burst) : rate_(rate), burst_(burst), tokens_(burst), last_(Clock::now()) {
    ARTIST_CHECK(rate_ > 0.0 && burst_ >= 1.0, ErrorCode::invalid_argument, "token bucket needs rate > 0 and burst >= 1");
  }

  void acquire() {
    std::unique_lock lock(mu_);
    for (;;) {
      const auto now = Clock::now();
      tokens_ = std::min(burst_, tokens_ + rate_ * std::chrono::duration<double>(now - last_).count());
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
  }

 private:
  using Clock = std::chrono::steady_clock;
  double rate_, burst_, tokens_;
  Clock::time_point last_;
  std::mutex mu_;
};

struct HttpJudgeConfig {
  /// Full URL of an OpenAI-style chat completions endpoint.
  std::string endpoint;
  std::string model;
  /// Read from ARTIST_VLM_API_KEY when empty.
  std::string api_key;
  double timeout_seconds = 60.0;
  int max_concurrency = 4;
  double requests_per_second = 2.0;
  double burst = 4.0;
  /// Retries for HTTP 429 and 5xx responses, with exponential backoff.
  int transport_retries = 3;
  double backoff_seconds = 1.0;
};

/// Live judge speaking the chat-completions JSON protocol. Images travel as PNG data URLs.
class HttpVlmJudge final : public VlmJudgeClient {
 public:
  explicit HttpVlmJudge(HttpJudgeConfig config)
      : config_(std::move(config)),
        slots_(std::max(1, config_.max_concurrency)),
        bucket_(config_.requests_per_second, config_.burst) {
    ARTIST_CHECK(!config_.endpoint.empty(), ErrorCode::invalid_argument, "judge endpoint not configured");
    ARTIST_CHECK(!config_.model.empty(), ErrorCode::invalid_argument, "judge model not configured");
    ARTIST_CHECK(config_.max_concurrency >= 1 && config_.max_concurrency <= kMaxSlots, ErrorCode::invalid_argument,
                 "max_concurrency must be in [1, " + std::to_string(kMaxSlots) + "]");
    if (config_.api_key.empty())
      if (const char* key = std::getenv("ARTIST_VLM_API_KEY")) config_.api_key = key;
    std::smatch m;
    ARTIST_CHECK(std::regex_match(config_.endpoint, m, std::regex(R"(^(https?://[^/]+)(/.*)?$)")),
                 ErrorCode::invalid_argument, "malformed judge endpoint '" + config_.endpoint + "'");
    origin_ = m[1];
    path_ = m[2].matched ? m[2].str() : "/";
  }

  std::string model_id() const override { return config_.model; }

  nlohmann::json provenance() const override {
    return {{"kind", "live"}, {"model", config_.model}, {"endpoint", config_.endpoint}};
  }

  nlohmann::json request_body(const std::vector<Image>& images, const std::string& prompt) const {
    nlohmann::json content = nlohmann::json::array({{{"type", "text"}, {"text", prompt}}});
    for (const Image& im : images)
      content.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:image/png;base64," + base64(io::encode_png(im))}}}});
    return {{"model", config_.model},
            {"temperature", 0},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
  }

  std::string query(const std::vector<Image>& images, const std::string& prompt) const override {
    const std::string body = request_body(images, prompt).dump();
    slots_.acquire();
    struct Release {
      std::counting_semaphore<kMaxSlots>& s;
      ~Release() { s.release(); }
    } release{slots_};

    httplib::Client client(origin_);
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    double backoff = config_.backoff_seconds;
    for (int attempt = 0;; ++attempt) {
      bucket_.acquire();
      auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout)
          throw Error(ErrorCode::timeout, "judge request timed out (" + httplib::to_string(err) + ")");
        throw Error(ErrorCode::client, "judge request failed: " + httplib::to_string(err));
      }
      const bool retryable = res->status == 429 || res->status >= 500;
      if (retryable && attempt < config_.transport_retries) {
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff *= 2.0;
        continue;
      }
      if (res->status == 429) throw Error(ErrorCode::rate_limited, "judge endpoint kept returning 429");
      ARTIST_CHECK(res->status == 200, ErrorCode::client,
                   "judge endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
      try {
        const auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::client, std::string("malformed judge response: ") + e.what());
      }
    }
  }

 private:
  static constexpr std::ptrdiff_t kMaxSlots = 256;
  HttpJudgeConfig config_;
  std::string origin_, path_;
  mutable std::counting_semaphore<kMaxSlots> slots_;
  mutable TokenBucket bucket_;
};

}  // namespace artist::eval
