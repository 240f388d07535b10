#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "artist/io/hash.hpp"
#include "artist/io/image_io.hpp"

namespace artist::eval {

/// Canonical bytes of an image (its 8-bit PPM encoding); all hashing goes through this.
inline std::string image_bytes(const Image& image) { return io::encode_ppm(image); }
inline std::string image_sha256(const Image& image) { return io::sha256_hex(image_bytes(image)); }

inline std::vector<double> normalized(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  ARTIST_CHECK(n > 0.0, ErrorCode::client, "embedding has zero norm");
  for (double& x : v) x /= n;
  return v;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  ARTIST_CHECK(a.size() == b.size() && !a.empty(), ErrorCode::client, "embedding dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed_image(const Image& image) const = 0;
  virtual std::vector<double> embed_text(const std::string& text) const = 0;
  virtual nlohmann::json provenance() const = 0;
};

class PerceptualClient {
 public:
  virtual ~PerceptualClient() = default;
  virtual double distance(const Image& a, const Image& b) const = 0;
  virtual nlohmann::json provenance() const = 0;
};

/// Prompt templates for the three judge metrics, keyed by metric kind.
inline const std::map<std::string, std::string, std::less<>>& judge_templates() {
  static const std::map<std::string, std::string, std::less<>> templates{
      {"ca_style",
       "The first image is a content photo and the second image is a stylized version of it. The requested art "
       "style is: \"{style_prompt}\". On a scale from 1 to 5, where 5 is best, how well does the second image "
       "depict the content of the first image in the requested art style? Reply with one integer."},
      {"sa_content",
       "The first image is a content photo and the second image is a stylized version of it in the art style "
       "\"{style_prompt}\". On a scale from 1 to 5, where 5 is best, rate how much of the content of the first "
       "image is preserved in the second image. Reply with one integer."},
      {"aesthetic",
       "The first image is a content photo and the second image was produced from it for the art style prompt "
       "\"{style_prompt}\". On a scale from 1 to 5, where 5 is best, rate the aesthetic quality of the second "
       "image. Reply with one integer."},
  };
  return templates;
}

inline constexpr std::string_view kRetrySuffix = "\nAnswer with a single integer from 1 to 5 and nothing else.";
inline constexpr int kJudgeRetries = 3;

using TemplateFields = std::map<std::string, std::string, std::less<>>;

inline std::string render_template(std::string_view template_id, const TemplateFields& fields) {
  const auto& templates = judge_templates();
  const auto it = templates.find(template_id);
  ARTIST_CHECK(it != templates.end(), ErrorCode::invalid_argument, "unknown judge template '" + std::string(template_id) + "'");
  std::string out;
  const std::string& text = it->second;
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '{') {
      const std::size_t close = text.find('}', i);
      const std::string name = text.substr(i + 1, close - i - 1);
      const auto f = fields.find(name);
      ARTIST_CHECK(f != fields.end(), ErrorCode::invalid_argument, "template field '" + name + "' not provided");
      out += f->second;
      i = close + 1;
    } else {
      out.push_back(text[i++]);
    }
  }
  return out;
}

/// First standalone integer in [1, 5]; 0 when there is none.
inline int parse_rating(std::string_view reply) {
  for (std::size_t i = 0; i < reply.size();) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    const bool decimal = (i > 0 && reply[i - 1] == '.' && i > 1 && std::isdigit(static_cast<unsigned char>(reply[i - 2]))) ||
                         (j + 1 < reply.size() && reply[j] == '.' && std::isdigit(static_cast<unsigned char>(reply[j + 1])));
    if (!decimal && j - i == 1 && reply[i] >= '1' && reply[i] <= '5') return reply[i] - '0';
    i = j;
  }
  return 0;
}

class VlmJudgeClient {
 public:
  virtual ~VlmJudgeClient() = default;
  virtual std::string model_id() const = 0;
  virtual nlohmann::json provenance() const = 0;
  /// One round trip: images plus prompt text in, raw reply text out.
  virtual std::string query(const std::vector<Image>& images, const std::string& prompt) const = 0;

  /// Renders the template, queries, and parses; unparseable replies are retried with an
  /// explicit suffix up to kJudgeRetries times before failing.
  int rate(const std::vector<Image>& images, std::string_view template_id, const TemplateFields& fields) const {
    const std::string prompt = render_template(template_id, fields);
    std::string last;
    for (int attempt = 0; attempt <= kJudgeRetries; ++attempt) {
      calls_.fetch_add(1, std::memory_order_relaxed);
      last = query(images, attempt == 0 ? prompt : prompt + std::string(kRetrySuffix));
      if (const int score = parse_rating(last); score != 0) return score;
    }
    throw Error(ErrorCode::unparseable, "no rating in judge reply after " + std::to_string(kJudgeRetries) +
                                            " retries; last reply: '" + last.substr(0, 200) + "'");
  }

  std::uint64_t call_count() const noexcept { return calls_.load(); }

 private:
  mutable std::atomic<std::uint64_t> calls_{0};
};

/// Unit vectors drawn from a generator seeded by the input bytes.
class HashEmbeddingClient final : public EmbeddingClient {
 public:
  explicit HashEmbeddingClient(std::size_t dim = 64, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {
    ARTIST_CHECK(dim_ >= 1, ErrorCode::invalid_argument, "embedding dim must be >= 1");
  }
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed_image(const Image& image) const override { return draw("image\n" + image_bytes(image)); }
  std::vector<double> embed_text(const std::string& text) const override { return draw("text\n" + text); }
  nlohmann::json provenance() const override {
    return {{"kind", "stub"}, {"model", "hash-embedding"}, {"dim", dim_}, {"seed", seed_}};
  }

 private:
  std::vector<double> draw(const std::string& bytes) const {
    Rng rng(mix_seed(seed_, fnv1a(bytes)));
    std::vector<double> v(dim_);
    for (double& x : v) x = rng.normal();
    return normalized(std::move(v));
  }
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Root-mean-square pixel difference; a stand-in for a learned perceptual metric.
class PixelPerceptualClient final : public PerceptualClient {
 public:
  double distance(const Image& a, const Image& b) const override {
    ARTIST_CHECK(a.shape() == b.shape(), ErrorCode::shape_mismatch,
                 "perceptual distance needs equal shapes, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    return rms_diff(a, b);
  }
  nlohmann::json provenance() const override { return {{"kind", "stub"}, {"model", "pixel-rms"}}; }
};

/// Replies "Rating: n" with n derived from a hash of the prompt and image bytes.
class HashVlmJudge final : public VlmJudgeClient {
 public:
  explicit HashVlmJudge(std::uint64_t seed = 0) : seed_(seed) {}
  std::string model_id() const override { return "hash-judge"; }
  nlohmann::json provenance() const override { return {{"kind", "stub"}, {"model", model_id()}, {"seed", seed_}}; }
  std::string query(const std::vector<Image>& images, const std::string& prompt) const override {
    std::uint64_t h = mix_seed(seed_, fnv1a(prompt));
    for (const Image& im : images) h = mix_seed(h, fnv1a(image_bytes(im)));
    return "Rating: " + std::to_string(1 + h % 5);
  }

 private:
  std::uint64_t seed_;
};

/// Returns scripted replies in order, repeating the last one.
class ScriptedVlmJudge final : public VlmJudgeClient {
 public:
  explicit ScriptedVlmJudge(std::vector<std::string> replies, std::string model = "scripted-judge")
      : replies_(std::move(replies)), model_(std::move(model)) {
    ARTIST_CHECK(!replies_.empty(), ErrorCode::invalid_argument, "scripted judge needs at least one reply");
  }
  std::string model_id() const override { return model_; }
  nlohmann::json provenance() const override { return {{"kind", "stub"}, {"model", model_}}; }
  std::string query(const std::vector<Image>&, const std::string& prompt) const override {
    std::lock_guard lock(mu_);
    prompts_.push_back(prompt);
    return replies_[std::min(next_++, replies_.size() - 1)];
  }
  std::vector<std::string> prompts() const {
    std::lock_guard lock(mu_);
    return prompts_;
  }

 private:
  std::vector<std::string> replies_;
  std::string model_;
  mutable std::mutex mu_;
  mutable std::size_t next_ = 0;
  mutable std::vector<std::string> prompts_;
};

}  // namespace artist::eval
