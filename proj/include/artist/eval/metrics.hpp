#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "artist/eval/cache.hpp"
#include "artist/eval/clients.hpp"

namespace artist::eval {

/// 100 x cosine similarity between the image and prompt embeddings.
inline double clip_alignment(const Image& image, const std::string& prompt, const EmbeddingClient& client) {
  return 100.0 * cosine(client.embed_image(image), client.embed_text(prompt));
}

struct StyleRank {
  /// 1-based rank of the target by descending similarity; ties go to the earlier list entry.
  std::size_t rank;
  std::size_t n;
  /// (n - rank) / (n - 1).
  double score;
  bool top1() const noexcept { return rank == 1; }
};

inline StyleRank clip_style_rank(const Image& image, const std::string& target, const std::vector<std::string>& style_set,
                                 const EmbeddingClient& client) {
  const std::size_t n = style_set.size();
  ARTIST_CHECK(n >= 2, ErrorCode::invalid_argument, "style set needs at least 2 prompts");
  const auto it = std::find(style_set.begin(), style_set.end(), target);
  ARTIST_CHECK(it != style_set.end(), ErrorCode::invalid_argument, "target style '" + target + "' not in style set");
  const std::size_t ti = std::size_t(it - style_set.begin());
  const auto img = client.embed_image(image);
  std::vector<double> sim(n);
  for (std::size_t i = 0; i < n; ++i) sim[i] = cosine(img, client.embed_text(style_set[i]));
  std::size_t rank = 1;
  for (std::size_t i = 0; i < n; ++i)
    if (sim[i] > sim[ti] || (sim[i] == sim[ti] && i < ti)) ++rank;
  return {rank, n, double(n - rank) / double(n - 1)};
}

inline double clip_style_score(const Image& image, const std::string& target, const std::vector<std::string>& style_set,
                               const EmbeddingClient& client) {
  return clip_style_rank(image, target, style_set, client).score;
}

/// Art-style prompts used for CLIP Style Score when no set is configured.
inline const std::vector<std::string>& default_style_set() {
  static const std::vector<std::string> set{
      "an oil painting",        "a watercolor painting", "a pencil sketch",     "a ukiyo-e woodblock print",
      "a pop art poster",       "a cubist painting",     "pixel art",           "an impressionist painting",
      "a charcoal drawing",     "a stained glass window",
  };
  return set;
}

enum class JudgeKind { ca_style, sa_content, aesthetic };
inline constexpr JudgeKind kAllJudgeKinds[] = {JudgeKind::ca_style, JudgeKind::sa_content, JudgeKind::aesthetic};

inline const char* to_string(JudgeKind k) {
  switch (k) {
    case JudgeKind::ca_style: return "ca_style";
    case JudgeKind::sa_content: return "sa_content";
    case JudgeKind::aesthetic: return "aesthetic";
  }
  return "unknown";
}

/// Judge score for one (content, stylized) pair; served from `cache` when present.
inline int vlm_metric(JudgeKind kind, const Image& content, const Image& stylized, const std::string& style_prompt,
                      const VlmJudgeClient& judge, ScoreCache* cache = nullptr) {
  std::string key;
  if (cache) {
    key = ScoreCache::make_key(image_sha256(content), image_sha256(stylized), to_string(kind), style_prompt,
                               judge.model_id());
    if (auto hit = cache->get(key)) return *hit;
  }
  const int score = judge.rate({content, stylized}, to_string(kind), {{"style_prompt", style_prompt}});
  if (cache) cache->put(key, score);
  return score;
}

struct EvalPair {
  std::string content_id;
  Image content;
  Image stylized;
  std::string style_prompt;
};

struct EvalClients {
  const EmbeddingClient* embedding = nullptr;
  const PerceptualClient* perceptual = nullptr;
  const VlmJudgeClient* judge = nullptr;
};

struct EvalOptions {
  /// Candidate prompts for CLIP Style Score; empty means batch prompts followed by the defaults, up to 10.
  std::vector<std::string> style_set;
  std::size_t workers = 1;
};

struct ItemScores {
  std::string content_id;
  std::string style_prompt;
  double lpips = 0.0;
  double clip_alignment = 0.0;
  double clip_style_score = 0.0;
  bool clip_top1 = false;
  int ca_style = 0;
  int sa_content = 0;
  int aesthetic = 0;
  double vlm_average = 0.0;
  std::optional<std::string> error;
};

struct Aggregates {
  double lpips = 0.0;
  double clip_alignment = 0.0;
  double clip_style_score = 0.0;
  double clip_top1_fraction = 0.0;
  double ca_style = 0.0;
  double sa_content = 0.0;
  double aesthetic = 0.0;
  double vlm_average = 0.0;
  std::size_t total = 0;
  std::size_t succeeded = 0;
  std::size_t failed = 0;
};

struct MetricsReport {
  std::vector<ItemScores> items;
  Aggregates aggregates;
  nlohmann::json provenance;
};

/// Means over items without an error marker, summed in item order.
inline Aggregates aggregate(const std::vector<ItemScores>& items) {
  Aggregates a;
  a.total = items.size();
  for (const ItemScores& it : items) {
    if (it.error) continue;
    ++a.succeeded;
    a.lpips += it.lpips;
    a.clip_alignment += it.clip_alignment;
    a.clip_style_score += it.clip_style_score;
    a.clip_top1_fraction += it.clip_top1 ? 1.0 : 0.0;
    a.ca_style += it.ca_style;
    a.sa_content += it.sa_content;
    a.aesthetic += it.aesthetic;
    a.vlm_average += it.vlm_average;
  }
  a.failed = a.total - a.succeeded;
  if (a.succeeded > 0) {
    const double n = double(a.succeeded);
    for (double* v : {&a.lpips, &a.clip_alignment, &a.clip_style_score, &a.clip_top1_fraction, &a.ca_style,
                      &a.sa_content, &a.aesthetic, &a.vlm_average})
      *v /= n;
  }
  return a;
}

inline std::vector<std::string> resolve_style_set(const std::vector<EvalPair>& pairs, const EvalOptions& options) {
  if (!options.style_set.empty()) return options.style_set;
  std::vector<std::string> set;
  auto add = [&](const std::string& p) {
    if (std::find(set.begin(), set.end(), p) == set.end()) set.push_back(p);
  };
  for (const EvalPair& p : pairs) add(p.style_prompt);
  for (const std::string& p : default_style_set())
    if (set.size() < 10) add(p);
  return set;
}

inline ItemScores score_pair(const EvalPair& pair, const std::vector<std::string>& style_set, const EvalClients& clients,
                             ScoreCache* cache) {
  ItemScores s;
  s.content_id = pair.content_id;
  s.style_prompt = pair.style_prompt;
  try {
    s.lpips = clients.perceptual->distance(pair.content, pair.stylized);
    s.clip_alignment = clip_alignment(pair.stylized, pair.style_prompt, *clients.embedding);
    const StyleRank r = clip_style_rank(pair.stylized, pair.style_prompt, style_set, *clients.embedding);
    s.clip_style_score = r.score;
    s.clip_top1 = r.top1();
    s.ca_style = vlm_metric(JudgeKind::ca_style, pair.content, pair.stylized, pair.style_prompt, *clients.judge, cache);
    s.sa_content = vlm_metric(JudgeKind::sa_content, pair.content, pair.stylized, pair.style_prompt, *clients.judge, cache);
    s.aesthetic = vlm_metric(JudgeKind::aesthetic, pair.content, pair.stylized, pair.style_prompt, *clients.judge, cache);
    s.vlm_average = (s.ca_style + s.sa_content + s.aesthetic) / 3.0;
  } catch (const std::exception& e) {
    s.error = e.what();
  }
  return s;
}

/// Scores every pair; failures are kept as items with an error marker and excluded from the means.
inline MetricsReport evaluate_batch(const std::vector<EvalPair>& pairs, const EvalClients& clients,
                                    ScoreCache* cache = nullptr, const EvalOptions& options = {}) {
  ARTIST_CHECK(!pairs.empty(), ErrorCode::invalid_argument, "nothing to evaluate");
  ARTIST_CHECK(clients.embedding && clients.perceptual && clients.judge, ErrorCode::invalid_argument,
               "all three clients are required");
  const std::vector<std::string> style_set = resolve_style_set(pairs, options);
  MetricsReport report;
  report.items.resize(pairs.size());
  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, pairs.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) report.items[i] = score_pair(pairs[i], style_set, clients, cache);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < pairs.size();)
          report.items[i] = score_pair(pairs[i], style_set, clients, cache);
      });
  }
  report.aggregates = aggregate(report.items);
  report.provenance = {{"embedding", clients.embedding->provenance()},
                       {"perceptual", clients.perceptual->provenance()},
                       {"judge", clients.judge->provenance()},
                       {"style_set", style_set}};
  return report;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json items = nlohmann::json::array();
  for (const ItemScores& it : r.items) {
    nlohmann::json j{{"content_id", it.content_id}, {"style_prompt", it.style_prompt}};
    if (it.error) {
      j["error"] = *it.error;
    } else {
      j.update({{"lpips", it.lpips},
                {"clip_alignment", it.clip_alignment},
                {"clip_style_score", it.clip_style_score},
                {"clip_top1", it.clip_top1},
                {"ca_style", it.ca_style},
                {"sa_content", it.sa_content},
                {"aesthetic", it.aesthetic},
                {"vlm_average", it.vlm_average}});
    }
    items.push_back(std::move(j));
  }
  const Aggregates& a = r.aggregates;
  return {{"items", items},
          {"aggregates",
           {{"lpips", a.lpips},
            {"clip_alignment", a.clip_alignment},
            {"clip_style_score", a.clip_style_score},
            {"clip_top1_fraction", a.clip_top1_fraction},
            {"ca_style", a.ca_style},
            {"sa_content", a.sa_content},
            {"aesthetic", a.aesthetic},
            {"vlm_average", a.vlm_average},
            {"total", a.total},
            {"succeeded", a.succeeded},
            {"failed", a.failed}}},
          {"provenance", r.provenance}};
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline std::string to_csv(const MetricsReport& r) {
  std::string out =
      "content_id,style_prompt,lpips,clip_alignment,clip_style_score,clip_top1,ca_style,sa_content,aesthetic,"
      "vlm_average,error\n";
  for (const ItemScores& it : r.items) {
    out += detail::csv_field(it.content_id) + "," + detail::csv_field(it.style_prompt) + ",";
    if (it.error) {
      out += ",,,,,,,," + detail::csv_field(*it.error) + "\n";
      continue;
    }
    out += detail::number(it.lpips) + "," + detail::number(it.clip_alignment) + "," +
           detail::number(it.clip_style_score) + "," + (it.clip_top1 ? "1" : "0") + "," + std::to_string(it.ca_style) +
           "," + std::to_string(it.sa_content) + "," + std::to_string(it.aesthetic) + "," +
           detail::number(it.vlm_average) + ",\n";
  }
  return out;
}

}  // namespace artist::eval
