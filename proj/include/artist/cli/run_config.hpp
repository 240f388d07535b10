#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "artist/eval/http_judge.hpp"
#include "artist/io/hash.hpp"
#include "artist/pipeline.hpp"
#include "artist/trajectory.hpp"

namespace artist::cli {

/// Layer list syntax: "4,5,6,7", "4-7", "1-3,9", or "" / "none" for the empty set.
inline LayerSet parse_layers(const std::string& text) {
  LayerSet out;
  if (text.empty() || text == "none") return out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    std::string item = text.substr(pos, comma - pos);
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    try {
      std::size_t used = 0;
      const int first = std::stoi(item, &used);
      int last = first;
      if (used < item.size()) {
        ARTIST_CHECK(item[used] == '-', ErrorCode::invalid_argument, "bad layer item '" + item + "'");
        std::size_t used2 = 0;
        last = std::stoi(item.substr(used + 1), &used2);
        ARTIST_CHECK(used + 1 + used2 == item.size(), ErrorCode::invalid_argument, "bad layer item '" + item + "'");
      }
      ARTIST_CHECK(first <= last, ErrorCode::invalid_argument, "empty layer range '" + item + "'");
      for (int l = first; l <= last; ++l) out.insert(l);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::invalid_argument, "bad layer item '" + item + "' in '" + text + "'");
    }
    pos = comma + 1;
  }
  return out;
}

inline std::string format_layers(const LayerSet& s) {
  std::string out;
  for (int l : s) out += (out.empty() ? "" : ",") + std::to_string(l);
  return out.empty() ? "none" : out;
}

/// Fully resolved configuration of one command invocation.
struct RunConfig {
  // run
  std::string backend = "toy";
  std::uint64_t backend_seed = 0;
  std::string weights_dir;
  std::uint64_t seed = 0;
  int steps = 50;
  std::string schedule = "scaled-linear";
  double guidance = 7.5;
  std::optional<double> style_guidance;
  std::optional<int> tau;
  std::string style_prompt;
  std::string content_prompt;
  StyleInit style_init = StyleInit::random_noise;
  bool inject_in_uncond_pass = true;
  int snapshot_stride = 0;
  std::string input;
  std::string record;
  std::optional<std::uint64_t> toy_image;
  std::string output_dir = "out";
  std::string run_id;
  int workers = 1;
  // plan
  InjectionPlan plan;
  // metrics
  std::vector<std::string> style_set;
  std::string cache_dir;
  bool offline = true;
  std::vector<int> taus;
  Aggregation aggregation = Aggregation::quadrature;
  int sweep_seeds = 16;
  // clients
  std::string judge_endpoint;
  std::string judge_model;
  double timeout_seconds = 60.0;
  int max_concurrency = 4;
  double requests_per_second = 2.0;
  double burst = 4.0;
  int embedding_dim = 64;
  std::uint64_t stub_seed = 0;
};

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
  return {
      {"run",
       {{"backend", c.backend},
        {"backend_seed", c.backend_seed},
        {"weights_dir", c.weights_dir},
        {"seed", c.seed},
        {"steps", c.steps},
        {"schedule", c.schedule},
        {"guidance", c.guidance},
        {"style_guidance", opt(c.style_guidance)},
        {"tau", opt(c.tau)},
        {"style_prompt", c.style_prompt},
        {"content_prompt", c.content_prompt},
        {"style_init", to_string(c.style_init)},
        {"inject_in_uncond_pass", c.inject_in_uncond_pass},
        {"snapshot_stride", c.snapshot_stride},
        {"input", c.input},
        {"record", c.record},
        {"toy_image", opt(c.toy_image)},
        {"output_dir", c.output_dir},
        {"run_id", c.run_id},
        {"workers", c.workers}}},
      {"plan",
       {{"content_layers", c.plan.content_layers},
        {"content_kind", to_string(c.plan.content_kind)},
        {"style_layers", c.plan.style_layers},
        {"c2s_layers", c.plan.c2s_layers},
        {"c2s_blend", c.plan.c2s_blend}}},
      {"metrics",
       {{"style_set", c.style_set},
        {"cache_dir", c.cache_dir},
        {"offline", c.offline},
        {"taus", c.taus},
        {"aggregation", to_string(c.aggregation)},
        {"sweep_seeds", c.sweep_seeds}}},
      {"clients",
       {{"judge_endpoint", c.judge_endpoint},
        {"judge_model", c.judge_model},
        {"timeout_seconds", c.timeout_seconds},
        {"max_concurrency", c.max_concurrency},
        {"requests_per_second", c.requests_per_second},
        {"burst", c.burst},
        {"embedding_dim", c.embedding_dim},
        {"stub_seed", c.stub_seed}}},
  };
}

inline nlohmann::json default_config_json() { return to_json(RunConfig{}); }

/// Reads a complete config document (as produced by layering onto the defaults).
inline RunConfig from_json(const nlohmann::json& j) {
  RunConfig c;
  auto get = [&](const char* section, const char* key, auto& dst) {
    const std::string where = std::string(section) + "." + key;
    try {
      const auto& v = j.at(section).at(key);
      using T = std::decay_t<decltype(dst)>;
      if constexpr (std::is_same_v<T, std::optional<int>> || std::is_same_v<T, std::optional<double>> ||
                    std::is_same_v<T, std::optional<std::uint64_t>>) {
        if (v.is_null()) dst.reset();
        else dst = v.get<typename T::value_type>();
      } else if constexpr (std::is_same_v<T, LayerSet>) {
        dst = v.is_string() ? parse_layers(v.get<std::string>()) : v.get<T>();
      } else {
        dst = v.get<T>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::invalid_argument, "config key " + where + ": " + e.what());
    }
  };
  std::string style_init, content_kind, aggregation;
  get("run", "backend", c.backend);
  get("run", "backend_seed", c.backend_seed);
  get("run", "weights_dir", c.weights_dir);
  get("run", "seed", c.seed);
  get("run", "steps", c.steps);
  get("run", "schedule", c.schedule);
  get("run", "guidance", c.guidance);
  get("run", "style_guidance", c.style_guidance);
  get("run", "tau", c.tau);
  get("run", "style_prompt", c.style_prompt);
  get("run", "content_prompt", c.content_prompt);
  get("run", "style_init", style_init);
  get("run", "inject_in_uncond_pass", c.inject_in_uncond_pass);
  get("run", "snapshot_stride", c.snapshot_stride);
  get("run", "input", c.input);
  get("run", "record", c.record);
  get("run", "toy_image", c.toy_image);
  get("run", "output_dir", c.output_dir);
  get("run", "run_id", c.run_id);
  get("run", "workers", c.workers);
  get("plan", "content_layers", c.plan.content_layers);
  get("plan", "content_kind", content_kind);
  get("plan", "style_layers", c.plan.style_layers);
  get("plan", "c2s_layers", c.plan.c2s_layers);
  get("plan", "c2s_blend", c.plan.c2s_blend);
  get("metrics", "style_set", c.style_set);
  get("metrics", "cache_dir", c.cache_dir);
  get("metrics", "offline", c.offline);
  get("metrics", "taus", c.taus);
  get("metrics", "aggregation", aggregation);
  get("metrics", "sweep_seeds", c.sweep_seeds);
  get("clients", "judge_endpoint", c.judge_endpoint);
  get("clients", "judge_model", c.judge_model);
  get("clients", "timeout_seconds", c.timeout_seconds);
  get("clients", "max_concurrency", c.max_concurrency);
  get("clients", "requests_per_second", c.requests_per_second);
  get("clients", "burst", c.burst);
  get("clients", "embedding_dim", c.embedding_dim);
  get("clients", "stub_seed", c.stub_seed);
  c.style_init = parse_style_init(style_init);
  c.plan.content_kind = parse_content_kind(content_kind);
  if (aggregation == "quadrature") c.aggregation = Aggregation::quadrature;
  else if (aggregation == "linear") c.aggregation = Aggregation::linear;
  else throw Error(ErrorCode::invalid_argument, "unknown aggregation '" + aggregation + "'");

  ARTIST_CHECK(c.steps >= 1, ErrorCode::invalid_argument, "run.steps must be >= 1");
  ARTIST_CHECK(c.guidance >= 0.0, ErrorCode::invalid_argument, "run.guidance must be >= 0");
  ARTIST_CHECK(!c.style_guidance || *c.style_guidance >= 0.0, ErrorCode::invalid_argument, "run.style_guidance must be >= 0");
  ARTIST_CHECK(!c.tau || (*c.tau >= 0 && *c.tau <= c.steps), ErrorCode::invalid_argument, "run.tau must be in [0, steps]");
  ARTIST_CHECK(c.workers >= 1, ErrorCode::invalid_argument, "run.workers must be >= 1");
  ARTIST_CHECK(c.snapshot_stride >= 0, ErrorCode::invalid_argument, "run.snapshot_stride must be >= 0");
  ARTIST_CHECK(c.sweep_seeds >= 1, ErrorCode::invalid_argument, "metrics.sweep_seeds must be >= 1");
  ARTIST_CHECK(c.embedding_dim >= 1, ErrorCode::invalid_argument, "clients.embedding_dim must be >= 1");
  parse_schedule_kind(c.schedule);
  return c;
}

/// Layers `overlay` onto `base`: objects merge key by key, everything else is replaced.
/// Unknown sections or keys are rejected so typos do not go unnoticed.
inline void merge_config(nlohmann::json& base, const nlohmann::json& overlay, const std::string& where = "") {
  ARTIST_CHECK(overlay.is_object(), ErrorCode::invalid_argument, "config " + (where.empty() ? "document" : where) + " must be an object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    ARTIST_CHECK(base.contains(key), ErrorCode::invalid_argument, "unknown config key '" + path + "'");
    if (base[key].is_object()) merge_config(base[key], value, path);
    else base[key] = value;
  }
}

/// Identity of a configuration for run ids: everything except where the output goes.
inline std::string config_hash(const RunConfig& c) {
  nlohmann::json j = to_json(c);
  j["run"].erase("output_dir");
  j["run"].erase("run_id");
  return io::sha256_hex(j.dump());
}

inline NoiseSchedule make_run_schedule(const RunConfig& c) {
  return make_schedule(parse_schedule_kind(c.schedule), c.steps, ScheduleParams{});
}

inline StylizationConfig stylization_config(const RunConfig& c) {
  StylizationConfig s;
  s.style_prompt = c.style_prompt;
  s.content_prompt = c.content_prompt;
  s.tau = c.tau;
  s.guidance = {c.guidance};
  s.style_guidance = c.style_guidance;
  s.seed = c.seed;
  s.plan = c.plan;
  s.style_init = c.style_init;
  s.inject_in_uncond_pass = c.inject_in_uncond_pass;
  s.snapshot_stride = c.snapshot_stride;
  return s;
}

inline eval::HttpJudgeConfig judge_config(const RunConfig& c) {
  eval::HttpJudgeConfig j;
  j.endpoint = c.judge_endpoint;
  j.model = c.judge_model;
  j.timeout_seconds = c.timeout_seconds;
  j.max_concurrency = c.max_concurrency;
  j.requests_per_second = c.requests_per_second;
  j.burst = c.burst;
  return j;
}

}  // namespace artist::cli
