#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "artist/cli/run_config.hpp"
#include "artist/eval/metrics.hpp"
#include "artist/io/image_io.hpp"
#include "artist/io/npy.hpp"
#include "artist/toy_backend.hpp"

namespace artist::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2, kPartial = 3 };

inline std::unique_ptr<Denoiser> make_backend(const RunConfig& c) {
  if (c.backend == "toy") return make_toy_backend(c.backend_seed);
  return BackendRegistry::instance().create(c.backend, c.weights_dir);
}

inline std::string default_run_id(const RunConfig& c) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream os;
  os << std::put_time(&utc, "%Y%m%dT%H%M%SZ") << "-" << config_hash(c).substr(0, 12);
  return os.str();
}

/// One output directory out/<run-id>/ plus the manifest written when the command finishes.
class RunDir {
 public:
  RunDir(std::string command, const RunConfig& config) : command_(std::move(command)), config_(config) {
    if (config_.run_id.empty()) config_.run_id = default_run_id(config_);
    path_ = fs::path(config_.output_dir) / config_.run_id;
    fs::create_directories(path_);
  }

  const fs::path& path() const noexcept { return path_; }
  const std::string& run_id() const noexcept { return config_.run_id; }

  /// Writes `bytes` to a path relative to the run directory and records its checksum.
  void write(const std::string& relative, const std::string& bytes) {
    io::write_file(path_ / relative, bytes);
    artifacts_[relative] = io::sha256_hex(bytes);
  }

  nlohmann::json& summary() noexcept { return summary_; }

  void finish() {
    nlohmann::json cfg = to_json(config_);
    cfg["run"].erase("output_dir");
    cfg["run"].erase("run_id");
    nlohmann::json manifest{{"command", command_},
                            {"config", cfg},
                            {"config_hash", config_hash(config_)},
                            {"seeds", {{"seed", config_.seed}, {"backend_seed", config_.backend_seed}, {"stub_seed", config_.stub_seed}}},
                            {"artifacts", artifacts_},
                            {"summary", summary_}};
    io::write_file(path_ / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  std::string command_;
  RunConfig config_;
  fs::path path_;
  nlohmann::json artifacts_ = nlohmann::json::object();
  nlohmann::json summary_ = nlohmann::json::object();
};

inline std::string format_checksum(const Tensor& t) {
  std::ostringstream os;
  os << std::setprecision(17) << checksum(t);
  return os.str();
}

/// Content latent from --toy-image, an .npy latent, or an image file through the toy codec.
inline Tensor load_content_latent(const RunConfig& c, const Denoiser& backend) {
  const Shape& shape = backend.latent_shape();
  const ToyLatentCodec codec;
  auto check_codec = [&] {
    ARTIST_CHECK(shape.size() == 3 && shape[0] == 4, ErrorCode::unavailable,
                 "image input needs a 4-channel latent backend; pass an .npy latent instead");
  };
  if (c.toy_image) {
    check_codec();
    return codec.encode(make_toy_image(*c.toy_image, shape[1] * codec.spatial_factor(), shape[2] * codec.spatial_factor()));
  }
  ARTIST_CHECK(!c.input.empty(), ErrorCode::invalid_argument, "no input: pass --input, --record or --toy-image");
  ARTIST_CHECK(fs::exists(c.input), ErrorCode::io, "input '" + c.input + "' does not exist");
  Tensor latent;
  if (fs::path(c.input).extension() == ".npy") {
    latent = io::read_npy(c.input);
  } else {
    check_codec();
    latent = codec.encode(io::read_image(c.input));
  }
  ARTIST_CHECK(latent.shape() == shape, ErrorCode::shape_mismatch,
               "input latent " + shape_str(latent.shape()) + " does not match backend " + shape_str(shape));
  return latent;
}

inline nlohmann::json record_summary(const InversionRecord& rec, const std::string& container_sha) {
  return {{"T", rec.steps()},
          {"prompt", rec.content_prompt},
          {"x_T_checksum", checksum(rec.latents.back())},
          {"container_sha256", container_sha}};
}

/// Loads --record, or inverts the input and stores the record as record.artinv.
inline InversionRecord obtain_record(const RunConfig& c, const NoiseSchedule& schedule, const Denoiser& backend,
                                     RunDir& dir) {
  if (!c.record.empty()) {
    InversionRecord rec = load_record(c.record);
    rec.require_schedule(schedule);
    return rec;
  }
  InversionRecord rec = invert(load_content_latent(c, backend), c.content_prompt, schedule, backend, c.seed);
  dir.write("record.artinv", io::serialize_container(record_to_container(rec)));
  return rec;
}

inline void write_latent_outputs(RunDir& dir, const std::string& prefix, const Tensor& latent, const Denoiser& backend) {
  dir.write(prefix + "result.npy", io::encode_npy(latent));
  const Shape& s = backend.latent_shape();
  if (s.size() == 3 && s[0] == 4) dir.write(prefix + "result.ppm", io::encode_ppm(ToyLatentCodec().decode(latent)));
}

inline int cmd_invert(const RunConfig& c, std::ostream& out) {
  const auto backend = make_backend(c);
  const NoiseSchedule schedule = make_run_schedule(c);
  const InversionRecord rec = invert(load_content_latent(c, *backend), c.content_prompt, schedule, *backend, c.seed);
  RunDir dir("invert", c);
  const std::string bytes = io::serialize_container(record_to_container(rec));
  dir.write("result.artinv", bytes);
  std::string log;
  for (int t = 0; t <= rec.steps(); ++t)
    log += nlohmann::json{{"step", t}, {"latent_rms", rms(rec.latents[std::size_t(t)])}}.dump() + "\n";
  dir.write("diagnostics.log", log);
  const double replay_err = max_abs_diff(replay_reconstruct(rec, schedule), rec.latents.front());
  dir.summary() = record_summary(rec, io::sha256_hex(bytes));
  dir.summary()["replay_max_abs_error"] = replay_err;
  dir.finish();
  out << "run " << dir.run_id() << "\n"
      << "record " << (dir.path() / "result.artinv").string() << "\n"
      << "T " << rec.steps() << "\n"
      << "prompt \"" << rec.content_prompt << "\"\n"
      << "x_T checksum " << format_checksum(rec.latents.back()) << "\n"
      << "sha256 " << io::sha256_hex(bytes) << "\n";
  return kOk;
}

inline std::string snapshots_container(const StylizationDiagnostics& d) {
  std::vector<Tensor> tensors;
  nlohmann::json index = nlohmann::json::array();
  for (const LatentSnapshot& s : d.snapshots) {
    tensors.push_back(s.latent);
    index.push_back({{"step", s.step}, {"branch", to_string(s.branch)}});
  }
  return io::serialize_container(io::pack_tensors(
      {{"format", "artist-snapshots"}, {"version", io::kContainerVersion}, {"index", index}}, tensors));
}

inline int cmd_stylize(const RunConfig& c, std::ostream& out) {
  const auto backend = make_backend(c);
  const NoiseSchedule schedule = make_run_schedule(c);
  RunDir dir("stylize", c);
  const InversionRecord rec = obtain_record(c, schedule, *backend, dir);
  const StylizationResult result = stylize(rec, stylization_config(c), schedule, *backend);
  write_latent_outputs(dir, "", result.latent_out, *backend);
  dir.write("diagnostics.log", diagnostics_jsonl(result.diagnostics));
  if (!result.diagnostics.snapshots.empty()) dir.write("snapshots.artinv", snapshots_container(result.diagnostics));
  dir.summary() = {{"latent_checksum", checksum(result.latent_out)},
                   {"denoise_calls", result.diagnostics.denoise_calls},
                   {"tau", c.tau.value_or(schedule.steps())}};
  dir.finish();
  out << "run " << dir.run_id() << "\n"
      << "output " << (dir.path() / "result.npy").string() << "\n"
      << "latent checksum " << format_checksum(result.latent_out) << "\n"
      << "denoise calls " << result.diagnostics.denoise_calls << "\n";
  return kOk;
}

struct AnalyzeOptions {
  bool theoretical_only = false;
  bool self_test = false;
};

inline std::string csv_number(double v) { return eval::detail::number(v); }

inline int cmd_analyze(const RunConfig& c, const AnalyzeOptions& opt, std::ostream& out) {
  if (opt.self_test) {
    std::vector<double> taus, lin, sq;
    for (int t = 1; t <= 10; ++t) {
      taus.push_back(t);
      lin.push_back(t);
      sq.push_back(double(t) * t);
    }
    const GrowthFit a = fit_growth_exponent(taus, lin), b = fit_growth_exponent(taus, sq);
    out << std::setprecision(12) << "self-test identity exponent " << a.exponent << " r2 " << a.r2 << "\n"
        << "self-test square exponent " << b.exponent << " r2 " << b.r2 << "\n";
    return kOk;
  }
  const NoiseSchedule schedule = make_run_schedule(c);
  const int T = schedule.steps();
  std::vector<int> taus = c.taus;
  if (taus.empty()) {
    if (opt.theoretical_only)
      for (int t = 0; t <= T; ++t) taus.push_back(t);
    else
      taus = default_tau_grid(T);
  }
  const TrajectoryCurves theory = theoretical_curves(schedule, taus, c.aggregation);
  std::vector<double> fit_taus, fit_s, fit_c;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (taus[i] <= 0) continue;
    fit_taus.push_back(taus[i]);
    fit_s.push_back(theory.style_mass[i]);
    fit_c.push_back(theory.content_mass[i]);
  }
  nlohmann::json summary{{"aggregation", to_string(c.aggregation)}, {"taus", taus}};
  auto fit_json = [](const GrowthFit& f) {
    return nlohmann::json{{"exponent", f.exponent}, {"r2", f.r2}, {"used", f.used}, {"warnings", f.warnings}};
  };
  if (fit_taus.size() >= 4) {
    const GrowthFit s = fit_growth_exponent(fit_taus, fit_s), k = fit_growth_exponent(fit_taus, fit_c);
    summary["theoretical"] = {{"style", fit_json(s)}, {"content", fit_json(k)}};
  }

  std::string csv = "tau,S,C,empirical_content,empirical_style,seed\n";
  std::uint64_t backend_calls = 0;
  if (opt.theoretical_only) {
    for (std::size_t i = 0; i < taus.size(); ++i)
      csv += std::to_string(taus[i]) + "," + csv_number(theory.style_mass[i]) + "," + csv_number(theory.content_mass[i]) + ",,,\n";
  } else {
    ARTIST_CHECK(!c.style_prompt.empty(), ErrorCode::invalid_argument, "empirical analysis needs --style-prompt");
    for (int t : taus) ARTIST_CHECK(t >= 1, ErrorCode::invalid_argument, "empirical taus must be >= 1");
    std::vector<InversionRecord> records;
    std::vector<std::uint64_t> seeds;
    if (!c.record.empty()) {
      records.push_back(load_record(c.record));
      for (int s = 0; s < c.sweep_seeds; ++s) seeds.push_back(mix_seed(c.seed, std::uint64_t(s)));
    } else {
      for (int s = 0; s < c.sweep_seeds; ++s) seeds.push_back(mix_seed(c.seed, std::uint64_t(s)));
    }
    std::vector<TrajectoryCurves> runs(seeds.size());
    std::vector<std::uint64_t> calls(seeds.size(), 0);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      const auto backend = make_backend(c);
      const FeatureStyleMetric metric(*backend, schedule);
      for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
        const std::uint64_t before = backend->call_count();
        InversionRecord rec;
        if (!records.empty()) {
          rec = records.front();
        } else {
          RunConfig item = c;
          item.toy_image = seeds[i];
          rec = invert(load_content_latent(item, *backend), c.content_prompt, schedule, *backend, seeds[i]);
        }
        runs[i] = empirical_sweep(rec, c.style_prompt, taus, schedule, *backend, structure_distance, std::cref(metric),
                                  {c.guidance, seeds[i]});
        calls[i] = backend->call_count() - before;
      }
    };
    {
      std::vector<std::jthread> pool;
      for (int w = 1; w < std::min<int>(c.workers, int(seeds.size())); ++w) pool.emplace_back(worker);
      worker();
    }
    for (auto n : calls) backend_calls += n;
    const TrajectoryCurves mean = average_curves(runs);
    auto rows = [&](const TrajectoryCurves& r, const std::string& seed) {
      for (std::size_t i = 0; i < taus.size(); ++i)
        csv += std::to_string(taus[i]) + "," + csv_number(theory.style_mass[i]) + "," + csv_number(theory.content_mass[i]) +
               "," + csv_number(r.empirical_content[i]) + "," + csv_number(r.empirical_style[i]) + "," + seed + "\n";
    };
    for (std::size_t s = 0; s < runs.size(); ++s) rows(runs[s], std::to_string(seeds[s]));
    rows(mean, "mean");
    const GrowthFit ec = fit_growth_exponent(taus, mean.empirical_content);
    const GrowthFit es = fit_growth_exponent(taus, mean.empirical_style);
    summary["empirical"] = {{"content", fit_json(ec)},
                            {"style", fit_json(es)},
                            {"exponent_gap", es.exponent - ec.exponent},
                            {"seeds", seeds.size()},
                            {"style_prompt", c.style_prompt}};
  }
  summary["backend_calls"] = backend_calls;

  RunDir dir("analyze", c);
  dir.write("curves.csv", csv);
  dir.write("summary.json", summary.dump(2) + "\n");
  dir.summary() = summary;
  dir.finish();
  out << std::setprecision(6) << "run " << dir.run_id() << "\n";
  if (summary.contains("theoretical"))
    out << "theoretical exponents: style " << summary["theoretical"]["style"]["exponent"].get<double>() << " content "
        << summary["theoretical"]["content"]["exponent"].get<double>() << "\n";
  if (summary.contains("empirical"))
    out << "empirical exponents: style " << summary["empirical"]["style"]["exponent"].get<double>() << " content "
        << summary["empirical"]["content"]["exponent"].get<double>() << "\n";
  out << "backend calls " << backend_calls << "\n";
  return kOk;
}

struct EvaluateOptions {
  std::string input_dir;
};

/// Reads <dir>/prompts.json: a list (or {"items": list}) of
/// {"id"?, "content": file in content/, "stylized": file in stylized/, "style_prompt"}.
inline std::vector<eval::EvalPair> load_eval_pairs(const fs::path& dir, std::vector<std::string>& skipped) {
  ARTIST_CHECK(fs::is_directory(dir / "content") && fs::is_directory(dir / "stylized"), ErrorCode::io,
               "'" + dir.string() + "' must contain content/ and stylized/");
  ARTIST_CHECK(fs::exists(dir / "prompts.json"), ErrorCode::io, "missing '" + (dir / "prompts.json").string() + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(dir / "prompts.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::io, std::string("prompts.json: ") + e.what());
  }
  const nlohmann::json& list = manifest.is_object() ? manifest.at("items") : manifest;
  ARTIST_CHECK(list.is_array(), ErrorCode::io, "prompts.json must hold a list of items");
  std::set<std::string> referenced;
  std::vector<eval::EvalPair> pairs;
  for (const auto& item : list) {
    const std::string content = item.value("content", ""), stylized = item.value("stylized", "");
    const std::string prompt = item.value("style_prompt", "");
    referenced.insert(stylized);
    const fs::path cp = dir / "content" / content, sp = dir / "stylized" / stylized;
    if (content.empty() || stylized.empty() || !fs::is_regular_file(cp) || !fs::is_regular_file(sp)) {
      skipped.push_back("unpaired item content='" + content + "' stylized='" + stylized + "'");
      continue;
    }
    pairs.push_back({item.value("id", fs::path(stylized).stem().string()), io::read_image(cp), io::read_image(sp), prompt});
  }
  std::vector<std::string> extra;
  for (const auto& e : fs::directory_iterator(dir / "stylized"))
    if (e.is_regular_file() && !referenced.contains(e.path().filename().string()))
      extra.push_back("stylized file without manifest entry: " + e.path().filename().string());
  std::sort(extra.begin(), extra.end());
  skipped.insert(skipped.end(), extra.begin(), extra.end());
  return pairs;
}

inline int cmd_evaluate(const RunConfig& c, const EvaluateOptions& opt, std::ostream& out, std::ostream& err) {
  ARTIST_CHECK(!opt.input_dir.empty(), ErrorCode::invalid_argument, "evaluate needs --input-dir");
  std::vector<std::string> skipped;
  const std::vector<eval::EvalPair> pairs = load_eval_pairs(opt.input_dir, skipped);
  ARTIST_CHECK(!pairs.empty(), ErrorCode::io, "no evaluable pairs under '" + opt.input_dir + "'");
  for (const std::string& s : skipped) err << "warning: " << s << "\n";

  const eval::HashEmbeddingClient embedding(std::size_t(c.embedding_dim), c.stub_seed);
  const eval::PixelPerceptualClient perceptual;
  std::unique_ptr<eval::VlmJudgeClient> judge;
  if (c.offline) judge = std::make_unique<eval::HashVlmJudge>(c.stub_seed);
  else judge = std::make_unique<eval::HttpVlmJudge>(judge_config(c));

  std::string cache_dir = c.cache_dir;
  if (cache_dir.empty())
    if (const char* env = std::getenv("ARTIST_CACHE_DIR")) cache_dir = env;
  std::unique_ptr<eval::ScoreCache> cache =
      cache_dir.empty() ? std::make_unique<eval::ScoreCache>()
                        : std::make_unique<eval::ScoreCache>(fs::path(cache_dir) / "judge_cache.jsonl");

  eval::EvalOptions eo;
  eo.style_set = c.style_set;
  eo.workers = std::size_t(c.workers);
  const eval::MetricsReport report = evaluate_batch(pairs, {&embedding, &perceptual, judge.get()}, cache.get(), eo);

  RunDir dir("evaluate", c);
  nlohmann::json rj = to_json(report);
  rj["provenance"]["mode"] = c.offline ? "offline" : "live";
  dir.write("report.json", rj.dump(2) + "\n");
  dir.write("report.csv", to_csv(report));
  std::string log;
  for (const std::string& s : skipped) log += nlohmann::json{{"skipped", s}}.dump() + "\n";
  for (const auto& it : report.items)
    if (it.error) log += nlohmann::json{{"failed", it.content_id}, {"error", *it.error}}.dump() + "\n";
  dir.write("diagnostics.log", log);
  dir.summary() = {{"total", report.aggregates.total},
                   {"succeeded", report.aggregates.succeeded},
                   {"failed", report.aggregates.failed},
                   {"skipped", skipped.size()}};
  dir.finish();
  const auto& a = report.aggregates;
  out << std::setprecision(6) << "run " << dir.run_id() << "\n"
      << "items " << a.succeeded << "/" << a.total << " scored, " << skipped.size() << " skipped\n"
      << "lpips " << a.lpips << " clip_alignment " << a.clip_alignment << " clip_style_score " << a.clip_style_score
      << " top1 " << a.clip_top1_fraction << "\n"
      << "ca_style " << a.ca_style << " sa_content " << a.sa_content << " aesthetic " << a.aesthetic << " vlm_average "
      << a.vlm_average << "\n";
  return (skipped.empty() && a.failed == 0) ? kOk : kPartial;
}

struct AblateOptions {
  std::string axis;
  std::vector<std::string> values;
};

inline AblationValue parse_ablation_value(AblationAxis axis, const std::string& v) {
  try {
    switch (axis) {
      case AblationAxis::content_layers:
      case AblationAxis::style_layers:
      case AblationAxis::c2s_layers: return parse_layers(v);
      case AblationAxis::tau: return std::stoi(v);
      case AblationAxis::guidance_scale: return std::stod(v);
      case AblationAxis::content_kind: return parse_content_kind(v);
      case AblationAxis::style_init: return parse_style_init(v);
    }
  } catch (const std::logic_error&) {
  }
  throw Error(ErrorCode::invalid_argument, "bad value '" + v + "' for axis " + to_string(axis));
}

inline std::string path_safe(std::string s) {
  for (char& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '-' && ch != '_') ch = '_';
  return s.empty() ? "none" : s;
}

inline int cmd_ablate(const RunConfig& c, const AblateOptions& opt, std::ostream& out) {
  const AblationAxis axis = parse_ablation_axis(opt.axis);
  ARTIST_CHECK(!opt.values.empty(), ErrorCode::invalid_argument, "ablate needs at least one --values entry");
  std::vector<AblationValue> values;
  for (const std::string& v : opt.values) values.push_back(parse_ablation_value(axis, v));
  const auto backend = make_backend(c);
  const NoiseSchedule schedule = make_run_schedule(c);
  RunDir dir("ablate", c);
  const InversionRecord rec = obtain_record(c, schedule, *backend, dir);
  const std::vector<StylizationResult> results =
      sweep_ablation(rec, stylization_config(c), axis, values, schedule, *backend);
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const std::string sub = std::to_string(i) + "_" + to_string(axis) + "=" + path_safe(opt.values[i]) + "/";
    write_latent_outputs(dir, sub, results[i].latent_out, *backend);
    dir.write(sub + "diagnostics.log", diagnostics_jsonl(results[i].diagnostics));
    runs.push_back({{"value", opt.values[i]},
                    {"dir", sub},
                    {"latent_checksum", checksum(results[i].latent_out)},
                    {"denoise_calls", results[i].diagnostics.denoise_calls}});
    out << std::setprecision(17) << to_string(axis) << "=" << opt.values[i] << " checksum "
        << checksum(results[i].latent_out) << "\n";
  }
  dir.summary() = {{"axis", to_string(axis)}, {"runs", runs}};
  dir.finish();
  out << "run " << dir.run_id() << "\n";
  return kOk;
}

}  // namespace artist::cli
