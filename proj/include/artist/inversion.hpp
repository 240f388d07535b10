#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "artist/denoiser.hpp"
#include "artist/io/container.hpp"
#include "artist/schedule.hpp"

namespace artist {

/// Recorded DDIM inversion trajectory. latents[t] is x_t for t = 0..T;
/// noise_preds[t-1] is the prediction used by the t-th inversion step.
struct InversionRecord {
  std::vector<Tensor> latents;
  std::vector<Tensor> noise_preds;
  std::string content_prompt;
  nlohmann::json schedule;
  std::uint64_t seed = 0;

  int steps() const noexcept { return int(noise_preds.size()); }

  void validate() const {
    ARTIST_CHECK(!noise_preds.empty() && latents.size() == noise_preds.size() + 1, ErrorCode::corrupted_record,
                 "record holds " + std::to_string(latents.size()) + " latents and " +
                     std::to_string(noise_preds.size()) + " noise predictions");
    for (const Tensor& t : latents) require_same_shape(t, latents.front(), "record latent");
    for (const Tensor& t : noise_preds) require_same_shape(t, latents.front(), "record noise prediction");
  }

  void require_schedule(const NoiseSchedule& s) const {
    ARTIST_CHECK(steps() == s.steps(), ErrorCode::corrupted_record,
                 "record has T=" + std::to_string(steps()) + " but schedule has T=" + std::to_string(s.steps()));
    if (schedule.contains("alphas")) {
      ARTIST_CHECK(schedule.at("alphas").get<std::vector<double>>() == s.alphas(), ErrorCode::corrupted_record,
                   "record was produced with a different schedule");
    }
  }
};

/// Inverts a clean latent at guidance 1 on the content prompt, recording every step.
inline InversionRecord invert(const Tensor& latent_x0, const std::string& content_prompt,
                              const NoiseSchedule& schedule, const Denoiser& backend, std::uint64_t seed = 0) {
  ARTIST_CHECK(latent_x0.shape() == backend.latent_shape(), ErrorCode::shape_mismatch,
               "latent " + shape_str(latent_x0.shape()) + " does not match backend " + shape_str(backend.latent_shape()));
  InversionRecord rec;
  rec.content_prompt = content_prompt;
  rec.schedule = schedule.describe();
  rec.seed = seed;
  rec.latents.reserve(std::size_t(schedule.steps()) + 1);
  rec.latents.push_back(latent_x0);
  const Conditioning cond = backend.encode_text(content_prompt);
  for (int t = 1; t <= schedule.steps(); ++t) {
    DenoiseRequest req;
    req.latent = rec.latents.back();
    req.t = t;
    req.alpha_t = schedule.alpha(t);
    req.conditioning = cond;
    Tensor eps = backend.denoise(req).eps;
    rec.latents.push_back(ddim_inverse_step(rec.latents.back(), eps, t, schedule));
    rec.noise_preds.push_back(std::move(eps));
  }
  return rec;
}

/// Replays the recorded noise predictions from x_T back to x_0.
inline Tensor replay_reconstruct(const InversionRecord& record, const NoiseSchedule& schedule) {
  record.validate();
  record.require_schedule(schedule);
  Tensor x = record.latents.back();
  for (int t = record.steps(); t >= 1; --t) x = ddim_step(x, record.noise_preds[std::size_t(t - 1)], t, schedule);
  return x;
}

/// Samples from x_start at step `from` down to 0 with fresh predictions under CFG.
inline Tensor sample_ddim(const Tensor& x_start, int from, const std::string& prompt, double guidance,
                          const NoiseSchedule& schedule, const Denoiser& backend) {
  ARTIST_CHECK(from >= 0 && from <= schedule.steps(), ErrorCode::out_of_range, "start step out of range");
  const Conditioning cond = backend.encode_text(prompt);
  const Conditioning uncond = guidance == 1.0 ? nullptr : backend.encode_text("");
  Tensor x = x_start;
  for (int t = from; t >= 1; --t) {
    DenoiseRequest req;
    req.latent = x;
    req.t = t;
    req.alpha_t = schedule.alpha(t);
    req.conditioning = cond;
    Tensor eps = backend.denoise(req).eps;
    if (uncond) {
      req.conditioning = uncond;
      eps = cfg_combine(backend.denoise(req).eps, eps, {guidance});
    }
    x = ddim_step(x, eps, t, schedule);
  }
  return x;
}

/// Re-prediction reconstruction: denoise x_T with the content prompt at guidance 1.
inline Tensor repredict_reconstruct(const InversionRecord& record, const NoiseSchedule& schedule,
                                    const Denoiser& backend) {
  record.validate();
  record.require_schedule(schedule);
  return sample_ddim(record.latents.back(), schedule.steps(), record.content_prompt, 1.0, schedule, backend);
}

inline io::Container record_to_container(const InversionRecord& record) {
  record.validate();
  std::vector<Tensor> all = record.latents;
  all.insert(all.end(), record.noise_preds.begin(), record.noise_preds.end());
  nlohmann::json meta{{"format", "artist-inversion"},
                      {"version", io::kContainerVersion},
                      {"schedule", record.schedule},
                      {"T", record.steps()},
                      {"prompt", record.content_prompt},
                      {"seed", record.seed}};
  return io::pack_tensors(std::move(meta), all);
}

inline InversionRecord record_from_container(const io::Container& c) {
  const auto& m = c.metadata;
  ARTIST_CHECK(m.value("format", "") == "artist-inversion", ErrorCode::corrupted_record, "not an inversion record");
  ARTIST_CHECK(m.value("version", 0) == io::kContainerVersion, ErrorCode::corrupted_record,
               "unsupported record version " + std::to_string(m.value("version", 0)));
  ARTIST_CHECK(m.value("dtype", "") == "f64", ErrorCode::corrupted_record, "unsupported dtype");
  InversionRecord rec;
  const int T = m.at("T").get<int>();
  const Shape shape = m.at("shape").get<Shape>();
  const std::size_t numel = shape_numel(shape);
  const std::size_t count = m.at("count").get<std::size_t>();
  ARTIST_CHECK(T >= 1 && count == std::size_t(2 * T + 1), ErrorCode::corrupted_record, "tensor count does not match T");
  ARTIST_CHECK(c.payload.size() == count * numel, ErrorCode::corrupted_record, "payload size does not match metadata");
  rec.content_prompt = m.at("prompt").get<std::string>();
  rec.schedule = m.at("schedule");
  rec.seed = m.at("seed").get<std::uint64_t>();
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t(shape, std::vector<double>(c.payload.begin() + std::ptrdiff_t(i * numel),
                                        c.payload.begin() + std::ptrdiff_t((i + 1) * numel)));
    (i <= std::size_t(T) ? rec.latents : rec.noise_preds).push_back(std::move(t));
  }
  rec.validate();
  return rec;
}

inline void save_record(const InversionRecord& record, const std::filesystem::path& path) {
  io::write_file(path, io::serialize_container(record_to_container(record)));
}

inline InversionRecord load_record(const std::filesystem::path& path) {
  return record_from_container(io::parse_container(io::read_file(path)));
}

}  // namespace artist
