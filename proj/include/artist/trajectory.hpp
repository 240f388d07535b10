#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "artist/adain.hpp"
#include "artist/inversion.hpp"
#include "artist/pipeline.hpp"
#include "artist/schedule.hpp"

namespace artist {

/// How per-step weights are aggregated into the content-modification proxy C(tau).
enum class Aggregation { quadrature, linear };

inline const char* to_string(Aggregation a) { return a == Aggregation::quadrature ? "quadrature" : "linear"; }

struct TrajectoryCurves {
  std::vector<int> taus;
  /// S(tau) = sum_{k <= tau} |w_k|.
  std::vector<double> style_mass;
  /// C(tau): sqrt(sum w_k^2) under quadrature, sum |w_k| under linear.
  std::vector<double> content_mass;
  std::vector<double> empirical_content;
  std::vector<double> empirical_style;
};

/// Theoretical curves for every tau in `taus` (default 0..T) under unit noise scale.
inline TrajectoryCurves theoretical_curves(const NoiseSchedule& schedule, std::vector<int> taus = {},
                                           Aggregation aggregation = Aggregation::quadrature) {
  const int T = schedule.steps();
  if (taus.empty())
    for (int t = 0; t <= T; ++t) taus.push_back(t);
  // Weights do not depend on tau; only the segment tags do.
  const UnrolledTrajectory u = unroll_weights(schedule, T);
  std::vector<double> abs_prefix{0.0}, sq_prefix{0.0};
  for (int k = 1; k <= T; ++k) {
    abs_prefix.push_back(abs_prefix.back() + std::abs(u.weight(k)));
    sq_prefix.push_back(sq_prefix.back() + u.weight(k) * u.weight(k));
  }
  TrajectoryCurves c;
  for (int tau : taus) {
    ARTIST_CHECK(tau >= 0 && tau <= T, ErrorCode::out_of_range, "tau outside [0, T]");
    c.taus.push_back(tau);
    c.style_mass.push_back(abs_prefix[std::size_t(tau)]);
    c.content_mass.push_back(aggregation == Aggregation::quadrature ? std::sqrt(sq_prefix[std::size_t(tau)])
                                                                    : abs_prefix[std::size_t(tau)]);
  }
  return c;
}

/// Ten evenly spaced starting steps in [T/10, T].
inline std::vector<int> default_tau_grid(int T) {
  std::vector<int> taus;
  for (int i = 1; i <= 10; ++i) taus.push_back(std::max(1, int(std::lround(double(T) * i / 10.0))));
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  return taus;
}

using LatentDistance = std::function<double(const Tensor&, const Tensor&)>;

/// RMS distance after standardizing every channel; insensitive to channel mean/scale shifts.
inline double structure_distance(const Tensor& a, const Tensor& b) {
  auto standardize = [](const Tensor& x) {
    const ChannelStats s = channel_stats(x);
    return adain_to_stats(x, ChannelStats{std::vector<double>(s.mean.size(), 0.0),
                                          std::vector<double>(s.mean.size(), 1.0)});
  };
  return rms_diff(standardize(a), standardize(b));
}

/// Channel statistics of backend features at the style layers, computed on a clean latent
/// (lowest noise level, unconditional). Distance is averaged over taps.
class FeatureStyleMetric {
 public:
  FeatureStyleMetric(const Denoiser& backend, const NoiseSchedule& schedule, LayerSet layers = layer_range(4, 12))
      : backend_(backend), alpha_(schedule.alpha(1)), layers_(std::move(layers)), uncond_(backend.encode_text("")) {}

  std::vector<ChannelStats> stats(const Tensor& latent) const {
    DenoiseRequest req;
    req.latent = latent;
    req.t = 1;
    req.alpha_t = alpha_;
    req.conditioning = uncond_;
    for (int l : layers_) {
      req.capture.insert({l, TapKind::self_attn_k});
      req.capture.insert({l, TapKind::self_attn_v});
    }
    std::vector<ChannelStats> out;
    for (const auto& [tap, feature] : backend_.denoise(req).captured) out.push_back(channel_stats(feature));
    return out;
  }

  static double distance(const std::vector<ChannelStats>& a, const std::vector<ChannelStats>& b) {
    ARTIST_CHECK(a.size() == b.size(), ErrorCode::shape_mismatch, "style statistics tap count mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += stats_distance(a[i], b[i]);
    return a.empty() ? 0.0 : acc / double(a.size());
  }

  double operator()(const Tensor& a, const Tensor& b) const { return distance(stats(a), stats(b)); }

 private:
  const Denoiser& backend_;
  double alpha_;
  LayerSet layers_;
  Conditioning uncond_;
};

struct EmpiricalSweepOptions {
  double guidance = 7.5;
  std::uint64_t pure_style_seed = 0;
};

/// Plain inversion-based stylization (no delegations) for each tau: the recorded noise carries
/// x_T down to x_tau, then the style prompt drives fresh CFG predictions to x_0.
/// empirical_content = distance(x_0(tau), reconstruction);
/// empirical_style = style_metric(reconstruction, pure) - style_metric(x_0(tau), pure), i.e. how
/// far the statistics have moved towards a pure style sample drawn from random noise.
inline TrajectoryCurves empirical_sweep(const InversionRecord& record, const std::string& style_prompt,
                                        const std::vector<int>& taus, const NoiseSchedule& schedule,
                                        const Denoiser& backend, const LatentDistance& distance,
                                        const LatentDistance& style_metric, EmpiricalSweepOptions options = {}) {
  record.validate();
  record.require_schedule(schedule);
  const int T = schedule.steps();
  for (int tau : taus)
    ARTIST_CHECK(tau >= 0 && tau <= T, ErrorCode::out_of_range, "tau " + std::to_string(tau) + " outside [0, T]");

  // Content segment: replay recorded noise from x_T, keeping every intermediate.
  std::vector<Tensor> replay(std::size_t(T) + 1);
  replay[std::size_t(T)] = record.latents.back();
  for (int t = T; t >= 1; --t)
    replay[std::size_t(t - 1)] = ddim_step(replay[std::size_t(t)], record.noise_preds[std::size_t(t - 1)], t, schedule);
  const Tensor& recon = replay[0];

  const Tensor pure = sample_ddim(randn(backend.latent_shape(), mix_seed(options.pure_style_seed, 0x9a4eULL)), T,
                                  style_prompt, options.guidance, schedule, backend);
  const double recon_to_pure = style_metric(recon, pure);

  TrajectoryCurves c;
  for (int tau : taus) {
    const Tensor x0 = tau == 0 ? recon
                               : sample_ddim(replay[std::size_t(tau)], tau, style_prompt, options.guidance, schedule, backend);
    c.taus.push_back(tau);
    c.empirical_content.push_back(distance(x0, recon));
    c.empirical_style.push_back(tau == 0 ? 0.0 : recon_to_pure - style_metric(x0, pure));
  }
  return c;
}

struct GrowthFit {
  double exponent = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t used = 0;
  std::vector<std::string> warnings;
};

/// Least-squares slope of log(value) against log(tau). Non-positive entries are dropped with a warning.
inline GrowthFit fit_growth_exponent(const std::vector<double>& taus, const std::vector<double>& values) {
  ARTIST_CHECK(taus.size() == values.size(), ErrorCode::invalid_argument, "taus and values differ in length");
  GrowthFit fit;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0) || !(values[i] > 0.0) || !std::isfinite(values[i])) {
      fit.warnings.push_back("dropped non-positive pair (" + std::to_string(taus[i]) + ", " + std::to_string(values[i]) + ")");
      continue;
    }
    lx.push_back(std::log(taus[i]));
    ly.push_back(std::log(values[i]));
  }
  fit.used = lx.size();
  ARTIST_CHECK(fit.used >= 4, ErrorCode::invalid_argument,
               "need at least 4 positive pairs, have " + std::to_string(fit.used));
  const double n = double(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  ARTIST_CHECK(sxx > 0.0, ErrorCode::invalid_argument, "degenerate tau grid");
  fit.exponent = sxy / sxx;
  fit.intercept = my - fit.exponent * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (fit.intercept + fit.exponent * lx[i]);
    ss_res += r * r;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

inline GrowthFit fit_growth_exponent(const std::vector<int>& taus, const std::vector<double>& values) {
  return fit_growth_exponent(std::vector<double>(taus.begin(), taus.end()), values);
}

/// Per-tau means over several sweeps sharing the same tau grid.
inline TrajectoryCurves average_curves(const std::vector<TrajectoryCurves>& runs) {
  ARTIST_CHECK(!runs.empty(), ErrorCode::invalid_argument, "nothing to average");
  TrajectoryCurves mean = runs.front();
  for (std::size_t r = 1; r < runs.size(); ++r) {
    ARTIST_CHECK(runs[r].taus == mean.taus, ErrorCode::invalid_argument, "sweeps use different tau grids");
    for (std::size_t i = 0; i < mean.taus.size(); ++i) {
      mean.empirical_content[i] += runs[r].empirical_content[i];
      mean.empirical_style[i] += runs[r].empirical_style[i];
    }
  }
  for (std::size_t i = 0; i < mean.taus.size(); ++i) {
    mean.empirical_content[i] /= double(runs.size());
    mean.empirical_style[i] /= double(runs.size());
  }
  return mean;
}

}  // namespace artist
