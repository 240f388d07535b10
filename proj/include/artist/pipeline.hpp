#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "artist/adain.hpp"
#include "artist/denoiser.hpp"
#include "artist/inversion.hpp"
#include "artist/schedule.hpp"

namespace artist {

using LayerSet = std::set<int>;

enum class ContentKind { resnet_hidden, resnet_output };
enum class StyleInit { random_noise, inverted_at_tau };

inline const char* to_string(ContentKind k) { return k == ContentKind::resnet_hidden ? "resnet_hidden" : "resnet_output"; }
inline const char* to_string(StyleInit s) { return s == StyleInit::random_noise ? "random_noise" : "inverted_at_tau"; }

inline ContentKind parse_content_kind(std::string_view s) {
  if (s == "resnet_hidden") return ContentKind::resnet_hidden;
  if (s == "resnet_output") return ContentKind::resnet_output;
  throw Error(ErrorCode::invalid_argument, "unknown content kind '" + std::string(s) + "'");
}

inline StyleInit parse_style_init(std::string_view s) {
  if (s == "random_noise") return StyleInit::random_noise;
  if (s == "inverted_at_tau") return StyleInit::inverted_at_tau;
  throw Error(ErrorCode::invalid_argument, "unknown style init '" + std::string(s) + "'");
}

inline TapKind tap_kind(ContentKind k) {
  return k == ContentKind::resnet_hidden ? TapKind::resnet_hidden : TapKind::resnet_output;
}

inline LayerSet layer_range(int first, int last) {
  LayerSet s;
  for (int l = first; l <= last; ++l) s.insert(l);
  return s;
}

/// Which decoder layers feed which control operator.
struct InjectionPlan {
  LayerSet content_layers = layer_range(4, 7);
  ContentKind content_kind = ContentKind::resnet_hidden;
  LayerSet style_layers = layer_range(4, 12);
  LayerSet c2s_layers = layer_range(4, 5);
  /// Blend weight of the content queries in the style branch; 1 replaces them outright.
  double c2s_blend = 1.0;

  void validate(const Denoiser& backend) const {
    auto check = [&](const LayerSet& s, const char* what) {
      for (int l : s)
        ARTIST_CHECK(l >= 1 && l <= backend.decoder_layer_count(), ErrorCode::invalid_tap,
                     std::string(what) + " layer " + std::to_string(l) + " outside [1, " +
                         std::to_string(backend.decoder_layer_count()) + "]");
    };
    check(content_layers, "content");
    check(style_layers, "style");
    check(c2s_layers, "c2s");
    ARTIST_CHECK(c2s_blend >= 0.0 && c2s_blend <= 1.0, ErrorCode::invalid_argument, "c2s_blend must be in [0, 1]");
  }

  friend bool operator==(const InjectionPlan&, const InjectionPlan&) = default;
};

struct StylizationConfig {
  std::string style_prompt;
  std::string content_prompt;
  /// Start step; unset means T. 0 runs no stylization steps.
  std::optional<int> tau;
  GuidanceParams guidance{7.5};
  /// Style-delegation guidance; unset means the main guidance.
  std::optional<double> style_guidance;
  std::uint64_t seed = 0;
  InjectionPlan plan;
  StyleInit style_init = StyleInit::random_noise;
  bool inject_in_uncond_pass = true;
  /// Keep branch latents every `snapshot_stride` steps; 0 disables snapshots.
  int snapshot_stride = 0;
};

enum class Branch { content, style, main };
enum class Pass { uncond, cond };

inline const char* to_string(Branch b) {
  switch (b) {
    case Branch::content: return "content";
    case Branch::style: return "style";
    case Branch::main: return "main";
  }
  return "unknown";
}
inline const char* to_string(Pass p) { return p == Pass::uncond ? "uncond" : "cond"; }

struct TapDiagnostic {
  int step;
  Branch branch;
  Pass pass;
  TapAddress tap;
  double norm;
  bool injected;
};

struct LatentSnapshot {
  int step;
  Branch branch;
  Tensor latent;
};

struct StylizationDiagnostics {
  std::vector<TapDiagnostic> taps;
  std::vector<LatentSnapshot> snapshots;
  std::uint64_t denoise_calls = 0;
};

struct StylizationResult {
  Tensor latent_out;
  StylizationDiagnostics diagnostics;
};

/// Observer invoked after every denoise call of the stylization loop.
using BranchObserver = std::function<void(int step, Branch, Pass, const DenoiseRequest&, const DenoiseResponse&)>;

/// One line per tap: {step, branch, pass, tap, norm, injected}.
inline std::string diagnostics_jsonl(const StylizationDiagnostics& d) {
  std::string out;
  for (const TapDiagnostic& t : d.taps) {
    nlohmann::json j{{"step", t.step},       {"branch", to_string(t.branch)}, {"pass", to_string(t.pass)},
                     {"tap", to_string(t.tap)}, {"norm", t.norm},              {"injected", t.injected}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace detail {

struct PassPlan {
  Pass pass;
  Conditioning conditioning;
  bool inject;
};

inline std::vector<PassPlan> passes_for(double scale, const Conditioning& uncond, const Conditioning& cond,
                                        bool inject_uncond) {
  if (scale == 1.0) return {{Pass::cond, cond, true}};
  return {{Pass::uncond, uncond, inject_uncond}, {Pass::cond, cond, true}};
}

inline Tensor combine_passes(const std::map<Pass, Tensor>& eps, double scale) {
  if (eps.size() == 1) return eps.begin()->second;
  return cfg_combine(eps.at(Pass::uncond), eps.at(Pass::cond), {scale});
}

}  // namespace detail

/// Runs the three-branch stylization loop from step tau down to 1.
///
/// Per step: the content delegation replays the recorded latent and yields content features
/// and cross-attention queries; the style delegation denoises its own latent under the style
/// prompt with the content queries injected; the main branch denoises with content features
/// swapped in and self-attention K/V renormalized to the style delegation's statistics.
/// Branches without a consumer (no injection reads them) are skipped.
inline StylizationResult stylize(const InversionRecord& record, const StylizationConfig& config,
                                 const NoiseSchedule& schedule, const Denoiser& backend,
                                 const BranchObserver& observer = {}) {
  record.validate();
  record.require_schedule(schedule);
  ARTIST_CHECK(record.latents.front().shape() == backend.latent_shape(), ErrorCode::shape_mismatch,
               "record latents do not match the backend");
  const InjectionPlan& plan = config.plan;
  plan.validate(backend);
  const int T = schedule.steps();
  const int tau = config.tau.value_or(T);
  ARTIST_CHECK(tau >= 0 && tau <= T, ErrorCode::out_of_range,
               "tau " + std::to_string(tau) + " outside [0, " + std::to_string(T) + "]");
  ARTIST_CHECK(config.guidance.scale >= 0.0, ErrorCode::invalid_argument, "guidance scale must be >= 0");

  const double main_scale = config.guidance.scale;
  const double style_scale = config.style_guidance.value_or(main_scale);
  const Conditioning y_c = backend.encode_text(config.content_prompt);
  const Conditioning y_s = backend.encode_text(config.style_prompt);
  const Conditioning y_0 = backend.encode_text("");
  const TapKind content_tap = tap_kind(plan.content_kind);

  const bool run_style = !plan.style_layers.empty();
  const bool run_content = !plan.content_layers.empty() || (run_style && !plan.c2s_layers.empty());
  const std::uint64_t calls_before = backend.call_count();

  StylizationResult result;
  auto& diag = result.diagnostics;

  Tensor x_main = record.latents[std::size_t(tau)];
  Tensor x_style;
  if (run_style && tau > 0) {
    if (config.style_init == StyleInit::inverted_at_tau) {
      x_style = record.latents[std::size_t(tau)];
    } else {
      const double scale = tau == T ? 1.0 : std::sqrt(1.0 - schedule.alpha(tau));
      x_style = randn(backend.latent_shape(), mix_seed(config.seed, 0x5717e5ULL), scale);
    }
  }

  auto record_taps = [&](int step, Branch branch, Pass pass, const DenoiseRequest& req, const DenoiseResponse& resp) {
    for (const auto& [tap, feature] : resp.captured) {
      bool injected = false;
      for (const Injection& inj : req.injections) injected = injected || inj.tap == tap;
      diag.taps.push_back({step, branch, pass, tap, l2_norm(feature), injected});
    }
    if (observer) observer(step, branch, pass, req, resp);
  };
  auto require_finite = [](const Tensor& x, int step, const char* where) {
    if (!all_finite(x)) throw NonFiniteError(step, where);
  };

  for (int t = tau; t >= 1; --t) {
    const double alpha_t = schedule.alpha(t);
    auto base_request = [&](const Tensor& latent, const Conditioning& c) {
      DenoiseRequest req;
      req.latent = latent;
      req.t = t;
      req.alpha_t = alpha_t;
      req.conditioning = c;
      return req;
    };

    // Content delegation: exact replay of the recorded trajectory.
    DenoiseResponse content;
    if (run_content) {
      DenoiseRequest req = base_request(record.latents[std::size_t(t)], y_c);
      for (int l : plan.content_layers) req.capture.insert({l, content_tap});
      if (run_style)
        for (int l : plan.c2s_layers) req.capture.insert({l, TapKind::cross_attn_q});
      content = backend.denoise(req);
      record_taps(t, Branch::content, Pass::cond, req, content);
    }

    // Style delegation.
    std::map<Pass, DenoiseResponse> style_passes;
    if (run_style) {
      std::map<Pass, Tensor> eps;
      for (const auto& pp : detail::passes_for(style_scale, y_0, y_s, config.inject_in_uncond_pass)) {
        DenoiseRequest req = base_request(x_style, pp.conditioning);
        if (pp.inject)
          for (int l : plan.c2s_layers) {
            req.capture.insert({l, TapKind::cross_attn_q});
            req.injections.push_back(
                {{l, TapKind::cross_attn_q}, content.captured.at({l, TapKind::cross_attn_q}), InjectionMode::replace,
                 plan.c2s_blend});
          }
        for (int l : plan.style_layers) {
          req.capture.insert({l, TapKind::self_attn_k});
          req.capture.insert({l, TapKind::self_attn_v});
        }
        DenoiseResponse resp = backend.denoise(req);
        record_taps(t, Branch::style, pp.pass, req, resp);
        eps[pp.pass] = resp.eps;
        style_passes.emplace(pp.pass, std::move(resp));
      }
      x_style = ddim_step(x_style, detail::combine_passes(eps, style_scale), t, schedule);
      require_finite(x_style, t, "style delegation");
    }

    // Main branch.
    {
      std::map<Pass, Tensor> eps;
      for (const auto& pp : detail::passes_for(main_scale, y_0, y_s, config.inject_in_uncond_pass)) {
        DenoiseRequest req = base_request(x_main, pp.conditioning);
        for (int l : plan.content_layers) {
          req.capture.insert({l, content_tap});
          if (pp.inject) req.injections.push_back({{l, content_tap}, content.captured.at({l, content_tap}), InjectionMode::replace, 1.0});
        }
        if (run_style) {
          const DenoiseResponse& ref =
              style_passes.contains(pp.pass) ? style_passes.at(pp.pass) : style_passes.at(Pass::cond);
          for (int l : plan.style_layers) {
            for (TapKind kind : {TapKind::self_attn_k, TapKind::self_attn_v}) {
              req.capture.insert({l, kind});
              if (pp.inject) req.injections.push_back({{l, kind}, ref.captured.at({l, kind}), InjectionMode::adain, 1.0});
            }
          }
        }
        DenoiseResponse resp = backend.denoise(req);
        record_taps(t, Branch::main, pp.pass, req, resp);
        eps[pp.pass] = std::move(resp.eps);
      }
      x_main = ddim_step(x_main, detail::combine_passes(eps, main_scale), t, schedule);
      require_finite(x_main, t, "main branch");
    }

    if (config.snapshot_stride > 0 && (t - 1) % config.snapshot_stride == 0) {
      diag.snapshots.push_back({t - 1, Branch::content, record.latents[std::size_t(t - 1)]});
      if (run_style) diag.snapshots.push_back({t - 1, Branch::style, x_style});
      diag.snapshots.push_back({t - 1, Branch::main, x_main});
    }
  }

  diag.denoise_calls = backend.call_count() - calls_before;
  result.latent_out = std::move(x_main);
  return result;
}

enum class AblationAxis { content_layers, style_layers, c2s_layers, tau, guidance_scale, content_kind, style_init };

inline const char* to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::content_layers: return "content_layers";
    case AblationAxis::style_layers: return "style_layers";
    case AblationAxis::c2s_layers: return "c2s_layers";
    case AblationAxis::tau: return "tau";
    case AblationAxis::guidance_scale: return "guidance_scale";
    case AblationAxis::content_kind: return "content_kind";
    case AblationAxis::style_init: return "style_init";
  }
  return "unknown";
}

inline AblationAxis parse_ablation_axis(std::string_view s) {
  for (auto a : {AblationAxis::content_layers, AblationAxis::style_layers, AblationAxis::c2s_layers, AblationAxis::tau,
                 AblationAxis::guidance_scale, AblationAxis::content_kind, AblationAxis::style_init})
    if (s == to_string(a)) return a;
  if (s == "guidance") return AblationAxis::guidance_scale;
  throw Error(ErrorCode::invalid_argument, "unknown ablation axis '" + std::string(s) + "'");
}

using AblationValue = std::variant<LayerSet, int, double, ContentKind, StyleInit>;

/// Returns base with `axis` set to `value`; throws when the value type does not fit the axis.
inline StylizationConfig apply_ablation(StylizationConfig base, AblationAxis axis, const AblationValue& value) {
  auto want = [&]<typename V>(std::type_identity<V>) -> const V& {
    const V* v = std::get_if<V>(&value);
    ARTIST_CHECK(v != nullptr, ErrorCode::invalid_argument, std::string("wrong value type for axis ") + to_string(axis));
    return *v;
  };
  switch (axis) {
    case AblationAxis::content_layers: base.plan.content_layers = want(std::type_identity<LayerSet>{}); break;
    case AblationAxis::style_layers: base.plan.style_layers = want(std::type_identity<LayerSet>{}); break;
    case AblationAxis::c2s_layers: base.plan.c2s_layers = want(std::type_identity<LayerSet>{}); break;
    case AblationAxis::tau: base.tau = want(std::type_identity<int>{}); break;
    case AblationAxis::guidance_scale: {
      if (const int* i = std::get_if<int>(&value)) base.guidance.scale = double(*i);
      else base.guidance.scale = want(std::type_identity<double>{});
      break;
    }
    case AblationAxis::content_kind: base.plan.content_kind = want(std::type_identity<ContentKind>{}); break;
    case AblationAxis::style_init: base.style_init = want(std::type_identity<StyleInit>{}); break;
  }
  return base;
}

/// One stylize run per value; everything else (seeds included) held fixed.
inline std::vector<StylizationResult> sweep_ablation(const InversionRecord& record, const StylizationConfig& base,
                                                     AblationAxis axis, const std::vector<AblationValue>& values,
                                                     const NoiseSchedule& schedule, const Denoiser& backend,
                                                     const std::function<BranchObserver(std::size_t)>& observer_for = {}) {
  std::vector<StylizationResult> out;
  out.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const StylizationConfig cfg = apply_ablation(base, axis, values[i]);
    out.push_back(stylize(record, cfg, schedule, backend, observer_for ? observer_for(i) : BranchObserver{}));
  }
  return out;
}

}  // namespace artist
