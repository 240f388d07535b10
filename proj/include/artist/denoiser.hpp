#pragma once

#include <atomic>
#include <compare>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "artist/adain.hpp"
#include "artist/error.hpp"
#include "artist/tensor.hpp"

namespace artist {

enum class TapKind { resnet_hidden, resnet_output, self_attn_q, self_attn_k, self_attn_v, cross_attn_q };

inline constexpr TapKind kAllTapKinds[] = {TapKind::resnet_hidden, TapKind::resnet_output, TapKind::self_attn_q,
                                           TapKind::self_attn_k,   TapKind::self_attn_v,   TapKind::cross_attn_q};

inline const char* to_string(TapKind kind) {
  switch (kind) {
    case TapKind::resnet_hidden: return "resnet_hidden";
    case TapKind::resnet_output: return "resnet_output";
    case TapKind::self_attn_q: return "self_attn_q";
    case TapKind::self_attn_k: return "self_attn_k";
    case TapKind::self_attn_v: return "self_attn_v";
    case TapKind::cross_attn_q: return "cross_attn_q";
  }
  return "unknown";
}

inline TapKind parse_tap_kind(std::string_view s) {
  for (TapKind k : kAllTapKinds)
    if (s == to_string(k)) return k;
  throw Error(ErrorCode::invalid_argument, "unknown tap kind '" + std::string(s) + "'");
}

/// Feature location inside the denoiser: 1-based decoder layer plus site kind.
struct TapAddress {
  int layer = 1;
  TapKind kind = TapKind::resnet_hidden;

  auto operator<=>(const TapAddress&) const = default;
};

inline std::string to_string(const TapAddress& tap) { return std::to_string(tap.layer) + ":" + to_string(tap.kind); }

/// Text conditioning handle: token embeddings [tokens, text_dim]. The empty prompt is the
/// unconditional handle.
struct TextEmbedding {
  std::string prompt;
  Tensor tokens;

  bool unconditional() const noexcept { return prompt.empty(); }
};

using Conditioning = std::shared_ptr<const TextEmbedding>;

enum class InjectionMode { replace, adain };

inline const char* to_string(InjectionMode m) { return m == InjectionMode::replace ? "replace" : "adain"; }

struct Injection {
  TapAddress tap;
  Tensor payload;
  InjectionMode mode = InjectionMode::replace;
  /// replace only: feature = blend * payload + (1 - blend) * feature. 1 is an exact swap.
  double blend = 1.0;
};

struct DenoiseRequest {
  Tensor latent;
  int t = 1;
  /// Cumulative signal coefficient at t; backends that condition on noise level read this.
  double alpha_t = 1.0;
  Conditioning conditioning;
  std::set<TapAddress> capture;
  std::vector<Injection> injections;
};

struct DenoiseResponse {
  Tensor eps;
  std::map<TapAddress, Tensor> captured;
};

/// Applies the request's injections at one tap and records a post-injection snapshot when asked.
class TapContext {
 public:
  explicit TapContext(const DenoiseRequest& request) : request_(request) {}

  void visit(const TapAddress& tap, Tensor& feature) {
    for (const Injection& inj : request_.injections) {
      if (inj.tap != tap) continue;
      require_same_shape(feature, inj.payload, ("injection payload at " + to_string(tap)).c_str());
      if (inj.mode == InjectionMode::adain) {
        feature = adain(feature, inj.payload);
      } else if (inj.blend == 1.0) {
        feature = inj.payload;
      } else {
        feature = linear_combination(inj.blend, inj.payload, 1.0 - inj.blend, feature);
      }
    }
    if (request_.capture.contains(tap)) captured_.emplace(tap, feature);
  }

  std::map<TapAddress, Tensor> take_captured() { return std::move(captured_); }

 private:
  const DenoiseRequest& request_;
  std::map<TapAddress, Tensor> captured_;
};

/// Noise-prediction network with addressable decoder taps.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual std::string name() const = 0;
  virtual bool initialized() const = 0;
  virtual int decoder_layer_count() const = 0;
  virtual Shape latent_shape() const = 0;
  virtual Shape feature_shape(const TapAddress& tap) const = 0;
  virtual Conditioning encode_text(const std::string& prompt) const = 0;

  bool valid_tap(const TapAddress& tap) const noexcept {
    return tap.layer >= 1 && tap.layer <= decoder_layer_count();
  }

  DenoiseResponse denoise(const DenoiseRequest& request) const {
    ARTIST_CHECK(initialized(), ErrorCode::uninitialized, "backend is not initialized");
    ARTIST_CHECK(request.latent.shape() == latent_shape(), ErrorCode::shape_mismatch,
                 "latent " + shape_str(request.latent.shape()) + " vs backend " + shape_str(latent_shape()));
    ARTIST_CHECK(request.conditioning != nullptr, ErrorCode::invalid_argument, "missing conditioning handle");
    for (const TapAddress& tap : request.capture)
      ARTIST_CHECK(valid_tap(tap), ErrorCode::invalid_tap, "capture at invalid tap " + to_string(tap));
    for (const Injection& inj : request.injections) {
      ARTIST_CHECK(valid_tap(inj.tap), ErrorCode::invalid_tap, "injection at invalid tap " + to_string(inj.tap));
      ARTIST_CHECK(inj.payload.shape() == feature_shape(inj.tap), ErrorCode::shape_mismatch,
                   "payload " + shape_str(inj.payload.shape()) + " at " + to_string(inj.tap) + " expects " +
                       shape_str(feature_shape(inj.tap)));
    }
    calls_.fetch_add(1, std::memory_order_relaxed);
    return forward(request);
  }

  std::uint64_t call_count() const noexcept { return calls_.load(std::memory_order_relaxed); }
  void reset_call_count() noexcept { calls_.store(0, std::memory_order_relaxed); }

 protected:
  virtual DenoiseResponse forward(const DenoiseRequest& request) const = 0;

 private:
  mutable std::atomic<std::uint64_t> calls_{0};
};

/// Factories for backends that are not compiled in (e.g. a pretrained-weights adapter).
class BackendRegistry {
 public:
  using Factory = std::function<std::unique_ptr<Denoiser>(const std::string& weights_dir)>;

  static BackendRegistry& instance() {
    static BackendRegistry registry;
    return registry;
  }

  void add(const std::string& name, Factory factory) {
    std::lock_guard lock(mutex_);
    factories_[name] = std::move(factory);
  }

  std::unique_ptr<Denoiser> create(const std::string& name, const std::string& weights_dir) const {
    std::lock_guard lock(mutex_);
    auto it = factories_.find(name);
    ARTIST_CHECK(it != factories_.end(), ErrorCode::unavailable,
                 "backend '" + name + "' is not registered in this build");
    return it->second(weights_dir);
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Factory> factories_;
};

}  // namespace artist
