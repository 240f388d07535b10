#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "artist/denoiser.hpp"
#include "artist/tensor.hpp"

namespace artist {

struct ToyBackendConfig {
  int decoder_layer_count = 12;
  Shape latent_shape{4, 16, 16};
  /// Channel width of every internal feature (and of attention Q/K/V).
  std::size_t token_dim = 16;
  std::size_t text_dim = 24;
  std::size_t max_prompt_tokens = 16;
  int encoder_blocks = 2;
  double residual_scale = 0.5;
  double cross_attn_scale = 1.0;
  /// Multiplies cross-attention logits; small values make text attention nearly position-independent.
  double cross_attn_logit_scale = 1.0;
  double output_scale = 0.75;
  /// Scales text influence by (1 - alpha)^text_gate_power: conditioning matters at high noise, not near x_0.
  bool gate_text_by_noise = true;
  double text_gate_power = 1.0;
  /// Weight of the time embedding added to the cross-attention query input.
  double cross_query_time_mix = 1.0;
};

namespace toy {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline Tensor silu(Tensor x) {
  for (double& v : x) v = silu(v);
  return x;
}

/// Whole-tensor RMS normalization; keeps relative channel statistics.
inline Tensor rms_normalize(Tensor x) {
  const double r = rms(x);
  const double inv = 1.0 / std::sqrt(r * r + 1e-6);
  for (double& v : x) v *= inv;
  return x;
}

struct Conv3x3 {
  std::size_t in = 0, out = 0;
  std::vector<double> weight;  // [out][in][3][3]
  std::vector<double> bias;

  Conv3x3() = default;
  Conv3x3(std::size_t in_ch, std::size_t out_ch, Rng& rng, double gain = 1.0) : in(in_ch), out(out_ch) {
    const double s = gain / std::sqrt(double(in_ch * 9));
    weight.resize(out * in * 9);
    for (double& w : weight) w = s * rng.normal();
    bias.resize(out);
    for (double& b : bias) b = 0.1 * rng.normal();
  }

  Tensor operator()(const Tensor& x) const {
    const std::size_t H = x.dim(1), W = x.dim(2), PW = W + 2, PH = H + 2;
    // Zero-padded copy so the inner loop is branch-free.
    std::vector<double> padded(in * PH * PW, 0.0);
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t r = 0; r < H; ++r)
        std::copy_n(x.data() + (i * H + r) * W, W, padded.data() + (i * PH + r + 1) * PW + 1);
    Tensor y({out, H, W});
    for (std::size_t o = 0; o < out; ++o) {
      double* dst = y.data() + o * H * W;
      std::fill_n(dst, H * W, bias[o]);
      for (std::size_t i = 0; i < in; ++i) {
        const double* src = padded.data() + i * PH * PW;
        const double* k = weight.data() + (o * in + i) * 9;
        for (std::size_t r = 0; r < H; ++r) {
          double* row = dst + r * W;
          for (std::size_t dr = 0; dr < 3; ++dr) {
            const double* s = src + (r + dr) * PW;
            const double k0 = k[dr * 3], k1 = k[dr * 3 + 1], k2 = k[dr * 3 + 2];
            for (std::size_t c = 0; c < W; ++c) row[c] += k0 * s[c] + k1 * s[c + 1] + k2 * s[c + 2];
          }
        }
      }
    }
    return y;
  }
};

/// Dense map over the leading (channel) axis: [in, N] -> [out, N].
struct Linear {
  std::size_t in = 0, out = 0;
  std::vector<double> weight;  // [out][in]

  Linear() = default;
  Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng, double gain = 1.0) : in(in_dim), out(out_dim) {
    const double s = gain / std::sqrt(double(in_dim));
    weight.resize(in * out);
    for (double& w : weight) w = s * rng.normal();
  }

  Tensor operator()(const Tensor& x) const {
    const std::size_t n = x.size() / in;
    Tensor y({out, n});
    for (std::size_t o = 0; o < out; ++o) {
      double* dst = y.data() + o * n;
      for (std::size_t i = 0; i < in; ++i) {
        const double w = weight[o * in + i];
        const double* src = x.data() + i * n;
        for (std::size_t p = 0; p < n; ++p) dst[p] += w * src[p];
      }
    }
    return y;
  }

  std::vector<double> apply(const std::vector<double>& v) const {
    std::vector<double> y(out, 0.0);
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < in; ++i) y[o] += weight[o * in + i] * v[i];
    return y;
  }
};

/// softmax(Q^T K * scale / sqrt(d)) applied to V. Q: [d, n], K: [d, m], V: [dv, m] -> [dv, n].
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double logit_scale = 1.0) {
  const std::size_t d = q.dim(0), n = q.dim(1), m = k.dim(1), dv = v.dim(0);
  const double scale = logit_scale / std::sqrt(double(d));
  std::vector<double> qt(n * d), kt(m * d), vt(m * dv);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < n; ++i) qt[i * d + c] = q[c * n + i];
    for (std::size_t j = 0; j < m; ++j) kt[j * d + c] = k[c * m + j];
  }
  for (std::size_t c = 0; c < dv; ++c)
    for (std::size_t j = 0; j < m; ++j) vt[j * dv + c] = v[c * m + j];
  Tensor out({dv, n});
  std::vector<double> logits(m), acc(dv);
  for (std::size_t i = 0; i < n; ++i) {
    const double* qi = qt.data() + i * d;
    double peak = -INFINITY;
    for (std::size_t j = 0; j < m; ++j) {
      const double* kj = kt.data() + j * d;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += qi[c] * kj[c];
      logits[j] = dot * scale;
      peak = std::max(peak, logits[j]);
    }
    double total = 0.0;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const double p = std::exp(logits[j] - peak);
      total += p;
      const double* vj = vt.data() + j * dv;
      for (std::size_t c = 0; c < dv; ++c) acc[c] += p * vj[c];
    }
    for (std::size_t c = 0; c < dv; ++c) out[c * n + i] = acc[c] / total;
  }
  return out;
}

inline Tensor avg_pool2(const Tensor& x) {
  const std::size_t C = x.dim(0), H = x.dim(1) / 2, W = x.dim(2) / 2, W2 = x.dim(2);
  Tensor y({C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t q = 0; q < W; ++q) {
        const double* s = x.data() + c * x.dim(1) * W2;
        y[(c * H + r) * W + q] =
            0.25 * (s[2 * r * W2 + 2 * q] + s[2 * r * W2 + 2 * q + 1] + s[(2 * r + 1) * W2 + 2 * q] +
                    s[(2 * r + 1) * W2 + 2 * q + 1]);
      }
  return y;
}

inline Tensor upsample2(const Tensor& x) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor y({C, 2 * H, 2 * W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < 2 * H; ++r)
      for (std::size_t q = 0; q < 2 * W; ++q) y[(c * 2 * H + r) * 2 * W + q] = x[(c * H + r / 2) * W + q / 2];
  return y;
}

inline Tensor reshape(Tensor x, Shape shape) { return Tensor(std::move(shape), std::vector<double>(x.begin(), x.end())); }

inline void add_inplace(Tensor& a, const Tensor& b, double scale = 1.0) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
}

}  // namespace toy

/// Small deterministic encoder/bottleneck/decoder noise predictor with seeded weights.
///
/// The network output v is read as a velocity, so eps = sqrt(1 - alpha) x + sqrt(alpha) v.
/// Each decoder layer is resblock -> self-attention -> cross-attention, and exposes the
/// resblock hidden activation (after conv1 + SiLU, before conv2), the resblock output,
/// self-attention Q/K/V and the cross-attention Q.
class ToyBackend final : public Denoiser {
 public:
  ToyBackend() = default;

  ToyBackend(std::uint64_t seed, ToyBackendConfig config) : seed_(seed), cfg_(std::move(config)) {
    ARTIST_CHECK(cfg_.decoder_layer_count >= 1, ErrorCode::invalid_argument, "decoder_layer_count must be >= 1");
    ARTIST_CHECK(cfg_.latent_shape.size() == 3 && cfg_.latent_shape[0] > 0 && cfg_.latent_shape[1] >= 2 &&
                     cfg_.latent_shape[2] >= 2 && cfg_.latent_shape[1] % 2 == 0 && cfg_.latent_shape[2] % 2 == 0,
                 ErrorCode::invalid_argument, "latent shape must be [C, H, W] with even H and W");
    ARTIST_CHECK(cfg_.token_dim >= 2 && cfg_.token_dim % 2 == 0 && cfg_.text_dim >= 1, ErrorCode::invalid_argument,
                 "token_dim must be even and >= 2, text_dim >= 1");
    build();
    initialized_ = true;
  }

  std::string name() const override { return "toy"; }
  bool initialized() const override { return initialized_; }
  int decoder_layer_count() const override { return cfg_.decoder_layer_count; }
  Shape latent_shape() const override { return cfg_.latent_shape; }
  const ToyBackendConfig& config() const noexcept { return cfg_; }
  std::uint64_t seed() const noexcept { return seed_; }

  Shape feature_shape(const TapAddress& tap) const override {
    const std::size_t h = cfg_.latent_shape[1] / 2, w = cfg_.latent_shape[2] / 2;
    switch (tap.kind) {
      case TapKind::resnet_hidden:
      case TapKind::resnet_output: return {cfg_.token_dim, h, w};
      default: return {cfg_.token_dim, h * w};
    }
  }

  /// Lower-cased alphanumeric words, each hashed to a fixed embedding; always led by a BOS token.
  Conditioning encode_text(const std::string& prompt) const override {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : prompt) {
      if (std::isalnum(static_cast<unsigned char>(ch))) {
        cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
      } else if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    if (words.size() + 1 > cfg_.max_prompt_tokens) words.resize(cfg_.max_prompt_tokens - 1);

    const std::size_t m = words.size() + 1;
    Tensor tokens({cfg_.text_dim, m});
    auto fill = [&](std::size_t col, std::uint64_t token_seed) {
      Rng rng(mix_seed(seed_, token_seed));
      for (std::size_t c = 0; c < cfg_.text_dim; ++c) tokens[c * m + col] = rng.normal();
    };
    fill(0, fnv1a("<bos>"));
    for (std::size_t i = 0; i < words.size(); ++i) fill(i + 1, fnv1a(words[i]) ^ (0x51ed270b27ULL * (i + 1)));
    return std::make_shared<const TextEmbedding>(TextEmbedding{prompt, std::move(tokens)});
  }

 protected:
  DenoiseResponse forward(const DenoiseRequest& req) const override {
    using namespace toy;
    TapContext taps(req);
    const double alpha = req.alpha_t;
    ARTIST_CHECK(alpha > 0.0 && alpha <= 1.0, ErrorCode::invalid_argument, "alpha_t must be in (0, 1]");
    const std::vector<double> temb = time_embedding(alpha);
    const Tensor& text = req.conditioning->tokens;
    ARTIST_CHECK(text.dim(0) == cfg_.text_dim, ErrorCode::shape_mismatch, "conditioning from an incompatible backend");

    const double text_gain = cfg_.cross_attn_scale * (cfg_.gate_text_by_noise ? std::pow(1.0 - alpha, cfg_.text_gate_power) : 1.0);
    Tensor skip = stem_(req.latent);
    Tensor h = avg_pool2(skip);
    for (std::size_t b = 0; b < encoder_.size(); ++b) h = resblock(encoder_[b], h, temb, nullptr, 0);
    h = resblock(bottleneck_, h, temb, nullptr, 0);
    h = self_attention(bottleneck_attn_, h, nullptr, 0);

    for (int l = 1; l <= cfg_.decoder_layer_count; ++l) {
      const Layer& layer = decoder_[std::size_t(l - 1)];
      h = resblock(layer.res, h, temb, &taps, l);
      h = self_attention(layer.self_attn, h, &taps, l);
      h = cross_attention(layer.cross_attn, h, text, temb, text_gain, &taps, l);
    }

    Tensor up = upsample2(h);
    add_inplace(up, skip);
    Tensor v = head_(silu(rms_normalize(std::move(up))));
    const double a = std::sqrt(1.0 - alpha), b = std::sqrt(alpha) * cfg_.output_scale;
    Tensor eps(req.latent.shape());
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = a * req.latent[i] + b * v[i];
    return {std::move(eps), taps.take_captured()};
  }

 private:
  struct ResBlock {
    toy::Conv3x3 conv1, conv2;
    toy::Linear time_proj;
  };
  struct SelfAttn {
    toy::Linear q, k, v, o;
  };
  struct CrossAttn {
    toy::Linear q, k, v, o;
  };
  struct Layer {
    ResBlock res;
    SelfAttn self_attn;
    CrossAttn cross_attn;
  };

  void build() {
    using namespace toy;
    Rng rng(mix_seed(seed_, 0x70ba5eULL));
    const std::size_t d = cfg_.token_dim, c = cfg_.latent_shape[0];
    auto make_res = [&] { return ResBlock{Conv3x3(d, d, rng), Conv3x3(d, d, rng), Linear(d, d, rng)}; };
    auto make_self = [&] { return SelfAttn{Linear(d, d, rng), Linear(d, d, rng), Linear(d, d, rng), Linear(d, d, rng)}; };
    stem_ = Conv3x3(c, d, rng);
    time_in_ = Linear(d, d, rng);
    for (int i = 0; i < cfg_.encoder_blocks; ++i) encoder_.push_back(make_res());
    bottleneck_ = make_res();
    bottleneck_attn_ = make_self();
    for (int l = 0; l < cfg_.decoder_layer_count; ++l) {
      Layer layer{make_res(), make_self(), {}};
      layer.cross_attn = CrossAttn{Linear(d, d, rng), Linear(cfg_.text_dim, d, rng), Linear(cfg_.text_dim, d, rng),
                                   Linear(d, d, rng)};
      decoder_.push_back(std::move(layer));
    }
    head_ = Conv3x3(d, c, rng);
  }

  /// Sinusoidal features of the log signal-to-noise ratio.
  std::vector<double> time_embedding(double alpha) const {
    const double logsnr = alpha >= 1.0 ? 20.0 : std::log(alpha / (1.0 - alpha));
    const std::size_t half = cfg_.token_dim / 2;
    std::vector<double> feat(cfg_.token_dim);
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(50.0) * double(i) / double(half));
      feat[i] = std::sin(logsnr * freq);
      feat[i + half] = std::cos(logsnr * freq);
    }
    std::vector<double> out = time_in_.apply(feat);
    for (double& v : out) v = toy::silu(v);
    return out;
  }

  Tensor resblock(const ResBlock& blk, const Tensor& x, const std::vector<double>& temb, TapContext* taps, int layer) const {
    using namespace toy;
    Tensor hidden = blk.conv1(rms_normalize(x));
    const std::vector<double> shift = blk.time_proj.apply(temb);
    const std::size_t per = hidden.size() / shift.size();
    for (std::size_t c = 0; c < shift.size(); ++c)
      for (std::size_t p = 0; p < per; ++p) hidden[c * per + p] = silu(hidden[c * per + p] + shift[c]);
    if (taps) taps->visit({layer, TapKind::resnet_hidden}, hidden);
    Tensor out = x;
    add_inplace(out, blk.conv2(hidden), cfg_.residual_scale);
    if (taps) taps->visit({layer, TapKind::resnet_output}, out);
    return out;
  }

  Tensor self_attention(const SelfAttn& a, const Tensor& x, TapContext* taps, int layer) const {
    using namespace toy;
    const Shape spatial = x.shape();
    const Tensor tokens = reshape(rms_normalize(x), {spatial[0], spatial[1] * spatial[2]});
    Tensor q = a.q(tokens), k = a.k(tokens), v = a.v(tokens);
    if (taps) {
      taps->visit({layer, TapKind::self_attn_q}, q);
      taps->visit({layer, TapKind::self_attn_k}, k);
      taps->visit({layer, TapKind::self_attn_v}, v);
    }
    Tensor out = x;
    add_inplace(out, reshape(a.o(attention(q, k, v)), spatial), cfg_.residual_scale);
    return out;
  }

  Tensor cross_attention(const CrossAttn& a, const Tensor& x, const Tensor& text, const std::vector<double>& temb,
                         double gain, TapContext* taps, int layer) const {
    using namespace toy;
    const Shape spatial = x.shape();
    Tensor tokens = reshape(rms_normalize(x), {spatial[0], spatial[1] * spatial[2]});
    const std::size_t n = tokens.dim(1);
    for (std::size_t c = 0; c < temb.size(); ++c)
      for (std::size_t p = 0; p < n; ++p) tokens[c * n + p] += cfg_.cross_query_time_mix * temb[c];
    Tensor q = a.q(tokens);
    if (taps) taps->visit({layer, TapKind::cross_attn_q}, q);
    Tensor out = x;
    add_inplace(out, reshape(a.o(attention(q, a.k(text), a.v(text), cfg_.cross_attn_logit_scale)), spatial), gain);
    return out;
  }

  std::uint64_t seed_ = 0;
  ToyBackendConfig cfg_;
  bool initialized_ = false;
  toy::Conv3x3 stem_, head_;
  toy::Linear time_in_;
  std::vector<ResBlock> encoder_;
  ResBlock bottleneck_;
  SelfAttn bottleneck_attn_;
  std::vector<Layer> decoder_;
};

inline std::unique_ptr<ToyBackend> make_toy_backend(std::uint64_t seed, ToyBackendConfig config = {}) {
  return std::make_unique<ToyBackend>(seed, std::move(config));
}

}  // namespace artist
