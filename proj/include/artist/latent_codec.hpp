#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "artist/tensor.hpp"

namespace artist {

/// Images are [3, H, W] tensors with values nominally in [0, 1].
using Image = Tensor;

class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual std::size_t spatial_factor() const = 0;
  virtual Tensor encode(const Image& image) const = 0;
  virtual Image decode(const Tensor& latent) const = 0;
};

/// Average-pool by the spatial factor, then lift RGB to four latent channels
/// (RGB plus luma). Decoding upsamples by nearest neighbour and keeps the RGB rows,
/// so decode(encode(x)) reproduces every block mean.
class ToyLatentCodec final : public LatentCodec {
 public:
  explicit ToyLatentCodec(std::size_t factor = 8) : factor_(factor) {
    ARTIST_CHECK(factor_ >= 1, ErrorCode::invalid_argument, "codec factor must be >= 1");
  }

  std::size_t spatial_factor() const override { return factor_; }

  Tensor encode(const Image& image) const override {
    ARTIST_CHECK(image.rank() == 3 && image.dim(0) == 3, ErrorCode::shape_mismatch,
                 "image must be [3, H, W], got " + shape_str(image.shape()));
    const std::size_t H = image.dim(1), W = image.dim(2);
    ARTIST_CHECK(H % factor_ == 0 && W % factor_ == 0 && H > 0 && W > 0, ErrorCode::shape_mismatch,
                 "image " + shape_str(image.shape()) + " not divisible by codec factor " + std::to_string(factor_));
    const std::size_t h = H / factor_, w = W / factor_;
    Tensor latent({4, h, w});
    std::vector<double> block(factor_ * factor_);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t q = 0; q < w; ++q) {
        std::array<double, 3> mean{};
        for (std::size_t c = 0; c < 3; ++c) {
          std::size_t n = 0;
          for (std::size_t dr = 0; dr < factor_; ++dr)
            for (std::size_t dq = 0; dq < factor_; ++dq)
              block[n++] = image[(c * H + r * factor_ + dr) * W + q * factor_ + dq];
          mean[c] = pairwise_sum(block) / double(block.size());
          latent[(c * h + r) * w + q] = mean[c];
        }
        latent[(3 * h + r) * w + q] = kLuma[0] * mean[0] + kLuma[1] * mean[1] + kLuma[2] * mean[2];
      }
    }
    return latent;
  }

  Image decode(const Tensor& latent) const override {
    ARTIST_CHECK(latent.rank() == 3 && latent.dim(0) == 4, ErrorCode::shape_mismatch,
                 "latent must be [4, h, w], got " + shape_str(latent.shape()));
    const std::size_t h = latent.dim(1), w = latent.dim(2), H = h * factor_, W = w * factor_;
    Image image({3, H, W});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t q = 0; q < W; ++q) image[(c * H + r) * W + q] = latent[(c * h + r / factor_) * w + q / factor_];
    return image;
  }

 private:
  static constexpr std::array<double, 3> kLuma{0.299, 0.587, 0.114};
  std::size_t factor_;
};

/// Procedural test image: smooth colour gradients, a disc and stripes, all seed-driven.
inline Image make_toy_image(std::uint64_t seed, std::size_t height = 128, std::size_t width = 128) {
  Rng rng(mix_seed(seed, 0x1ea9eULL));
  std::array<double, 3> base{}, grad_r{}, grad_c{}, disc{};
  for (std::size_t c = 0; c < 3; ++c) {
    base[c] = 0.2 + 0.6 * rng.uniform();
    grad_r[c] = 0.4 * (rng.uniform() - 0.5);
    grad_c[c] = 0.4 * (rng.uniform() - 0.5);
    disc[c] = rng.uniform();
  }
  const double cy = 0.25 + 0.5 * rng.uniform(), cx = 0.25 + 0.5 * rng.uniform(), radius = 0.1 + 0.2 * rng.uniform();
  const double stripe_freq = 2.0 + 6.0 * rng.uniform(), stripe_amp = 0.15 * rng.uniform();
  Image img({3, height, width});
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t q = 0; q < width; ++q) {
      const double y = double(r) / double(height), x = double(q) / double(width);
      const bool inside = (y - cy) * (y - cy) + (x - cx) * (x - cx) < radius * radius;
      const double stripe = stripe_amp * std::sin(2.0 * M_PI * stripe_freq * (x + 0.5 * y));
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = inside ? disc[c] : base[c] + grad_r[c] * (y - 0.5) + grad_c[c] * (x - 0.5) + stripe;
        img[(c * height + r) * width + q] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace artist
