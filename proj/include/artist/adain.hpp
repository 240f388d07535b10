#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "artist/tensor.hpp"

namespace artist {

/// Per-channel population statistics; channel is the leading axis.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline ChannelStats channel_stats(const Tensor& x) {
  ARTIST_CHECK(x.rank() >= 1 && x.dim(0) > 0, ErrorCode::shape_mismatch, "channel_stats needs a leading channel axis");
  const std::size_t channels = x.dim(0);
  const std::size_t per = x.size() / channels;
  ARTIST_CHECK(per > 0, ErrorCode::shape_mismatch, "channel_stats needs at least one position per channel");
  ChannelStats s{std::vector<double>(channels), std::vector<double>(channels)};
  for (std::size_t c = 0; c < channels; ++c) {
    const std::span<const double> row = x.span().subspan(c * per, per);
    const double mu = pairwise_sum(row) / double(per);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    s.mean[c] = mu;
    s.stddev[c] = std::sqrt(var / double(per));
  }
  return s;
}

/// Denominator floor for near-constant target channels.
inline constexpr double kAdainEpsilon = 1e-5;

/// Renormalizes each target channel to the given mean and standard deviation:
/// (x - mu_x) / max(sigma_x, eps) * sigma + mu.
inline Tensor adain_to_stats(const Tensor& target, const ChannelStats& ref) {
  const ChannelStats t = channel_stats(target);
  ARTIST_CHECK(t.mean.size() == ref.mean.size(), ErrorCode::shape_mismatch,
               "adain channel count " + std::to_string(t.mean.size()) + " vs " + std::to_string(ref.mean.size()));
  const std::size_t channels = t.mean.size();
  const std::size_t per = target.size() / channels;
  Tensor out(target.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    const double gain = ref.stddev[c] / std::max(t.stddev[c], kAdainEpsilon);
    for (std::size_t i = c * per; i < (c + 1) * per; ++i) out[i] = (target[i] - t.mean[c]) * gain + ref.mean[c];
  }
  return out;
}

inline Tensor adain(const Tensor& target, const Tensor& reference) {
  return adain_to_stats(target, channel_stats(reference));
}

/// Mean over channels of sqrt(dmu^2 + dsigma^2).
inline double stats_distance(const ChannelStats& a, const ChannelStats& b) {
  ARTIST_CHECK(a.mean.size() == b.mean.size(), ErrorCode::shape_mismatch, "stats_distance channel count mismatch");
  double acc = 0.0;
  for (std::size_t c = 0; c < a.mean.size(); ++c) {
    const double dm = a.mean[c] - b.mean[c], ds = a.stddev[c] - b.stddev[c];
    acc += std::sqrt(dm * dm + ds * ds);
  }
  return a.mean.empty() ? 0.0 : acc / double(a.mean.size());
}

}  // namespace artist
