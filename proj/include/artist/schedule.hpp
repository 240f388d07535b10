#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "artist/error.hpp"
#include "artist/tensor.hpp"

namespace artist {

enum class ScheduleKind { scaled_linear, constant_beta, geometric, cosine, constant_alpha, explicit_alphas };

inline const char* to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::scaled_linear: return "scaled-linear";
    case ScheduleKind::constant_beta: return "constant-beta";
    case ScheduleKind::geometric: return "geometric";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::constant_alpha: return "constant-alpha";
    case ScheduleKind::explicit_alphas: return "explicit";
  }
  return "unknown";
}

inline ScheduleKind parse_schedule_kind(std::string_view tag) {
  for (auto k : {ScheduleKind::scaled_linear, ScheduleKind::constant_beta, ScheduleKind::geometric,
                 ScheduleKind::cosine, ScheduleKind::constant_alpha, ScheduleKind::explicit_alphas}) {
    if (tag == to_string(k)) return k;
  }
  throw Error(ErrorCode::invalid_argument, "unknown schedule family '" + std::string(tag) + "'");
}

/// Family parameters. Only the fields relevant to the chosen family are read.
struct ScheduleParams {
  // scaled-linear / constant-beta: training grid subsampled with leading spacing.
  int train_steps = 1000;
  int steps_offset = 1;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  double beta = 0.01;       // constant-beta
  double ratio = 0.5;       // geometric: alpha_t = ratio^t
  double cosine_s = 0.008;  // cosine offset
  double max_beta = 0.999;  // cosine clipping
  double alpha = 0.5;       // constant-alpha
  std::vector<double> alphas;  // explicit: alpha_1..alpha_T

  friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

inline void to_json(nlohmann::json& j, const ScheduleParams& p) {
  j = nlohmann::json{{"train_steps", p.train_steps}, {"steps_offset", p.steps_offset}, {"beta_start", p.beta_start},
                     {"beta_end", p.beta_end},       {"beta", p.beta},                 {"ratio", p.ratio},
                     {"cosine_s", p.cosine_s},       {"max_beta", p.max_beta},         {"alpha", p.alpha}};
  if (!p.alphas.empty()) j["alphas"] = p.alphas;
}

inline void from_json(const nlohmann::json& j, ScheduleParams& p) {
  ScheduleParams d;
  p.train_steps = j.value("train_steps", d.train_steps);
  p.steps_offset = j.value("steps_offset", d.steps_offset);
  p.beta_start = j.value("beta_start", d.beta_start);
  p.beta_end = j.value("beta_end", d.beta_end);
  p.beta = j.value("beta", d.beta);
  p.ratio = j.value("ratio", d.ratio);
  p.cosine_s = j.value("cosine_s", d.cosine_s);
  p.max_beta = j.value("max_beta", d.max_beta);
  p.alpha = j.value("alpha", d.alpha);
  p.alphas = j.value("alphas", std::vector<double>{});
}

/// Cumulative signal coefficients alpha_0..alpha_T in the DDIM convention.
/// Invariants: alpha_0 == 1, strictly decreasing, alpha_T > 0.
class NoiseSchedule {
 public:
  NoiseSchedule(ScheduleKind kind, ScheduleParams params, std::vector<double> alphas)
      : kind_(kind), params_(std::move(params)), alphas_(std::move(alphas)) {
    validate();
  }

  /// alphas holds alpha_1..alpha_T; alpha_0 = 1 is prepended.
  static NoiseSchedule from_alphas(std::vector<double> alphas_1_to_T) {
    ScheduleParams p;
    p.alphas = alphas_1_to_T;
    std::vector<double> full{1.0};
    full.insert(full.end(), alphas_1_to_T.begin(), alphas_1_to_T.end());
    return NoiseSchedule(ScheduleKind::explicit_alphas, std::move(p), std::move(full));
  }

  int steps() const noexcept { return int(alphas_.size()) - 1; }
  double alpha(int t) const {
    ARTIST_CHECK(t >= 0 && t <= steps(), ErrorCode::out_of_range,
                 "alpha index " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
    return alphas_[std::size_t(t)];
  }
  const std::vector<double>& alphas() const noexcept { return alphas_; }
  ScheduleKind kind() const noexcept { return kind_; }
  const ScheduleParams& params() const noexcept { return params_; }

  nlohmann::json describe() const {
    return {{"family", to_string(kind_)}, {"T", steps()}, {"params", params_}, {"alphas", alphas_}};
  }

  friend bool operator==(const NoiseSchedule& a, const NoiseSchedule& b) { return a.alphas_ == b.alphas_; }

 private:
  void validate() const {
    ARTIST_CHECK(alphas_.size() >= 2, ErrorCode::invalid_schedule, "schedule needs T >= 1");
    ARTIST_CHECK(alphas_[0] == 1.0, ErrorCode::invalid_schedule, "alpha_0 must be exactly 1");
    for (std::size_t t = 1; t < alphas_.size(); ++t) {
      ARTIST_CHECK(std::isfinite(alphas_[t]) && alphas_[t] < alphas_[t - 1], ErrorCode::invalid_schedule,
                   "alpha must be strictly decreasing (violated at t=" + std::to_string(t) + ")");
    }
    ARTIST_CHECK(alphas_.back() > 0.0, ErrorCode::invalid_schedule, "alpha_T must be positive");
  }

  ScheduleKind kind_;
  ScheduleParams params_;
  std::vector<double> alphas_;
};

namespace detail {

/// Leading-spacing subsample of a training-grid cumulative product.
inline std::vector<double> subsample_training_grid(const std::vector<double>& betas, int T, int offset) {
  const int n = int(betas.size());
  const int ratio = n / T;
  ARTIST_CHECK(ratio >= 1, ErrorCode::invalid_argument, "T exceeds the number of training steps");
  ARTIST_CHECK((T - 1) * ratio + offset < n && offset >= 0, ErrorCode::invalid_argument,
               "steps_offset pushes the last step outside the training grid");
  std::vector<double> cumprod(betas.size());
  double acc = 1.0;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    acc *= 1.0 - betas[i];
    cumprod[i] = acc;
  }
  std::vector<double> alphas{1.0};
  for (int t = 1; t <= T; ++t) alphas.push_back(cumprod[std::size_t((t - 1) * ratio + offset)]);
  return alphas;
}

}  // namespace detail

/// Builds a schedule of the given family. The default family, scaled-linear, squares a
/// linear ramp in sqrt(beta) over the training grid (the latent-diffusion convention).
inline NoiseSchedule make_schedule(ScheduleKind kind, int T, const ScheduleParams& params = {}) {
  ARTIST_CHECK(T >= 1, ErrorCode::invalid_argument, "T must be >= 1");
  std::vector<double> alphas;
  switch (kind) {
    case ScheduleKind::scaled_linear: {
      ARTIST_CHECK(params.train_steps >= 2 && params.beta_start > 0 && params.beta_end < 1 &&
                       params.beta_start <= params.beta_end,
                   ErrorCode::invalid_argument, "invalid scaled-linear parameters");
      const int n = params.train_steps;
      const double lo = std::sqrt(params.beta_start), hi = std::sqrt(params.beta_end);
      std::vector<double> betas(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        const double s = lo + (hi - lo) * double(i) / double(n - 1);
        betas[std::size_t(i)] = s * s;
      }
      alphas = detail::subsample_training_grid(betas, T, params.steps_offset);
      break;
    }
    case ScheduleKind::constant_beta: {
      ARTIST_CHECK(params.beta > 0 && params.beta < 1 && params.train_steps >= 1, ErrorCode::invalid_argument,
                   "constant-beta requires 0 < beta < 1");
      alphas = detail::subsample_training_grid(std::vector<double>(std::size_t(params.train_steps), params.beta), T,
                                               params.steps_offset);
      break;
    }
    case ScheduleKind::geometric: {
      ARTIST_CHECK(params.ratio > 0 && params.ratio < 1, ErrorCode::invalid_argument, "geometric ratio must be in (0,1)");
      alphas = {1.0};
      for (int t = 1; t <= T; ++t) alphas.push_back(std::pow(params.ratio, t));
      break;
    }
    case ScheduleKind::cosine: {
      ARTIST_CHECK(params.cosine_s >= 0 && params.max_beta > 0 && params.max_beta < 1, ErrorCode::invalid_argument,
                   "invalid cosine parameters");
      auto f = [&](double t) {
        const double c = std::cos((t / T + params.cosine_s) / (1.0 + params.cosine_s) * M_PI / 2.0);
        return c * c;
      };
      alphas = {1.0};
      for (int t = 1; t <= T; ++t) {
        const double beta = std::min(1.0 - f(t) / f(t - 1), params.max_beta);
        alphas.push_back(alphas.back() * (1.0 - beta));
      }
      break;
    }
    case ScheduleKind::constant_alpha: {
      alphas.assign(std::size_t(T) + 1, params.alpha);
      alphas[0] = 1.0;
      break;
    }
    case ScheduleKind::explicit_alphas: {
      ARTIST_CHECK(int(params.alphas.size()) == T, ErrorCode::invalid_argument, "explicit alphas must have length T");
      alphas = {1.0};
      alphas.insert(alphas.end(), params.alphas.begin(), params.alphas.end());
      break;
    }
  }
  return NoiseSchedule(kind, params, std::move(alphas));
}

inline NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  const auto kind = parse_schedule_kind(j.at("family").get<std::string>());
  auto schedule = make_schedule(kind, j.at("T").get<int>(), j.value("params", nlohmann::json::object()).get<ScheduleParams>());
  if (j.contains("alphas")) {
    ARTIST_CHECK(j.at("alphas").get<std::vector<double>>() == schedule.alphas(), ErrorCode::corrupted_record,
                 "stored alphas do not match the reconstructed schedule");
  }
  return schedule;
}

/// x_{t-1} = A * x_t + B * eps.
struct DdimCoefficients {
  double A;
  double B;
};

inline void check_step(const NoiseSchedule& schedule, int t) {
  ARTIST_CHECK(t >= 1 && t <= schedule.steps(), ErrorCode::out_of_range,
               "step " + std::to_string(t) + " outside [1, " + std::to_string(schedule.steps()) + "]");
}

inline DdimCoefficients coefficients_from_alphas(double alpha_prev, double alpha_t) {
  return {std::sqrt(alpha_prev / alpha_t),
          std::sqrt(1.0 - alpha_prev) - std::sqrt(alpha_prev * (1.0 - alpha_t)) / std::sqrt(alpha_t)};
}

inline DdimCoefficients coefficients(const NoiseSchedule& schedule, int t) {
  check_step(schedule, t);
  return coefficients_from_alphas(schedule.alpha(t - 1), schedule.alpha(t));
}

/// Deterministic DDIM reverse step written as the x0-prediction followed by re-noising.
inline Tensor ddim_step(const Tensor& x_t, const Tensor& eps, int t, const NoiseSchedule& schedule) {
  require_same_shape(x_t, eps, "ddim_step");
  check_step(schedule, t);
  const double a_t = schedule.alpha(t), a_prev = schedule.alpha(t - 1);
  const double sa_t = std::sqrt(a_t), sa_prev = std::sqrt(a_prev);
  const double s1_t = std::sqrt(1.0 - a_t), s1_prev = std::sqrt(1.0 - a_prev);
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    const double x0 = (x_t[i] - s1_t * eps[i]) / sa_t;
    out[i] = sa_prev * x0 + s1_prev * eps[i];
  }
  return out;
}

/// Maps x_{t-1} to x_t under a shared noise prediction; the algebraic inverse of ddim_step.
inline Tensor ddim_inverse_step(const Tensor& x_prev, const Tensor& eps, int t, const NoiseSchedule& schedule) {
  require_same_shape(x_prev, eps, "ddim_inverse_step");
  check_step(schedule, t);
  const double a_t = schedule.alpha(t), a_prev = schedule.alpha(t - 1);
  const double sa_t = std::sqrt(a_t), sa_prev = std::sqrt(a_prev);
  const double s1_t = std::sqrt(1.0 - a_t), s1_prev = std::sqrt(1.0 - a_prev);
  Tensor out(x_prev.shape());
  for (std::size_t i = 0; i < x_prev.size(); ++i) {
    const double x0 = (x_prev[i] - s1_prev * eps[i]) / sa_prev;
    out[i] = sa_t * x0 + s1_t * eps[i];
  }
  return out;
}

enum class Segment { content, style };

/// Closed form of the full trajectory: x_0 = leading * x_T + sum_k weights[k-1] * eps_k.
/// Steps k > tau are tagged content, k <= tau style.
struct UnrolledTrajectory {
  double leading = 1.0;
  std::vector<double> weights;
  std::vector<Segment> segments;
  int tau = 0;

  double weight(int k) const { return weights.at(std::size_t(k - 1)); }
  Segment segment(int k) const { return segments.at(std::size_t(k - 1)); }
};

inline UnrolledTrajectory unroll_weights(const NoiseSchedule& schedule, int tau) {
  const int T = schedule.steps();
  ARTIST_CHECK(tau >= 0 && tau <= T, ErrorCode::out_of_range,
               "tau " + std::to_string(tau) + " outside [0, " + std::to_string(T) + "]");
  UnrolledTrajectory u;
  u.tau = tau;
  u.weights.resize(std::size_t(T));
  u.segments.resize(std::size_t(T));
  // prefix = prod_{j<k} A_j; iterating x_{k-1} = A_k x_k + B_k eps_k down to k = 1 gives
  // coefficient B_k * prod_{j=1}^{k-1} A_j on eps_k regardless of the segment.
  double prefix = 1.0;
  for (int k = 1; k <= T; ++k) {
    const auto c = coefficients(schedule, k);
    u.weights[std::size_t(k - 1)] = c.B * prefix;
    u.segments[std::size_t(k - 1)] = k > tau ? Segment::content : Segment::style;
    prefix *= c.A;
  }
  u.leading = prefix;
  return u;
}

/// Evaluates the unrolled closed form for a given x_T and noise sequence eps_1..eps_T.
inline Tensor apply_unrolled(const UnrolledTrajectory& u, const Tensor& x_T, const std::vector<Tensor>& eps) {
  ARTIST_CHECK(eps.size() == u.weights.size(), ErrorCode::invalid_argument, "need one noise tensor per step");
  Tensor out = scaled(x_T, u.leading);
  for (std::size_t k = 0; k < eps.size(); ++k) {
    require_same_shape(out, eps[k], "apply_unrolled");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += u.weights[k] * eps[k][i];
  }
  return out;
}

struct GuidanceParams {
  double scale = 7.5;
};

/// eps_uncond + scale * (eps_cond - eps_uncond); exact at scale 0 and 1.
inline Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, GuidanceParams params) {
  require_same_shape(eps_uncond, eps_cond, "cfg_combine");
  if (params.scale == 1.0) return eps_cond;
  if (params.scale == 0.0) return eps_uncond;
  Tensor out(eps_cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps_uncond[i] + params.scale * (eps_cond[i] - eps_uncond[i]);
  return out;
}

}  // namespace artist
