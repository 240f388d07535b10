#pragma once

#include <gtest/gtest.h>

#include <functional>

#include "artist/error.hpp"
#include "artist/latent_codec.hpp"
#include "artist/schedule.hpp"
#include "artist/toy_backend.hpp"

namespace artist::testing {

inline ::testing::AssertionResult throws_code(const std::function<void()>& fn, ErrorCode code) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == code) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure() << "threw " << to_string(e.code()) << " (" << e.what() << "), wanted "
                                         << to_string(code);
  } catch (const std::exception& e) {
    return ::testing::AssertionFailure() << "threw non-library exception: " << e.what();
  }
  return ::testing::AssertionFailure() << "did not throw, wanted " << to_string(code);
}

inline Tensor toy_latent(std::uint64_t seed) { return ToyLatentCodec().encode(make_toy_image(seed)); }

inline NoiseSchedule default_schedule(int T = 50) { return make_schedule(ScheduleKind::scaled_linear, T); }

}  // namespace artist::testing
