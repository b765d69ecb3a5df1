#pragma once

#include <random>

#include "palmctl/core.hpp"

namespace palmctl::testing {

inline double uniform(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline LandmarkSet random_hand(std::mt19937_64& rng, Handedness hd) {
  LandmarkSet s;
  s.handedness = hd;
  for (std::size_t i = 0; i < kNumLandmarks; ++i) {
    s.points[i] = {uniform(rng), uniform(rng)};
    s.confidences[i] = uniform(rng);
  }
  return s;
}

inline HandFrame random_frame(std::mt19937_64& rng, std::int64_t t) {
  HandFrame f;
  f.t_ms = t;
  switch (uniform_int(rng, 0, 3)) {
    case 1: f.hands.push_back(random_hand(rng, Handedness::Right)); break;
    case 2: f.hands.push_back(random_hand(rng, Handedness::Left)); break;
    case 3:
      f.hands.push_back(random_hand(rng, Handedness::Left));
      f.hands.push_back(random_hand(rng, Handedness::Right));
      break;
    default: break;
  }
  return f;
}

}  // namespace palmctl::testing
