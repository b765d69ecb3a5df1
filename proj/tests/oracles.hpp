#pragma once

// Independent reference implementations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "palmctl/auth.hpp"
#include "palmctl/detect.hpp"
#include "palmctl/device.hpp"
#include "support.hpp"

namespace palmctl::testing {

/// Quadratic greedy suppression: repeatedly take the best remaining box (lowest
/// index among equal scores) and discard everything overlapping it.
inline std::vector<detect::BBox> nms_oracle(const std::vector<detect::BBox>& boxes, double iou_thresh,
                                            double score_thresh) {
  std::vector<bool> alive(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) alive[i] = boxes[i].score >= score_thresh;
  std::vector<detect::BBox> out;
  for (;;) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && (best == boxes.size() || boxes[i].score > boxes[best].score)) best = i;
    }
    if (best == boxes.size()) return out;
    out.push_back(boxes[best]);
    alive[best] = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && detect::iou(boxes[best], boxes[i]) > iou_thresh) alive[i] = false;
    }
  }
}

/// Random boxes; scores drawn from a small set so ties are frequent.
inline std::vector<detect::BBox> random_boxes(std::mt19937_64& rng, std::size_t n) {
  std::vector<detect::BBox> boxes(n);
  for (auto& b : boxes) {
    b.cx = uniform(rng);
    b.cy = uniform(rng);
    b.w = uniform(rng, 0.01, 0.4);
    b.h = uniform(rng, 0.01, 0.4);
    b.score = uniform_int(rng, 0, 3) == 0 ? uniform_int(rng, 0, 10) / 10.0 : uniform(rng);
  }
  return boxes;
}

struct PlantedMaps {
  std::vector<detect::ConfidenceMap> maps;
  std::vector<std::pair<int, int>> peaks;  // (row, col)
};

/// One unit-height Gaussian per keypoint centered on a random cell.
inline PlantedMaps plant_gaussian_peaks(std::mt19937_64& rng, int h, int w) {
  PlantedMaps pm;
  for (std::size_t k = 0; k < kNumLandmarks; ++k) {
    const int r0 = uniform_int(rng, 0, h - 1);
    const int c0 = uniform_int(rng, 0, w - 1);
    const double sigma = uniform(rng, 0.8, 4.0);
    detect::ConfidenceMap m(h, w);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double d2 = (r - r0) * (r - r0) + (c - c0) * (c - c0);
        m(r, c) = std::exp(-d2 / (2 * sigma * sigma));
      }
    }
    pm.maps.push_back(std::move(m));
    pm.peaks.emplace_back(r0, c0);
  }
  return pm;
}

inline std::string random_token(std::mt19937_64& rng) {
  static constexpr std::string_view alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_";
  std::string t(static_cast<std::size_t>(uniform_int(rng, 1, 16)), ' ');
  for (char& c : t) c = alphabet[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(alphabet.size()) - 1))];
  return t;
}

inline device::Command random_command(std::mt19937_64& rng, int max_steps) {
  if (uniform_int(rng, 0, 1) == 0) {
    const int mag = uniform_int(rng, 1, max_steps);
    return device::MotorCommand{uniform_int(rng, 0, 1) ? device::Axis::X : device::Axis::Y,
                                uniform_int(rng, 0, 1) ? mag : -mag};
  }
  return device::DeviceCommand{random_token(rng), random_token(rng)};
}

/// A valid encoded line with a few random byte edits, or pure random bytes.
inline std::string fuzz_line(std::mt19937_64& rng, int max_steps) {
  static constexpr std::string_view interesting = "MDXYZ+-0123456789 \n\r_aA\t";
  auto byte = [&] {
    if (uniform_int(rng, 0, 3) == 0) return static_cast<char>(uniform_int(rng, 0, 255));
    return interesting[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(interesting.size()) - 1))];
  };
  std::string s;
  if (uniform_int(rng, 0, 9) == 0) {
    for (int n = uniform_int(rng, 0, 24); n > 0; --n) s += byte();
    return s;
  }
  s = device::encode_wire(random_command(rng, max_steps));
  for (int edits = uniform_int(rng, 0, 3); edits > 0; --edits) {
    const auto pos = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(s.size())));
    switch (uniform_int(rng, 0, 2)) {
      case 0: s.insert(s.begin() + static_cast<std::ptrdiff_t>(pos), byte()); break;
      case 1: if (pos < s.size()) s.erase(pos, 1); break;
      default: if (pos < s.size()) s[pos] = byte(); break;
    }
  }
  return s;
}

inline double rel_err(const auth::Vec<double>& analytic, const auth::Vec<double>& numeric) {
  const double denom = std::max({analytic.norm(), numeric.norm(), 1e-8});
  return (analytic - numeric).norm() / denom;
}

/// Central differences of f over every coordinate of x.
template <typename F>
auth::Vec<double> central_diff(F f, auth::Vec<double> x, double h = 1e-5) {
  auth::Vec<double> g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline auth::Vec<double> random_vec(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  auth::Vec<double> v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(rng, -scale, scale);
  return v;
}

}  // namespace palmctl::testing
