#pragma once

#include <Eigen/Core>
#include <cmath>
#include <algorithm>
#include <span>
#include <string_view>
#include <vector>

#include "palmctl/core.hpp"

namespace palmctl::detect {

/// Prior box in normalized image coordinates (center + size).
struct Anchor {
  double cx = 0.5;
  double cy = 0.5;
  double w = 1.0;
  double h = 1.0;

  friend bool operator==(const Anchor&, const Anchor&) = default;
};

struct BBox {
  double cx = 0.5;
  double cy = 0.5;
  double w = 1.0;
  double h = 1.0;
  double score = 0.0;

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct AnchorLayer {
  int grid_w = 1;
  int grid_h = 1;
  std::vector<double> scales;
  std::vector<double> aspect_ratios;
};

struct AnchorConfig {
  std::vector<AnchorLayer> layers;
  double center_variance = 0.1;
  double size_variance = 0.2;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
  std::size_t anchor_count() const;
};

/// Pre-sigmoid score plus regression offsets for one anchor.
struct RawPrediction {
  double logit = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;
};

/// Row-major H x W score grid for one keypoint.
using ConfidenceMap = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kDefaultIouThresh = 0.3;
inline constexpr double kDefaultScoreThresh = 0.5;

/// Layer by layer, row-major over cells, then scale-major over (scale, ratio)
/// pairs. w = scale * sqrt(ratio), h = scale / sqrt(ratio).
std::vector<Anchor> generate_anchors(const AnchorConfig& cfg);

BBox decode_box(const RawPrediction& raw, const Anchor& anchor, const AnchorConfig& cfg);

std::vector<BBox> decode_boxes(std::span<const RawPrediction> raw, std::span<const Anchor> anchors,
                               const AnchorConfig& cfg);

template <typename Box>
concept CenterSizeBox = requires(const Box& b) {
  { b.cx } -> std::convertible_to<double>;
  { b.cy } -> std::convertible_to<double>;
  { b.w } -> std::convertible_to<double>;
  { b.h } -> std::convertible_to<double>;
};

template <CenterSizeBox A, CenterSizeBox B>
double iou(const A& a, const B& b) {
  // Areas come from the same edge differences as the overlap so iou(x, x) == 1 exactly.
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2, ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2, by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double ix = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double iy = std::min(ay1, by1) - std::max(ay0, by0);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Greedy suppression. Boxes scoring below `score_thresh` are dropped; ties on
/// score keep the lower input index first. Output is in descending score order.
std::vector<BBox> nms(std::span<const BBox> boxes, double iou_thresh = kDefaultIouThresh,
                      double score_thresh = kDefaultScoreThresh);

/// Argmax per map (first in row-major order on ties), cell center mapped through
/// `region` into image coordinates. An all-zero map yields the region center
/// with confidence 0. Throws DimensionError when maps disagree in shape or are
/// smaller than 2x2.
LandmarkSet decode_keypoints(std::span<const ConfidenceMap> maps, const BBox& region,
                             Handedness handedness = Handedness::Right);

// --- file formats -------------------------------------------------------------

struct PredictionRecord {
  AnchorConfig cfg;
  std::vector<RawPrediction> preds;
};

/// One line of the raw prediction JSONL file. The prediction count must match
/// the anchor count of the embedded config.
PredictionRecord parse_prediction_record(std::string_view line);

struct ConfidenceMapRecord {
  std::vector<ConfidenceMap> maps;
  BBox region{0.5, 0.5, 1.0, 1.0, 1.0};
  Handedness handedness = Handedness::Right;
};

/// `{"h":H,"w":W,"maps":[[...]x21]}` with optional "region" [cx,cy,w,h] and "hd".
ConfidenceMapRecord parse_confidence_maps(std::string_view text);

std::string serialize_boxes(std::span<const BBox> boxes);

}  // namespace palmctl::detect
