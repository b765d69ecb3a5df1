#include "palmctl/detect.hpp"

#include <numeric>

#include "json.hpp"

namespace palmctl::detect {

using json = nlohmann::json;

void AnchorConfig::validate() const {
  if (layers.empty()) throw ConfigError("layers: at least one layer required");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto path = "layers[" + std::to_string(i) + "]";
    if (l.grid_w <= 0 || l.grid_h <= 0) throw ConfigError(path + ": grid must be positive");
    if (l.scales.empty()) throw ConfigError(path + ".scales: empty");
    if (l.aspect_ratios.empty()) throw ConfigError(path + ".aspect_ratios: empty");
    for (double s : l.scales) {
      if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError(path + ".scales: must be positive");
    }
    for (double r : l.aspect_ratios) {
      if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError(path + ".aspect_ratios: must be positive");
    }
  }
  if (!(center_variance > 0.0) || !std::isfinite(center_variance)) {
    throw ConfigError("center_variance: must be positive");
  }
  if (!(size_variance > 0.0) || !std::isfinite(size_variance)) {
    throw ConfigError("size_variance: must be positive");
  }
}

std::size_t AnchorConfig::anchor_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>(l.grid_w) * static_cast<std::size_t>(l.grid_h) * l.scales.size() *
         l.aspect_ratios.size();
  }
  return n;
}

std::vector<Anchor> generate_anchors(const AnchorConfig& cfg) {
  cfg.validate();
  std::vector<Anchor> anchors;
  anchors.reserve(cfg.anchor_count());
  for (const auto& layer : cfg.layers) {
    for (int row = 0; row < layer.grid_h; ++row) {
      const double cy = (row + 0.5) / layer.grid_h;
      for (int col = 0; col < layer.grid_w; ++col) {
        const double cx = (col + 0.5) / layer.grid_w;
        for (double scale : layer.scales) {
          for (double ratio : layer.aspect_ratios) {
            const double root = std::sqrt(ratio);
            anchors.push_back({cx, cy, scale * root, scale / root});
          }
        }
      }
    }
  }
  return anchors;
}

BBox decode_box(const RawPrediction& raw, const Anchor& anchor, const AnchorConfig& cfg) {
  BBox box;
  box.cx = anchor.cx + raw.tx * cfg.center_variance * anchor.w;
  box.cy = anchor.cy + raw.ty * cfg.center_variance * anchor.h;
  box.w = anchor.w * std::exp(raw.tw * cfg.size_variance);
  box.h = anchor.h * std::exp(raw.th * cfg.size_variance);
  box.score = 1.0 / (1.0 + std::exp(-raw.logit));
  for (double v : {box.cx, box.cy, box.w, box.h, box.score}) {
    if (!std::isfinite(v)) throw DecodeError("decoded box is not finite");
  }
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw DecodeError("decoded box has zero extent");
  return box;
}

std::vector<BBox> decode_boxes(std::span<const RawPrediction> raw, std::span<const Anchor> anchors,
                               const AnchorConfig& cfg) {
  if (raw.size() != anchors.size()) {
    throw DimensionError("preds: expected " + std::to_string(anchors.size()) + " entries, got " +
                         std::to_string(raw.size()));
  }
  std::vector<BBox> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out.push_back(decode_box(raw[i], anchors[i], cfg));
  return out;
}

std::vector<BBox> nms(std::span<const BBox> boxes, double iou_thresh, double score_thresh) {
  std::vector<std::size_t> order;
  order.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (boxes[i].score >= score_thresh) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });

  std::vector<BBox> kept;
  std::vector<bool> removed(order.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (removed[i]) continue;
    const BBox& best = boxes[order[i]];
    kept.push_back(best);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (!removed[j] && iou(best, boxes[order[j]]) > iou_thresh) removed[j] = true;
    }
  }
  return kept;
}

LandmarkSet decode_keypoints(std::span<const ConfidenceMap> maps, const BBox& region,
                             Handedness handedness) {
  if (maps.size() != kNumLandmarks) {
    throw DimensionError("maps: expected 21, got " + std::to_string(maps.size()));
  }
  const auto rows = maps[0].rows();
  const auto cols = maps[0].cols();
  if (rows < 2 || cols < 2) throw DimensionError("maps: H and W must be at least 2");

  const double x0 = region.cx - region.w / 2;
  const double y0 = region.cy - region.h / 2;
  LandmarkSet lms;
  lms.handedness = handedness;
  for (std::size_t k = 0; k < kNumLandmarks; ++k) {
    const auto& map = maps[k];
    if (map.rows() != rows || map.cols() != cols) {
      throw DimensionError("maps[" + std::to_string(k) + "]: shape differs from maps[0]");
    }
    // Strict '>' in row-major order keeps the first maximum.
    Eigen::Index best_r = 0;
    Eigen::Index best_c = 0;
    double best = map(0, 0);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (map(r, c) > best) {
          best = map(r, c);
          best_r = r;
          best_c = c;
        }
      }
    }
    double u = (static_cast<double>(best_c) + 0.5) / static_cast<double>(cols);
    double v = (static_cast<double>(best_r) + 0.5) / static_cast<double>(rows);
    double conf = std::clamp(best, 0.0, 1.0);
    if (!(best > 0.0)) {
      u = 0.5;
      v = 0.5;
      conf = 0.0;
    }
    lms.points[k] = {std::clamp(x0 + u * region.w, 0.0, 1.0), std::clamp(y0 + v * region.h, 0.0, 1.0)};
    lms.confidences[k] = conf;
  }
  return lms;
}

// --- file formats -------------------------------------------------------------

namespace {

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
}

double req_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path + ": expected number");
  return j.get<double>();
}

std::vector<double> number_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path + ": expected array");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(req_number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

int req_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ParseError(path + ": expected integer");
  return j.get<int>();
}

AnchorConfig parse_anchor_config(const json& j) {
  if (!j.is_object()) throw ParseError("anchors_cfg: expected object");
  AnchorConfig cfg;
  if (j.contains("center_variance")) cfg.center_variance = req_number(j["center_variance"], "anchors_cfg.center_variance");
  if (j.contains("size_variance")) cfg.size_variance = req_number(j["size_variance"], "anchors_cfg.size_variance");
  if (!j.contains("layers") || !j["layers"].is_array()) throw ParseError("anchors_cfg.layers: expected array");
  for (std::size_t i = 0; i < j["layers"].size(); ++i) {
    const auto& l = j["layers"][i];
    const auto path = "anchors_cfg.layers[" + std::to_string(i) + "]";
    if (!l.is_object()) throw ParseError(path + ": expected object");
    AnchorLayer layer;
    layer.grid_w = req_int(l.value("grid_w", json()), path + ".grid_w");
    layer.grid_h = req_int(l.value("grid_h", json()), path + ".grid_h");
    layer.scales = number_list(l.value("scales", json()), path + ".scales");
    layer.aspect_ratios = number_list(l.value("aspect_ratios", json()), path + ".aspect_ratios");
    cfg.layers.push_back(std::move(layer));
  }
  cfg.validate();
  return cfg;
}

}  // namespace

PredictionRecord parse_prediction_record(std::string_view line) {
  const json j = parse_json(line);
  if (!j.is_object()) throw ParseError("record: expected object");
  if (!j.contains("anchors_cfg")) throw ParseError("anchors_cfg: missing");
  PredictionRecord rec;
  rec.cfg = parse_anchor_config(j["anchors_cfg"]);
  if (!j.contains("preds") || !j["preds"].is_array()) throw ParseError("preds: expected array");
  const auto& preds = j["preds"];
  if (preds.size() != rec.cfg.anchor_count()) {
    throw ValidationError("preds: expected " + std::to_string(rec.cfg.anchor_count()) +
                          " entries, got " + std::to_string(preds.size()));
  }
  rec.preds.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto path = "preds[" + std::to_string(i) + "]";
    const auto v = number_list(preds[i], path);
    if (v.size() != 5) throw ValidationError(path + ": expected [logit,tx,ty,tw,th]");
    for (double x : v) {
      if (!std::isfinite(x)) throw ValidationError(path + ": non-finite value");
    }
    rec.preds.push_back({v[0], v[1], v[2], v[3], v[4]});
  }
  return rec;
}

ConfidenceMapRecord parse_confidence_maps(std::string_view text) {
  const json j = parse_json(text);
  if (!j.is_object()) throw ParseError("maps file: expected object");
  const int h = req_int(j.value("h", json()), "h");
  const int w = req_int(j.value("w", json()), "w");
  if (h < 2 || w < 2) throw ValidationError("h, w: must be at least 2");
  if (!j.contains("maps") || !j["maps"].is_array()) throw ParseError("maps: expected array");
  const auto& maps = j["maps"];
  if (maps.size() != kNumLandmarks) {
    throw ValidationError("maps: expected 21, got " + std::to_string(maps.size()));
  }

  ConfidenceMapRecord rec;
  for (std::size_t k = 0; k < kNumLandmarks; ++k) {
    const auto path = "maps[" + std::to_string(k) + "]";
    const auto cells = number_list(maps[k], path);
    if (cells.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w)) {
      throw ValidationError(path + ": expected H*W values");
    }
    ConfidenceMap m(h, w);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!std::isfinite(cells[i]) || cells[i] < 0.0) {
        throw ValidationError(path + "[" + std::to_string(i) + "]: must be finite and >= 0");
      }
      m.data()[i] = cells[i];
    }
    rec.maps.push_back(std::move(m));
  }
  if (j.contains("region")) {
    const auto r = number_list(j["region"], "region");
    if (r.size() != 4) throw ValidationError("region: expected [cx,cy,w,h]");
    rec.region = {r[0], r[1], r[2], r[3], 1.0};
    if (!(rec.region.w > 0.0) || !(rec.region.h > 0.0)) throw ValidationError("region: w, h must be positive");
  }
  if (j.contains("hd")) {
    if (j["hd"] == "R") {
      rec.handedness = Handedness::Right;
    } else if (j["hd"] == "L") {
      rec.handedness = Handedness::Left;
    } else {
      throw ValidationError("hd: expected \"L\" or \"R\"");
    }
  }
  return rec;
}

std::string serialize_boxes(std::span<const BBox> boxes) {
  std::string out = "{\"boxes\":[";
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (i) out += ',';
    const auto& b = boxes[i];
    out += "{\"cx\":" + format_double(b.cx) + ",\"cy\":" + format_double(b.cy) +
           ",\"w\":" + format_double(b.w) + ",\"h\":" + format_double(b.h) +
           ",\"score\":" + format_double(b.score) + "}";
  }
  return out + "]}";
}

}  // namespace palmctl::detect
