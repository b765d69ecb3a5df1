#include "palmctl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <random>
#include <sstream>

#include "json.hpp"

namespace palmctl::harness {

using json = nlohmann::json;

SynthSpec SynthSpec::from_registry(const gesture::GestureRegistry& registry) {
  SynthSpec spec;
  for (const auto& d : registry.defs()) spec.gestures.push_back({d.name, d.pattern});
  return spec;
}

// --- templates ----------------------------------------------------------------

namespace {

constexpr double kWristY = 0.80;
constexpr double kFingerMcpY = 0.55;
constexpr double kOpenRise = 0.15;
constexpr double kFoldDrop = 0.10;
constexpr double kThumbReach = 0.12;

}  // namespace

LandmarkSet hand_template(const PostureArray& posture, Handedness hd, double center_x) {
  // Thumb sits on the -x side for a right hand and mirrors for a left hand.
  const double side = hd == Handedness::Right ? -1.0 : 1.0;
  LandmarkSet lms;
  lms.handedness = hd;
  lms.confidences.fill(1.0);

  lms[Landmark::Wrist] = {center_x, kWristY};
  const Point2 cmc{center_x + side * 0.08, 0.74};
  const Point2 mcp{center_x + side * 0.12, 0.66};
  lms[Landmark::ThumbCmc] = cmc;
  lms[Landmark::ThumbMcp] = mcp;
  if (posture.open(Finger::Thumb)) {
    lms[Landmark::ThumbIp] = {mcp.x + side * kThumbReach / 2, mcp.y};
    lms[Landmark::ThumbTip] = {mcp.x + side * kThumbReach, mcp.y};
  } else {
    lms[Landmark::ThumbIp] = {mcp.x, mcp.y - kThumbReach / 2};
    lms[Landmark::ThumbTip] = {mcp.x, mcp.y - kThumbReach};
  }

  const std::array<Finger, 4> fingers{Finger::Index, Finger::Middle, Finger::Ring, Finger::Pinky};
  const std::array<double, 4> offsets{0.06, 0.02, -0.02, -0.06};
  for (std::size_t f = 0; f < fingers.size(); ++f) {
    const std::size_t base = 5 + 4 * f;
    const double x = center_x + side * offsets[f];
    const double reach = posture.open(fingers[f]) ? -kOpenRise : kFoldDrop;
    for (std::size_t j = 0; j < 4; ++j) {
      lms.points[base + j] = {x, kFingerMcpY + reach * static_cast<double>(j) / 3.0};
    }
  }
  return lms;
}

HandFrame pattern_frame(const GesturePattern& pattern, std::int64_t t_ms) {
  HandFrame frame;
  frame.t_ms = t_ms;
  if (const auto* s = std::get_if<SinglePattern>(&pattern)) {
    frame.hands.push_back(hand_template(s->posture, Handedness::Right, 0.5));
  } else {
    const auto& d = std::get<DoublePattern>(pattern);
    frame.hands.push_back(hand_template(d.right, Handedness::Right, 0.70));
    frame.hands.push_back(hand_template(d.left, Handedness::Left, 0.30));
  }
  return frame;
}

LabelledStream synth_corpus(const SynthSpec& spec) {
  if (spec.gestures.empty()) throw SynthError("synth: no gestures");
  if (spec.frames_per_gesture < 1) throw SynthError("synth: frames_per_gesture must be >= 1");
  if (!(spec.jitter_sigma >= 0.0) || !std::isfinite(spec.jitter_sigma)) throw SynthError("synth: jitter_sigma must be >= 0");
  if (spec.frame_interval_ms < 1) throw SynthError("synth: frame_interval_ms must be >= 1");
  for (const auto& g : spec.gestures) {
    if (g.name.empty() || g.name == kNoGesture) throw SynthError("synth: invalid gesture name \"" + g.name + "\"");
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  LabelledStream out;
  const auto n = spec.gestures.size() * static_cast<std::size_t>(spec.frames_per_gesture);
  out.frames.reserve(n);
  out.labels.reserve(n);
  std::int64_t t = 0;
  for (const auto& g : spec.gestures) {
    for (int i = 0; i < spec.frames_per_gesture; ++i) {
      HandFrame frame = pattern_frame(g.pattern, t);
      if (spec.jitter_sigma > 0.0) {
        for (auto& hand : frame.hands) {
          for (auto& p : hand.points) {
            p.x = std::clamp(p.x + spec.jitter_sigma * noise(rng), 0.0, 1.0);
            p.y = std::clamp(p.y + spec.jitter_sigma * noise(rng), 0.0, 1.0);
          }
        }
      }
      out.frames.push_back(std::move(frame));
      out.labels.push_back(g.name);
      t += spec.frame_interval_ms;
    }
  }
  return out;
}

std::string serialize_labelled_stream(const LabelledStream& stream) {
  if (stream.frames.size() != stream.labels.size()) throw DataError("stream: label count differs from frame count");
  std::string out;
  for (std::size_t i = 0; i < stream.frames.size(); ++i) {
    std::string line = serialize_frame(stream.frames[i]);
    line.pop_back();  // closing brace
    out += line + ",\"label\":" + json(stream.labels[i]).dump() + "}\n";
  }
  return out;
}

LabelledStream read_labelled_stream(std::istream& in) {
  LabelledStream out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string label;
    try {
      HandFrame frame = parse_labelled_frame(line, label);
      if (!out.frames.empty() && frame.t_ms <= out.frames.back().t_ms) {
        throw StreamOrderError("t=" + std::to_string(frame.t_ms) + " not after t=" +
                               std::to_string(out.frames.back().t_ms));
      }
      out.frames.push_back(std::move(frame));
      out.labels.push_back(std::move(label));
    } catch (const Error& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// --- evaluation -----------------------------------------------------------------

namespace {

/// Registry names in order, then unseen labels by first appearance, then "none".
std::vector<std::string> label_order(const std::vector<std::string>& labels, const gesture::GestureRegistry& registry) {
  std::vector<std::string> order;
  for (const auto& d : registry.defs()) order.push_back(d.name);
  for (const auto& l : labels) {
    if (l != kNoGesture && std::find(order.begin(), order.end(), l) == order.end()) order.push_back(l);
  }
  order.emplace_back(kNoGesture);
  return order;
}

std::size_t index_of(const std::vector<std::string>& order, std::string_view name) {
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), name) - order.begin());
}

void finish_totals(EvalReport& report) {
  std::int64_t total = 0;
  std::int64_t correct = 0;
  double recall_sum = 0.0;
  for (const auto& r : report.rows) {
    total += r.total_frames;
    correct += r.correct_frames;
    recall_sum += r.recall;
  }
  report.totals = make_eval_row("Total", total, correct);
  report.macro_recall = report.rows.empty() ? 0.0 : recall_sum / static_cast<double>(report.rows.size());
}

}  // namespace

EvalReport evaluate(const LabelledStream& stream, const gesture::GestureRegistry& registry,
                    const gesture::FingerStateParams& params) {
  if (stream.frames.size() != stream.labels.size()) throw DataError("evaluate: label count differs from frame count");
  if (stream.frames.empty()) throw DataError("evaluate: empty stream");

  EvalReport report;
  report.labels = label_order(stream.labels, registry);
  const std::size_t k = report.labels.size();
  report.confusion.assign(k, std::vector<std::int64_t>(k, 0));
  for (std::size_t i = 0; i < stream.frames.size(); ++i) {
    const auto predicted = gesture::classify(gesture::frame_postures(stream.frames[i], params), registry);
    const auto row = index_of(report.labels, stream.labels[i]);
    const auto col = index_of(report.labels, predicted ? std::string_view(*predicted) : kNoGesture);
    ++report.confusion[row][col];
  }
  for (std::size_t r = 0; r < k; ++r) {
    std::int64_t total = 0;
    for (auto c : report.confusion[r]) total += c;
    if (total > 0) report.rows.push_back(make_eval_row(report.labels[r], total, report.confusion[r][r]));
  }
  finish_totals(report);
  return report;
}

EvalReport evaluate_events(const LabelledStream& stream, const gesture::GestureRegistry& registry,
                           const gesture::FingerStateParams& params) {
  if (stream.frames.size() != stream.labels.size()) throw DataError("evaluate: label count differs from frame count");
  if (stream.frames.empty()) throw DataError("evaluate: empty stream");

  EvalReport report;
  report.labels = label_order(stream.labels, registry);
  const std::size_t k = report.labels.size();
  report.confusion.assign(k, std::vector<std::int64_t>(k, 0));

  gesture::GestureEngine engine(registry, params);
  std::size_t i = 0;
  while (i < stream.frames.size()) {
    std::size_t end = i;
    std::optional<std::string> first_onset;
    bool hit = false;
    while (end < stream.frames.size() && stream.labels[end] == stream.labels[i]) {
      for (const auto& ev : engine.step(stream.frames[end])) {
        if (ev.kind != EventKind::Onset) continue;
        if (!first_onset) first_onset = ev.name;
        if (ev.name == stream.labels[i]) hit = true;
      }
      ++end;
    }
    const auto row = index_of(report.labels, stream.labels[i]);
    std::string_view predicted = kNoGesture;
    if (hit) {
      predicted = stream.labels[i];
    } else if (first_onset) {
      predicted = *first_onset;
    }
    i = end;
    ++report.confusion[row][index_of(report.labels, predicted)];
  }
  for (std::size_t r = 0; r < k; ++r) {
    std::int64_t total = 0;
    for (auto c : report.confusion[r]) total += c;
    if (total > 0) report.rows.push_back(make_eval_row(report.labels[r], total, report.confusion[r][r]));
  }
  finish_totals(report);
  return report;
}

EvalReport report_from_counts(const std::vector<EvalRow>& rows) {
  EvalReport report;
  for (const auto& r : rows) {
    if (r.total_frames < 0 || r.correct_frames < 0 || r.correct_frames > r.total_frames) {
      throw DataError("row \"" + r.name + "\": need 0 <= correct <= total");
    }
    report.rows.push_back(make_eval_row(r.name, r.total_frames, r.correct_frames));
  }
  finish_totals(report);
  return report;
}

namespace {

json row_json(const EvalRow& r) {
  return {{"name", r.name},           {"total_frames", r.total_frames}, {"correct_frames", r.correct_frames},
          {"false_frames", r.false_frames}, {"accuracy_pct", r.accuracy_pct},   {"error_pct", r.error_pct},
          {"recall", r.recall}};
}

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back(row_json(r));
  json j = {{"rows", rows}, {"totals", row_json(report.totals)}, {"macro_recall", report.macro_recall}};
  j["confusion"] = {{"labels", report.labels}, {"counts", report.confusion}};
  return j.dump();
}

std::string report_to_table(const EvalReport& report) {
  const std::array<std::string, 7> headers{"Gesture name", "Total frames", "Accurately predicted frames",
                                           "Falsely predicted frames", "Accuracy %", "Error %", "Recall"};
  std::vector<std::array<std::string, 7>> cells;
  auto add = [&](const EvalRow& r, int recall_digits) {
    cells.push_back({r.name, std::to_string(r.total_frames), std::to_string(r.correct_frames),
                     std::to_string(r.false_frames), fixed(r.accuracy_pct, 2), fixed(r.error_pct, 2),
                     fixed(r.recall, recall_digits)});
  };
  for (const auto& r : report.rows) add(r, 2);
  add(report.totals, 4);

  std::array<std::size_t, 7> width{};
  for (std::size_t c = 0; c < 7; ++c) {
    width[c] = headers[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::array<std::string, 7>& row) {
    for (std::size_t c = 0; c < 7; ++c) {
      if (c) out << "  ";
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        out << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      }
    }
    out << '\n';
  };
  std::size_t rule = 2 * 6;
  for (auto w : width) rule += w;
  emit(headers);
  out << std::string(rule, '-') << '\n';
  for (std::size_t i = 0; i + 1 < cells.size(); ++i) emit(cells[i]);
  out << std::string(rule, '-') << '\n';
  emit(cells.back());
  return out.str();
}

// --- palm features -------------------------------------------------------------------

std::vector<auth::LabelledFeature<double>> synth_palm_features(const PalmSynthSpec& spec) {
  if (spec.subjects < 2 || spec.samples_per_subject < 1 || spec.dim < 1 || !(spec.sigma > 0.0)) {
    throw SynthError("palm synth: need >= 2 subjects, >= 1 sample, dim >= 1 and sigma > 0");
  }
  std::mt19937_64 rng(spec.seed);
  const double min_dist = spec.min_center_distance * spec.sigma;
  // Box wide enough that rejection sampling terminates quickly.
  const double half = std::max(min_dist, min_dist * std::pow(static_cast<double>(spec.subjects), 1.0 / spec.dim));
  std::uniform_real_distribution<double> box(-half, half);
  std::normal_distribution<double> noise(0.0, spec.sigma);

  std::vector<auth::Vec<double>> centers;
  int attempts = 0;
  while (static_cast<int>(centers.size()) < spec.subjects) {
    if (++attempts > 100000) throw SynthError("palm synth: could not place separated centers");
    auth::Vec<double> c(spec.dim);
    for (int d = 0; d < spec.dim; ++d) c[d] = box(rng);
    const bool ok = std::all_of(centers.begin(), centers.end(),
                                [&](const auto& other) { return (c - other).norm() >= min_dist; });
    if (ok) centers.push_back(std::move(c));
  }

  std::vector<auth::LabelledFeature<double>> out;
  for (int s = 0; s < spec.subjects; ++s) {
    char name[16];
    std::snprintf(name, sizeof(name), "s%02d", s);
    for (int i = 0; i < spec.samples_per_subject; ++i) {
      auth::Vec<double> x = centers[static_cast<std::size_t>(s)];
      for (int d = 0; d < spec.dim; ++d) x[d] += noise(rng);
      out.push_back({name, std::move(x)});
    }
  }
  return out;
}

AuthBenchmarkResult run_auth_benchmark(const AuthBenchmarkSpec& spec) {
  const auto data = synth_palm_features(spec.data);
  if (spec.train_per_subject < 2 || spec.train_per_subject >= spec.data.samples_per_subject) {
    throw ConfigError("auth benchmark: need 2 <= train_per_subject < samples_per_subject");
  }
  std::vector<auth::LabelledFeature<double>> train_set;
  std::vector<auth::LabelledFeature<double>> test_set;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto within = static_cast<int>(i) % spec.data.samples_per_subject;
    (within < spec.train_per_subject ? train_set : test_set).push_back(data[i]);
  }

  AuthBenchmarkResult res;
  const auto trained = auth::train<double>(train_set, spec.train);
  res.loss_curve = trained.loss_curve;
  const auto& enc = trained.params;

  // Embeddings per subject for the training split.
  const auto per = static_cast<std::size_t>(spec.train_per_subject);
  const auto subjects = static_cast<std::size_t>(spec.data.subjects);
  std::vector<std::vector<auth::Vec<double>>> emb(subjects);
  for (std::size_t i = 0; i < train_set.size(); ++i) emb[i / per].push_back(auth::encoder_forward(enc, train_set[i].features));

  std::vector<double> genuine;
  std::vector<double> impostor;
  for (std::size_t s = 0; s < subjects; ++s) {
    for (std::size_t i = 0; i < per; ++i) {
      for (std::size_t other = 0; other < subjects; ++other) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < per; ++j) {
          if (other == s && j == i) continue;
          best = std::min(best, auth::euclidean_distance(emb[s][i], emb[other][j]));
        }
        (other == s ? genuine : impostor).push_back(best);
      }
    }
  }
  const auto roc = auth::roc_sweep(genuine, impostor);
  res.threshold = roc.eer_threshold;
  res.train_eer = roc.eer;

  std::vector<auth::EnrollmentRecord<double>> records;
  for (std::size_t s = 0; s < subjects; ++s) {
    records.push_back({train_set[s * per].subject, emb[s], res.threshold});
  }
  std::int64_t false_accepts = 0;
  std::int64_t impostor_trials = 0;
  std::int64_t false_rejects = 0;
  std::int64_t genuine_trials = 0;
  for (const auto& probe : test_set) {
    for (const auto& rec : records) {
      const auto decision = auth::verify(probe.features, rec, enc);
      const bool same = rec.subject_id == probe.subject;
      ++res.trials;
      if (decision.accepted == same) ++res.correct;
      if (same) {
        ++genuine_trials;
        if (!decision.accepted) ++false_rejects;
      } else {
        ++impostor_trials;
        if (decision.accepted) ++false_accepts;
      }
    }
  }
  res.accuracy = static_cast<double>(res.correct) / static_cast<double>(res.trials);
  res.far = static_cast<double>(false_accepts) / static_cast<double>(impostor_trials);
  res.frr = static_cast<double>(false_rejects) / static_cast<double>(genuine_trials);
  return res;
}

}  // namespace palmctl::harness
