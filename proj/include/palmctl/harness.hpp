#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "palmctl/auth.hpp"
#include "palmctl/core.hpp"
#include "palmctl/gesture.hpp"

namespace palmctl::harness {

struct SynthGesture {
  std::string name;
  GesturePattern pattern;
};

struct SynthSpec {
  std::vector<SynthGesture> gestures;
  int frames_per_gesture = 150;
  double jitter_sigma = 0.01;
  std::uint64_t seed = 0;
  std::int64_t frame_interval_ms = 40;

  /// Every registry entry, in registry order.
  static SynthSpec from_registry(const gesture::GestureRegistry& registry);
};

struct LabelledStream {
  std::vector<HandFrame> frames;
  std::vector<std::string> labels;
};

/// Upright hand whose finger geometry realizes `posture` exactly: open
/// fingertips 0.15 above their MCP, folded ones 0.10 below, thumb lateral when
/// open and vertical when folded. `center_x` positions the wrist.
LandmarkSet hand_template(const PostureArray& posture, Handedness hd, double center_x = 0.5);

/// Noise-free frame for a pattern: a right hand for single patterns, right and
/// left hands side by side for double patterns.
HandFrame pattern_frame(const GesturePattern& pattern, std::int64_t t_ms);

/// Gesture blocks of frames_per_gesture frames each, in spec order, with
/// i.i.d. Gaussian jitter on every coordinate clamped to [0,1].
LabelledStream synth_corpus(const SynthSpec& spec);

std::string serialize_labelled_stream(const LabelledStream& stream);
LabelledStream read_labelled_stream(std::istream& in);

/// Frame-level evaluation: every frame classified without debounce.
EvalReport evaluate(const LabelledStream& stream, const gesture::GestureRegistry& registry,
                    const gesture::FingerStateParams& params = {});

/// Event-level evaluation: each maximal run of one label counts once and is
/// correct when the debounced engine emits an onset of that label inside it.
EvalReport evaluate_events(const LabelledStream& stream, const gesture::GestureRegistry& registry,
                           const gesture::FingerStateParams& params = {});

/// Builds a report from (name, total, correct) rows; totals aggregate all rows.
EvalReport report_from_counts(const std::vector<EvalRow>& rows);

std::string report_to_json(const EvalReport& report);
/// Aligned text table with the columns of the classic recognition results table.
std::string report_to_table(const EvalReport& report);

// --- palm features --------------------------------------------------------------------

struct PalmSynthSpec {
  int subjects = 10;
  int samples_per_subject = 20;
  int dim = 8;
  double sigma = 1.0;
  double min_center_distance = 6.0;  // in units of sigma
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian clusters, one per subject ("s00", "s01", ...), with
/// pairwise center distances of at least min_center_distance * sigma.
std::vector<auth::LabelledFeature<double>> synth_palm_features(const PalmSynthSpec& spec);

struct AuthBenchmarkSpec {
  PalmSynthSpec data{};
  int train_per_subject = 10;
  auth::TrainConfig<double> train{};
};

struct AuthBenchmarkResult {
  std::vector<double> loss_curve;
  double threshold = 0.0;        // EER threshold chosen on the training split
  double train_eer = 0.0;
  std::int64_t trials = 0;       // held-out probe x enrolled subject decisions
  std::int64_t correct = 0;
  double accuracy = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

/// Train on the first train_per_subject samples of each subject, calibrate the
/// threshold by leave-one-out min-anchor distances on that split, enroll every
/// subject with its training samples, and verify each held-out sample against
/// every enrolled subject.
AuthBenchmarkResult run_auth_benchmark(const AuthBenchmarkSpec& spec);

}  // namespace palmctl::harness
