#include "palmctl/cli.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "palmctl/auth_io.hpp"
#include "palmctl/detect.hpp"
#include "palmctl/device.hpp"
#include "palmctl/gesture.hpp"
#include "palmctl/harness.hpp"

namespace palmctl {

namespace fs = std::filesystem;
using json = nlohmann::json;
using auth::read_file;
using auth::write_file;

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

gesture::GestureRegistry load_registry(const std::string& path) {
  if (path.empty()) return gesture::default_registry();
  return gesture::GestureRegistry::from_json(read_file(path));
}

gesture::FingerStateParams load_finger_params(const std::string& path) {
  gesture::FingerStateParams p;
  if (path.empty()) return p;
  json j;
  try {
    j = json::parse(read_file(path));
    p.thumb_slope_max = j.value("thumb_slope_max", p.thumb_slope_max);
    p.thumb_min_dx = j.value("thumb_min_dx", p.thumb_min_dx);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  p.validate();
  return p;
}

/// Writes to --out when given, otherwise to stdout.
void emit(const std::string& out_path, const std::string& content, std::ostream& out) {
  if (out_path.empty()) {
    out << content;
  } else {
    write_file(out_path, content);
  }
}

struct Options {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--config", o.config, "configuration file");
  cmd->add_option("--out", o.out, "output path (stdout when omitted)");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gesture control engine and palm verification toolkit", "palmctl"};
  app.require_subcommand(1);
  Options o;
  std::function<void()> action;

  // synth
  std::string kind = "gestures";
  std::string registry_path;
  int frames = 150;
  std::optional<double> sigma;
  harness::PalmSynthSpec palm;
  auto* synth = app.add_subcommand("synth", "generate a labelled synthetic corpus");
  add_common(synth, o);
  synth->add_option("--kind", kind, "gestures | palm")->check(CLI::IsMember({"gestures", "palm"}));
  synth->add_option("--registry", registry_path, "gesture registry (built-in default when omitted)");
  synth->add_option("--frames", frames, "frames per gesture");
  synth->add_option("--sigma", sigma, "landmark jitter (gestures, default 0.01) or cluster spread (palm, default 1)");
  synth->add_option("--subjects", palm.subjects, "palm subjects");
  synth->add_option("--samples", palm.samples_per_subject, "palm samples per subject");
  synth->add_option("--dim", palm.dim, "palm feature dimension");
  synth->add_option("--separation", palm.min_center_distance, "minimum center distance in sigmas");
  synth->callback([&] {
    action = [&] {
      if (kind == "palm") {
        palm.seed = o.seed;
        if (sigma) palm.sigma = *sigma;
        std::string text;
        for (const auto& s : harness::synth_palm_features(palm)) text += auth::serialize_feature_line(s) + "\n";
        emit(o.out, text, out);
        return;
      }
      auto spec = harness::SynthSpec::from_registry(load_registry(registry_path));
      spec.frames_per_gesture = frames;
      spec.jitter_sigma = sigma.value_or(0.01);
      spec.seed = o.seed;
      emit(o.out, harness::serialize_labelled_stream(harness::synth_corpus(spec)), out);
    };
  });

  // eval
  std::string corpus;
  std::string format = "both";
  bool events = false;
  auto* eval = app.add_subcommand("eval", "score a labelled corpus");
  add_common(eval, o);
  eval->add_option("--corpus", corpus, "labelled frame JSONL")->required();
  eval->add_option("--registry", registry_path, "gesture registry (built-in default when omitted)");
  eval->add_option("--format", format, "json | table | both")->check(CLI::IsMember({"json", "table", "both"}));
  eval->add_flag("--events", events, "score debounced gesture events instead of frames");
  eval->callback([&] {
    action = [&] {
      auto in = open_input(corpus);
      const auto stream = harness::read_labelled_stream(in);
      const auto registry = load_registry(registry_path);
      const auto params = load_finger_params(o.config);
      const auto report = events ? harness::evaluate_events(stream, registry, params)
                                 : harness::evaluate(stream, registry, params);
      const auto js = harness::report_to_json(report) + "\n";
      if (!o.out.empty()) write_file(o.out, js);
      if (format != "table") out << js;
      if (format != "json") out << harness::report_to_table(report);
    };
  });

  // decode
  std::string preds_path;
  double iou_thresh = detect::kDefaultIouThresh;
  double score_thresh = detect::kDefaultScoreThresh;
  auto* decode = app.add_subcommand("decode", "raw detector predictions to boxes");
  add_common(decode, o);
  decode->add_option("--preds", preds_path, "prediction JSONL")->required();
  decode->add_option("--iou", iou_thresh, "NMS IoU threshold")->check(CLI::Range(0.0, 1.0));
  decode->add_option("--score", score_thresh, "score threshold")->check(CLI::Range(0.0, 1.0));
  decode->callback([&] {
    action = [&] {
      auto in = open_input(preds_path);
      std::string line;
      std::string text;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          const auto rec = detect::parse_prediction_record(line);
          const auto anchors = detect::generate_anchors(rec.cfg);
          const auto boxes = detect::decode_boxes(rec.preds, anchors, rec.cfg);
          text += detect::serialize_boxes(detect::nms(boxes, iou_thresh, score_thresh)) + "\n";
        } catch (const Error& e) {
          throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
      }
      emit(o.out, text, out);
    };
  });

  // keypoints
  std::string maps_path;
  std::int64_t interval = 40;
  auto* keypoints = app.add_subcommand("keypoints", "confidence maps to landmark frames");
  add_common(keypoints, o);
  keypoints->add_option("--maps", maps_path, "confidence-map JSONL, one hand region per line")->required();
  keypoints->add_option("--interval", interval, "milliseconds between emitted frames")->check(CLI::PositiveNumber);
  keypoints->callback([&] {
    action = [&] {
      auto in = open_input(maps_path);
      std::string line;
      std::string text;
      std::int64_t t = 0;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          const auto rec = detect::parse_confidence_maps(line);
          HandFrame frame;
          frame.t_ms = t;
          frame.hands.push_back(detect::decode_keypoints(rec.maps, rec.region, rec.handedness));
          text += serialize_frame(frame) + "\n";
        } catch (const Error& e) {
          throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
        t += interval;
      }
      emit(o.out, text, out);
    };
  });

  // replay
  std::string frames_path;
  auto* replay = app.add_subcommand("replay", "frames to debounced gesture events");
  add_common(replay, o);
  replay->add_option("--frames", frames_path, "frame JSONL")->required();
  replay->add_option("--registry", registry_path, "gesture registry (built-in default when omitted)");
  replay->callback([&] {
    action = [&] {
      auto in = open_input(frames_path);
      gesture::GestureEngine engine(load_registry(registry_path), load_finger_params(o.config));
      FrameStreamReader reader(in);
      std::string text;
      try {
        while (auto frame = reader.next()) {
          for (const auto& ev : engine.step(*frame)) text += gesture::serialize_event(ev) + "\n";
        }
      } catch (const Error& e) {
        throw DataError("line " + std::to_string(reader.line_number()) + ": " + e.what());
      }
      emit(o.out, text, out);
    };
  });

  // track
  std::string uri;
  std::string mapping_path;
  std::string finger_config;
  auto* track = app.add_subcommand("track", "frames to pan/tilt and device commands over a transport");
  add_common(track, o);
  track->add_option("--frames", frames_path, "frame JSONL")->required();
  track->add_option("--uri", uri, "tcp://host:port or serial:<path>")->required();
  track->add_option("--registry", registry_path, "gesture registry (built-in default when omitted)");
  track->add_option("--mapping", mapping_path, "gesture -> device command table");
  track->add_option("--finger-config", finger_config, "finger-state thresholds");
  track->callback([&] {
    action = [&] {
      device::ControllerConfig cfg;
      if (!o.config.empty()) cfg = device::ControllerConfig::from_json(read_file(o.config));
      cfg.validate();
      device::CommandMapping mapping;
      if (!mapping_path.empty()) mapping = device::CommandMapping::from_json(read_file(mapping_path));
      gesture::GestureEngine engine(load_registry(registry_path), load_finger_params(finger_config));
      auto in = open_input(frames_path);
      auto transport = device::open_transport(uri);
      FrameStreamReader reader(in);
      std::int64_t n_frames = 0;
      std::int64_t n_motor = 0;
      std::int64_t n_device = 0;
      try {
        while (auto frame = reader.next()) {
          ++n_frames;
          for (const auto& ev : engine.step(*frame)) {
            if (auto cmd = device::map_gesture(ev, mapping)) {
              transport->write(device::encode_wire(*cmd));
              ++n_device;
            }
          }
          if (frame->hands.empty()) continue;
          const LandmarkSet* hand = frame->hand(Handedness::Right);
          if (!hand) hand = &frame->hands.front();
          for (const auto& m : device::centering_step(gesture::focal_point(*hand), cfg)) {
            transport->write(device::encode_wire(m));
            ++n_motor;
          }
        }
      } catch (const Error& e) {
        throw DataError("line " + std::to_string(reader.line_number()) + ": " + e.what());
      }
      out << json{{"frames", n_frames}, {"motor_commands", n_motor}, {"device_commands", n_device}}.dump() << "\n";
    };
  });

  // enroll
  std::string store_path;
  std::string model_path;
  std::string subject;
  std::string samples_path;
  double threshold = 0.5;
  auto* enroll = app.add_subcommand("enroll", "add or replace a subject in an enrollment store");
  add_common(enroll, o);
  enroll->add_option("--store", store_path, "enrollment store (created when missing)")->required();
  enroll->add_option("--model", model_path, "trained encoder")->required();
  enroll->add_option("--subject", subject, "subject id")->required();
  enroll->add_option("--samples", samples_path, "feature JSONL; every line is enrolled")->required();
  enroll->add_option("--threshold", threshold, "acceptance threshold")->check(CLI::NonNegativeNumber);
  enroll->callback([&] {
    action = [&] {
      const auto enc = auth::load_encoder(model_path);
      std::vector<auth::Vec<double>> samples;
      {
        auto in = open_input(samples_path);
        std::string line;
        while (std::getline(in, line)) {
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          samples.push_back(auth::parse_feature_line(line).features);
        }
      }
      auth::EnrollmentStore store;
      if (fs::exists(store_path)) {
        store = auth::EnrollmentStore::load(store_path);
        if (store.normalize != enc.normalize) throw ValidationError("store.normalize differs from the model");
      } else {
        store.normalize = enc.normalize;
        store.dim = enc.output_dim();
      }
      const auto store_dir = fs::absolute(store_path).parent_path();
      store.model = fs::proximate(fs::absolute(model_path), store_dir).generic_string();
      auto record = auth::enroll<double>(subject, samples, enc, threshold);
      const auto k = record.anchors.size();
      store.upsert(std::move(record));
      store.save(store_path);
      out << json{{"subject", subject}, {"anchors", k}, {"threshold", threshold}}.dump() << "\n";
    };
  });

  // verify
  std::string probe_path;
  auto* verify = app.add_subcommand("verify", "check a probe against an enrolled subject");
  add_common(verify, o);
  verify->add_option("--store", store_path, "enrollment store")->required();
  verify->add_option("--subject", subject, "subject id")->required();
  verify->add_option("--probe", probe_path, "probe JSON {\"features\": [...]}")->required();
  verify->add_option("--model", model_path, "trained encoder (defaults to the store's model)");
  verify->callback([&] {
    action = [&] {
      const auto store = auth::EnrollmentStore::load(store_path);
      fs::path model = model_path;
      if (model.empty()) {
        if (!store.model) throw DataError("store has no model reference; pass --model");
        model = fs::absolute(store_path).parent_path() / *store.model;
      }
      const auto enc = auth::load_encoder(model);
      const auto* record = store.find(subject);
      if (!record) throw DataError("subject \"" + subject + "\" is not enrolled");
      const auto probe = auth::parse_feature_line(read_file(probe_path));
      const auto d = auth::verify(probe.features, *record, enc);
      out << json{{"accepted", d.accepted}, {"distance", d.distance}, {"subject", d.subject_id},
                  {"threshold", record->threshold}}
                 .dump()
          << "\n";
    };
  });

  // train
  std::string dataset_path;
  auth::TrainConfig<double> tc;
  int epochs = tc.epochs;
  auto* train = app.add_subcommand("train", "fit the palm encoder with triplet loss");
  add_common(train, o);
  train->add_option("--dataset", dataset_path, "feature JSONL")->required();
  train->add_option("--epochs", epochs, "training epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--alpha", tc.alpha, "triplet margin")->check(CLI::NonNegativeNumber);
  train->add_option("--dim", tc.embedding_dim, "embedding dimension")->check(CLI::PositiveNumber);
  train->add_option("--hidden", tc.hidden_dim, "hidden units")->check(CLI::PositiveNumber);
  train->add_option("--batch", tc.batch_size, "triplets per Adam step")->check(CLI::PositiveNumber);
  train->add_option("--triplets", tc.triplets_per_epoch, "triplets mined per epoch")->check(CLI::PositiveNumber);
  train->add_option("--lr", tc.adam.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train->callback([&] {
    action = [&] {
      if (o.out.empty()) throw DataError("train: --out <model.json> is required");
      const auto data = auth::parse_feature_dataset(read_file(dataset_path));
      tc.epochs = epochs;
      tc.seed = o.seed;
      const auto res = auth::train<double>(data, tc);
      auth::save_encoder(res.params, o.out);
      out << json{{"epochs", tc.epochs}, {"loss_curve", res.loss_curve}}.dump() << "\n";
    };
  });

  // roc
  std::string scores_path;
  auto* roc = app.add_subcommand("roc", "FAR/FRR sweep over genuine and impostor distances");
  add_common(roc, o);
  roc->add_option("--scores", scores_path, "JSON {\"genuine\": [...], \"impostor\": [...]}")->required();
  roc->callback([&] {
    action = [&] {
      std::vector<double> genuine;
      std::vector<double> impostor;
      try {
        const auto j = json::parse(read_file(scores_path));
        genuine = j.at("genuine").get<std::vector<double>>();
        impostor = j.at("impostor").get<std::vector<double>>();
      } catch (const json::exception& e) {
        throw ParseError(scores_path + ": " + e.what());
      }
      emit(o.out, auth::roc_to_json(auth::roc_sweep(genuine, impostor)) + "\n", out);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "palmctl: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    action();
  } catch (const Error& e) {
    err << "palmctl: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "palmctl: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace palmctl
