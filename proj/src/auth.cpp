#include <fstream>
#include <sstream>

#include "json.hpp"
#include "palmctl/auth_io.hpp"
#include "palmctl/core.hpp"

namespace palmctl::auth {

using json = nlohmann::json;

RocResult roc_sweep(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) throw DataError("roc_sweep: genuine and impostor lists must be non-empty");
  std::vector<double> g(genuine.begin(), genuine.end());
  std::vector<double> im(impostor.begin(), impostor.end());
  for (double d : g) {
    if (!(d >= 0.0)) throw DataError("roc_sweep: distances must be non-negative");
  }
  for (double d : im) {
    if (!(d >= 0.0)) throw DataError("roc_sweep: distances must be non-negative");
  }
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());

  std::vector<double> thresholds{0.0};
  thresholds.insert(thresholds.end(), g.begin(), g.end());
  thresholds.insert(thresholds.end(), im.begin(), im.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  const double ng = static_cast<double>(g.size());
  const double ni = static_cast<double>(im.size());
  RocResult res;
  double best_gap = std::numeric_limits<double>::infinity();
  res.best_accuracy = -1.0;
  for (double t : thresholds) {
    const auto acc_g = static_cast<double>(std::upper_bound(g.begin(), g.end(), t) - g.begin());
    const auto acc_i = static_cast<double>(std::upper_bound(im.begin(), im.end(), t) - im.begin());
    RocPoint p{t, acc_i / ni, (ng - acc_g) / ng};
    res.points.push_back(p);

    const double gap = std::abs(p.far - p.frr);
    if (gap < best_gap) {
      best_gap = gap;
      res.eer_threshold = t;
      res.eer = (p.far + p.frr) / 2;
    }
    const double accuracy = (acc_g + (ni - acc_i)) / (ng + ni);
    if (accuracy > res.best_accuracy) {
      res.best_accuracy = accuracy;
      res.best_accuracy_threshold = t;
    }
  }
  return res;
}

// --- helpers -------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("write failed for " + path.string());
}

namespace {

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": malformed JSON: " + e.what());
  }
}

Vec<double> vector_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path + ": expected array");
  Vec<double> v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(path + "[" + std::to_string(i) + "]: expected number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  if (!v.allFinite()) throw ValidationError(path + ": non-finite value");
  return v;
}

json vector_to_json(const Vec<double>& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Mat<double> matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ParseError(path + ": expected non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Mat<double> m;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = vector_from_json(j[static_cast<std::size_t>(r)], path + "[" + std::to_string(r) + "]");
    if (r == 0) m.resize(rows, row.size());
    if (row.size() != m.cols()) throw DimensionError(path + ": ragged rows");
    m.row(r) = row.transpose();
  }
  return m;
}

json matrix_to_json(const Mat<double>& m) {
  json arr = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) arr.push_back(vector_to_json(m.row(r).transpose()));
  return arr;
}

}  // namespace

// --- enrollment store --------------------------------------------------------------

const EnrollmentRecord<double>* EnrollmentStore::find(std::string_view subject) const {
  for (const auto& r : records) {
    if (r.subject_id == subject) return &r;
  }
  return nullptr;
}

void EnrollmentStore::upsert(EnrollmentRecord<double> record) {
  for (const auto& a : record.anchors) {
    if (dim == 0) dim = a.size();
    if (a.size() != dim) throw DimensionError("store: anchor dimension " + std::to_string(a.size()) +
                                              " differs from store dim " + std::to_string(dim));
  }
  for (auto& r : records) {
    if (r.subject_id == record.subject_id) {
      r = std::move(record);
      return;
    }
  }
  records.push_back(std::move(record));
}

EnrollmentStore EnrollmentStore::from_json(std::string_view text) {
  const json j = parse_json(text, "store");
  if (!j.is_object()) throw ParseError("store: expected object");
  if (j.value("version", 0) != 1) throw ValidationError("store.version: expected 1");
  EnrollmentStore s;
  if (!j.contains("normalize") || !j["normalize"].is_boolean()) throw ParseError("store.normalize: expected bool");
  s.normalize = j["normalize"].get<bool>();
  if (!j.contains("dim") || !j["dim"].is_number_unsigned()) throw ParseError("store.dim: expected non-negative integer");
  s.dim = j["dim"].get<Eigen::Index>();
  if (j.contains("model")) {
    if (!j["model"].is_string()) throw ParseError("store.model: expected string");
    s.model = j["model"].get<std::string>();
  }
  if (!j.contains("records") || !j["records"].is_array()) throw ParseError("store.records: expected array");
  for (std::size_t i = 0; i < j["records"].size(); ++i) {
    const auto& r = j["records"][i];
    const auto path = "store.records[" + std::to_string(i) + "]";
    if (!r.is_object()) throw ParseError(path + ": expected object");
    EnrollmentRecord<double> rec;
    if (!r.contains("subject") || !r["subject"].is_string()) throw ParseError(path + ".subject: expected string");
    rec.subject_id = r["subject"].get<std::string>();
    if (!r.contains("threshold") || !r["threshold"].is_number()) throw ParseError(path + ".threshold: expected number");
    rec.threshold = r["threshold"].get<double>();
    if (!(rec.threshold >= 0.0)) throw ValidationError(path + ".threshold: must be non-negative");
    if (!r.contains("anchors") || !r["anchors"].is_array() || r["anchors"].empty()) {
      throw ValidationError(path + ".anchors: expected at least one anchor");
    }
    for (std::size_t k = 0; k < r["anchors"].size(); ++k) {
      auto a = vector_from_json(r["anchors"][k], path + ".anchors[" + std::to_string(k) + "]");
      if (a.size() != s.dim) throw DimensionError(path + ".anchors: dimension differs from store dim");
      rec.anchors.push_back(std::move(a));
    }
    if (s.find(rec.subject_id)) throw ValidationError(path + ".subject: duplicate \"" + rec.subject_id + "\"");
    s.records.push_back(std::move(rec));
  }
  return s;
}

std::string EnrollmentStore::to_json() const {
  json j;
  j["version"] = 1;
  j["normalize"] = normalize;
  j["dim"] = dim;
  if (model) j["model"] = *model;
  json recs = json::array();
  for (const auto& r : records) {
    json anchors = json::array();
    for (const auto& a : r.anchors) anchors.push_back(vector_to_json(a));
    recs.push_back({{"subject", r.subject_id}, {"threshold", r.threshold}, {"anchors", anchors}});
  }
  j["records"] = recs;
  return j.dump();
}

EnrollmentStore EnrollmentStore::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

void EnrollmentStore::save(const std::filesystem::path& path) const { write_file(path, to_json() + "\n"); }

// --- encoder file --------------------------------------------------------------------

std::string encoder_to_json(const EncoderParams<double>& p) {
  json j;
  j["version"] = 1;
  j["normalize"] = p.normalize;
  j["w1"] = matrix_to_json(p.w1);
  j["b1"] = vector_to_json(p.b1);
  j["w2"] = matrix_to_json(p.w2);
  j["b2"] = vector_to_json(p.b2);
  return j.dump();
}

EncoderParams<double> encoder_from_json(std::string_view text) {
  const json j = parse_json(text, "model");
  if (!j.is_object()) throw ParseError("model: expected object");
  if (j.value("version", 0) != 1) throw ValidationError("model.version: expected 1");
  EncoderParams<double> p;
  if (!j.contains("normalize") || !j["normalize"].is_boolean()) throw ParseError("model.normalize: expected bool");
  p.normalize = j["normalize"].get<bool>();
  for (const char* key : {"w1", "b1", "w2", "b2"}) {
    if (!j.contains(key)) throw ParseError(std::string("model.") + key + ": missing");
  }
  p.w1 = matrix_from_json(j["w1"], "model.w1");
  p.b1 = vector_from_json(j["b1"], "model.b1");
  p.w2 = matrix_from_json(j["w2"], "model.w2");
  p.b2 = vector_from_json(j["b2"], "model.b2");
  p.validate();
  return p;
}

EncoderParams<double> load_encoder(const std::filesystem::path& path) { return encoder_from_json(read_file(path)); }

void save_encoder(const EncoderParams<double>& params, const std::filesystem::path& path) {
  write_file(path, encoder_to_json(params) + "\n");
}

// --- feature dataset -------------------------------------------------------------------

LabelledFeature<double> parse_feature_line(std::string_view line) {
  const json j = parse_json(line, "feature line");
  if (!j.is_object()) throw ParseError("feature line: expected object");
  LabelledFeature<double> s;
  if (j.contains("subject")) {
    if (!j["subject"].is_string()) throw ParseError("subject: expected string");
    s.subject = j["subject"].get<std::string>();
  }
  if (!j.contains("features")) throw ParseError("features: missing");
  s.features = vector_from_json(j["features"], "features");
  return s;
}

std::vector<LabelledFeature<double>> parse_feature_dataset(std::string_view text) {
  std::vector<LabelledFeature<double>> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    const auto line = text.substr(start, end - start);
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
      try {
        auto s = parse_feature_line(line);
        if (s.subject.empty()) throw ValidationError("subject: missing");
        if (!out.empty() && s.features.size() != out.front().features.size()) {
          throw DimensionError("features: dimension differs from line 1");
        }
        out.push_back(std::move(s));
      } catch (const Error& e) {
        throw DataError("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    start = end + 1;
  }
  return out;
}

std::string serialize_feature_line(const LabelledFeature<double>& sample) {
  std::string out = "{\"subject\":" + json(sample.subject).dump() + ",\"features\":[";
  for (Eigen::Index i = 0; i < sample.features.size(); ++i) {
    if (i) out += ',';
    out += format_double(sample.features[i]);
  }
  return out + "]}";
}

std::string roc_to_json(const RocResult& roc) {
  // +inf has no JSON literal; the sentinel threshold is written as null.
  auto thr = [](double t) { return std::isfinite(t) ? json(t) : json(nullptr); };
  json pts = json::array();
  for (const auto& p : roc.points) pts.push_back({{"threshold", thr(p.threshold)}, {"far", p.far}, {"frr", p.frr}});
  json j;
  j["points"] = pts;
  j["eer"] = {{"threshold", thr(roc.eer_threshold)}, {"rate", roc.eer}};
  j["best_accuracy"] = {{"threshold", thr(roc.best_accuracy_threshold)}, {"accuracy", roc.best_accuracy}};
  return j.dump();
}

}  // namespace palmctl::auth
