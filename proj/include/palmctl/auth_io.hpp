#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "palmctl/auth.hpp"

namespace palmctl::auth {

/// Enrollment store:
/// {"version":1,"normalize":bool,"dim":D,"records":[{"subject","threshold","anchors":[[...]]}]}
/// An optional "model" key names the encoder file used at enrollment,
/// relative to the store's directory.
struct EnrollmentStore {
  bool normalize = true;
  Eigen::Index dim = 0;
  std::optional<std::string> model;
  std::vector<EnrollmentRecord<double>> records;

  const EnrollmentRecord<double>* find(std::string_view subject) const;
  /// Replaces an existing record for the same subject, otherwise appends.
  void upsert(EnrollmentRecord<double> record);

  static EnrollmentStore from_json(std::string_view text);
  std::string to_json() const;
  static EnrollmentStore load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// {"version":1,"normalize":bool,"w1":[[...]],"b1":[...],"w2":[[...]],"b2":[...]}
/// with matrices stored as row lists.
std::string encoder_to_json(const EncoderParams<double>& params);
EncoderParams<double> encoder_from_json(std::string_view text);
EncoderParams<double> load_encoder(const std::filesystem::path& path);
void save_encoder(const EncoderParams<double>& params, const std::filesystem::path& path);

/// JSONL, one {"subject": str, "features": [reals]} per line.
std::vector<LabelledFeature<double>> parse_feature_dataset(std::string_view text);
LabelledFeature<double> parse_feature_line(std::string_view line);
std::string serialize_feature_line(const LabelledFeature<double>& sample);

std::string roc_to_json(const RocResult& roc);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace palmctl::auth
