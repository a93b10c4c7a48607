#include "casdet/manifest.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "casdet/error.hpp"

namespace casdet {

using nlohmann::json;

std::vector<ManifestRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::kInvalidInput, "cannot open manifest " + path);
  std::vector<ManifestRecord> out;
  std::set<std::string> ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      raise(ErrorCode::kInvalidInput, "bad JSON at " + path + ":" + std::to_string(line_no));
    }
    ManifestRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.class_label = j.at("class").get<int>();
      rec.spectral_path = j.value("spectral_path", "");
      rec.waveform_path = j.value("waveform_path", "");
      rec.wav_path = j.value("wav_path", "");
    } catch (const json::exception& e) {
      raise(ErrorCode::kInvalidInput,
            "bad manifest record at " + path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (rec.class_label < 0 || rec.class_label > 4) {
      raise(ErrorCode::kInvalidLabel, "class out of range at " + path + ":" + std::to_string(line_no));
    }
    if (!ids.insert(rec.id).second) {
      raise(ErrorCode::kInvalidInput, "duplicate id " + rec.id + " in " + path);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::kInvalidInput, "cannot write manifest " + path);
  for (const auto& rec : records) {
    json j;
    j["id"] = rec.id;
    j["class"] = rec.class_label;
    if (!rec.spectral_path.empty()) j["spectral_path"] = rec.spectral_path;
    if (!rec.waveform_path.empty()) j["waveform_path"] = rec.waveform_path;
    if (!rec.wav_path.empty()) j["wav_path"] = rec.wav_path;
    out << j.dump() << "\n";
  }
  if (!out) raise(ErrorCode::kInvalidInput, "write failed: " + path);
}

}  // namespace casdet
