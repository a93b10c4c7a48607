#pragma once

#include <string>
#include <vector>

namespace casdet {

// One dataset sample. Embedding-backed records carry spectral/waveform
// stack paths; prep-from-audio records carry wav_path instead.
struct ManifestRecord {
  std::string id;
  int class_label = 0;
  std::string spectral_path;
  std::string waveform_path;
  std::string wav_path;
};

std::vector<ManifestRecord> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);

}  // namespace casdet
