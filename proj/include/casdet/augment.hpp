#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "casdet/audio.hpp"

namespace casdet {

// Degradation family selector. kRandom samples one of the three base
// families per activation; kSeriesAll chains all three.
enum class AugmentMode { kConvolutive, kImpulsive, kStationary, kSeriesAll, kRandom };

AugmentMode augment_mode_from_string(const std::string& name);
const char* augment_mode_name(AugmentMode mode);

struct AugmentConfig {
  double activation_prob = 0.5;
  AugmentMode mode = AugmentMode::kRandom;
  int notch_min = 1;
  int notch_max = 5;
  int filter_order = 7;
  double snr_min_db = 10.0;
  double snr_max_db = 40.0;
  double impulse_rate_min = 0.0;
  double impulse_rate_max = 0.01;

  void validate() const;
};

// Seeded waveform degradation. A coin with probability activation_prob
// decides application; all draws come from a generator seeded by `seed`,
// so equal (input, config, seed) gives bit-identical output. Output is
// rescaled only if its peak exceeds 1.0.
Waveform augment(const Waveform& w, const AugmentConfig& cfg, uint64_t seed);

// Single augmentation draw shared by the waveform branch and the mel branch
// of the same sample: both members are always bit-identical.
std::pair<Waveform, Waveform> synchronized_pair(const Waveform& w, const AugmentConfig& cfg,
                                                uint64_t seed);

}  // namespace casdet
