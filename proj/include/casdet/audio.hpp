#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace casdet {

// Conditioning target: 16 kHz mono, exactly 10 s.
constexpr int kTargetRate = 16000;
constexpr int kTargetSamples = 160000;

// Log-mel configuration: 25 ms Hann window, 10 ms hop, 512-point FFT,
// 128 triangular mel filters spanning 0-8000 Hz. The waveform is
// reflect-padded by kMelPad on each side so a 160000-sample input yields
// exactly kMelFrames frames.
constexpr int kMelBins = 128;
constexpr int kMelFrames = 1024;
constexpr int kStftWin = 400;
constexpr int kStftHop = 160;
constexpr int kStftFft = 512;
constexpr int kMelPad = 2048;
constexpr double kLogMelFloor = 1e-6;

struct Waveform {
  std::vector<float> samples;
  int sample_rate = kTargetRate;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
};

struct MultiChannelAudio {
  std::vector<std::vector<float>> channels;
  int sample_rate = 0;
};

struct MelFrames {
  // Row-major frames x bins, exactly kMelFrames x kMelBins.
  std::vector<float> data;
  bool normalized = false;

  float& at(int t, int f) { return data[static_cast<size_t>(t) * kMelBins + f]; }
  float at(int t, int f) const { return data[static_cast<size_t>(t) * kMelBins + f]; }
};

// Band-limited (windowed-sinc) resampling to 16 kHz. Identity rate returns
// the input samples untouched. Output length = round(n * 16000 / rate).
Waveform resample_to_16k(const Waveform& w);

// Arithmetic mean across channels.
Waveform to_mono(const MultiChannelAudio& audio);

// Crops inputs of >= 160000 samples from offset 0; tiles shorter inputs,
// each repetition starting at a seeded circular offset in [0, n).
Waveform fix_duration_repeat_jitter(const Waveform& w, uint64_t seed);

// 1024 x 128 log-mel frames, log applied as ln(mel + 1e-6). Input must be
// conditioned (16 kHz, 160000 samples).
MelFrames logmel(const Waveform& w);

// Per-utterance zero mean / unit std over all time-frequency entries,
// std floored at 1e-8.
MelFrames normalize(const MelFrames& m);

// RIFF WAV: 16-bit PCM or 32-bit IEEE float, any channel count.
MultiChannelAudio read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w, bool as_float = true);

}  // namespace casdet
