#include "casdet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "casdet/error.hpp"
#include "casdet/rng.hpp"

namespace casdet {

namespace {

void require_finite(const std::vector<float>& samples, const char* what) {
  for (float s : samples) {
    if (!std::isfinite(s)) raise(ErrorCode::kInvalidAudio, std::string("non-finite sample in ") + what);
  }
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

// In-place radix-2 complex FFT, n a power of two.
void fft(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filterbank over the 257 FFT bins, built once.
const std::vector<float>& mel_filterbank() {
  static const std::vector<float> fb = [] {
    const int n_bins = kStftFft / 2 + 1;
    std::vector<float> w(static_cast<size_t>(kMelBins) * n_bins, 0.0f);
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(kTargetRate / 2.0);
    std::vector<double> centers(kMelBins + 2);
    for (int j = 0; j < kMelBins + 2; ++j) {
      centers[j] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * j / (kMelBins + 1));
    }
    for (int m = 0; m < kMelBins; ++m) {
      const double l = centers[m], c = centers[m + 1], r = centers[m + 2];
      for (int k = 0; k < n_bins; ++k) {
        const double f = static_cast<double>(k) * kTargetRate / kStftFft;
        double v = 0.0;
        if (f > l && f < r) {
          v = (f <= c) ? (f - l) / (c - l) : (r - f) / (r - c);
        }
        w[static_cast<size_t>(m) * n_bins + k] = static_cast<float>(v);
      }
    }
    return w;
  }();
  return fb;
}

}  // namespace

Waveform resample_to_16k(const Waveform& w) {
  if (w.samples.empty()) raise(ErrorCode::kInvalidAudio, "empty input");
  if (w.sample_rate <= 0) raise(ErrorCode::kInvalidAudio, "non-positive sample rate");
  require_finite(w.samples, "resample input");
  if (w.sample_rate == kTargetRate) return w;

  const int64_t n = w.size();
  const int64_t out_len = std::llround(static_cast<double>(n) * kTargetRate / w.sample_rate);
  const double ratio = static_cast<double>(w.sample_rate) / kTargetRate;  // input samples per output sample
  const double fc = std::min(1.0, 1.0 / ratio);  // anti-alias cutoff, input Nyquist units
  const int taps = 32;                           // kernel half-width in output-rate zero crossings
  const double support = taps / fc;

  Waveform out;
  out.sample_rate = kTargetRate;
  out.samples.resize(static_cast<size_t>(out_len));
  for (int64_t i = 0; i < out_len; ++i) {
    const double t = i * ratio;
    const int64_t k_lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(t - support)));
    const int64_t k_hi = std::min<int64_t>(n - 1, static_cast<int64_t>(std::floor(t + support)));
    double acc = 0.0;
    for (int64_t k = k_lo; k <= k_hi; ++k) {
      const double tau = (t - k) * fc;
      const double u = tau / taps;  // in [-1, 1] inside the support
      const double win = 0.5 + 0.5 * std::cos(M_PI * u);
      acc += static_cast<double>(w.samples[static_cast<size_t>(k)]) * fc * sinc(tau) * win;
    }
    out.samples[static_cast<size_t>(i)] = static_cast<float>(acc);
  }
  return out;
}

Waveform to_mono(const MultiChannelAudio& audio) {
  if (audio.channels.empty()) raise(ErrorCode::kInvalidAudio, "zero channels");
  const size_t n = audio.channels[0].size();
  for (const auto& ch : audio.channels) {
    if (ch.size() != n) raise(ErrorCode::kInvalidAudio, "channel length mismatch");
  }
  Waveform out;
  out.sample_rate = audio.sample_rate;
  out.samples.resize(n);
  const double inv = 1.0 / static_cast<double>(audio.channels.size());
  for (size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (const auto& ch : audio.channels) acc += ch[i];
    out.samples[i] = static_cast<float>(acc * inv);
  }
  return out;
}

Waveform fix_duration_repeat_jitter(const Waveform& w, uint64_t seed) {
  if (w.sample_rate != kTargetRate) raise(ErrorCode::kInvalidAudio, "expected 16 kHz input");
  if (w.samples.empty()) raise(ErrorCode::kInvalidAudio, "empty input");

  Waveform out;
  out.sample_rate = kTargetRate;
  const int64_t n = w.size();
  if (n >= kTargetSamples) {
    out.samples.assign(w.samples.begin(), w.samples.begin() + kTargetSamples);
    return out;
  }
  out.samples.resize(kTargetSamples);
  Rng rng(seed);
  int64_t filled = 0;
  while (filled < kTargetSamples) {
    const int64_t offset = rng.uniform_int(0, n - 1);
    const int64_t take = std::min<int64_t>(n, kTargetSamples - filled);
    for (int64_t i = 0; i < take; ++i) {
      out.samples[static_cast<size_t>(filled + i)] =
          w.samples[static_cast<size_t>((offset + i) % n)];
    }
    filled += take;
  }
  return out;
}

MelFrames logmel(const Waveform& w) {
  if (w.sample_rate != kTargetRate || w.size() != kTargetSamples) {
    raise(ErrorCode::kInvalidAudio, "logmel requires a conditioned 16 kHz / 160000-sample input");
  }

  // Reflect padding (mirror about the end samples, edge excluded).
  std::vector<double> padded(static_cast<size_t>(kTargetSamples) + 2 * kMelPad);
  for (int i = 0; i < kMelPad; ++i) {
    padded[static_cast<size_t>(i)] = w.samples[static_cast<size_t>(kMelPad - i)];
  }
  for (int i = 0; i < kTargetSamples; ++i) {
    padded[static_cast<size_t>(kMelPad + i)] = w.samples[static_cast<size_t>(i)];
  }
  for (int i = 0; i < kMelPad; ++i) {
    padded[static_cast<size_t>(kMelPad + kTargetSamples + i)] =
        w.samples[static_cast<size_t>(kTargetSamples - 2 - i)];
  }

  static const std::vector<double> window = [] {
    std::vector<double> win(kStftWin);
    for (int i = 0; i < kStftWin; ++i) {
      win[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / kStftWin);
    }
    return win;
  }();

  const int n_bins = kStftFft / 2 + 1;
  const std::vector<float>& fb = mel_filterbank();

  MelFrames out;
  out.data.resize(static_cast<size_t>(kMelFrames) * kMelBins);
  std::vector<std::complex<double>> frame(kStftFft);
  std::vector<double> power(static_cast<size_t>(n_bins));
  for (int t = 0; t < kMelFrames; ++t) {
    const size_t start = static_cast<size_t>(t) * kStftHop;
    for (int i = 0; i < kStftWin; ++i) {
      frame[static_cast<size_t>(i)] = padded[start + static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
    }
    std::fill(frame.begin() + kStftWin, frame.end(), std::complex<double>(0.0, 0.0));
    fft(frame);
    for (int k = 0; k < n_bins; ++k) {
      power[static_cast<size_t>(k)] = std::norm(frame[static_cast<size_t>(k)]);
    }
    for (int m = 0; m < kMelBins; ++m) {
      double acc = 0.0;
      const float* row = &fb[static_cast<size_t>(m) * n_bins];
      for (int k = 0; k < n_bins; ++k) acc += row[k] * power[static_cast<size_t>(k)];
      out.at(t, m) = static_cast<float>(std::log(acc + kLogMelFloor));
    }
  }
  return out;
}

MelFrames normalize(const MelFrames& m) {
  const size_t n = m.data.size();
  if (n != static_cast<size_t>(kMelFrames) * kMelBins) {
    raise(ErrorCode::kInvalidAudio, "mel frames have wrong shape");
  }
  double mean = 0.0;
  for (float v : m.data) {
    if (!std::isfinite(v)) raise(ErrorCode::kInvalidAudio, "non-finite mel entry");
    mean += v;
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float v : m.data) {
    const double d = v - mean;
    var += d * d;
  }
  const double std_dev = std::max(std::sqrt(var / static_cast<double>(n)), 1e-8);

  MelFrames out;
  out.normalized = true;
  out.data.resize(n);
  for (size_t i = 0; i < n; ++i) {
    out.data[i] = static_cast<float>((m.data[i] - mean) / std_dev);
  }
  return out;
}

namespace {

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

MultiChannelAudio read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::kInvalidAudio, "cannot open " + path);

  char tag[5] = {0};
  in.read(tag, 4);
  if (!in || std::strncmp(tag, "RIFF", 4) != 0) raise(ErrorCode::kInvalidAudio, "not a RIFF file: " + path);
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (!in || std::strncmp(tag, "WAVE", 4) != 0) raise(ErrorCode::kInvalidAudio, "not a WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<char> payload;

  while (in.read(tag, 4)) {
    const uint32_t size = read_u32(in);
    if (!in) break;
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      payload.resize(size);
      in.read(payload.data(), size);
      if (static_cast<uint32_t>(in.gcount()) != size) {
        raise(ErrorCode::kInvalidAudio, "truncated data chunk in " + path);
      }
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || payload.empty()) raise(ErrorCode::kInvalidAudio, "missing fmt/data chunk in " + path);
  if (channels == 0 || rate == 0) raise(ErrorCode::kInvalidAudio, "bad fmt chunk in " + path);

  MultiChannelAudio out;
  out.sample_rate = static_cast<int>(rate);
  out.channels.resize(channels);

  if (format == 1 && bits == 16) {
    const size_t n_frames = payload.size() / (2 * channels);
    for (auto& ch : out.channels) ch.resize(n_frames);
    const int16_t* src = reinterpret_cast<const int16_t*>(payload.data());
    for (size_t i = 0; i < n_frames; ++i) {
      for (uint16_t c = 0; c < channels; ++c) {
        out.channels[c][i] = static_cast<float>(src[i * channels + c]) / 32768.0f;
      }
    }
  } else if (format == 3 && bits == 32) {
    const size_t n_frames = payload.size() / (4 * channels);
    for (auto& ch : out.channels) ch.resize(n_frames);
    const float* src = reinterpret_cast<const float*>(payload.data());
    for (size_t i = 0; i < n_frames; ++i) {
      for (uint16_t c = 0; c < channels; ++c) {
        out.channels[c][i] = src[i * channels + c];
      }
    }
  } else {
    raise(ErrorCode::kInvalidAudio, "unsupported WAV encoding in " + path);
  }
  return out;
}

void write_wav(const std::string& path, const Waveform& w, bool as_float) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::kInvalidAudio, "cannot write " + path);

  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint16_t bytes_per = as_float ? 4 : 2;
  const uint32_t data_size = n * bytes_per;

  out.write("RIFF", 4);
  write_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, as_float ? 3 : 1);
  write_u16(out, 1);
  write_u32(out, static_cast<uint32_t>(w.sample_rate));
  write_u32(out, static_cast<uint32_t>(w.sample_rate) * bytes_per);
  write_u16(out, bytes_per);
  write_u16(out, static_cast<uint16_t>(bytes_per * 8));
  out.write("data", 4);
  write_u32(out, data_size);
  if (as_float) {
    out.write(reinterpret_cast<const char*>(w.samples.data()), data_size);
  } else {
    for (float s : w.samples) {
      const double clipped = std::clamp(static_cast<double>(s), -1.0, 1.0);
      const int16_t q = static_cast<int16_t>(std::lround(clipped * 32767.0));
      out.write(reinterpret_cast<const char*>(&q), 2);
    }
  }
  if (!out) raise(ErrorCode::kInvalidAudio, "write failed: " + path);
}

}  // namespace casdet
