#include "casdet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "casdet/error.hpp"
#include "casdet/rng.hpp"

namespace casdet {

namespace {

// Linear-phase FIR taps realizing a randomly placed multi-notch magnitude
// response. Taps are normalized so the filter never amplifies.
std::vector<double> random_notch_fir(const AugmentConfig& cfg, Rng& rng) {
  const int n_taps = cfg.filter_order + 1;
  const int n_notch = static_cast<int>(rng.uniform_int(cfg.notch_min, cfg.notch_max));

  struct Notch {
    double center, width, depth;
  };
  std::vector<Notch> notches(static_cast<size_t>(n_notch));
  for (auto& nt : notches) {
    nt.center = rng.uniform(200.0, 7800.0);
    nt.width = rng.uniform(100.0, 1000.0);
    nt.depth = rng.uniform(0.3, 1.0);
  }

  auto desired = [&](double hz) {
    double r = 1.0;
    for (const auto& nt : notches) {
      const double d = (hz - nt.center) / nt.width;
      r *= 1.0 - nt.depth * std::exp(-0.5 * d * d);
    }
    return r;
  };

  // Frequency sampling on a dense grid, inverse DFT with linear phase,
  // Hann-windowed to n_taps.
  const int grid = 256;
  const double delay = (n_taps - 1) / 2.0;
  std::vector<double> taps(static_cast<size_t>(n_taps), 0.0);
  for (int k = 0; k < n_taps; ++k) {
    double acc = 0.0;
    for (int j = 0; j <= grid; ++j) {
      const double omega = M_PI * j / grid;
      const double mag = desired(omega / M_PI * (kTargetRate / 2.0));
      const double weight = (j == 0 || j == grid) ? 0.5 : 1.0;
      acc += weight * mag * std::cos(omega * (k - delay));
    }
    const double win = 0.5 - 0.5 * std::cos(2.0 * M_PI * k / (n_taps - 1 > 0 ? n_taps - 1 : 1));
    taps[static_cast<size_t>(k)] = acc / grid * win;
  }

  // Peak magnitude response, evaluated on the same grid.
  double peak = 0.0;
  for (int j = 0; j <= grid; ++j) {
    const double omega = M_PI * j / grid;
    double re = 0.0, im = 0.0;
    for (int k = 0; k < n_taps; ++k) {
      re += taps[static_cast<size_t>(k)] * std::cos(omega * k);
      im -= taps[static_cast<size_t>(k)] * std::sin(omega * k);
    }
    peak = std::max(peak, std::hypot(re, im));
  }
  if (peak > 1e-12) {
    for (double& t : taps) t /= peak;
  }
  return taps;
}

void apply_convolutive(std::vector<float>& x, const AugmentConfig& cfg, Rng& rng) {
  const std::vector<double> taps = random_notch_fir(cfg, rng);
  const int64_t n = static_cast<int64_t>(x.size());
  const int64_t order = static_cast<int64_t>(taps.size()) - 1;
  std::vector<float> y(x.size());
  for (int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const int64_t k_hi = std::min<int64_t>(order, i);
    for (int64_t k = 0; k <= k_hi; ++k) {
      acc += taps[static_cast<size_t>(k)] * x[static_cast<size_t>(i - k)];
    }
    y[static_cast<size_t>(i)] = static_cast<float>(acc);
  }
  x.swap(y);
}

void apply_impulsive(std::vector<float>& x, const AugmentConfig& cfg, Rng& rng) {
  const double rate = rng.uniform(cfg.impulse_rate_min, cfg.impulse_rate_max);
  for (float& s : x) {
    if (rng.uniform() < rate) {
      const double sign = rng.coin(0.5) ? 1.0 : -1.0;
      const double scale = rng.uniform(0.5, 3.0);
      s = static_cast<float>(s + sign * scale * s);
    }
  }
}

void apply_stationary(std::vector<float>& x, const AugmentConfig& cfg, Rng& rng) {
  double sig_power = 0.0;
  for (float s : x) sig_power += static_cast<double>(s) * s;
  if (sig_power <= 0.0) return;  // no reference level for SNR on silence

  const double snr_db = rng.uniform(cfg.snr_min_db, cfg.snr_max_db);

  // White noise shaped by a random coloration filter, then scaled to the
  // target SNR against the actual colored-noise power.
  std::vector<float> noise(x.size());
  for (float& v : noise) v = static_cast<float>(rng.normal());
  apply_convolutive(noise, cfg, rng);

  double noise_power = 0.0;
  for (float v : noise) noise_power += static_cast<double>(v) * v;
  if (noise_power <= 0.0) return;

  const double target = sig_power / std::pow(10.0, snr_db / 10.0);
  const double scale = std::sqrt(target / noise_power);
  for (size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<float>(x[i] + scale * noise[i]);
  }
}

}  // namespace

AugmentMode augment_mode_from_string(const std::string& name) {
  if (name == "convolutive") return AugmentMode::kConvolutive;
  if (name == "impulsive") return AugmentMode::kImpulsive;
  if (name == "stationary") return AugmentMode::kStationary;
  if (name == "series-all") return AugmentMode::kSeriesAll;
  if (name == "random") return AugmentMode::kRandom;
  raise(ErrorCode::kInvalidConfig, "unknown augment mode: " + name);
}

const char* augment_mode_name(AugmentMode mode) {
  switch (mode) {
    case AugmentMode::kConvolutive: return "convolutive";
    case AugmentMode::kImpulsive: return "impulsive";
    case AugmentMode::kStationary: return "stationary";
    case AugmentMode::kSeriesAll: return "series-all";
    case AugmentMode::kRandom: return "random";
  }
  return "unknown";
}

void AugmentConfig::validate() const {
  if (activation_prob < 0.0 || activation_prob > 1.0) {
    raise(ErrorCode::kInvalidConfig, "activation_prob must be in [0,1]");
  }
  if (notch_min < 1 || notch_max < notch_min) {
    raise(ErrorCode::kInvalidConfig, "notch count range invalid");
  }
  if (filter_order < 1) raise(ErrorCode::kInvalidConfig, "filter_order must be >= 1");
  if (snr_max_db < snr_min_db) raise(ErrorCode::kInvalidConfig, "snr range invalid");
  if (impulse_rate_min < 0.0 || impulse_rate_max > 1.0 || impulse_rate_max < impulse_rate_min) {
    raise(ErrorCode::kInvalidConfig, "impulse_rate range invalid");
  }
}

Waveform augment(const Waveform& w, const AugmentConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  if (!rng.coin(cfg.activation_prob)) return w;

  AugmentMode mode = cfg.mode;
  if (mode == AugmentMode::kRandom) {
    switch (rng.uniform_int(0, 2)) {
      case 0: mode = AugmentMode::kConvolutive; break;
      case 1: mode = AugmentMode::kImpulsive; break;
      default: mode = AugmentMode::kStationary; break;
    }
  }

  Waveform out = w;
  switch (mode) {
    case AugmentMode::kConvolutive:
      apply_convolutive(out.samples, cfg, rng);
      break;
    case AugmentMode::kImpulsive:
      apply_impulsive(out.samples, cfg, rng);
      break;
    case AugmentMode::kStationary:
      apply_stationary(out.samples, cfg, rng);
      break;
    case AugmentMode::kSeriesAll:
      apply_convolutive(out.samples, cfg, rng);
      apply_impulsive(out.samples, cfg, rng);
      apply_stationary(out.samples, cfg, rng);
      break;
    case AugmentMode::kRandom:
      break;  // resolved above
  }

  float peak = 0.0f;
  for (float s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0f) {
    for (float& s : out.samples) s /= peak;
  }
  return out;
}

std::pair<Waveform, Waveform> synchronized_pair(const Waveform& w, const AugmentConfig& cfg,
                                                uint64_t seed) {
  Waveform a = augment(w, cfg, seed);
  return {a, a};
}

}  // namespace casdet
