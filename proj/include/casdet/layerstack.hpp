#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace casdet {

enum class BranchTag : uint8_t { kSpectral = 0, kWaveform = 1 };

// L x T x D stack of frozen-backbone hidden states, row-major
// (layer, time, dim). This is the file boundary that keeps the backbones
// themselves out of the pipeline.
struct LayerStack {
  BranchTag branch_tag = BranchTag::kSpectral;
  std::vector<uint32_t> layer_ids;  // strictly increasing, one per layer
  uint32_t layers = 0;
  uint32_t frames = 0;
  uint32_t dim = 0;
  std::vector<float> data;  // layers * frames * dim

  float& at(uint32_t l, uint32_t t, uint32_t d) {
    return data[(static_cast<size_t>(l) * frames + t) * dim + d];
  }
  float at(uint32_t l, uint32_t t, uint32_t d) const {
    return data[(static_cast<size_t>(l) * frames + t) * dim + d];
  }
  const float* row(uint32_t l, uint32_t t) const {
    return &data[(static_cast<size_t>(l) * frames + t) * dim];
  }

  // Throws on violated invariants (L >= 1, increasing ids, size, finiteness).
  void validate() const;
};

// .lstk container: magic "LSTK", version u16, branch_tag u8, L/T/D u32,
// L x u32 layer ids, then L*T*D little-endian f32, row-major.
constexpr uint16_t kLstkVersion = 1;

void write_layerstack(const std::string& path, const LayerStack& stack);
LayerStack read_layerstack(const std::string& path);

// Per-branch geometry of the synthetic generator.
struct SynthBranch {
  uint32_t frames = 16;
  uint32_t dim = 32;
  std::vector<uint32_t> layer_ids = {5, 6, 7};
  // How strongly each label attribute (mixed / spoofed speech / spoofed
  // environment) shows up in this branch's class means.
  double mix_scale = 1.0;
  double speech_scale = 1.0;
  double env_scale = 1.0;
};

// Class-conditional synthetic embedding source. Class means are built from
// three orthonormal cosine basis vectors keyed to the label attributes, so
// classes 1-4 share a common "mixed" direction and the spoof attributes are
// independent axes. Rows are mean * separation + N(0, noise_std).
struct SynthProfile {
  uint32_t d_base = 16;
  double separation = 4.0;
  double noise_std = 1.0;
  uint64_t seed = 0;
  SynthBranch spectral;
  SynthBranch waveform{16, 32, {5}, 1.0, 0.2, 0.2};

  void validate() const;

  // 5 x d_base matrix of unscaled class means (unit attribute basis).
  std::vector<std::vector<double>> class_means() const;

  // Class mean expanded to a branch's dimension with its attribute scales.
  std::vector<double> expanded_mean(const SynthBranch& branch, int class_label) const;
};

// Draws one sample's (spectral, waveform) stack pair. Deterministic in
// (profile, class_label, seed).
std::pair<LayerStack, LayerStack> synth_sample(const SynthProfile& profile, int class_label,
                                               uint64_t seed);

}  // namespace casdet
