#include "casdet/layerstack.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "casdet/error.hpp"
#include "casdet/metrics.hpp"
#include "casdet/rng.hpp"

namespace casdet {

void LayerStack::validate() const {
  if (layers < 1) raise(ErrorCode::kShapeError, "layer stack needs L >= 1");
  if (frames < 1 || dim < 1) raise(ErrorCode::kShapeError, "layer stack needs T >= 1 and D >= 1");
  if (layer_ids.size() != layers) raise(ErrorCode::kShapeError, "layer_ids size mismatch");
  for (size_t i = 1; i < layer_ids.size(); ++i) {
    if (layer_ids[i] <= layer_ids[i - 1]) {
      raise(ErrorCode::kShapeError, "layer_ids must be strictly increasing");
    }
  }
  if (data.size() != static_cast<size_t>(layers) * frames * dim) {
    raise(ErrorCode::kShapeError, "layer stack data size mismatch");
  }
  for (float v : data) {
    if (!std::isfinite(v)) raise(ErrorCode::kCorruptFile, "non-finite entry in layer stack");
  }
}

namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<char*>(b), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  in.read(reinterpret_cast<char*>(b), sizeof(T));
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_layerstack(const std::string& path, const LayerStack& stack) {
  stack.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::kCorruptFile, "cannot write " + path);
  out.write("LSTK", 4);
  write_le<uint16_t>(out, kLstkVersion);
  write_le<uint8_t>(out, static_cast<uint8_t>(stack.branch_tag));
  write_le<uint32_t>(out, stack.layers);
  write_le<uint32_t>(out, stack.frames);
  write_le<uint32_t>(out, stack.dim);
  for (uint32_t id : stack.layer_ids) write_le<uint32_t>(out, id);
  // f32 payload is little-endian on every supported target.
  out.write(reinterpret_cast<const char*>(stack.data.data()),
            static_cast<std::streamsize>(stack.data.size() * sizeof(float)));
  if (!out) raise(ErrorCode::kCorruptFile, "write failed: " + path);
}

LayerStack read_layerstack(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::kCorruptFile, "cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "LSTK", 4) != 0) raise(ErrorCode::kCorruptFile, "bad magic in " + path);
  const uint16_t version = read_le<uint16_t>(in);
  if (version != kLstkVersion) raise(ErrorCode::kCorruptFile, "unsupported version in " + path);
  const uint8_t tag = read_le<uint8_t>(in);
  if (tag > 1) raise(ErrorCode::kCorruptFile, "bad branch tag in " + path);

  LayerStack stack;
  stack.branch_tag = static_cast<BranchTag>(tag);
  stack.layers = read_le<uint32_t>(in);
  stack.frames = read_le<uint32_t>(in);
  stack.dim = read_le<uint32_t>(in);
  if (!in || stack.layers < 1 || stack.frames < 1 || stack.dim < 1) {
    raise(ErrorCode::kCorruptFile, "bad header in " + path);
  }
  stack.layer_ids.resize(stack.layers);
  for (uint32_t& id : stack.layer_ids) id = read_le<uint32_t>(in);
  if (!in) raise(ErrorCode::kCorruptFile, "truncated layer ids in " + path);

  const size_t count = static_cast<size_t>(stack.layers) * stack.frames * stack.dim;
  stack.data.resize(count);
  in.read(reinterpret_cast<char*>(stack.data.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != count * sizeof(float)) {
    raise(ErrorCode::kCorruptFile, "truncated payload in " + path);
  }
  in.peek();
  if (!in.eof()) raise(ErrorCode::kCorruptFile, "trailing bytes in " + path);

  try {
    stack.validate();
  } catch (const Error&) {
    raise(ErrorCode::kCorruptFile, "invalid stack in " + path);
  }
  return stack;
}

namespace {

// Orthonormal cosine basis row k (k >= 1) at dimension dim.
std::vector<double> cosine_basis_row(uint32_t dim, int k) {
  std::vector<double> v(dim);
  const double scale = std::sqrt(2.0 / dim);
  for (uint32_t d = 0; d < dim; ++d) {
    v[d] = scale * std::cos(M_PI * k * (2.0 * d + 1.0) / (2.0 * dim));
  }
  return v;
}

void check_branch(const SynthBranch& b, const char* name) {
  if (b.frames < 1) raise(ErrorCode::kInvalidConfig, std::string(name) + ": frames must be >= 1");
  if (b.dim < 4) raise(ErrorCode::kInvalidConfig, std::string(name) + ": dim must be >= 4");
  if (b.layer_ids.empty()) raise(ErrorCode::kInvalidConfig, std::string(name) + ": needs layer ids");
  for (size_t i = 1; i < b.layer_ids.size(); ++i) {
    if (b.layer_ids[i] <= b.layer_ids[i - 1]) {
      raise(ErrorCode::kInvalidConfig, std::string(name) + ": layer ids must increase");
    }
  }
}

}  // namespace

void SynthProfile::validate() const {
  if (d_base < 4) raise(ErrorCode::kInvalidConfig, "d_base must be >= 4");
  if (separation <= 0.0) raise(ErrorCode::kInvalidConfig, "separation must be positive");
  if (noise_std <= 0.0) raise(ErrorCode::kInvalidConfig, "noise_std must be positive");
  check_branch(spectral, "spectral branch");
  check_branch(waveform, "waveform branch");
  if (waveform.layer_ids.size() != 1) {
    raise(ErrorCode::kInvalidConfig, "waveform branch must have exactly one layer");
  }
}

std::vector<std::vector<double>> SynthProfile::class_means() const {
  const std::vector<double> u_mix = cosine_basis_row(d_base, 1);
  const std::vector<double> u_speech = cosine_basis_row(d_base, 2);
  const std::vector<double> u_env = cosine_basis_row(d_base, 3);
  std::vector<std::vector<double>> means(5, std::vector<double>(d_base, 0.0));
  for (int c = 0; c < 5; ++c) {
    const LabelAttributes a = label_to_attributes(c);
    for (uint32_t d = 0; d < d_base; ++d) {
      means[static_cast<size_t>(c)][d] =
          a.is_mixed * u_mix[d] + a.speech_spoofed * u_speech[d] + a.env_spoofed * u_env[d];
    }
  }
  return means;
}

std::vector<double> SynthProfile::expanded_mean(const SynthBranch& branch, int class_label) const {
  if (class_label < 0 || class_label > 4) raise(ErrorCode::kInvalidLabel, "class label out of range");
  const LabelAttributes a = label_to_attributes(class_label);
  const std::vector<double> u_mix = cosine_basis_row(branch.dim, 1);
  const std::vector<double> u_speech = cosine_basis_row(branch.dim, 2);
  const std::vector<double> u_env = cosine_basis_row(branch.dim, 3);
  std::vector<double> mean(branch.dim);
  for (uint32_t d = 0; d < branch.dim; ++d) {
    mean[d] = a.is_mixed * branch.mix_scale * u_mix[d] +
              a.speech_spoofed * branch.speech_scale * u_speech[d] +
              a.env_spoofed * branch.env_scale * u_env[d];
  }
  return mean;
}

namespace {

LayerStack synth_branch_stack(const SynthProfile& profile, const SynthBranch& branch,
                              BranchTag tag, int class_label, uint64_t stream_seed) {
  LayerStack stack;
  stack.branch_tag = tag;
  stack.layer_ids = branch.layer_ids;
  stack.layers = static_cast<uint32_t>(branch.layer_ids.size());
  stack.frames = branch.frames;
  stack.dim = branch.dim;
  stack.data.resize(static_cast<size_t>(stack.layers) * stack.frames * stack.dim);

  const std::vector<double> mean = profile.expanded_mean(branch, class_label);
  Rng rng(stream_seed);
  size_t idx = 0;
  for (uint32_t l = 0; l < stack.layers; ++l) {
    for (uint32_t t = 0; t < stack.frames; ++t) {
      for (uint32_t d = 0; d < stack.dim; ++d) {
        stack.data[idx++] = static_cast<float>(mean[d] * profile.separation +
                                               rng.normal(0.0, profile.noise_std));
      }
    }
  }
  return stack;
}

}  // namespace

std::pair<LayerStack, LayerStack> synth_sample(const SynthProfile& profile, int class_label,
                                               uint64_t seed) {
  profile.validate();
  if (class_label < 0 || class_label > 4) raise(ErrorCode::kInvalidLabel, "class label out of range");
  LayerStack spectral = synth_branch_stack(profile, profile.spectral, BranchTag::kSpectral,
                                           class_label, derive_seed(seed, {0}));
  LayerStack waveform = synth_branch_stack(profile, profile.waveform, BranchTag::kWaveform,
                                           class_label, derive_seed(seed, {1}));
  return {std::move(spectral), std::move(waveform)};
}

}  // namespace casdet
