#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "casdet/error.hpp"
#include "casdet/layerstack.hpp"
#include "casdet/rng.hpp"

using namespace casdet;
namespace fs = std::filesystem;

namespace {

LayerStack random_stack(uint32_t layers, uint32_t frames, uint32_t dim, uint64_t seed) {
  LayerStack s;
  s.branch_tag = BranchTag::kSpectral;
  s.layers = layers;
  s.frames = frames;
  s.dim = dim;
  for (uint32_t l = 0; l < layers; ++l) s.layer_ids.push_back(5 + l);
  s.data.resize(static_cast<size_t>(layers) * frames * dim);
  Rng rng(seed);
  for (float& v : s.data) v = static_cast<float>(rng.normal());
  return s;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("lstk round trip is bit exact") {
  const LayerStack s = random_stack(3, 7, 11, 42);
  const std::string path = "rt.lstk";
  write_layerstack(path, s);
  const LayerStack back = read_layerstack(path);
  CHECK(back.branch_tag == s.branch_tag);
  CHECK(back.layer_ids == s.layer_ids);
  CHECK(back.layers == s.layers);
  CHECK(back.frames == s.frames);
  CHECK(back.dim == s.dim);
  CHECK(back.data == s.data);

  // write-after-read reproduces the file byte for byte
  write_layerstack("rt2.lstk", back);
  CHECK(slurp("rt.lstk") == slurp("rt2.lstk"));
  std::remove("rt.lstk");
  std::remove("rt2.lstk");
}

TEST_CASE("lstk file size follows the header arithmetic") {
  const LayerStack s = random_stack(1, 2, 3, 1);
  write_layerstack("sz.lstk", s);
  CHECK(fs::file_size("sz.lstk") == 4 + 2 + 1 + 12 + 4 + 24);
  std::remove("sz.lstk");
}

TEST_CASE("corrupt lstk files are rejected") {
  const LayerStack s = random_stack(2, 3, 4, 9);
  write_layerstack("c.lstk", s);
  std::vector<char> bytes = slurp("c.lstk");

  {  // truncated payload
    std::ofstream out("c_trunc.lstk", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  }
  CHECK_THROWS_AS(read_layerstack("c_trunc.lstk"), Error);

  {  // trailing garbage
    std::ofstream out("c_trail.lstk", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.write("XX", 2);
  }
  CHECK_THROWS_AS(read_layerstack("c_trail.lstk"), Error);

  {  // bad magic
    std::vector<char> bad = bytes;
    bad[0] = 'X';
    std::ofstream out("c_magic.lstk", std::ios::binary);
    out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
  }
  CHECK_THROWS_AS(read_layerstack("c_magic.lstk"), Error);

  {  // NaN payload entry
    std::vector<char> nanbytes = bytes;
    const uint32_t nan_bits = 0x7fc00000u;
    std::memcpy(nanbytes.data() + nanbytes.size() - 4, &nan_bits, 4);
    std::ofstream out("c_nan.lstk", std::ios::binary);
    out.write(nanbytes.data(), static_cast<std::streamsize>(nanbytes.size()));
  }
  CHECK_THROWS_AS(read_layerstack("c_nan.lstk"), Error);

  CHECK_THROWS_AS(read_layerstack("c_missing.lstk"), Error);
  for (const char* f : {"c.lstk", "c_trunc.lstk", "c_trail.lstk", "c_magic.lstk", "c_nan.lstk"}) {
    std::remove(f);
  }
}

TEST_CASE("stack invariants are enforced") {
  LayerStack s = random_stack(2, 3, 4, 9);
  s.layer_ids = {7, 5};
  CHECK_THROWS_AS(s.validate(), Error);
  s = random_stack(2, 3, 4, 9);
  s.data.pop_back();
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("synth sampling is deterministic") {
  SynthProfile profile;
  const auto [spec_a, wave_a] = synth_sample(profile, 2, 77);
  const auto [spec_b, wave_b] = synth_sample(profile, 2, 77);
  CHECK(spec_a.data == spec_b.data);
  CHECK(wave_a.data == wave_b.data);
  CHECK(spec_a.layer_ids == std::vector<uint32_t>{5, 6, 7});
  CHECK(wave_a.layer_ids == std::vector<uint32_t>{5});

  const auto [spec_c, wave_c] = synth_sample(profile, 2, 78);
  CHECK(spec_c.data != spec_a.data);

  CHECK_THROWS_AS(synth_sample(profile, 5, 1), Error);
  CHECK_THROWS_AS(synth_sample(profile, -1, 1), Error);
}

TEST_CASE("vanishing noise collapses every frame onto the scaled class mean") {
  SynthProfile profile;
  profile.noise_std = 1e-12;
  for (int c = 0; c < 5; ++c) {
    const auto [spec, wave] = synth_sample(profile, c, 5);
    const std::vector<double> mean = profile.expanded_mean(profile.spectral, c);
    for (uint32_t l = 0; l < spec.layers; ++l) {
      for (uint32_t t = 0; t < spec.frames; ++t) {
        for (uint32_t d = 0; d < spec.dim; ++d) {
          CHECK(spec.at(l, t, d) ==
                doctest::Approx(mean[d] * profile.separation).epsilon(1e-6));
        }
      }
    }
  }
}

TEST_CASE("class means are mutually distinct") {
  SynthProfile profile;
  const auto means = profile.class_means();
  for (int a = 0; a < 5; ++a) {
    for (int b = a + 1; b < 5; ++b) {
      double dist = 0.0;
      for (uint32_t d = 0; d < profile.d_base; ++d) {
        const double diff = means[static_cast<size_t>(a)][d] - means[static_cast<size_t>(b)][d];
        dist += diff * diff;
      }
      CHECK(std::sqrt(dist) > 0.5);
    }
  }
}

TEST_CASE("default profile separates classes for a nearest-mean classifier") {
  SynthProfile profile;  // separation 4, noise_std 1
  const int per_class = 200;
  int correct = 0;
  for (int c = 0; c < 5; ++c) {
    // true means of the concatenated (spectral, waveform) frame averages
    std::vector<std::vector<double>> mean_cat(5);
    for (int k = 0; k < 5; ++k) {
      std::vector<double> m = profile.expanded_mean(profile.spectral, k);
      const std::vector<double> mw = profile.expanded_mean(profile.waveform, k);
      m.insert(m.end(), mw.begin(), mw.end());
      for (double& v : m) v *= profile.separation;
      mean_cat[static_cast<size_t>(k)] = std::move(m);
    }
    for (int i = 0; i < per_class; ++i) {
      const auto [spec, wave] =
          synth_sample(profile, c, derive_seed(1234, {static_cast<uint64_t>(c),
                                                      static_cast<uint64_t>(i)}));
      std::vector<double> avg(spec.dim + wave.dim, 0.0);
      for (uint32_t l = 0; l < spec.layers; ++l) {
        for (uint32_t t = 0; t < spec.frames; ++t) {
          for (uint32_t d = 0; d < spec.dim; ++d) avg[d] += spec.at(l, t, d);
        }
      }
      for (uint32_t d = 0; d < spec.dim; ++d) {
        avg[d] /= static_cast<double>(spec.layers) * spec.frames;
      }
      for (uint32_t t = 0; t < wave.frames; ++t) {
        for (uint32_t d = 0; d < wave.dim; ++d) avg[spec.dim + d] += wave.at(0, t, d);
      }
      for (uint32_t d = 0; d < wave.dim; ++d) {
        avg[spec.dim + d] /= static_cast<double>(wave.frames);
      }

      int best = 0;
      double best_dist = 1e300;
      for (int k = 0; k < 5; ++k) {
        double dist = 0.0;
        for (size_t d = 0; d < avg.size(); ++d) {
          const double diff = avg[d] - mean_cat[static_cast<size_t>(k)][d];
          dist += diff * diff;
        }
        if (dist < best_dist) {
          best_dist = dist;
          best = k;
        }
      }
      if (best == c) ++correct;
    }
  }
  CHECK(correct >= 990);  // >= 99% of 1000
}

TEST_CASE("profile validation rejects bad geometry") {
  SynthProfile p;
  p.separation = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = SynthProfile{};
  p.noise_std = -1.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = SynthProfile{};
  p.waveform.layer_ids = {5, 6};
  CHECK_THROWS_AS(p.validate(), Error);
}
