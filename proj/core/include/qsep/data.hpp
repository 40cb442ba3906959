#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsep/dsp.hpp"
#include "qsep/rng.hpp"
#include "qsep/tensor.hpp"

namespace qsep {

// Geometry shared by the sampler and the networks: STFT parameters plus
// the network-facing crop target.
struct SpectroSetup {
  int sample_rate = 22050;
  int window = 1024;
  int hop = 256;
  int t_net = 256;
  double segment_seconds = 3.0;

  int f_net() const { return window / 2; }
  int segment_samples() const {
    return static_cast<int>(segment_seconds * sample_rate + 0.5);
  }
  int frames() const { return 1 + (segment_samples() - window) / hop; }
};

enum class Timbre { kHarmonic, kNoiseBurst, kLowTone, kTransient };

struct ClassSpec {
  int id = 0;
  std::string name;
  Timbre timbre = Timbre::kHarmonic;
};

// The default four classes, spectrally mirroring vocals / drums / bass /
// other roles.
std::vector<ClassSpec> default_classes();

Timbre timbre_from_name(const std::string& name);
std::string timbre_name(Timbre t);

// Deterministic synthetic stem: same (spec, seed) always yields the same
// samples. Peak-normalized to 0.5.
Waveform generate_stem(const ClassSpec& spec, double duration_seconds,
                       int sample_rate, uint64_t seed);

struct StemPool {
  int sample_rate = 0;
  double segment_seconds = 0.0;
  std::vector<std::string> class_names;
  std::vector<std::vector<Waveform>> segments;  // [class][segment]

  int classes() const { return static_cast<int>(class_names.size()); }
};

StemPool make_synthetic_pool(const std::vector<ClassSpec>& classes,
                             int tracks_per_class, double track_seconds,
                             int sample_rate, double segment_seconds,
                             uint64_t seed);

// Writes <root>/<class>/trackNN.wav (float32) for each class plus a
// key=value manifest.txt recording the recipe and seed.
void write_stem_dir(const std::string& root,
                    const std::vector<ClassSpec>& classes,
                    int tracks_per_class, double track_seconds,
                    int sample_rate, uint64_t seed);

// Loads <root>/<class>/<track>.wav with deterministic lexicographic
// ordering of classes and tracks, segmenting every track.
StemPool load_stem_dir(const std::string& root, int expected_rate,
                       double segment_seconds);

// One training example: target group T vs residual group R, binary gates
// and gains per class, the summed waveforms, and the cropped magnitudes.
struct MixtureSample {
  Waveform m, s_t, s_r;
  std::vector<uint8_t> in_target;    // per class: 1 if in T
  std::vector<uint8_t> alpha;        // per class gate
  std::vector<double> beta;          // per class gain in [0.25, 1.25)
  std::vector<int> segment_index;    // per class
  Tensor mix_mag, target_mag;        // (f_net, t_net)
};

struct SamplerStats {
  uint64_t gate_draws = 0, gate_ones = 0;
  uint64_t gain_draws = 0;
  double gain_sum = 0.0;
};

// Owns one deterministic stream. Draw order per example: group size,
// group subset, per-class segment index, per-class gate, per-class gain,
// then gate redraws for group T while s_T is identically zero.
class MixtureSampler {
 public:
  MixtureSampler(const StemPool& pool, const SpectroSetup& setup,
                 uint64_t seed);

  MixtureSample next();

  // Tallies over every gate/gain draw made, redraws included.
  const SamplerStats& stats() const { return stats_; }

 private:
  const StemPool* pool_;
  SpectroSetup setup_;
  Rng rng_;
  SamplerStats stats_;
};

}  // namespace qsep
