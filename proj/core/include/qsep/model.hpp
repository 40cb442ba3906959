#pragma once

#include <string>
#include <vector>

#include "qsep/data.hpp"
#include "qsep/tensor.hpp"

namespace qsep {

// Architecture + signal geometry. The paper preset is fixed; the desk
// preset is sized so CPU training finishes in minutes. Custom configs
// (tiny shapes for gradient checks) are constructed field by field.
struct ModelConfig {
  std::string preset = "desk";
  int sample_rate = 22050;
  int window = 1024;
  int hop = 256;
  double segment_seconds = 3.0;
  int d_z = 32;
  int kernel = 4;
  std::vector<int> q_channels;  // query-net conv channels
  std::vector<int> q_stride_t;  // query-net per-layer time stride
  int gru_hidden = 128;
  std::vector<int> s_channels;  // separator encoder channels
  std::vector<int> s_stride_t;  // separator per-encoder-layer time stride
  double in_eps = 1e-5;
  double logvar_lo = -10.0, logvar_hi = 10.0;

  int f_net() const { return window / 2; }
  int depth() const { return static_cast<int>(s_channels.size()); }
  // number of stride-2 time layers in the separator encoder
  int t_halvings() const;
  int frames() const { return 1 + (segment_samples() - window) / hop; }
  int segment_samples() const {
    return static_cast<int>(segment_seconds * sample_rate + 0.5);
  }
  // frame count fitted for the stride stack: the largest contained
  // multiple of 2^t_halvings, padded up to one multiple when shorter
  int t_net() const;
  SpectroSetup spectro() const;

  static ModelConfig paper();
  static ModelConfig desk();

  void validate() const;
  std::string serialize() const;
  static ModelConfig deserialize(const std::string& text);
  bool operator==(const ModelConfig& o) const;
};

// Named parameter tensors in a fixed deterministic order.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  void add(std::string name, Tensor t);
  std::size_t index(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  std::size_t count() const { return tensors.size(); }
};

// He-style fan-in scaled normal weights, zero biases, and unit bias on
// the AdaIN scale heads so conditioning starts as plain normalization.
// All values are rounded to 32-bit floats so freshly initialized and
// checkpoint-loaded parameters are bitwise interchangeable.
ParamSet init_params(const ModelConfig& config, uint64_t seed);

struct LatentDist {
  Tensor mu;      // (d_z, 1)
  Tensor logvar;  // (d_z, 1), clamped
};

// Strided conv stack + GRU over the time axis; the GRU's final state
// feeds two affine heads.
LatentDist query_encode(Graph* g, const ParamSet& params,
                        const ModelConfig& config, const Tensor& query_mag);

struct SeparateOut {
  Tensor mask;  // (F, T) in [0, 1]
  Tensor est;   // mask * mixture magnitude
};

// U-Net with the latent tiled in as extra input channels, channel-concat
// skip connections, and AdaIN conditioning on every decoder layer except
// the final sigmoid layer.
SeparateOut separate(Graph* g, const ParamSet& params,
                     const ModelConfig& config, const Tensor& mix_mag,
                     const Tensor& z);

struct Checkpoint {
  ModelConfig config;
  ParamSet params;
  std::vector<AdamState> adam;  // parallel to params
  long iteration = 0;
};

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamSet& params,
                     const std::vector<AdamState>& adam, long iteration);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace qsep
