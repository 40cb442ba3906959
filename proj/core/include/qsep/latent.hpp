#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qsep/data.hpp"
#include "qsep/dsp.hpp"
#include "qsep/model.hpp"

namespace qsep {

using LatentVec = std::vector<double>;

struct LatentEntry {
  int label = 0;
  LatentVec z;
  int count = 1;  // vectors averaged into z
};

struct LatentLibrary {
  std::vector<LatentEntry> entries;
};

// Great-circle interpolation between the endpoints. The angle comes from
// atan2 of the orthogonal and parallel components of z2 against z1; when
// it degenerates (below 1e-6 or within 1e-6 of pi) this falls back to
// linear interpolation.
LatentVec slerp(const LatentVec& z1, const LatentVec& z2, double alpha);

// Arithmetic mean. Inputs are mu vectors; sampling noise plays no part.
LatentVec class_mean(const std::vector<LatentVec>& latents);

// 1 - cos(z1, z2), in [0, 2]. Both inputs must be nonzero.
double cosine_distance(const LatentVec& z1, const LatentVec& z2);

// Entry with the smallest cosine distance to the query; ties go to the
// lowest label.
const LatentEntry& retrieve_nearest(const LatentVec& z_query,
                                    const LatentLibrary& library);

// CD(z_test, z_mean) - CD(z_test, z_ret).
double delta_cd(const LatentVec& z_test, const LatentVec& z_mean,
                const LatentVec& z_ret);

// Net-shaped magnitude of one already-segmented waveform.
Tensor net_magnitude(const Waveform& seg, const ModelConfig& config);

// mu of the encoded waveform; longer/shorter audio is center-cropped or
// zero-padded to one segment first.
LatentVec encode_waveform(const ParamSet& params, const ModelConfig& config,
                          const Waveform& audio);

// Segment-wise separation of an arbitrary-length mixture with one shared
// conditioning vector; output is trimmed to the mixture's length.
Waveform separate_with_vector(const ParamSet& params,
                              const ModelConfig& config,
                              const Waveform& mixture, const LatentVec& z);

struct IterativeResult {
  Waveform estimate;
  std::vector<LatentVec> trace;  // vector used in each round, z_init first
};

// Round 1 separates with z_init; every later round re-encodes the
// previous estimate (mu only) and separates again. A silent estimate
// stops the iteration with the last valid output. Re-encoding reads the
// first segment's estimate; the refined vector is shared across
// segments.
IterativeResult iterative_separate(const ParamSet& params,
                                   const ModelConfig& config,
                                   const Waveform& mixture,
                                   const LatentVec& z_init, int n_rounds);

// CSV with header label,z_0,...,z_{d-1}; values survive a write/parse
// round trip exactly.
void export_latents(const std::vector<std::pair<int, LatentVec>>& latents,
                    const std::string& path);

// Per-class mean vectors over up to max_per_class encoded segments
// (all segments when max_per_class < 0); labels are class indices.
LatentLibrary build_class_library(const ParamSet& params,
                                  const ModelConfig& config,
                                  const StemPool& pool,
                                  int max_per_class = -1);

}  // namespace qsep
