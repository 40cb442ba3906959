#pragma once

#include <string>
#include <vector>

#include "qsep/latent.hpp"

namespace qsep {

// Projection SDR in dB: the estimate is projected onto the reference and
// the ratio of projected power to residual power is reported, capped to
// [-40, +60].
double sdr(const Waveform& reference, const Waveform& estimate);

// sdr(gt, est_ret) - sdr(gt, est_mean).
double delta_sdr(const Waveform& gt, const Waveform& est_ret,
                 const Waveform& est_mean);

// Even counts average the two central values. The input is copied.
double median(std::vector<double> values);

enum class EvalMode { kMeanVector, kGroundTruthQuery, kRetrieved, kIterative };

const char* eval_mode_name(EvalMode mode);

// One-segment mixture with every class present (all gates open) and the
// per-class gain-scaled stems kept as references.
struct EvalCase {
  Waveform mixture;
  std::vector<Waveform> refs;          // per class, beta-scaled
  std::vector<double> beta;            // per class gain
  std::vector<int> segment_index;      // per class
};

std::vector<EvalCase> make_eval_set(const StemPool& pool,
                                    const SpectroSetup& setup, int count,
                                    uint64_t seed);

struct EvalEntry {
  int track = 0;
  int class_id = 0;
  double sdr_db = 0.0;
};

struct EvalReport {
  std::string preset, mode;
  std::vector<std::string> class_names;
  std::vector<EvalEntry> entries;        // sorted by (track, class)
  std::vector<double> class_median;      // per class, finite entries only

  std::string tsv() const;
  std::string table() const;
};

// Separates every (case, class) pair with the conditioning vector the
// mode selects: the class-mean library entry, the encoded ground-truth
// stem, the library entry nearest to that encoding, or the iterative
// refinement started from the class mean.
EvalReport evaluate(const ParamSet& params, const ModelConfig& config,
                    const std::vector<EvalCase>& cases,
                    const LatentLibrary& library, EvalMode mode,
                    int iterative_rounds = 2,
                    const std::vector<std::string>& class_names = {});

}  // namespace qsep
