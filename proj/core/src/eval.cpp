#include "qsep/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace qsep {

double sdr(const Waveform& reference, const Waveform& estimate) {
  if (reference.samples.size() != estimate.samples.size())
    throw std::invalid_argument("sdr: length mismatch");
  if (reference.samples.empty())
    throw std::invalid_argument("sdr: empty signals");
  double ss = 0.0, se = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    ss += reference.samples[i] * reference.samples[i];
    se += reference.samples[i] * estimate.samples[i];
  }
  if (ss == 0.0) throw std::invalid_argument("sdr: all-zero reference");
  const double g = se / ss;
  const double target_power = g * g * ss;
  double resid = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    const double e = estimate.samples[i] - g * reference.samples[i];
    resid += e * e;
  }
  if (target_power == 0.0) return -40.0;
  if (resid == 0.0) return 60.0;
  return std::clamp(10.0 * std::log10(target_power / resid), -40.0, 60.0);
}

double delta_sdr(const Waveform& gt, const Waveform& est_ret,
                 const Waveform& est_mean) {
  return sdr(gt, est_ret) - sdr(gt, est_mean);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

const char* eval_mode_name(EvalMode mode) {
  switch (mode) {
    case EvalMode::kMeanVector: return "mean-vector";
    case EvalMode::kGroundTruthQuery: return "ground-truth-query";
    case EvalMode::kRetrieved: return "retrieved";
    case EvalMode::kIterative: return "iterative";
  }
  return "?";
}

std::vector<EvalCase> make_eval_set(const StemPool& pool,
                                    const SpectroSetup& setup, int count,
                                    uint64_t seed) {
  if (count < 1) throw std::invalid_argument("make_eval_set: count < 1");
  if (pool.classes() == 0)
    throw std::invalid_argument("make_eval_set: empty pool");
  if (pool.sample_rate != setup.sample_rate)
    throw std::invalid_argument("make_eval_set: sample rate mismatch");
  const int n = setup.segment_samples();
  Rng rng(seed);
  std::vector<EvalCase> cases;
  cases.reserve(count);
  for (int t = 0; t < count; ++t) {
    EvalCase ec;
    ec.mixture.sample_rate = pool.sample_rate;
    ec.mixture.samples.assign(n, 0.0);
    // per class in order: segment index, then gain
    for (int c = 0; c < pool.classes(); ++c) {
      const auto& segs = pool.segments[c];
      if (segs.empty())
        throw std::invalid_argument("make_eval_set: class without stems");
      const int si = static_cast<int>(rng.uniform_int(segs.size()));
      const double beta = rng.uniform(0.5, 1.0);
      Waveform ref;
      ref.sample_rate = pool.sample_rate;
      ref.samples.assign(n, 0.0);
      const std::size_t take =
          std::min(static_cast<std::size_t>(n), segs[si].samples.size());
      for (std::size_t i = 0; i < take; ++i)
        ref.samples[i] = beta * segs[si].samples[i];
      for (int i = 0; i < n; ++i) ec.mixture.samples[i] += ref.samples[i];
      ec.refs.push_back(std::move(ref));
      ec.beta.push_back(beta);
      ec.segment_index.push_back(si);
    }
    cases.push_back(std::move(ec));
  }
  return cases;
}

namespace {

const LatentEntry& library_entry(const LatentLibrary& library, int label) {
  for (const LatentEntry& e : library.entries)
    if (e.label == label) return e;
  throw std::invalid_argument("evaluate: no library entry for class " +
                              std::to_string(label));
}

}  // namespace

EvalReport evaluate(const ParamSet& params, const ModelConfig& config,
                    const std::vector<EvalCase>& cases,
                    const LatentLibrary& library, EvalMode mode,
                    int iterative_rounds,
                    const std::vector<std::string>& class_names) {
  if (cases.empty()) throw std::invalid_argument("evaluate: empty test set");
  const int classes = static_cast<int>(cases[0].refs.size());
  EvalReport rep;
  rep.preset = config.preset;
  rep.mode = eval_mode_name(mode);
  for (int c = 0; c < classes; ++c)
    rep.class_names.push_back(c < static_cast<int>(class_names.size())
                                  ? class_names[c]
                                  : "class_" + std::to_string(c));
  for (int t = 0; t < static_cast<int>(cases.size()); ++t) {
    const EvalCase& ec = cases[t];
    if (static_cast<int>(ec.refs.size()) != classes)
      throw std::invalid_argument("evaluate: ragged test set");
    for (int c = 0; c < classes; ++c) {
      Waveform est;
      switch (mode) {
        case EvalMode::kMeanVector:
          est = separate_with_vector(params, config, ec.mixture,
                                     library_entry(library, c).z);
          break;
        case EvalMode::kGroundTruthQuery: {
          LatentVec z = encode_waveform(params, config, ec.refs[c]);
          est = separate_with_vector(params, config, ec.mixture, z);
          break;
        }
        case EvalMode::kRetrieved: {
          LatentVec z = encode_waveform(params, config, ec.refs[c]);
          est = separate_with_vector(params, config, ec.mixture,
                                     retrieve_nearest(z, library).z);
          break;
        }
        case EvalMode::kIterative:
          est = iterative_separate(params, config, ec.mixture,
                                   library_entry(library, c).z,
                                   iterative_rounds)
                    .estimate;
          break;
      }
      EvalEntry entry;
      entry.track = t;
      entry.class_id = c;
      entry.sdr_db = sdr(ec.refs[c], est);
      rep.entries.push_back(entry);
    }
  }
  for (int c = 0; c < classes; ++c) {
    std::vector<double> vals;
    for (const EvalEntry& e : rep.entries)
      if (e.class_id == c && std::isfinite(e.sdr_db)) vals.push_back(e.sdr_db);
    rep.class_median.push_back(median(vals));
  }
  return rep;
}

std::string EvalReport::tsv() const {
  std::ostringstream out;
  out << "track\tclass\tsdr_db\n";
  char buf[64];
  for (const EvalEntry& e : entries) {
    std::snprintf(buf, sizeof buf, "%.10g", e.sdr_db);
    out << e.track << '\t'
        << (e.class_id < static_cast<int>(class_names.size())
                ? class_names[e.class_id]
                : std::to_string(e.class_id))
        << '\t' << buf << '\n';
  }
  return out.str();
}

std::string EvalReport::table() const {
  std::size_t width = 5;
  for (const std::string& n : class_names) width = std::max(width, n.size());
  std::ostringstream out;
  out << "preset: " << preset << "  mode: " << mode << '\n';
  out << std::string(width, ' ') << "  median SDR (dB)\n";
  char buf[64];
  for (std::size_t c = 0; c < class_median.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%15.2f", class_median[c]);
    const std::string& name =
        c < class_names.size() ? class_names[c] : std::to_string(c);
    out << name << std::string(width - name.size() + 2, ' ') << buf << '\n';
  }
  return out.str();
}

}  // namespace qsep
