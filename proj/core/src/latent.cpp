#include "qsep/latent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace qsep {

namespace {

double dot_vec(const LatentVec& a, const LatentVec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm_vec(const LatentVec& a) { return std::sqrt(dot_vec(a, a)); }

void require_same_dim(const LatentVec& a, const LatentVec& b,
                      const char* where) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(where) + ": dimension mismatch");
  if (a.empty()) throw std::invalid_argument(std::string(where) + ": empty");
}

void require_nonzero(const LatentVec& a, const char* where) {
  if (norm_vec(a) == 0.0)
    throw std::invalid_argument(std::string(where) + ": zero vector");
}

Tensor to_tensor(const LatentVec& z) {
  return Tensor::from({static_cast<int>(z.size()), 1},
                      std::vector<double>(z.begin(), z.end()));
}

LatentVec to_vec(const Tensor& t) {
  const double* d = t.data();
  return LatentVec(d, d + t.size());
}

}  // namespace

LatentVec slerp(const LatentVec& z1, const LatentVec& z2, double alpha) {
  require_same_dim(z1, z2, "slerp");
  require_nonzero(z1, "slerp");
  require_nonzero(z2, "slerp");
  const double n1 = norm_vec(z1), n2 = norm_vec(z2);
  const double cosv = dot_vec(z1, z2) / (n1 * n2);
  // orthogonal component of the unit z2 against the unit z1
  double orth_sq = 0.0;
  for (std::size_t i = 0; i < z1.size(); ++i) {
    const double o = z2[i] / n2 - cosv * z1[i] / n1;
    orth_sq += o * o;
  }
  const double theta = std::atan2(std::sqrt(orth_sq), cosv);
  LatentVec out(z1.size());
  if (theta < 1e-6 || std::numbers::pi - theta < 1e-6) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (1.0 - alpha) * z1[i] + alpha * z2[i];
    return out;
  }
  const double s = std::sin(theta);
  const double w1 = std::sin((1.0 - alpha) * theta) / s;
  const double w2 = std::sin(alpha * theta) / s;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = w1 * z1[i] + w2 * z2[i];
  return out;
}

LatentVec class_mean(const std::vector<LatentVec>& latents) {
  if (latents.empty()) throw std::invalid_argument("class_mean: empty input");
  LatentVec mean(latents[0].size(), 0.0);
  for (const LatentVec& z : latents) {
    require_same_dim(mean, z, "class_mean");
    for (std::size_t i = 0; i < z.size(); ++i) mean[i] += z[i];
  }
  const double inv = 1.0 / static_cast<double>(latents.size());
  for (double& v : mean) v *= inv;
  return mean;
}

double cosine_distance(const LatentVec& z1, const LatentVec& z2) {
  require_same_dim(z1, z2, "cosine_distance");
  require_nonzero(z1, "cosine_distance");
  require_nonzero(z2, "cosine_distance");
  return 1.0 - dot_vec(z1, z2) / (norm_vec(z1) * norm_vec(z2));
}

const LatentEntry& retrieve_nearest(const LatentVec& z_query,
                                    const LatentLibrary& library) {
  if (library.entries.empty())
    throw std::invalid_argument("retrieve_nearest: empty library");
  const LatentEntry* best = nullptr;
  double best_d = 0.0;
  for (const LatentEntry& e : library.entries) {
    const double d = cosine_distance(z_query, e.z);
    if (!best || d < best_d || (d == best_d && e.label < best->label)) {
      best = &e;
      best_d = d;
    }
  }
  return *best;
}

double delta_cd(const LatentVec& z_test, const LatentVec& z_mean,
                const LatentVec& z_ret) {
  return cosine_distance(z_test, z_mean) - cosine_distance(z_test, z_ret);
}

Tensor net_magnitude(const Waveform& seg, const ModelConfig& config) {
  Spectrogram sp = stft(seg, config.window, config.hop);
  auto [mag, phase] = mag_phase(sp);
  (void)phase;
  return crop_net(mag, config.t_net());
}

LatentVec encode_waveform(const ParamSet& params, const ModelConfig& config,
                          const Waveform& audio) {
  if (audio.sample_rate != config.sample_rate)
    throw std::invalid_argument("encode_waveform: sample rate mismatch");
  Waveform seg = fit_length(audio, config.segment_samples());
  LatentDist dist = query_encode(nullptr, params, config,
                                 net_magnitude(seg, config));
  return to_vec(dist.mu);
}

Waveform separate_with_vector(const ParamSet& params,
                              const ModelConfig& config,
                              const Waveform& mixture, const LatentVec& z) {
  if (mixture.sample_rate != config.sample_rate)
    throw std::invalid_argument("separate_with_vector: sample rate mismatch");
  if (mixture.samples.empty())
    throw std::invalid_argument("separate_with_vector: empty mixture");
  if (static_cast<int>(z.size()) != config.d_z)
    throw std::invalid_argument("separate_with_vector: latent size mismatch");
  Tensor zt = to_tensor(z);
  Waveform padded = mixture;
  if (static_cast<int>(padded.samples.size()) < config.segment_samples())
    padded = fit_length(padded, config.segment_samples());
  Waveform out;
  out.sample_rate = config.sample_rate;
  for (const Waveform& seg : segment(padded, config.segment_seconds)) {
    Spectrogram sp = stft(seg, config.window, config.hop);
    auto [mag, phase] = mag_phase(sp);
    Tensor net = crop_net(mag, config.t_net());
    Tensor net_phase = crop_net(phase, config.t_net());
    SeparateOut so = separate(nullptr, params, config, net, zt);
    Waveform est = reconstruct(so.est, net_phase, config.window, config.hop,
                               sp.frames, config.sample_rate);
    out.samples.insert(out.samples.end(), est.samples.begin(),
                       est.samples.end());
  }
  out.samples.resize(mixture.samples.size());
  return out;
}

IterativeResult iterative_separate(const ParamSet& params,
                                   const ModelConfig& config,
                                   const Waveform& mixture,
                                   const LatentVec& z_init, int n_rounds) {
  if (n_rounds < 1)
    throw std::invalid_argument("iterative_separate: n_rounds < 1");
  if (static_cast<int>(mixture.samples.size()) < config.segment_samples())
    throw std::invalid_argument(
        "iterative_separate: mixture shorter than one segment");
  IterativeResult res;
  LatentVec z = z_init;
  for (int round = 0; round < n_rounds; ++round) {
    if (round > 0) {
      Waveform head;
      head.sample_rate = res.estimate.sample_rate;
      head.samples.assign(
          res.estimate.samples.begin(),
          res.estimate.samples.begin() + config.segment_samples());
      double peak = 0.0;
      for (double v : head.samples) peak = std::max(peak, std::abs(v));
      if (peak == 0.0) break;  // silent estimate: keep the last valid output
      z = encode_waveform(params, config, head);
    }
    res.estimate = separate_with_vector(params, config, mixture, z);
    res.trace.push_back(z);
  }
  return res;
}

void export_latents(const std::vector<std::pair<int, LatentVec>>& latents,
                    const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("export_latents: cannot open " + path);
  const std::size_t d = latents.empty() ? 0 : latents[0].second.size();
  out << "label";
  for (std::size_t i = 0; i < d; ++i) out << ",z_" << i;
  out << '\n';
  char buf[64];
  for (const auto& [label, z] : latents) {
    if (z.size() != d)
      throw std::invalid_argument("export_latents: ragged input");
    out << label;
    for (double v : z) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("export_latents: write failed " + path);
}

LatentLibrary build_class_library(const ParamSet& params,
                                  const ModelConfig& config,
                                  const StemPool& pool, int max_per_class) {
  if (pool.sample_rate != config.sample_rate)
    throw std::invalid_argument("build_class_library: sample rate mismatch");
  LatentLibrary lib;
  for (int c = 0; c < pool.classes(); ++c) {
    const auto& segs = pool.segments[c];
    std::size_t take = segs.size();
    if (max_per_class >= 0)
      take = std::min(take, static_cast<std::size_t>(max_per_class));
    if (take == 0)
      throw std::invalid_argument("build_class_library: class without stems");
    std::vector<LatentVec> mus;
    mus.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
      mus.push_back(encode_waveform(params, config, segs[i]));
    LatentEntry e;
    e.label = c;
    e.z = class_mean(mus);
    e.count = static_cast<int>(take);
    lib.entries.push_back(std::move(e));
  }
  return lib;
}

}  // namespace qsep
