#include "qsep/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "qsep/wav.hpp"

namespace fs = std::filesystem;

namespace qsep {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

void peak_normalize(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::fabs(v));
  if (m > 0.0) {
    const double s = peak / m;
    for (double& v : x) v *= s;
  }
}

// Sustained harmonic stack around a wandering fundamental with vibrato.
// Partial weights fall off as 1/h^2, so the energy is concentrated in
// 260-680 Hz with a faint tail under 1.1 kHz, clear of the low-tone
// and transient bands.
std::vector<double> synth_harmonic(int n, int sr, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  int pos = 0;
  double phase = 0.0;
  while (pos < n) {
    const int note_len =
        static_cast<int>(sr * rng.uniform(0.3, 0.7));
    const double f0 = rng.uniform(260.0, 340.0);
    const double vib_rate = rng.uniform(4.0, 6.5);
    const double vib_depth = 0.01 * f0;
    const double amp = rng.uniform(0.5, 1.0);
    const int end = std::min(n, pos + note_len);
    for (int i = pos; i < end; ++i) {
      const double t = static_cast<double>(i - pos) / sr;
      const double env =
          amp * std::min(1.0, t / 0.02) * std::exp(-0.8 * t);
      const double f = f0 + vib_depth * std::sin(kTau * vib_rate * t);
      phase += kTau * f / sr;
      double v = 0.0;
      for (int h = 1; h <= 3; ++h)
        v += std::sin(phase * h) / std::pow(static_cast<double>(h), 2.0);
      x[static_cast<std::size_t>(i)] = env * v;
    }
    pos = end;
  }
  return x;
}

// Noise bursts band-passed to the top octave: white noise smoothed to
// a couple hundred hertz of bandwidth, then ring-modulated onto a
// carrier near 3.35 kHz, so the class occupies roughly 3.0-3.7 kHz.
// Burst spacing keeps at least one event in any 0.6 s window.
std::vector<double> synth_noise_burst(int n, int sr, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  const int ma = std::max(3, sr / 500);
  int pos = 0;
  while (pos < n) {
    const double tau = rng.uniform(0.02, 0.05);
    const double amp = rng.uniform(0.5, 1.0);
    const double fc = rng.uniform(3250.0, 3450.0);
    const int burst_len = std::min(n - pos, static_cast<int>(sr * 5 * tau));
    std::vector<double> ring(static_cast<std::size_t>(ma), 0.0);
    double acc = 0.0;
    int ri = 0;
    double phase = rng.uniform(0.0, kTau);
    for (int i = 0; i < burst_len; ++i) {
      const double white = rng.uniform(-1.0, 1.0);
      acc += white - ring[static_cast<std::size_t>(ri)];
      ring[static_cast<std::size_t>(ri)] = white;
      ri = (ri + 1) % ma;
      phase += kTau * fc / sr;
      x[static_cast<std::size_t>(pos + i)] +=
          amp * (acc / ma) * std::sin(phase) *
          std::exp(-static_cast<double>(i) / (tau * sr));
    }
    pos += static_cast<int>(sr * rng.uniform(0.10, 0.22));
  }
  return x;
}

// Low held tones; fundamental capped so nearly all energy sits under
// 140 Hz even with the small second harmonic.
std::vector<double> synth_low_tone(int n, int sr, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  int pos = 0;
  double phase = 0.0;
  while (pos < n) {
    const int note_len = static_cast<int>(sr * rng.uniform(0.35, 0.8));
    const double f0 = rng.uniform(40.0, 70.0);
    const double amp = rng.uniform(0.6, 1.0);
    const int end = std::min(n, pos + note_len);
    for (int i = pos; i < end; ++i) {
      const double t = static_cast<double>(i - pos) / sr;
      const double env = amp * std::min(1.0, t / 0.01) * std::exp(-1.2 * t);
      phase += kTau * f0 / sr;
      x[static_cast<std::size_t>(i)] =
          env * (std::sin(phase) + 0.2 * std::sin(2.0 * phase));
    }
    pos = end;
  }
  return x;
}

// Short frequency sweeps at random onsets. The 1.55-2.15 kHz sweep
// corridor sits in the gap between the harmonic stack and the noise
// band.
std::vector<double> synth_transient(int n, int sr, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  int pos = 0;
  while (pos < n) {
    const int chirp_len =
        std::min(n - pos, static_cast<int>(sr * rng.uniform(0.03, 0.07)));
    const double f1 = rng.uniform(1550.0, 1650.0);
    const double f2 = rng.uniform(2050.0, 2150.0);
    const double amp = rng.uniform(0.4, 1.0);
    double phase = 0.0;
    for (int i = 0; i < chirp_len; ++i) {
      const double u = static_cast<double>(i) / chirp_len;
      const double f = f1 + (f2 - f1) * u;
      phase += kTau * f / sr;
      const double env = amp * std::sin(3.14159265358979323846 * u);
      x[static_cast<std::size_t>(pos + i)] += env * std::sin(phase);
    }
    pos += static_cast<int>(sr * rng.uniform(0.06, 0.16));
  }
  return x;
}

}  // namespace

std::vector<ClassSpec> default_classes() {
  return {{1, "vocals", Timbre::kHarmonic},
          {2, "drums", Timbre::kNoiseBurst},
          {3, "bass", Timbre::kLowTone},
          {4, "other", Timbre::kTransient}};
}

Timbre timbre_from_name(const std::string& name) {
  if (name == "harmonic") return Timbre::kHarmonic;
  if (name == "noise_burst") return Timbre::kNoiseBurst;
  if (name == "low_tone") return Timbre::kLowTone;
  if (name == "transient") return Timbre::kTransient;
  throw std::invalid_argument("unknown timbre: " + name);
}

std::string timbre_name(Timbre t) {
  switch (t) {
    case Timbre::kHarmonic: return "harmonic";
    case Timbre::kNoiseBurst: return "noise_burst";
    case Timbre::kLowTone: return "low_tone";
    case Timbre::kTransient: return "transient";
  }
  return "harmonic";
}

Waveform generate_stem(const ClassSpec& spec, double duration_seconds,
                       int sample_rate, uint64_t seed) {
  const int n = static_cast<int>(duration_seconds * sample_rate + 0.5);
  Rng rng(Rng::mix(seed, static_cast<uint64_t>(spec.id) * 0x517a1ULL +
                             static_cast<uint64_t>(spec.timbre)));
  std::vector<double> x;
  switch (spec.timbre) {
    case Timbre::kHarmonic: x = synth_harmonic(n, sample_rate, rng); break;
    case Timbre::kNoiseBurst: x = synth_noise_burst(n, sample_rate, rng); break;
    case Timbre::kLowTone: x = synth_low_tone(n, sample_rate, rng); break;
    case Timbre::kTransient: x = synth_transient(n, sample_rate, rng); break;
  }
  peak_normalize(x, 0.5);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = std::move(x);
  return w;
}

StemPool make_synthetic_pool(const std::vector<ClassSpec>& classes,
                             int tracks_per_class, double track_seconds,
                             int sample_rate, double segment_seconds,
                             uint64_t seed) {
  if (classes.size() < 2)
    throw std::invalid_argument("need at least two classes");
  StemPool pool;
  pool.sample_rate = sample_rate;
  pool.segment_seconds = segment_seconds;
  for (const ClassSpec& c : classes) {
    pool.class_names.push_back(c.name);
    std::vector<Waveform> segs;
    for (int t = 0; t < tracks_per_class; ++t) {
      const Waveform track = generate_stem(
          c, track_seconds, sample_rate,
          Rng::mix(seed, static_cast<uint64_t>(t) + 1));
      for (Waveform& s : segment(track, segment_seconds))
        segs.push_back(std::move(s));
    }
    pool.segments.push_back(std::move(segs));
  }
  return pool;
}

void write_stem_dir(const std::string& root,
                    const std::vector<ClassSpec>& classes,
                    int tracks_per_class, double track_seconds,
                    int sample_rate, uint64_t seed) {
  fs::create_directories(root);
  char buf[64];
  for (const ClassSpec& c : classes) {
    const fs::path dir = fs::path(root) / c.name;
    fs::create_directories(dir);
    for (int t = 0; t < tracks_per_class; ++t) {
      std::snprintf(buf, sizeof buf, "track%02d.wav", t + 1);
      const Waveform w = generate_stem(
          c, track_seconds, sample_rate,
          Rng::mix(seed, static_cast<uint64_t>(t) + 1));
      write_wav((dir / buf).string(), w, WavEncoding::kFloat32);
    }
  }
  std::ofstream mf(fs::path(root) / "manifest.txt", std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot write manifest under " + root);
  mf << "seed=" << seed << "\n";
  mf << "sample_rate=" << sample_rate << "\n";
  mf << "classes=" << classes.size() << "\n";
  mf << "tracks_per_class=" << tracks_per_class << "\n";
  char num[64];
  std::snprintf(num, sizeof num, "%.17g", track_seconds);
  mf << "track_seconds=" << num << "\n";
  for (const ClassSpec& c : classes)
    mf << "class_" << c.id << "=" << c.name << ":" << timbre_name(c.timbre)
       << "\n";
}

StemPool load_stem_dir(const std::string& root, int expected_rate,
                       double segment_seconds) {
  if (!fs::is_directory(root))
    throw std::runtime_error("stem directory does not exist: " + root);
  std::vector<std::string> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty())
    throw std::runtime_error("no class directories under " + root);

  StemPool pool;
  pool.sample_rate = expected_rate;
  pool.segment_seconds = segment_seconds;
  for (const std::string& cls : class_dirs) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(fs::path(root) / cls))
      if (e.is_regular_file() && e.path().extension() == ".wav")
        files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw std::runtime_error("class directory has no WAV files: " + cls);
    std::vector<Waveform> segs;
    for (const std::string& f : files) {
      const Waveform track = read_wav(f, expected_rate);
      if (pool.sample_rate <= 0) pool.sample_rate = track.sample_rate;
      for (Waveform& s : segment(track, segment_seconds))
        segs.push_back(std::move(s));
    }
    pool.class_names.push_back(cls);
    pool.segments.push_back(std::move(segs));
  }
  return pool;
}

MixtureSampler::MixtureSampler(const StemPool& pool, const SpectroSetup& setup,
                               uint64_t seed)
    : pool_(&pool), setup_(setup), rng_(seed) {
  if (pool.classes() < 2)
    throw std::invalid_argument("sampler needs at least two classes");
  for (const auto& segs : pool.segments)
    if (segs.empty())
      throw std::invalid_argument("sampler needs at least one segment per class");
  if (pool.sample_rate != setup.sample_rate)
    throw std::invalid_argument("pool sample rate does not match setup");
}

MixtureSample MixtureSampler::next() {
  const int k = pool_->classes();
  MixtureSample s;
  s.in_target.assign(static_cast<std::size_t>(k), 0);
  s.alpha.assign(static_cast<std::size_t>(k), 0);
  s.beta.assign(static_cast<std::size_t>(k), 0.0);
  s.segment_index.assign(static_cast<std::size_t>(k), 0);

  // group split: uniform size in 1..K, then a uniform subset of that size
  const int t_size = 1 + static_cast<int>(rng_.uniform_int(
                             static_cast<uint64_t>(k)));
  std::vector<int> order(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < t_size; ++i) {
    const int j = i + static_cast<int>(rng_.uniform_int(
                          static_cast<uint64_t>(k - i)));
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(j)]);
    s.in_target[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
  }

  for (int i = 0; i < k; ++i)
    s.segment_index[static_cast<std::size_t>(i)] = static_cast<int>(
        rng_.uniform_int(pool_->segments[static_cast<std::size_t>(i)].size()));

  for (int i = 0; i < k; ++i) {
    const bool g = rng_.bernoulli(0.5);
    ++stats_.gate_draws;
    stats_.gate_ones += g ? 1 : 0;
    s.alpha[static_cast<std::size_t>(i)] = g ? 1 : 0;
  }
  for (int i = 0; i < k; ++i) {
    const double b = rng_.uniform(0.25, 1.25);
    ++stats_.gain_draws;
    stats_.gain_sum += b;
    s.beta[static_cast<std::size_t>(i)] = b;
  }

  const int n = setup_.segment_samples();
  auto accumulate = [&](std::vector<double>& dst, int cls) {
    const Waveform& seg =
        pool_->segments[static_cast<std::size_t>(cls)]
                       [static_cast<std::size_t>(s.segment_index[static_cast<std::size_t>(cls)])];
    const double g = s.alpha[static_cast<std::size_t>(cls)] *
                     s.beta[static_cast<std::size_t>(cls)];
    if (g == 0.0) return;
    for (int i = 0; i < n; ++i)
      dst[static_cast<std::size_t>(i)] += g * seg.samples[static_cast<std::size_t>(i)];
  };

  std::vector<double> target(static_cast<std::size_t>(n), 0.0);
  int redraws = 0;
  for (;;) {
    std::fill(target.begin(), target.end(), 0.0);
    for (int i = 0; i < k; ++i)
      if (s.in_target[static_cast<std::size_t>(i)]) accumulate(target, i);
    bool silent = true;
    for (double v : target)
      if (v != 0.0) {
        silent = false;
        break;
      }
    if (!silent) break;
    if (++redraws > 10000)
      throw std::runtime_error("target group stayed silent after many redraws");
    for (int i = 0; i < k; ++i) {
      if (!s.in_target[static_cast<std::size_t>(i)]) continue;
      const bool g = rng_.bernoulli(0.5);
      ++stats_.gate_draws;
      stats_.gate_ones += g ? 1 : 0;
      s.alpha[static_cast<std::size_t>(i)] = g ? 1 : 0;
    }
  }

  std::vector<double> residual(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < k; ++i)
    if (!s.in_target[static_cast<std::size_t>(i)]) accumulate(residual, i);

  s.s_t.sample_rate = setup_.sample_rate;
  s.s_t.samples = target;
  s.s_r.sample_rate = setup_.sample_rate;
  s.s_r.samples = residual;
  s.m.sample_rate = setup_.sample_rate;
  s.m.samples.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    s.m.samples[static_cast<std::size_t>(i)] =
        target[static_cast<std::size_t>(i)] + residual[static_cast<std::size_t>(i)];

  const Spectrogram sm = stft(s.m, setup_.window, setup_.hop);
  const Spectrogram st = stft(s.s_t, setup_.window, setup_.hop);
  s.mix_mag = crop_net(mag_phase(sm).first, setup_.t_net);
  s.target_mag = crop_net(mag_phase(st).first, setup_.t_net);
  return s;
}

}  // namespace qsep
