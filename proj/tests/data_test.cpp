#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "qsep/data.hpp"

using namespace qsep;

namespace {

double peak(const Waveform& w) {
  double p = 0.0;
  for (double v : w.samples) p = std::max(p, std::abs(v));
  return p;
}

int zero_crossings(const Waveform& w) {
  int n = 0;
  for (std::size_t i = 1; i < w.samples.size(); ++i)
    if ((w.samples[i - 1] < 0) != (w.samples[i] < 0)) ++n;
  return n;
}

}  // namespace

TEST_CASE("generate_stem is deterministic and peak normalized") {
  ClassSpec spec = default_classes()[0];
  Waveform a = generate_stem(spec, 2.0, 8000, 77);
  Waveform b = generate_stem(spec, 2.0, 8000, 77);
  CHECK(a.samples == b.samples);
  CHECK(a.samples.size() == 16000);
  CHECK(peak(a) == doctest::Approx(0.5).epsilon(1e-12));
  Waveform c = generate_stem(spec, 2.0, 8000, 78);
  CHECK(a.samples != c.samples);
}

TEST_CASE("the four default classes have distinct characters") {
  std::vector<ClassSpec> classes = default_classes();
  REQUIRE(classes.size() == 4);
  CHECK(classes[0].timbre == Timbre::kHarmonic);
  CHECK(classes[2].timbre == Timbre::kLowTone);
  std::vector<Waveform> stems;
  for (const ClassSpec& c : classes)
    stems.push_back(generate_stem(c, 2.0, 8000, 5));
  // the bass sits far below the noise bursts in zero-crossing rate
  CHECK(zero_crossings(stems[2]) * 10 < zero_crossings(stems[1]));
  for (std::size_t i = 0; i < stems.size(); ++i)
    for (std::size_t j = i + 1; j < stems.size(); ++j)
      CHECK(stems[i].samples != stems[j].samples);
}

TEST_CASE("timbre names round trip") {
  for (Timbre t : {Timbre::kHarmonic, Timbre::kNoiseBurst, Timbre::kLowTone,
                   Timbre::kTransient})
    CHECK(timbre_from_name(timbre_name(t)) == t);
  CHECK_THROWS(timbre_from_name("bagpipe"));
}

TEST_CASE("make_synthetic_pool shapes") {
  StemPool pool =
      make_synthetic_pool(default_classes(), 3, 1.8, 8000, 0.6, 11);
  CHECK(pool.classes() == 4);
  CHECK(pool.sample_rate == 8000);
  for (int c = 0; c < 4; ++c) {
    CHECK(pool.segments[c].size() == 9);  // 3 tracks x 3 segments
    for (const Waveform& s : pool.segments[c])
      CHECK(s.samples.size() == 4800);
  }
  CHECK_THROWS(make_synthetic_pool({default_classes()[0]}, 3, 1.8, 8000, 0.6,
                                   11));
}

TEST_CASE("write_stem_dir and load_stem_dir round trip") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "qsep_data_test";
  fs::remove_all(dir);
  write_stem_dir(dir.string(), default_classes(), 2, 1.2, 8000, 13);
  CHECK(fs::exists(dir / "manifest.txt"));
  CHECK(fs::exists(dir / "vocals" / "track01.wav"));
  StemPool loaded = load_stem_dir(dir.string(), 8000, 0.6);
  StemPool direct = make_synthetic_pool(default_classes(), 2, 1.2, 8000, 0.6,
                                        13);
  REQUIRE(loaded.classes() == 4);
  // directories come back sorted by name, so match classes by name
  for (int lc = 0; lc < 4; ++lc) {
    int dc = -1;
    for (int c = 0; c < 4; ++c)
      if (direct.class_names[c] == loaded.class_names[lc]) dc = c;
    REQUIRE(dc >= 0);
    REQUIRE(loaded.segments[lc].size() == direct.segments[dc].size());
    for (std::size_t s = 0; s < loaded.segments[lc].size(); ++s)
      for (std::size_t i = 0; i < 4800; ++i)
        CHECK(loaded.segments[lc][s].samples[i] ==
              static_cast<double>(
                  static_cast<float>(direct.segments[dc][s].samples[i])));
  }
  CHECK_THROWS(load_stem_dir((dir / "nope").string(), 8000, 0.6));
  CHECK_THROWS(load_stem_dir(dir.string(), 44100, 0.6));
  fs::remove_all(dir);
}

TEST_CASE("mixture sampler invariants") {
  StemPool pool =
      make_synthetic_pool(default_classes(), 2, 1.2, 8000, 0.6, 17);
  SpectroSetup setup;
  setup.sample_rate = 8000;
  setup.window = 256;
  setup.hop = 64;
  setup.t_net = 64;
  setup.segment_seconds = 0.6;
  MixtureSampler sampler(pool, setup, 19);
  for (int it = 0; it < 200; ++it) {
    MixtureSample s = sampler.next();
    // the mixture is literally the sum of the two group signals
    REQUIRE(s.m.samples.size() == s.s_t.samples.size());
    for (std::size_t i = 0; i < s.m.samples.size(); ++i)
      CHECK(s.m.samples[i] == s.s_t.samples[i] + s.s_r.samples[i]);
    bool target_has_energy = false;
    for (double v : s.s_t.samples)
      if (v != 0.0) target_has_energy = true;
    CHECK(target_has_energy);
    int in_t = 0;
    for (int c = 0; c < 4; ++c) {
      in_t += s.in_target[c];
      CHECK(s.beta[c] >= 0.25);
      CHECK(s.beta[c] < 1.25);
      CHECK(s.segment_index[c] >= 0);
      CHECK(s.segment_index[c] < static_cast<int>(pool.segments[c].size()));
    }
    CHECK(in_t >= 1);
    REQUIRE(s.mix_mag.shape() == Shape{128, 64});
    REQUIRE(s.target_mag.shape() == Shape{128, 64});
    // recompute the target from the recorded draws
    for (std::size_t i = 0; i < s.s_t.samples.size(); ++i) {
      double expect = 0.0;
      for (int c = 0; c < 4; ++c) {
        if (!s.in_target[c]) continue;
        expect += s.alpha[c] * s.beta[c] *
                  pool.segments[c][s.segment_index[c]].samples[i];
      }
      CHECK(s.s_t.samples[i] == expect);
    }
  }
}

TEST_CASE("sampler statistics track the raw draws") {
  StemPool pool =
      make_synthetic_pool(default_classes(), 2, 1.2, 8000, 0.6, 23);
  SpectroSetup setup;
  setup.sample_rate = 8000;
  setup.window = 256;
  setup.hop = 64;
  setup.t_net = 64;
  setup.segment_seconds = 0.6;
  MixtureSampler sampler(pool, setup, 29);
  const int n = 5000;
  for (int i = 0; i < n; ++i) sampler.next();
  const SamplerStats& st = sampler.stats();
  CHECK(st.gate_draws >= static_cast<uint64_t>(4 * n));
  CHECK(st.gain_draws == static_cast<uint64_t>(4 * n));
  const double rate =
      static_cast<double>(st.gate_ones) / static_cast<double>(st.gate_draws);
  const double gain = st.gain_sum / static_cast<double>(st.gain_draws);
  CHECK(rate == doctest::Approx(0.5).epsilon(0.02));
  CHECK(gain == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("sampler is deterministic in its seed") {
  StemPool pool =
      make_synthetic_pool(default_classes(), 2, 1.2, 8000, 0.6, 31);
  SpectroSetup setup;
  setup.sample_rate = 8000;
  setup.window = 256;
  setup.hop = 64;
  setup.t_net = 64;
  setup.segment_seconds = 0.6;
  MixtureSampler a(pool, setup, 37), b(pool, setup, 37), c(pool, setup, 38);
  MixtureSample sa = a.next(), sb = b.next(), sc = c.next();
  CHECK(sa.m.samples == sb.m.samples);
  CHECK(sa.alpha == sb.alpha);
  CHECK(sa.beta == sb.beta);
  bool differs = sa.m.samples != sc.m.samples || sa.beta != sc.beta;
  CHECK(differs);
}
