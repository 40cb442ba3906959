#include <benchmark/benchmark.h>

#include "qsep/data.hpp"
#include "qsep/train.hpp"

namespace {

using namespace qsep;

void bm_gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<double> a(n * n, 0.5), b(n * n, 0.25), c(n * n, 0.0);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    Rng rng(7);
    Tensor ta = Tensor::randn({n, n}, rng);
    Tensor tb = Tensor::randn({n, n}, rng);
    Tensor tc = matmul(nullptr, ta, tb);
    benchmark::DoNotOptimize(tc.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(bm_gemm)->Arg(64)->Arg(128)->Arg(256);

void bm_conv2d(benchmark::State& state) {
  Rng rng(11);
  Tensor x = Tensor::randn({16, 32, 32}, rng);
  Tensor k = Tensor::randn({16, 16, 4, 4}, rng);
  ConvSpec spec = conv_same_spec(4, 4, 2, 2, 32, 32);
  for (auto _ : state) {
    Tensor y = conv2d(nullptr, x, k, spec);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_conv2d);

void bm_stft(benchmark::State& state) {
  Rng rng(13);
  Waveform w;
  w.sample_rate = 8000;
  w.samples.resize(4800);
  for (double& v : w.samples) v = rng.uniform(-1.0, 1.0);
  for (auto _ : state) {
    Spectrogram s = stft(w, 256, 64);
    benchmark::DoNotOptimize(s.re.data());
  }
}
BENCHMARK(bm_stft);

void bm_train_step(benchmark::State& state) {
  ModelConfig cfg = ModelConfig::desk();
  StemPool pool = make_synthetic_pool(default_classes(), 2, 3.0,
                                      cfg.sample_rate, cfg.segment_seconds,
                                      21);
  ParamSet params = init_params(cfg, 21);
  std::vector<AdamState> adam(params.count());
  Hyper hyper;
  MixtureSampler sampler(pool, cfg.spectro(), 22);
  std::vector<MixtureSample> batch;
  for (int b = 0; b < hyper.batch; ++b) batch.push_back(sampler.next());
  long it = 0;
  for (auto _ : state) {
    StepReport rep = train_step(params, adam, cfg, hyper, batch, it++, 21);
    benchmark::DoNotOptimize(rep.l_total);
  }
}
BENCHMARK(bm_train_step)->Unit(benchmark::kSecond);

}  // namespace

BENCHMARK_MAIN();
