// End-to-end acceptance checks. Each criterion prints exactly one
// PASS/FAIL line; the exit code is the number of failures. The long
// training run in criterion 7 also backs criteria 8 and 9.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "qsep/eval.hpp"
#include "qsep/train.hpp"
#include "qsep/wav.hpp"

using namespace qsep;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Tensor rand_t(Shape shape, uint64_t seed) {
  Rng rng(seed);
  return Tensor::randn(std::move(shape), rng);
}

// Weigh every output entry by a fixed random tensor so the scalar loss
// is sensitive to each of them (a plain sum is blind to normalization).
std::function<Tensor(Graph&, std::vector<Tensor>&)> weighted(
    std::function<Tensor(Graph&, std::vector<Tensor>&)> op, uint64_t wseed) {
  return [op = std::move(op), wseed](Graph& g, std::vector<Tensor>& in) {
    Tensor out = op(g, in);
    Rng rng(wseed);
    Tensor w = Tensor::randn(out.shape(), rng);
    return reduce_all(&g, Reduce::kSum, mul(&g, w, out));
  };
}

// ---------------------------------------------------------------------
// 1. Gradient suite: every registered op plus the full composite loss.

struct OpCase {
  std::string name;
  std::function<Tensor(Graph&, std::vector<Tensor>&)> f;
  std::vector<Tensor> inputs;
};

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  auto ew = [&cases](std::string name,
                     std::function<Tensor(Graph&, std::vector<Tensor>&)> f,
                     std::vector<Tensor> in) {
    cases.push_back({std::move(name), std::move(f), std::move(in)});
  };
  ew("add", [](Graph& g, std::vector<Tensor>& in) {
    return add(&g, in[0], in[1]);
  }, {rand_t({8, 16}, 1), rand_t({8, 16}, 2)});
  ew("add_scalar", [](Graph& g, std::vector<Tensor>& in) {
    return add_scalar(&g, in[0], 1.3);
  }, {rand_t({8, 16}, 3)});
  ew("sub", [](Graph& g, std::vector<Tensor>& in) {
    return sub(&g, in[0], in[1]);
  }, {rand_t({8, 16}, 4), rand_t({8, 16}, 5)});
  ew("mul", [](Graph& g, std::vector<Tensor>& in) {
    return mul(&g, in[0], in[1]);
  }, {rand_t({8, 16}, 6), rand_t({8, 16}, 7)});
  ew("scale", [](Graph& g, std::vector<Tensor>& in) {
    return scale(&g, in[0], -0.7);
  }, {rand_t({8, 16}, 8)});
  ew("relu", [](Graph& g, std::vector<Tensor>& in) {
    return relu(&g, in[0]);
  }, {rand_t({8, 16}, 9)});
  ew("leaky_relu", [](Graph& g, std::vector<Tensor>& in) {
    return leaky_relu(&g, in[0], 0.1);
  }, {rand_t({8, 16}, 10)});
  ew("sigmoid", [](Graph& g, std::vector<Tensor>& in) {
    return sigmoid(&g, in[0]);
  }, {rand_t({8, 16}, 11)});
  ew("exp", [](Graph& g, std::vector<Tensor>& in) {
    return exp_op(&g, in[0]);
  }, {rand_t({8, 16}, 12)});
  {
    Tensor pos = rand_t({8, 16}, 13);
    for (double& v : pos.values()) v = std::fabs(v) + 0.5;
    ew("log", [](Graph& g, std::vector<Tensor>& in) {
      return log_op(&g, in[0]);
    }, {pos});
  }
  ew("neg", [](Graph& g, std::vector<Tensor>& in) {
    return neg(&g, in[0]);
  }, {rand_t({8, 16}, 14)});
  ew("abs", [](Graph& g, std::vector<Tensor>& in) {
    return abs_op(&g, in[0]);
  }, {rand_t({8, 16}, 15)});
  ew("tanh", [](Graph& g, std::vector<Tensor>& in) {
    return tanh_op(&g, in[0]);
  }, {rand_t({8, 16}, 16)});
  ew("clamp", [](Graph& g, std::vector<Tensor>& in) {
    return clamp(&g, in[0], -0.5, 0.5);
  }, {rand_t({8, 16}, 17)});
  ew("matmul", [](Graph& g, std::vector<Tensor>& in) {
    return matmul(&g, in[0], in[1]);
  }, {rand_t({12, 16}, 18), rand_t({16, 10}, 19)});
  {
    ConvSpec spec = conv_same_spec(4, 4, 2, 2, 32, 16);
    ew("conv2d", [spec](Graph& g, std::vector<Tensor>& in) {
      return conv2d(&g, in[0], in[1], spec);
    }, {rand_t({4, 32, 16}, 20), rand_t({8, 4, 4, 4}, 21)});
    const int of = conv_out_extent(32, 4, 2, spec.pad_f_lo, spec.pad_f_hi);
    const int ot = conv_out_extent(16, 4, 2, spec.pad_t_lo, spec.pad_t_hi);
    ew("conv2d_transpose", [spec](Graph& g, std::vector<Tensor>& in) {
      return conv2d_transpose(&g, in[0], in[1], spec, 32, 16);
    }, {rand_t({6, of, ot}, 22), rand_t({6, 3, 4, 4}, 23)});
  }
  ew("bias_add", [](Graph& g, std::vector<Tensor>& in) {
    return bias_add(&g, in[0], in[1]);
  }, {rand_t({8, 12, 10}, 24), rand_t({8}, 25)});
  ew("instance_norm", [](Graph& g, std::vector<Tensor>& in) {
    return instance_norm(&g, in[0], 1e-5);
  }, {rand_t({8, 16, 12}, 26)});
  ew("adain", [](Graph& g, std::vector<Tensor>& in) {
    return adain(&g, in[0], in[1], in[2], 1e-5);
  }, {rand_t({8, 16, 12}, 27), rand_t({8}, 28), rand_t({8}, 29)});
  ew("concat", [](Graph& g, std::vector<Tensor>& in) {
    return concat(&g, {in[0], in[1]}, 0);
  }, {rand_t({3, 6, 5}, 30), rand_t({2, 6, 5}, 31)});
  ew("split", [](Graph& g, std::vector<Tensor>& in) {
    std::vector<Tensor> parts = split(&g, in[0], 0, {2, 3});
    Rng rng(777);
    Tensor w0 = Tensor::randn(parts[0].shape(), rng);
    Tensor w1 = Tensor::randn(parts[1].shape(), rng);
    return add(&g, reduce_all(&g, Reduce::kSum, mul(&g, w0, parts[0])),
               reduce_all(&g, Reduce::kSum, mul(&g, w1, parts[1])));
  }, {rand_t({5, 6, 4}, 32)});
  ew("reduce_sum_axis", [](Graph& g, std::vector<Tensor>& in) {
    return reduce(&g, Reduce::kSum, in[0], {1});
  }, {rand_t({6, 8, 5}, 33)});
  ew("reduce_mean_axes", [](Graph& g, std::vector<Tensor>& in) {
    return reduce(&g, Reduce::kMean, in[0], {0, 2});
  }, {rand_t({6, 8, 5}, 34)});
  ew("reduce_all_sum", [](Graph& g, std::vector<Tensor>& in) {
    return reduce_all(&g, Reduce::kSum, in[0]);
  }, {rand_t({7, 9}, 35)});
  ew("reduce_all_mean", [](Graph& g, std::vector<Tensor>& in) {
    return reduce_all(&g, Reduce::kMean, in[0]);
  }, {rand_t({7, 9}, 36)});
  ew("reshape", [](Graph& g, std::vector<Tensor>& in) {
    return reshape(&g, in[0], {6, 10});
  }, {rand_t({4, 15}, 37)});
  ew("permute", [](Graph& g, std::vector<Tensor>& in) {
    return permute(&g, in[0], {1, 2, 0});
  }, {rand_t({4, 5, 6}, 38)});
  ew("take_row", [](Graph& g, std::vector<Tensor>& in) {
    return take_row(&g, in[0], 2);
  }, {rand_t({7, 9}, 39)});
  ew("tile_plane", [](Graph& g, std::vector<Tensor>& in) {
    return tile_plane(&g, in[0], 8, 6);
  }, {rand_t({10}, 40)});
  ew("gru", [](Graph& g, std::vector<Tensor>& in) {
    GruParams p;
    p.wz = in[0]; p.wr = in[1]; p.wh = in[2];
    p.uz = in[3]; p.ur = in[4]; p.uh = in[5];
    p.bz = in[6]; p.br = in[7]; p.bh = in[8];
    GruOut out = gru_forward(&g, p, {in[9], in[10], in[11], in[12]});
    Rng rng(778);
    Tensor acc;
    for (const Tensor& s : out.states) {
      Tensor w = Tensor::randn(s.shape(), rng);
      Tensor term = reduce_all(&g, Reduce::kSum, mul(&g, w, s));
      acc = acc.defined() ? add(&g, acc, term) : term;
    }
    return acc;
  }, {rand_t({4, 6}, 41), rand_t({4, 6}, 42), rand_t({4, 6}, 43),
      rand_t({4, 4}, 44), rand_t({4, 4}, 45), rand_t({4, 4}, 46),
      rand_t({4, 1}, 47), rand_t({4, 1}, 48), rand_t({4, 1}, 49),
      rand_t({6, 1}, 50), rand_t({6, 1}, 51), rand_t({6, 1}, 52),
      rand_t({6, 1}, 53)});
  return cases;
}

void crit1() {
  const double t0 = now_s();
  std::vector<OpCase> cases = op_cases();
  int passed = 0;
  std::string first_fail;
  double worst = 0.0;
  for (OpCase& c : cases) {
    const bool raw_scalar = c.name == "split" || c.name == "gru" ||
                            c.name.rfind("reduce_all", 0) == 0;
    auto f = raw_scalar ? c.f : weighted(c.f, 1000 + passed);
    GradCheckReport rep = gradient_check(f, c.inputs, 1e-4, 4);
    worst = std::max(worst, rep.max_rel_err);
    if (rep.pass) {
      ++passed;
    } else if (first_fail.empty()) {
      first_fail = c.name + " rel " + fmt("%.2e", rep.max_rel_err);
    }
  }

  // the full desk-shape composite: query encoding, reparameterization,
  // separation, weighted output
  ModelConfig dc = ModelConfig::desk();
  ParamSet params = init_params(dc, 97);
  Tensor query;
  Tensor mix;
  {
    Rng rng(98);
    Tensor q = Tensor::randn({dc.f_net(), dc.t_net()}, rng);
    query = abs_op(nullptr, q);
    Tensor m = Tensor::randn({dc.f_net(), dc.t_net()}, rng);
    mix = abs_op(nullptr, m);
  }
  Rng erng(99);
  Tensor eps = Tensor::randn({dc.d_z, 1}, erng);
  Tensor w = Tensor::randn({dc.f_net(), dc.t_net()}, erng);
  Tensor wz = Tensor::randn({dc.d_z, 1}, erng);
  auto comp = [&dc, query, mix, eps, w, wz, names = params.names](
                  Graph& g, std::vector<Tensor>& in) {
    ParamSet p;
    p.names = names;
    p.tensors = in;
    LatentDist dist = query_encode(&g, p, dc, query);
    Tensor sigma = exp_op(&g, scale(&g, dist.logvar, 0.5));
    Tensor z = add(&g, dist.mu, mul(&g, sigma, eps));
    SeparateOut out = separate(&g, p, dc, mix, z);
    Tensor a = reduce_all(&g, Reduce::kMean, mul(&g, w, out.est));
    Tensor b = reduce_all(&g, Reduce::kSum, mul(&g, wz, dist.logvar));
    return add(&g, a, b);
  };
  GradCheckReport crep = gradient_check(comp, params.tensors, 1e-4, 2);
  const double elapsed = now_s() - t0;
  const bool pass = passed == static_cast<int>(cases.size()) && crep.pass &&
                    elapsed < 120.0;
  std::string detail =
      fmt("%d/%d ops, composite rel %.2e over %zu probes, %.1f s", passed,
          static_cast<int>(cases.size()), crep.max_rel_err, crep.checked,
          elapsed);
  if (!first_fail.empty()) detail += " [first failure: " + first_fail + "]";
  report(1, pass, detail);
}

// ---------------------------------------------------------------------
// 2. KL closed form vs. the formula and a Monte Carlo estimate.

void crit2() {
  Rng rng(211);
  double worst_closed = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 16;
    LatentDist dist;
    dist.mu = Tensor::zeros({d, 1});
    dist.logvar = Tensor::zeros({d, 1});
    double want = 0.0;
    for (int i = 0; i < d; ++i) {
      const double mu = rng.normal();
      const double lv = rng.uniform(-2.0, 2.0);
      dist.mu.values()[i] = mu;
      dist.logvar.values()[i] = lv;
      want += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
    }
    const double got = loss_kl(nullptr, dist).value();
    worst_closed = std::max(
        worst_closed, std::fabs(got - want) / std::max(1.0, std::fabs(want)));
  }

  int mc_ok = 0;
  double worst_sigmas = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 16;
    LatentDist dist;
    dist.mu = Tensor::zeros({d, 1});
    dist.logvar = Tensor::zeros({d, 1});
    for (int i = 0; i < d; ++i) {
      dist.mu.values()[i] = rng.normal();
      dist.logvar.values()[i] = rng.uniform(-2.0, 2.0);
    }
    const double closed = loss_kl(nullptr, dist).value();
    const long n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (long s = 0; s < n; ++s) {
      double term = 0.0;
      for (int i = 0; i < d; ++i) {
        const double lv = dist.logvar.values()[i];
        const double sigma = std::exp(0.5 * lv);
        const double z = dist.mu.values()[i] + sigma * rng.normal();
        const double dev = z - dist.mu.values()[i];
        term += -0.5 * lv - dev * dev / (2.0 * sigma * sigma) +
                0.5 * z * z;
      }
      sum += term;
      sumsq += term * term;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sumsq / n - mean * mean) / n);
    const double sigmas = std::fabs(mean - closed) / se;
    worst_sigmas = std::max(worst_sigmas, sigmas);
    if (sigmas <= 3.0) ++mc_ok;
  }
  const bool pass = worst_closed <= 1e-10 && mc_ok == 20;
  report(2, pass,
         fmt("closed-form rel %.1e over 1000 dists, MC within %.2f SE "
             "(20/20 need <= 3)",
             worst_closed, worst_sigmas));
}

// ---------------------------------------------------------------------
// 3. STFT round trip and COLA constancy.

void crit3() {
  const int sr = 8000, n = 4800, win = 256, hop = 64;
  Rng rng(31);
  double worst_snr = 1e300;
  for (int trial = 0; trial < 100; ++trial) {
    Waveform x;
    x.sample_rate = sr;
    x.samples.resize(n);
    for (double& v : x.samples) v = rng.normal();
    Waveform y = istft(stft(x, win, hop), sr);
    double sig = 0.0, err = 0.0;
    for (int i = win; i < n - win; ++i) {
      sig += x.samples[i] * x.samples[i];
      const double d = x.samples[i] - y.samples[i];
      err += d * d;
    }
    const double snr = 10.0 * std::log10(sig / std::max(err, 1e-300));
    worst_snr = std::min(worst_snr, snr);
  }

  std::vector<double> w = hann_window(win);
  double worst_cola = 0.0;
  for (int t = win; t < n - win; ++t) {
    double acc = 0.0;
    for (int k = (t - win) / hop; k * hop <= t; ++k) {
      const int off = t - k * hop;
      if (off >= 0 && off < win) acc += w[off] * w[off];
    }
    worst_cola = std::max(worst_cola, std::fabs(acc - 1.5));
  }
  const bool pass = worst_snr >= 60.0 && worst_cola <= 1e-10;
  report(3, pass,
         fmt("min SNR %.1f dB over 100 signals, COLA dev %.1e", worst_snr,
             worst_cola));
}

// ---------------------------------------------------------------------
// 4. AdaIN output moments.

void crit4() {
  Rng rng(41);
  const int C = 8, F = 24, T = 18;
  double worst_mean = 0.0, worst_std = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = Tensor::randn({C, F, T}, rng, 2.0);
    Tensor ys = Tensor::randn({C}, rng);
    Tensor yb = Tensor::randn({C}, rng);
    Tensor y = adain(nullptr, x, ys, yb, 1e-8);
    for (int c = 0; c < C; ++c) {
      double mean = 0.0;
      for (int i = 0; i < F * T; ++i) mean += y.values()[c * F * T + i];
      mean /= F * T;
      double var = 0.0;
      for (int i = 0; i < F * T; ++i) {
        const double d = y.values()[c * F * T + i] - mean;
        var += d * d;
      }
      var /= F * T;
      worst_mean = std::max(worst_mean,
                            std::fabs(mean - yb.values()[c]));
      worst_std = std::max(
          worst_std, std::fabs(std::sqrt(var) - std::fabs(ys.values()[c])));
    }
  }
  const bool pass = worst_mean <= 1e-6 && worst_std <= 1e-3;
  report(4, pass,
         fmt("mean dev %.1e (<= 1e-6), std dev %.1e (<= 1e-3)", worst_mean,
             worst_std));
}

// ---------------------------------------------------------------------
// 5. Slerp invariants.

void crit5() {
  Rng rng(51);
  bool endpoints = true;
  double worst_norm = 0.0, worst_sym = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    LatentVec a(16), b(16);
    double na = 0.0, nb = 0.0;
    for (int i = 0; i < 16; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    for (int i = 0; i < 16; ++i) {
      a[i] /= na;
      b[i] /= nb;
    }
    if (slerp(a, b, 0.0) != a || slerp(a, b, 1.0) != b) endpoints = false;
    for (int s = 0; s <= 100; ++s) {
      const double alpha = s / 100.0;
      LatentVec p = slerp(a, b, alpha);
      LatentVec q = slerp(b, a, 1.0 - alpha);
      double norm = 0.0;
      for (int i = 0; i < 16; ++i) {
        norm += p[i] * p[i];
        worst_sym = std::max(worst_sym, std::fabs(p[i] - q[i]));
      }
      worst_norm = std::max(worst_norm, std::fabs(std::sqrt(norm) - 1.0));
    }
  }
  const bool pass = endpoints && worst_norm <= 1e-6 && worst_sym <= 1e-10;
  report(5, pass,
         fmt("endpoints %s, norm dev %.1e (<= 1e-6), symmetry dev %.1e "
             "(<= 1e-10)",
             endpoints ? "exact" : "BROKEN", worst_norm, worst_sym));
}

// ---------------------------------------------------------------------
// 6. Retrieval vs. brute force; delta metrics vs. two-call oracles.

void crit6() {
  Rng rng(61);
  int retrieval_ok = 0;
  for (int lib_i = 0; lib_i < 100; ++lib_i) {
    LatentLibrary lib;
    for (int e = 0; e < 50; ++e) {
      LatentEntry entry;
      entry.label = e;
      entry.z.resize(16);
      for (double& v : entry.z) v = rng.normal();
      lib.entries.push_back(entry);
    }
    LatentVec query(16);
    for (double& v : query) v = rng.normal();
    double best = 1e300;
    int best_label = -1;
    for (const LatentEntry& e : lib.entries) {
      const double d = cosine_distance(query, e.z);
      if (d < best) {
        best = d;
        best_label = e.label;
      }
    }
    if (retrieve_nearest(query, lib).label == best_label) ++retrieval_ok;
  }

  double worst_cd = 0.0, worst_sdr = 0.0;
  for (int t = 0; t < 50; ++t) {
    LatentVec z(16), zm(16), zr(16);
    for (int i = 0; i < 16; ++i) {
      z[i] = rng.normal();
      zm[i] = rng.normal();
      zr[i] = rng.normal();
    }
    worst_cd = std::max(
        worst_cd, std::fabs(delta_cd(z, zm, zr) - (cosine_distance(z, zm) -
                                                   cosine_distance(z, zr))));
    Waveform gt, ea, eb;
    gt.sample_rate = ea.sample_rate = eb.sample_rate = 8000;
    gt.samples.resize(64);
    ea.samples.resize(64);
    eb.samples.resize(64);
    for (int i = 0; i < 64; ++i) {
      gt.samples[i] = rng.normal();
      ea.samples[i] = rng.normal();
      eb.samples[i] = rng.normal();
    }
    worst_sdr = std::max(
        worst_sdr,
        std::fabs(delta_sdr(gt, ea, eb) - (sdr(gt, ea) - sdr(gt, eb))));
  }
  const bool pass = retrieval_ok == 100 && worst_cd <= 1e-12 &&
                    worst_sdr <= 1e-12;
  report(6, pass,
         fmt("retrieval %d/100, delta_cd dev %.1e, delta_sdr dev %.1e",
             retrieval_ok, worst_cd, worst_sdr));
}

// ---------------------------------------------------------------------
// 7-9. One desk-scale training run backs the loss-decrease, argmax,
// GT-vs-mean, and latent-regressor criteria.

struct TrainedBundle {
  bool ok = false;
  std::string error;
  ModelConfig config;
  ParamSet trained;
  ParamSet init;
  StemPool pool_train;
  LatentLibrary library;
  std::vector<EvalCase> cases;
  std::vector<std::string> class_names;
  double wall_s = 0.0;
  double lr_first = 0.0, lr_last = 0.0;
};

TrainedBundle run_training(const fs::path& base) {
  TrainedBundle b;
  try {
    b.config = ModelConfig::desk();
    b.pool_train = make_synthetic_pool(default_classes(), 8, 12.0,
                                       b.config.sample_rate,
                                       b.config.segment_seconds, 0xA11CE);
    TrainOptions opts;
    opts.iterations = 5000;
    opts.checkpoint_every = 0;
    opts.seed = 11;
    opts.out_dir = (base / "run").string();
    Hyper hyper;
    const double t0 = now_s();
    TrainSummary sum = train_loop(b.config, hyper, b.pool_train, opts);
    b.wall_s = now_s() - t0;

    // smoothed reconstruction loss: mean of the first and last 100 lines
    std::ifstream log(sum.log_path);
    std::vector<double> l_r;
    std::string line;
    while (std::getline(log, line)) {
      std::stringstream ss(line);
      long it;
      double v;
      ss >> it >> v;
      l_r.push_back(v);
    }
    if (l_r.size() != 5000) throw std::runtime_error("short loss log");
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 100; ++i) {
      first += l_r[i];
      last += l_r[l_r.size() - 100 + i];
    }
    b.lr_first = first / 100.0;
    b.lr_last = last / 100.0;

    Checkpoint ck = load_checkpoint(sum.checkpoint_path);
    b.trained = ck.params;
    b.init = init_params(b.config, opts.seed);
    b.library = build_class_library(b.trained, b.config, b.pool_train);
    StemPool held_out = make_synthetic_pool(default_classes(), 4, 12.0,
                                            b.config.sample_rate,
                                            b.config.segment_seconds, 0xE7A1);
    b.cases = make_eval_set(held_out, b.config.spectro(), 40, 0xBEEF);
    b.class_names = held_out.class_names;
    b.ok = true;
  } catch (const std::exception& e) {
    b.error = e.what();
  }
  return b;
}

void crit7(const TrainedBundle& b) {
  if (!b.ok) {
    report(7, false, "training failed: " + b.error);
    return;
  }
  const int K = b.pool_train.classes();
  std::vector<int> wins(K, 0);
  for (const EvalCase& ec : b.cases) {
    std::vector<Waveform> est(K);
    for (int k = 0; k < K; ++k)
      est[k] = separate_with_vector(b.trained, b.config, ec.mixture,
                                    b.library.entries[k].z);
    for (int c = 0; c < K; ++c) {
      const double own = sdr(ec.refs[c], est[c]);
      bool best = true;
      for (int k = 0; k < K; ++k)
        if (k != c && sdr(ec.refs[c], est[k]) >= own) best = false;
      if (best) ++wins[c];
    }
  }
  std::string frac;
  bool argmax_ok = true;
  for (int c = 0; c < K; ++c) {
    if (wins[c] < 28) argmax_ok = false;  // 70% of 40
    frac += fmt("%s%d/40", c ? " " : "", wins[c]);
  }
  const bool loss_ok = b.lr_last < 0.5 * b.lr_first;
  const bool time_ok = b.wall_s < 1800.0;
  report(7, loss_ok && time_ok && argmax_ok,
         fmt("wall %.0f s (< 1800), smoothed L_R %.4f -> %.4f (need < "
             "%.4f), argmax wins [%s] (need >= 28 each)",
             b.wall_s, b.lr_first, b.lr_last, 0.5 * b.lr_first,
             frac.c_str()));
}

void crit8(const TrainedBundle& b) {
  if (!b.ok) {
    report(8, false, "training failed: " + b.error);
    return;
  }
  EvalReport mean = evaluate(b.trained, b.config, b.cases, b.library,
                             EvalMode::kMeanVector, 2, b.class_names);
  EvalReport gt = evaluate(b.trained, b.config, b.cases, b.library,
                           EvalMode::kGroundTruthQuery, 2, b.class_names);
  bool pass = true;
  std::string detail;
  for (std::size_t c = 0; c < mean.class_median.size(); ++c) {
    if (gt.class_median[c] < mean.class_median[c]) pass = false;
    detail += fmt("%s%s GT %.2f vs mean %.2f", c ? ", " : "",
                  b.class_names[c].c_str(), gt.class_median[c],
                  mean.class_median[c]);
  }
  report(8, pass, detail);
}

void crit9(const TrainedBundle& b) {
  if (!b.ok) {
    report(9, false, "training failed: " + b.error);
    return;
  }
  auto regress_err = [&b](const ParamSet& params) {
    Rng rng(0xC9);
    double acc = 0.0;
    for (int j = 0; j < 100; ++j) {
      LatentVec z(b.config.d_z);
      for (double& v : z) v = rng.normal();
      const Waveform& mix = b.cases[j % b.cases.size()].mixture;
      Waveform est = separate_with_vector(params, b.config, mix, z);
      LatentVec back = encode_waveform(params, b.config, est);
      double err = 0.0;
      for (int i = 0; i < b.config.d_z; ++i)
        err += std::fabs(z[i] - back[i]);
      acc += err / b.config.d_z;
    }
    return acc / 100.0;
  };
  const double init_err = regress_err(b.init);
  const double trained_err = regress_err(b.trained);
  report(9, trained_err < 0.5 * init_err,
         fmt("mean |z - recovered|/d_z: init %.4f, trained %.4f (need < "
             "%.4f)",
             init_err, trained_err, 0.5 * init_err));
}

// ---------------------------------------------------------------------
// 10. Byte-identical checkpoints and logs from two identical CLI runs.

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void crit10(const fs::path& base) {
  const char* cli = std::getenv("QSEP_CLI");
  if (!cli) {
    report(10, false, "QSEP_CLI not set");
    return;
  }
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(cli) + " " + args + " > " +
                            (base / "cli.log").string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return rc < 0 ? rc : WEXITSTATUS(rc);
  };
  const std::string data = (base / "cdata").string();
  if (run("gen-data --out " + data +
          " --preset desk --tracks 2 --track-seconds 3.0 --seed 5") != 0) {
    report(10, false, "gen-data failed");
    return;
  }
  const std::string flags =
      " --data-dir " + data + " --preset desk --iterations 12 --seed 7";
  const std::string r1 = (base / "r1").string();
  const std::string r2 = (base / "r2").string();
  if (run("train --out " + r1 + flags) != 0 ||
      run("train --out " + r2 + flags) != 0) {
    report(10, false, "train run failed");
    return;
  }
  const std::string ck1 = slurp(fs::path(r1) / "checkpoint.qsep");
  const std::string ck2 = slurp(fs::path(r2) / "checkpoint.qsep");
  const std::string lg1 = slurp(fs::path(r1) / "loss.log");
  const std::string lg2 = slurp(fs::path(r2) / "loss.log");
  const bool pass = !ck1.empty() && ck1 == ck2 && !lg1.empty() && lg1 == lg2;
  report(10, pass,
         fmt("checkpoints %zu B %s, logs %s", ck1.size(),
             ck1 == ck2 ? "identical" : "DIFFER",
             lg1 == lg2 ? "identical" : "DIFFER"));
}

// ---------------------------------------------------------------------
// 11. Sampler statistics over 1e5 draws.

void crit11() {
  ModelConfig c = ModelConfig::desk();
  StemPool pool = make_synthetic_pool(default_classes(), 2, 3.0,
                                      c.sample_rate, c.segment_seconds,
                                      0x5EED);
  MixtureSampler sampler(pool, c.spectro(), 0xFACE);
  const long n = 100000;
  long exact = 0;
  for (long i = 0; i < n; ++i) {
    MixtureSample s = sampler.next();
    bool ok = s.m.samples.size() == s.s_t.samples.size();
    if (ok)
      for (std::size_t j = 0; j < s.m.samples.size(); ++j)
        if (s.m.samples[j] != s.s_t.samples[j] + s.s_r.samples[j]) {
          ok = false;
          break;
        }
    if (ok) ++exact;
  }
  const SamplerStats& st = sampler.stats();
  const double rate =
      static_cast<double>(st.gate_ones) / static_cast<double>(st.gate_draws);
  const double gain = st.gain_sum / static_cast<double>(st.gain_draws);
  const bool pass = exact == n && std::fabs(rate - 0.5) <= 0.01 &&
                    std::fabs(gain - 0.75) <= 0.01;
  report(11, pass,
         fmt("gate rate %.4f (0.5 +- 0.01), gain mean %.4f (0.75 +- 0.01), "
             "m == s_T + s_R on %ld/%ld draws",
             rate, gain, exact, n));
}

}  // namespace

int main() {
  fs::path base = fs::temp_directory_path() / "qsep_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);

  crit1();
  crit2();
  crit3();
  crit4();
  crit5();
  crit6();
  TrainedBundle bundle = run_training(base);
  crit7(bundle);
  crit8(bundle);
  crit9(bundle);
  crit10(base);
  crit11();

  fs::remove_all(base);
  std::printf("%d criteria failed\n", g_failures);
  return g_failures;
}
