#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "qsep/model.hpp"

using namespace qsep;

namespace {

// Small enough for finite differences yet exercising every layer kind:
// strided convs, GRU, heads, the full U-Net with AdaIN, and a non-1x1
// bottleneck.
ModelConfig tiny_config() {
  ModelConfig c;
  c.preset = "desk";
  c.sample_rate = 800;
  c.window = 32;
  c.hop = 8;
  c.segment_seconds = 0.4;
  c.d_z = 3;
  c.q_channels = {2, 2};
  c.q_stride_t = {1, 2};
  c.gru_hidden = 4;
  c.s_channels = {3, 4, 4};
  c.s_stride_t = {1, 2, 2};
  c.validate();
  return c;
}

Tensor rand_mag(const ModelConfig& c, uint64_t seed) {
  Rng rng(seed);
  Tensor m = Tensor::randn({c.f_net(), c.t_net()}, rng);
  return abs_op(nullptr, m);
}

}  // namespace

TEST_CASE("preset geometry") {
  ModelConfig paper = ModelConfig::paper();
  CHECK(paper.f_net() == 512);
  CHECK(paper.frames() == 255);
  CHECK(paper.t_net() == 256);  // padded up to one stride-stack unit
  CHECK(paper.d_z == 32);
  CHECK(paper.depth() == 9);
  ModelConfig desk = ModelConfig::desk();
  CHECK(desk.f_net() == 128);
  CHECK(desk.frames() == 72);
  CHECK(desk.t_net() == 64);  // cropped to the largest contained multiple
  CHECK(desk.depth() == 7);
  CHECK(desk.segment_samples() == 4800);
}

TEST_CASE("config validation rejects bad shapes") {
  ModelConfig c = tiny_config();
  c.window = 48;
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.hop = 16;
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.q_stride_t = {1};
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.s_stride_t = {2, 2, 1};  // must start gentle and end halving
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.s_channels = {3, 4, 4, 4, 4, 4};  // frequency axis exhausted
  c.s_stride_t = {1, 2, 2, 2, 2, 2};
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.segment_seconds = 0.02;  // shorter than one window
  CHECK_THROWS(c.validate());
}

TEST_CASE("config serialization round trip") {
  ModelConfig c = ModelConfig::desk();
  std::string text = c.serialize();
  ModelConfig back = ModelConfig::deserialize(text);
  CHECK(back == c);
  CHECK_THROWS(ModelConfig::deserialize("nonsense=1\n"));
  ModelConfig p = ModelConfig::paper();
  CHECK(!(p == c));
  CHECK(ModelConfig::deserialize(p.serialize()) == p);
}

TEST_CASE("init_params is deterministic, float-exact, and well named") {
  ModelConfig c = tiny_config();
  ParamSet a = init_params(c, 5);
  ParamSet b = init_params(c, 5);
  ParamSet d = init_params(c, 6);
  REQUIRE(a.count() == b.count());
  bool all_eq = true, any_diff = false;
  for (std::size_t i = 0; i < a.count(); ++i) {
    if (a.tensors[i].values() != b.tensors[i].values()) all_eq = false;
    if (a.tensors[i].values() != d.tensors[i].values()) any_diff = true;
  }
  CHECK(all_eq);
  CHECK(any_diff);
  for (const Tensor& t : a.tensors)
    for (double v : t.values())
      CHECK(v == static_cast<double>(static_cast<float>(v)));
  // biases: zero everywhere except the AdaIN scale heads start at one
  for (const double v : a.get("q.gru.bz").values()) CHECK(v == 0.0);
  for (const double v : a.get("s.enc3.b").values()) CHECK(v == 0.0);
  for (const double v : a.get("s.dec3.b").values()) CHECK(v == 0.0);
  for (const double v : a.get("s.dec1.ys.b").values()) CHECK(v == 1.0);
  for (const double v : a.get("s.dec1.yb.b").values()) CHECK(v == 0.0);
  CHECK_THROWS(a.get("s.dec1.b"));  // only the final decoder has a bias
  CHECK_THROWS(a.get("q.conv1.b"));  // conv bias would die under the norm
}

TEST_CASE("query_encode output contract") {
  ModelConfig c = tiny_config();
  ParamSet p = init_params(c, 7);
  Tensor mag = rand_mag(c, 8);
  LatentDist dist = query_encode(nullptr, p, c, mag);
  REQUIRE(dist.mu.shape() == Shape{3, 1});
  REQUIRE(dist.logvar.shape() == Shape{3, 1});
  for (double v : dist.logvar.values()) {
    CHECK(v >= c.logvar_lo);
    CHECK(v <= c.logvar_hi);
  }
  LatentDist again = query_encode(nullptr, p, c, mag);
  CHECK(dist.mu.values() == again.mu.values());
  CHECK_THROWS(query_encode(nullptr, p, c, Tensor::zeros({4, 4})));
}

TEST_CASE("separate emits a mask in range and the masked mixture") {
  ModelConfig c = tiny_config();
  ParamSet p = init_params(c, 9);
  Tensor mix = rand_mag(c, 10);
  Rng rng(11);
  Tensor z = Tensor::randn({c.d_z, 1}, rng);
  SeparateOut out = separate(nullptr, p, c, mix, z);
  REQUIRE(out.mask.shape() == Shape{c.f_net(), c.t_net()});
  REQUIRE(out.est.shape() == out.mask.shape());
  for (std::size_t i = 0; i < out.mask.size(); ++i) {
    CHECK(out.mask.values()[i] >= 0.0);
    CHECK(out.mask.values()[i] <= 1.0);
    CHECK(out.est.values()[i] ==
          doctest::Approx(out.mask.values()[i] * mix.values()[i])
              .epsilon(1e-12));
  }
  // the latent changes the mask
  Tensor z2 = Tensor::randn({c.d_z, 1}, rng);
  SeparateOut out2 = separate(nullptr, p, c, mix, z2);
  CHECK(out.mask.values() != out2.mask.values());
}

TEST_CASE("desk-shaped forward passes run and stay finite") {
  ModelConfig c = ModelConfig::desk();
  ParamSet p = init_params(c, 13);
  Tensor mag = rand_mag(c, 14);
  LatentDist dist = query_encode(nullptr, p, c, mag);
  check_finite(dist.mu, "mu");
  Rng rng(15);
  Tensor z = Tensor::randn({c.d_z, 1}, rng);
  SeparateOut out = separate(nullptr, p, c, mag, z);
  check_finite(out.est, "est");
}

TEST_CASE("checkpoint round trip is bitwise") {
  namespace fs = std::filesystem;
  ModelConfig c = tiny_config();
  ParamSet p = init_params(c, 17);
  std::vector<AdamState> adam(p.count());
  // give the states non-trivial content
  Rng rng(18);
  for (std::size_t i = 0; i < p.count(); ++i) {
    Tensor& t = p.tensors[i];
    t.grad_values().assign(t.size(), 0.0);
    for (double& gv : t.grad_values()) gv = 0.01 * rng.normal();
    AdamHyper ah;
    adam_step(t, adam[i], ah);
  }
  fs::path dir = fs::temp_directory_path() / "qsep_model_test";
  fs::create_directories(dir);
  const std::string path = (dir / "ck.qsep").string();
  save_checkpoint(path, c, p, adam, 321);
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.iteration == 321);
  CHECK(ck.config == c);
  REQUIRE(ck.params.count() == p.count());
  for (std::size_t i = 0; i < p.count(); ++i) {
    CHECK(ck.params.names[i] == p.names[i]);
    CHECK(ck.params.tensors[i].values() == p.tensors[i].values());
    CHECK(ck.adam[i].m == adam[i].m);
    CHECK(ck.adam[i].v == adam[i].v);
    CHECK(ck.adam[i].t == adam[i].t);
  }
  // corrupt the magic
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  CHECK_THROWS(load_checkpoint(path));
  save_checkpoint(path, c, p, adam, 1);
  {
    std::ofstream f(path, std::ios::app | std::ios::binary);
    f << "junk";
  }
  CHECK_THROWS(load_checkpoint(path));
  fs::remove_all(dir);
}

TEST_CASE("composite query-plus-separator loss passes finite differences") {
  ModelConfig c = tiny_config();
  ParamSet p = init_params(c, 19);
  Tensor query = rand_mag(c, 20);
  Tensor mix = rand_mag(c, 21);
  Rng rng(22);
  Tensor eps = Tensor::randn({c.d_z, 1}, rng);
  // fixed random weights keep the loss sensitive to every output entry
  Tensor w = Tensor::randn({c.f_net(), c.t_net()}, rng);
  Tensor wz = Tensor::randn({c.d_z, 1}, rng);
  auto f = [&c, query, mix, eps, w, wz, names = p.names](
               Graph& g, std::vector<Tensor>& in) {
    ParamSet q;
    q.names = names;
    q.tensors = in;
    LatentDist dist = query_encode(&g, q, c, query);
    Tensor sigma = exp_op(&g, scale(&g, dist.logvar, 0.5));
    Tensor z = add(&g, dist.mu, mul(&g, sigma, eps));
    SeparateOut out = separate(&g, q, c, mix, z);
    Tensor a = reduce_all(&g, Reduce::kMean, mul(&g, w, out.est));
    Tensor b = reduce_all(&g, Reduce::kSum, mul(&g, wz, dist.logvar));
    return add(&g, a, b);
  };
  GradCheckReport rep = gradient_check(f, p.tensors, 1e-4, 4);
  INFO("worst: ", rep.worst, " rel ", rep.max_rel_err);
  CHECK(rep.pass);
  CHECK(rep.checked >= p.count());
}
