#include "qsep/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qsep {

int ModelConfig::t_halvings() const {
  int n = 0;
  for (int s : s_stride_t)
    if (s == 2) ++n;
  return n;
}

int ModelConfig::t_net() const {
  const int unit = 1 << t_halvings();
  const int fr = frames();
  return fr >= unit ? (fr / unit) * unit : unit;
}

SpectroSetup ModelConfig::spectro() const {
  SpectroSetup s;
  s.sample_rate = sample_rate;
  s.window = window;
  s.hop = hop;
  s.t_net = t_net();
  s.segment_seconds = segment_seconds;
  return s;
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.preset = "paper";
  c.sample_rate = 22050;
  c.window = 1024;
  c.hop = 256;
  c.segment_seconds = 3.0;
  c.d_z = 32;
  c.q_channels = {32, 32, 64, 64, 128, 128};
  c.q_stride_t = {1, 2, 1, 2, 1, 2};
  c.gru_hidden = 128;
  c.s_channels = {64, 128, 256, 512, 512, 512, 512, 512, 512};
  c.s_stride_t = {1, 2, 2, 2, 2, 2, 2, 2, 2};
  c.validate();
  return c;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.preset = "desk";
  c.sample_rate = 8000;
  c.window = 256;
  c.hop = 64;
  c.segment_seconds = 0.6;
  c.d_z = 16;
  c.q_channels = {4, 4, 8, 8, 16, 16};
  c.q_stride_t = {1, 2, 1, 2, 1, 2};
  c.gru_hidden = 32;
  c.s_channels = {4, 8, 16, 32, 32, 32, 32};
  c.s_stride_t = {1, 2, 2, 2, 2, 2, 2};
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  if (window < 4 || (window & (window - 1)) != 0)
    throw std::invalid_argument("config: window must be a power of two");
  if (hop != window / 4)
    throw std::invalid_argument("config: hop must be window/4");
  if (d_z < 1 || gru_hidden < 1 || kernel < 1)
    throw std::invalid_argument("config: bad latent/GRU/kernel size");
  if (q_channels.empty() || q_channels.size() != q_stride_t.size())
    throw std::invalid_argument("config: query-net schedule mismatch");
  if (s_channels.empty() || s_channels.size() != s_stride_t.size())
    throw std::invalid_argument("config: separator schedule mismatch");
  if (s_stride_t.front() != 1 || s_stride_t.back() != 2)
    throw std::invalid_argument(
        "config: separator time strides must start at 1 and end at 2");
  int f = f_net();
  for (std::size_t i = 0; i < q_channels.size(); ++i) {
    if (f % 2 != 0)
      throw std::invalid_argument("config: query-net frequency axis not even");
    f /= 2;
  }
  f = f_net();
  for (std::size_t i = 0; i < s_channels.size(); ++i) {
    if (f % 2 != 0)
      throw std::invalid_argument("config: separator frequency axis not even");
    f /= 2;
  }
  int t = t_net();
  for (int s : s_stride_t) {
    if (s != 1 && s != 2)
      throw std::invalid_argument("config: time strides must be 1 or 2");
    if (s == 2) {
      if (t % 2 != 0)
        throw std::invalid_argument("config: separator time axis not even");
      t /= 2;
    }
  }
  t = t_net();
  for (int s : q_stride_t) {
    if (s != 1 && s != 2)
      throw std::invalid_argument("config: time strides must be 1 or 2");
    if (s == 2) {
      if (t % 2 != 0)
        throw std::invalid_argument("config: query-net time axis not even");
      t /= 2;
    }
  }
  if (t < 1) throw std::invalid_argument("config: query-net time axis vanished");
  if (segment_samples() < window)
    throw std::invalid_argument("config: segment shorter than one window");
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "preset=" << preset << "\n";
  os << "sample_rate=" << sample_rate << "\n";
  os << "window=" << window << "\n";
  os << "hop=" << hop << "\n";
  os << "segment_seconds=" << fmt_double(segment_seconds) << "\n";
  os << "d_z=" << d_z << "\n";
  os << "kernel=" << kernel << "\n";
  os << "q_channels=" << join_ints(q_channels) << "\n";
  os << "q_stride_t=" << join_ints(q_stride_t) << "\n";
  os << "gru_hidden=" << gru_hidden << "\n";
  os << "s_channels=" << join_ints(s_channels) << "\n";
  os << "s_stride_t=" << join_ints(s_stride_t) << "\n";
  os << "in_eps=" << fmt_double(in_eps) << "\n";
  os << "logvar_lo=" << fmt_double(logvar_lo) << "\n";
  os << "logvar_hi=" << fmt_double(logvar_hi) << "\n";
  return os.str();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
  ModelConfig c;
  c.q_channels.clear();
  c.q_stride_t.clear();
  c.s_channels.clear();
  c.s_stride_t.clear();
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("bad config line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "preset") c.preset = val;
    else if (key == "sample_rate") c.sample_rate = std::stoi(val);
    else if (key == "window") c.window = std::stoi(val);
    else if (key == "hop") c.hop = std::stoi(val);
    else if (key == "segment_seconds") c.segment_seconds = std::stod(val);
    else if (key == "d_z") c.d_z = std::stoi(val);
    else if (key == "kernel") c.kernel = std::stoi(val);
    else if (key == "q_channels") c.q_channels = split_ints(val);
    else if (key == "q_stride_t") c.q_stride_t = split_ints(val);
    else if (key == "gru_hidden") c.gru_hidden = std::stoi(val);
    else if (key == "s_channels") c.s_channels = split_ints(val);
    else if (key == "s_stride_t") c.s_stride_t = split_ints(val);
    else if (key == "in_eps") c.in_eps = std::stod(val);
    else if (key == "logvar_lo") c.logvar_lo = std::stod(val);
    else if (key == "logvar_hi") c.logvar_hi = std::stod(val);
    else throw std::runtime_error("unknown config key: " + key);
  }
  c.validate();
  return c;
}

bool ModelConfig::operator==(const ModelConfig& o) const {
  return serialize() == o.serialize();
}

void ParamSet::add(std::string name, Tensor t) {
  for (const std::string& n : names)
    if (n == name) throw std::invalid_argument("duplicate parameter: " + name);
  names.push_back(std::move(name));
  tensors.push_back(std::move(t));
}

std::size_t ParamSet::index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw std::invalid_argument("no such parameter: " + name);
}

Tensor& ParamSet::get(const std::string& name) { return tensors[index(name)]; }
const Tensor& ParamSet::get(const std::string& name) const {
  return tensors[index(name)];
}

namespace {

void round_values_f32(Tensor& t) {
  for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

Tensor he_normal(Shape shape, int fan_in, Rng& rng) {
  Tensor t = Tensor::randn(std::move(shape), rng, std::sqrt(2.0 / fan_in));
  round_values_f32(t);
  return t;
}

struct DecPlan {
  int in_ch, out_ch;      // channels entering/leaving decoder layer d
  int out_f, out_t;       // spatial extent produced
  int stride_t;
};

// Mirror plan: decoder layer d undoes encoder layer (L-1-d) and, for
// d >= 1, consumes the skip from encoder activation (L-1-d).
std::vector<DecPlan> decoder_plan(const ModelConfig& c,
                                  const std::vector<std::pair<int, int>>& enc_in_shapes) {
  const int depth = c.depth();
  std::vector<DecPlan> plan(static_cast<std::size_t>(depth));
  for (int d = 0; d < depth; ++d) {
    DecPlan& p = plan[static_cast<std::size_t>(d)];
    const int mirror = depth - 1 - d;
    p.out_ch = d == depth - 1 ? 1 : c.s_channels[static_cast<std::size_t>(depth - 2 - d)];
    p.in_ch = d == 0 ? c.s_channels[static_cast<std::size_t>(depth - 1)]
                     : plan[static_cast<std::size_t>(d - 1)].out_ch +
                           c.s_channels[static_cast<std::size_t>(mirror)];
    p.out_f = enc_in_shapes[static_cast<std::size_t>(mirror)].first;
    p.out_t = enc_in_shapes[static_cast<std::size_t>(mirror)].second;
    p.stride_t = c.s_stride_t[static_cast<std::size_t>(mirror)];
  }
  return plan;
}

std::vector<std::pair<int, int>> encoder_in_shapes(const ModelConfig& c) {
  std::vector<std::pair<int, int>> shapes;
  int f = c.f_net(), t = c.t_net();
  for (std::size_t l = 0; l < c.s_channels.size(); ++l) {
    shapes.emplace_back(f, t);
    f /= 2;
    if (c.s_stride_t[l] == 2) t /= 2;
  }
  return shapes;
}

int gru_input_dim(const ModelConfig& c) {
  int f = c.f_net();
  for (std::size_t l = 0; l < c.q_channels.size(); ++l) f /= 2;
  return c.q_channels.back() * f;
}

}  // namespace

ParamSet init_params(const ModelConfig& config, uint64_t seed) {
  config.validate();
  ParamSet p;
  const int k = config.kernel;
  Rng base(seed);
  uint64_t stream = 0;
  auto next_rng = [&]() { return base.fork(stream++); };

  int in_ch = 1;
  for (std::size_t l = 0; l < config.q_channels.size(); ++l) {
    const int out_ch = config.q_channels[l];
    Rng r = next_rng();
    p.add("q.conv" + std::to_string(l + 1) + ".w",
          he_normal({out_ch, in_ch, k, k}, in_ch * k * k, r));
    in_ch = out_ch;
  }
  {
    const int d = gru_input_dim(config);
    const int h = config.gru_hidden;
    for (const char* gate : {"z", "r", "h"}) {
      Rng r = next_rng();
      p.add(std::string("q.gru.w") + gate, he_normal({h, d}, d, r));
    }
    for (const char* gate : {"z", "r", "h"}) {
      Rng r = next_rng();
      p.add(std::string("q.gru.u") + gate, he_normal({h, h}, h, r));
    }
    for (const char* gate : {"z", "r", "h"})
      p.add(std::string("q.gru.b") + gate, Tensor::zeros({h, 1}));
    for (const char* head : {"mu", "logvar"}) {
      Rng r = next_rng();
      p.add(std::string("q.") + head + ".w",
            he_normal({config.d_z, h}, h, r));
      p.add(std::string("q.") + head + ".b", Tensor::zeros({config.d_z, 1}));
    }
  }

  const int depth = config.depth();
  in_ch = 1 + config.d_z;
  for (int l = 0; l < depth; ++l) {
    const int out_ch = config.s_channels[static_cast<std::size_t>(l)];
    Rng r = next_rng();
    p.add("s.enc" + std::to_string(l + 1) + ".w",
          he_normal({out_ch, in_ch, k, k}, in_ch * k * k, r));
    if (l == depth - 1)
      p.add("s.enc" + std::to_string(l + 1) + ".b", Tensor::zeros({out_ch}));
    in_ch = out_ch;
  }
  const auto enc_shapes = encoder_in_shapes(config);
  const auto plan = decoder_plan(config, enc_shapes);
  for (int d = 0; d < depth; ++d) {
    const DecPlan& pl = plan[static_cast<std::size_t>(d)];
    const std::string base_name = "s.dec" + std::to_string(d + 1);
    Rng r = next_rng();
    p.add(base_name + ".w",
          he_normal({pl.in_ch, pl.out_ch, k, k}, pl.in_ch * k * k, r));
    if (d == depth - 1) {
      p.add(base_name + ".b", Tensor::zeros({pl.out_ch}));
    } else {
      Rng rs = next_rng();
      p.add(base_name + ".ys.w", he_normal({pl.out_ch, config.d_z}, config.d_z, rs));
      p.add(base_name + ".ys.b", Tensor::full({pl.out_ch, 1}, 1.0));
      Rng rb = next_rng();
      p.add(base_name + ".yb.w", he_normal({pl.out_ch, config.d_z}, config.d_z, rb));
      p.add(base_name + ".yb.b", Tensor::zeros({pl.out_ch, 1}));
    }
  }
  for (Tensor& t : p.tensors) t.set_requires_grad(true);
  return p;
}

LatentDist query_encode(Graph* g, const ParamSet& params,
                        const ModelConfig& config, const Tensor& query_mag) {
  if (query_mag.rank() != 2 || query_mag.dim(0) != config.f_net() ||
      query_mag.dim(1) != config.t_net())
    throw std::invalid_argument("query_encode: magnitude shape mismatch, got " +
                                shape_str(query_mag.shape()));
  const int k = config.kernel;
  Tensor x = reshape(g, query_mag, {1, config.f_net(), config.t_net()});
  int f = config.f_net(), t = config.t_net();
  for (std::size_t l = 0; l < config.q_channels.size(); ++l) {
    const int st = config.q_stride_t[l];
    const ConvSpec spec = conv_same_spec(k, k, 2, st, f, t);
    x = conv2d(g, x, params.get("q.conv" + std::to_string(l + 1) + ".w"), spec);
    x = instance_norm(g, x, config.in_eps);
    x = relu(g, x);
    f /= 2;
    if (st == 2) t /= 2;
  }

  // (C, F', T') -> T' feature columns of size C*F'
  Tensor seq = reshape(g, permute(g, x, {2, 0, 1}), {t, x.dim(0) * f});
  std::vector<Tensor> steps;
  steps.reserve(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) steps.push_back(take_row(g, seq, i));

  GruParams gp;
  gp.wz = params.get("q.gru.wz");
  gp.wr = params.get("q.gru.wr");
  gp.wh = params.get("q.gru.wh");
  gp.uz = params.get("q.gru.uz");
  gp.ur = params.get("q.gru.ur");
  gp.uh = params.get("q.gru.uh");
  gp.bz = params.get("q.gru.bz");
  gp.br = params.get("q.gru.br");
  gp.bh = params.get("q.gru.bh");
  const Tensor h = gru_forward(g, gp, steps).final_state;

  LatentDist dist;
  dist.mu = add(g, matmul(g, params.get("q.mu.w"), h), params.get("q.mu.b"));
  dist.logvar =
      clamp(g,
            add(g, matmul(g, params.get("q.logvar.w"), h),
                params.get("q.logvar.b")),
            config.logvar_lo, config.logvar_hi);
  return dist;
}

SeparateOut separate(Graph* g, const ParamSet& params,
                     const ModelConfig& config, const Tensor& mix_mag,
                     const Tensor& z) {
  const int f0 = config.f_net(), t0 = config.t_net();
  if (mix_mag.rank() != 2 || mix_mag.dim(0) != f0 || mix_mag.dim(1) != t0)
    throw std::invalid_argument("separate: magnitude shape mismatch, got " +
                                shape_str(mix_mag.shape()));
  if (z.size() != static_cast<std::size_t>(config.d_z))
    throw std::invalid_argument("separate: latent dimension mismatch");
  const int k = config.kernel;
  const int depth = config.depth();

  Tensor zplane = tile_plane(g, reshape(g, z, {config.d_z}), f0, t0);
  Tensor x = concat(g, {reshape(g, mix_mag, {1, f0, t0}), zplane}, 0);

  const auto enc_shapes = encoder_in_shapes(config);
  std::vector<Tensor> enc_out;
  for (int l = 0; l < depth; ++l) {
    const auto [f, t] = enc_shapes[static_cast<std::size_t>(l)];
    const ConvSpec spec = conv_same_spec(k, k, 2, config.s_stride_t[static_cast<std::size_t>(l)], f, t);
    x = conv2d(g, x, params.get("s.enc" + std::to_string(l + 1) + ".w"), spec);
    if (l == depth - 1) {
      // innermost plane is 1x1: instance statistics are degenerate there
      x = bias_add(g, x, params.get("s.enc" + std::to_string(l + 1) + ".b"));
    } else {
      x = instance_norm(g, x, config.in_eps);
    }
    x = leaky_relu(g, x, 0.2);
    enc_out.push_back(x);
  }

  const auto plan = decoder_plan(config, enc_shapes);
  Tensor y = enc_out[static_cast<std::size_t>(depth - 1)];
  for (int d = 0; d < depth; ++d) {
    const DecPlan& pl = plan[static_cast<std::size_t>(d)];
    if (d > 0)
      y = concat(g, {y, enc_out[static_cast<std::size_t>(depth - 1 - d)]}, 0);
    const ConvSpec spec = conv_same_spec(k, k, 2, pl.stride_t, pl.out_f, pl.out_t);
    const std::string base_name = "s.dec" + std::to_string(d + 1);
    y = conv2d_transpose(g, y, params.get(base_name + ".w"), spec, pl.out_f,
                         pl.out_t);
    if (d == depth - 1) {
      y = bias_add(g, y, params.get(base_name + ".b"));
      y = sigmoid(g, y);
    } else {
      Tensor ys = reshape(
          g,
          add(g, matmul(g, params.get(base_name + ".ys.w"), z),
              params.get(base_name + ".ys.b")),
          {pl.out_ch});
      Tensor yb = reshape(
          g,
          add(g, matmul(g, params.get(base_name + ".yb.w"), z),
              params.get(base_name + ".yb.b")),
          {pl.out_ch});
      y = adain(g, y, ys, yb, config.in_eps);
      y = relu(g, y);
    }
  }

  SeparateOut out;
  out.mask = reshape(g, y, {f0, t0});
  out.est = mul(g, out.mask, mix_mag);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'Q', 'S', 'E', 'P'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& s, uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_record(std::string& s, const std::string& name, const Shape& shape,
                const std::vector<double>& values) {
  put_u32(s, static_cast<uint32_t>(name.size()));
  s += name;
  put_u32(s, static_cast<uint32_t>(shape.size()));
  for (int d : shape) put_u32(s, static_cast<uint32_t>(d));
  for (double v : values) {
    const float f = static_cast<float>(v);
    uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(s, u);
  }
}

struct Cursor {
  const unsigned char* p;
  std::size_t left;

  void need(std::size_t n) const {
    if (left < n) throw std::runtime_error("truncated checkpoint file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
};

struct Record {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

Record read_record(Cursor& c) {
  Record r;
  r.name = c.str(c.u32());
  const uint32_t rank = c.u32();
  if (rank > 8) throw std::runtime_error("implausible tensor rank in checkpoint");
  for (uint32_t i = 0; i < rank; ++i)
    r.shape.push_back(static_cast<int>(c.u32()));
  const std::size_t n = shape_numel(r.shape);
  r.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const uint32_t u = c.u32();
    float f;
    std::memcpy(&f, &u, 4);
    r.values[i] = static_cast<double>(f);
  }
  return r;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ParamSet& params,
                     const std::vector<AdamState>& adam, long iteration) {
  if (adam.size() != params.count())
    throw std::invalid_argument("save_checkpoint: adam state count mismatch");
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  const std::string cfg = config.serialize();
  put_u32(out, static_cast<uint32_t>(cfg.size()));
  out += cfg;
  put_u64(out, static_cast<uint64_t>(iteration));
  const uint64_t adam_t = adam.empty() ? 0 : static_cast<uint64_t>(adam[0].t);
  put_u64(out, adam_t);
  put_u32(out, static_cast<uint32_t>(params.count()));
  for (std::size_t i = 0; i < params.count(); ++i)
    put_record(out, "p:" + params.names[i], params.tensors[i].shape(),
               params.tensors[i].values());
  for (std::size_t i = 0; i < params.count(); ++i) {
    const Shape& shape = params.tensors[i].shape();
    const std::size_t n = params.tensors[i].size();
    const std::vector<double> zero(n, 0.0);
    put_record(out, "m:" + params.names[i], shape,
               adam[i].m.empty() ? zero : adam[i].m);
    put_record(out, "v:" + params.names[i], shape,
               adam[i].v.empty() ? zero : adam[i].v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<long>(out.size()));
  if (!f) throw std::runtime_error("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  const std::string bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  Cursor c{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};
  c.need(4);
  if (std::memcmp(c.p, kMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  c.p += 4;
  c.left -= 4;
  const uint32_t version = c.u32();
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  Checkpoint ck;
  ck.config = ModelConfig::deserialize(c.str(c.u32()));
  ck.iteration = static_cast<long>(c.u64());
  const uint64_t adam_t = c.u64();
  const uint32_t count = c.u32();

  // Reference structure from the config so shapes are validated.
  ck.params = init_params(ck.config, 0);
  if (ck.params.count() != count)
    throw std::runtime_error("checkpoint tensor count disagrees with config");
  ck.adam.assign(count, AdamState{});

  for (uint32_t i = 0; i < count; ++i) {
    Record r = read_record(c);
    if (r.name != "p:" + ck.params.names[i])
      throw std::runtime_error("unexpected checkpoint record " + r.name);
    if (r.shape != ck.params.tensors[i].shape())
      throw std::runtime_error("shape disagreement for " + r.name);
    ck.params.tensors[i].values() = std::move(r.values);
  }
  for (uint32_t i = 0; i < count; ++i) {
    Record rm = read_record(c);
    Record rv = read_record(c);
    if (rm.name != "m:" + ck.params.names[i] ||
        rv.name != "v:" + ck.params.names[i])
      throw std::runtime_error("unexpected moment record " + rm.name);
    if (rm.shape != ck.params.tensors[i].shape() || rv.shape != rm.shape)
      throw std::runtime_error("moment shape disagreement for " + rm.name);
    ck.adam[i].m = std::move(rm.values);
    ck.adam[i].v = std::move(rv.values);
    ck.adam[i].t = static_cast<int64_t>(adam_t);
  }
  if (c.left != 0)
    throw std::runtime_error("trailing bytes in checkpoint " + path);
  return ck;
}

}  // namespace qsep
