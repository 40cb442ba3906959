#include "qsep/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gemm.hpp"

namespace qsep {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("non-positive dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

struct Tensor::State {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
};

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto st = std::make_shared<State>();
  st->data.assign(shape_numel(shape), 0.0);
  st->shape = std::move(shape);
  st->requires_grad = requires_grad;
  return Tensor(std::move(st));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.st_->data.begin(), t.st_->data.end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw std::invalid_argument("data length does not match shape " +
                                shape_str(shape));
  auto st = std::make_shared<State>();
  st->shape = std::move(shape);
  st->data = std::move(values);
  st->requires_grad = requires_grad;
  return Tensor(std::move(st));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.st_->data) v = stddev * rng.normal();
  return t;
}

const Shape& Tensor::shape() const { return st_->shape; }
int Tensor::rank() const { return static_cast<int>(st_->shape.size()); }
int Tensor::dim(int i) const { return st_->shape.at(static_cast<std::size_t>(i)); }
std::size_t Tensor::size() const { return st_->data.size(); }

double* Tensor::data() { return st_->data.data(); }
const double* Tensor::data() const { return st_->data.data(); }
std::vector<double>& Tensor::values() { return st_->data; }
const std::vector<double>& Tensor::values() const { return st_->data; }

double Tensor::value() const {
  if (st_->data.size() != 1)
    throw std::invalid_argument("value() on tensor of shape " +
                                shape_str(st_->shape));
  return st_->data[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  if (idx.size() != st_->shape.size())
    throw std::invalid_argument("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (int i : idx) {
    if (i < 0 || i >= st_->shape[axis])
      throw std::out_of_range("index out of range");
    flat = flat * static_cast<std::size_t>(st_->shape[axis]) +
           static_cast<std::size_t>(i);
    ++axis;
  }
  return st_->data[flat];
}

bool Tensor::requires_grad() const { return st_->requires_grad; }
void Tensor::set_requires_grad(bool on) { st_->requires_grad = on; }

bool Tensor::has_grad() const { return !st_->grad.empty(); }

double* Tensor::grad() {
  if (st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0);
  return st_->grad.data();
}

const double* Tensor::grad_data() const {
  return st_->grad.empty() ? nullptr : st_->grad.data();
}

std::vector<double>& Tensor::grad_values() {
  grad();
  return st_->grad;
}

void Tensor::zero_grad() {
  if (!st_->grad.empty()) std::fill(st_->grad.begin(), st_->grad.end(), 0.0);
}

void Tensor::drop_grad() { st_->grad.clear(); }

const void* Tensor::id() const { return st_.get(); }

bool Tensor::same_storage(const Tensor& other) const {
  return st_ == other.st_;
}

void Graph::record(std::function<void()> backward_step) {
  nodes_.push_back(std::move(backward_step));
}

void Graph::backward(Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward() requires a scalar loss, got " +
                                shape_str(loss.shape()));
  loss.grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void check_finite(const Tensor& t, const char* op_name) {
  for (double v : t.values())
    if (!std::isfinite(v))
      throw std::runtime_error(std::string(op_name) +
                               " produced a non-finite value");
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("dot: size mismatch");
  double acc = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += pa[i] * pb[i];
  return acc;
}

namespace {

bool track(Graph* g, std::initializer_list<const Tensor*> inputs) {
  if (!g) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor elementwise(Graph* g, Ew kind, const Tensor& a, const Tensor* b,
                   double c) {
  const bool binary = kind == Ew::kAdd || kind == Ew::kSub || kind == Ew::kMul;
  if (binary && b) require_same_shape(a, *b, "elementwise");

  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data();
  const double* pb = b ? b->data() : nullptr;

  switch (kind) {
    case Ew::kAdd:
      if (pb) for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
      else    for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] + c;
      break;
    case Ew::kSub:
      if (pb) for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i];
      else    for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] - c;
      break;
    case Ew::kMul:
      if (pb) for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
      else    for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * c;
      break;
    case Ew::kScale:
      for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * c;
      break;
    case Ew::kRelu:
      for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] > 0.0 ? pa[i] : 0.0;
      break;
    case Ew::kSigmoid:
      for (std::size_t i = 0; i < n; ++i)
        out[i] = pa[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-pa[i]))
                              : std::exp(pa[i]) / (1.0 + std::exp(pa[i]));
      break;
    case Ew::kExp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(pa[i]);
      break;
    case Ew::kLog:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(pa[i] > 0.0))
          throw std::invalid_argument("log of non-positive value");
        out[i] = std::log(pa[i]);
      }
      break;
    case Ew::kNeg:
      for (std::size_t i = 0; i < n; ++i) out[i] = -pa[i];
      break;
    case Ew::kAbs:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(pa[i]);
      break;
  }

  Tensor result = Tensor::from(a.shape(), std::move(out));
  check_finite(result, "elementwise");

  const bool rg = b ? track(g, {&a, b}) : track(g, {&a});
  result.set_requires_grad(rg);
  if (rg) {
    Tensor ta = a;
    Tensor tb = b ? *b : Tensor();
    Tensor to = result;
    g->record([kind, ta, tb, to, c]() mutable {
      const double* go = to.grad();
      const std::size_t n = ta.size();
      const bool has_b = tb.defined();
      double* ga = ta.requires_grad() ? ta.grad() : nullptr;
      double* gb = has_b && tb.requires_grad() ? tb.grad() : nullptr;
      switch (kind) {
        case Ew::kAdd:
          if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
          if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += go[i];
          break;
        case Ew::kSub:
          if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
          if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] -= go[i];
          break;
        case Ew::kMul:
          if (has_b) {
            if (ga) {
              const double* pb = tb.data();
              for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * pb[i];
            }
            if (gb) {
              const double* pa = ta.data();
              for (std::size_t i = 0; i < n; ++i) gb[i] += go[i] * pa[i];
            }
          } else if (ga) {
            for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * c;
          }
          break;
        case Ew::kScale:
          if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * c;
          break;
        case Ew::kRelu:
          if (ga) {
            const double* pa = ta.data();
            for (std::size_t i = 0; i < n; ++i)
              if (pa[i] > 0.0) ga[i] += go[i];
          }
          break;
        case Ew::kSigmoid:
          if (ga) {
            const double* po = to.data();
            for (std::size_t i = 0; i < n; ++i)
              ga[i] += go[i] * po[i] * (1.0 - po[i]);
          }
          break;
        case Ew::kExp:
          if (ga) {
            const double* po = to.data();
            for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * po[i];
          }
          break;
        case Ew::kLog:
          if (ga) {
            const double* pa = ta.data();
            for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] / pa[i];
          }
          break;
        case Ew::kNeg:
          if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] -= go[i];
          break;
        case Ew::kAbs:
          if (ga) {
            const double* pa = ta.data();
            // sign(0) taken as 0
            for (std::size_t i = 0; i < n; ++i)
              ga[i] += go[i] * (pa[i] > 0.0 ? 1.0 : (pa[i] < 0.0 ? -1.0 : 0.0));
          }
          break;
      }
    });
  }
  return result;
}

Tensor add(Graph* g, const Tensor& a, const Tensor& b) {
  return elementwise(g, Ew::kAdd, a, &b);
}
Tensor add_scalar(Graph* g, const Tensor& a, double c) {
  return elementwise(g, Ew::kAdd, a, nullptr, c);
}
Tensor sub(Graph* g, const Tensor& a, const Tensor& b) {
  return elementwise(g, Ew::kSub, a, &b);
}
Tensor mul(Graph* g, const Tensor& a, const Tensor& b) {
  return elementwise(g, Ew::kMul, a, &b);
}
Tensor scale(Graph* g, const Tensor& a, double c) {
  return elementwise(g, Ew::kScale, a, nullptr, c);
}
Tensor relu(Graph* g, const Tensor& a) {
  return elementwise(g, Ew::kRelu, a);
}
Tensor sigmoid(Graph* g, const Tensor& a) {
  return elementwise(g, Ew::kSigmoid, a);
}
Tensor exp_op(Graph* g, const Tensor& a) { return elementwise(g, Ew::kExp, a); }
Tensor log_op(Graph* g, const Tensor& a) { return elementwise(g, Ew::kLog, a); }
Tensor neg(Graph* g, const Tensor& a) { return elementwise(g, Ew::kNeg, a); }
Tensor abs_op(Graph* g, const Tensor& a) { return elementwise(g, Ew::kAbs, a); }

Tensor leaky_relu(Graph* g, const Tensor& a, double slope) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data();
  for (std::size_t i = 0; i < n; ++i)
    out[i] = pa[i] > 0.0 ? pa[i] : slope * pa[i];
  Tensor result = Tensor::from(a.shape(), std::move(out));
  check_finite(result, "leaky_relu");
  result.set_requires_grad(track(g, {&a}));
  if (result.requires_grad()) {
    Tensor ta = a, to = result;
    g->record([ta, to, slope]() mutable {
      const double* go = to.grad();
      const double* pa = ta.data();
      double* ga = ta.grad();
      for (std::size_t i = 0; i < ta.size(); ++i)
        ga[i] += go[i] * (pa[i] > 0.0 ? 1.0 : slope);
    });
  }
  return result;
}

Tensor tanh_op(Graph* g, const Tensor& a) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(pa[i]);
  Tensor result = Tensor::from(a.shape(), std::move(out));
  check_finite(result, "tanh");
  result.set_requires_grad(track(g, {&a}));
  if (result.requires_grad()) {
    Tensor ta = a, to = result;
    g->record([ta, to]() mutable {
      const double* go = to.grad();
      const double* po = to.data();
      double* ga = ta.grad();
      for (std::size_t i = 0; i < ta.size(); ++i)
        ga[i] += go[i] * (1.0 - po[i] * po[i]);
    });
  }
  return result;
}

Tensor clamp(Graph* g, const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::min(std::max(pa[i], lo), hi);
  Tensor result = Tensor::from(a.shape(), std::move(out));
  check_finite(result, "clamp");
  result.set_requires_grad(track(g, {&a}));
  if (result.requires_grad()) {
    Tensor ta = a, to = result;
    g->record([ta, to, lo, hi]() mutable {
      const double* go = to.grad();
      const double* pa = ta.data();
      double* ga = ta.grad();
      for (std::size_t i = 0; i < ta.size(); ++i)
        if (pa[i] >= lo && pa[i] <= hi) ga[i] += go[i];
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(Graph* g, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul expects rank-2 tensors");
  const int m = a.dim(0), k = a.dim(1);
  if (b.dim(0) != k)
    throw std::invalid_argument("matmul: inner dimension mismatch " +
                                shape_str(a.shape()) + " . " +
                                shape_str(b.shape()));
  const int n = b.dim(1);

  Tensor result = Tensor::zeros({m, n});
  detail::gemm_nn(m, n, k, a.data(), k, b.data(), n, result.data(), n);
  check_finite(result, "matmul");

  result.set_requires_grad(track(g, {&a, &b}));
  if (result.requires_grad()) {
    Tensor ta = a, tb = b, to = result;
    g->record([ta, tb, to, m, n, k]() mutable {
      const double* go = to.grad();
      if (ta.requires_grad())
        detail::gemm_nt(m, k, n, go, n, tb.data(), n, ta.grad(), k);
      if (tb.requires_grad())
        detail::gemm_tn(k, n, m, ta.data(), k, go, n, tb.grad(), n);
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Convolution

int conv_out_extent(int extent, int kernel, int stride, int pad_lo,
                    int pad_hi) {
  const int padded = extent + pad_lo + pad_hi;
  if (padded < kernel) return 0;
  return (padded - kernel) / stride + 1;
}

ConvSpec conv_same_spec(int kf, int kt, int sf, int st, int f, int t) {
  ConvSpec spec;
  spec.stride_f = sf;
  spec.stride_t = st;
  const int out_f = (f + sf - 1) / sf;
  const int out_t = (t + st - 1) / st;
  const int pad_f = std::max(0, (out_f - 1) * sf + kf - f);
  const int pad_t = std::max(0, (out_t - 1) * st + kt - t);
  spec.pad_f_lo = pad_f / 2;
  spec.pad_f_hi = pad_f - pad_f / 2;
  spec.pad_t_lo = pad_t / 2;
  spec.pad_t_hi = pad_t - pad_t / 2;
  return spec;
}

namespace {

// col layout: (C*kf*kt) rows x (Fo*To) cols, row index r = (c, i, j).
void im2col(const double* x, int c_in, int f, int t, int kf, int kt,
            const ConvSpec& s, int fo, int to, double* col) {
  const std::size_t plane = static_cast<std::size_t>(f) * t;
  const std::size_t ncols = static_cast<std::size_t>(fo) * to;
  for (int c = 0; c < c_in; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * plane;
    for (int i = 0; i < kf; ++i) {
      for (int j = 0; j < kt; ++j) {
        double* row =
            col + (static_cast<std::size_t>(c) * kf * kt + i * kt + j) * ncols;
        for (int of = 0; of < fo; ++of) {
          const int sf = of * s.stride_f - s.pad_f_lo + i;
          double* dst = row + static_cast<std::size_t>(of) * to;
          if (sf < 0 || sf >= f) {
            std::fill(dst, dst + to, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(sf) * t;
          for (int ot = 0; ot < to; ++ot) {
            const int st = ot * s.stride_t - s.pad_t_lo + j;
            dst[ot] = (st < 0 || st >= t) ? 0.0 : src[st];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds col back onto the (C, F, T) grid.
void col2im_add(const double* col, int c_in, int f, int t, int kf, int kt,
                const ConvSpec& s, int fo, int to, double* x) {
  const std::size_t plane = static_cast<std::size_t>(f) * t;
  const std::size_t ncols = static_cast<std::size_t>(fo) * to;
  for (int c = 0; c < c_in; ++c) {
    double* xc = x + static_cast<std::size_t>(c) * plane;
    for (int i = 0; i < kf; ++i) {
      for (int j = 0; j < kt; ++j) {
        const double* row =
            col + (static_cast<std::size_t>(c) * kf * kt + i * kt + j) * ncols;
        for (int of = 0; of < fo; ++of) {
          const int sf = of * s.stride_f - s.pad_f_lo + i;
          if (sf < 0 || sf >= f) continue;
          const double* src = row + static_cast<std::size_t>(of) * to;
          double* dst = xc + static_cast<std::size_t>(sf) * t;
          for (int ot = 0; ot < to; ++ot) {
            const int st = ot * s.stride_t - s.pad_t_lo + j;
            if (st >= 0 && st < t) dst[st] += src[ot];
          }
        }
      }
    }
  }
}

struct ConvDims {
  int c_in, f, t, c_out, kf, kt, fo, to;
  std::size_t ckk, ncols;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel,
                   const ConvSpec& spec) {
  if (input.rank() != 3 || kernel.rank() != 4)
    throw std::invalid_argument("conv2d expects input (C,F,T), kernel (O,C,kf,kt)");
  ConvDims d;
  d.c_in = input.dim(0);
  d.f = input.dim(1);
  d.t = input.dim(2);
  d.c_out = kernel.dim(0);
  d.kf = kernel.dim(2);
  d.kt = kernel.dim(3);
  if (kernel.dim(1) != d.c_in)
    throw std::invalid_argument("conv2d: kernel channel mismatch");
  d.fo = conv_out_extent(d.f, d.kf, spec.stride_f, spec.pad_f_lo, spec.pad_f_hi);
  d.to = conv_out_extent(d.t, d.kt, spec.stride_t, spec.pad_t_lo, spec.pad_t_hi);
  if (d.fo < 1 || d.to < 1)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  d.ckk = static_cast<std::size_t>(d.c_in) * d.kf * d.kt;
  d.ncols = static_cast<std::size_t>(d.fo) * d.to;
  return d;
}

}  // namespace

Tensor conv2d(Graph* g, const Tensor& input, const Tensor& kernel,
              const ConvSpec& spec) {
  const ConvDims d = conv_dims(input, kernel, spec);

  std::vector<double> col(d.ckk * d.ncols);
  im2col(input.data(), d.c_in, d.f, d.t, d.kf, d.kt, spec, d.fo, d.to,
         col.data());

  Tensor result = Tensor::zeros({d.c_out, d.fo, d.to});
  // kernel storage (O, C, kf, kt) is already the (O x C*kf*kt) matrix.
  detail::gemm_nn(d.c_out, static_cast<int>(d.ncols), static_cast<int>(d.ckk),
                  kernel.data(), static_cast<int>(d.ckk), col.data(),
                  static_cast<int>(d.ncols), result.data(),
                  static_cast<int>(d.ncols));
  check_finite(result, "conv2d");

  result.set_requires_grad(track(g, {&input, &kernel}));
  if (result.requires_grad()) {
    Tensor tx = input, tk = kernel, to_ = result;
    g->record([tx, tk, to_, spec, d]() mutable {
      const double* go = to_.grad();
      if (tk.requires_grad()) {
        std::vector<double> col(d.ckk * d.ncols);
        im2col(tx.data(), d.c_in, d.f, d.t, d.kf, d.kt, spec, d.fo, d.to,
               col.data());
        detail::gemm_nt(d.c_out, static_cast<int>(d.ckk),
                        static_cast<int>(d.ncols), go,
                        static_cast<int>(d.ncols), col.data(),
                        static_cast<int>(d.ncols), tk.grad(),
                        static_cast<int>(d.ckk));
      }
      if (tx.requires_grad()) {
        std::vector<double> dcol(d.ckk * d.ncols, 0.0);
        detail::gemm_tn(static_cast<int>(d.ckk), static_cast<int>(d.ncols),
                        d.c_out, tk.data(), static_cast<int>(d.ckk), go,
                        static_cast<int>(d.ncols), dcol.data(),
                        static_cast<int>(d.ncols));
        col2im_add(dcol.data(), d.c_in, d.f, d.t, d.kf, d.kt, spec, d.fo, d.to,
                   tx.grad());
      }
    });
  }
  return result;
}

Tensor conv2d_transpose(Graph* g, const Tensor& input, const Tensor& kernel,
                        const ConvSpec& spec, int out_f, int out_t) {
  if (input.rank() != 3 || kernel.rank() != 4)
    throw std::invalid_argument(
        "conv2d_transpose expects input (C,F',T'), kernel (C,O,kf,kt)");
  const int c_in = input.dim(0);
  const int c_out = kernel.dim(1);
  const int kf = kernel.dim(2), kt = kernel.dim(3);
  if (kernel.dim(0) != c_in)
    throw std::invalid_argument("conv2d_transpose: kernel channel mismatch");
  const int fo = conv_out_extent(out_f, kf, spec.stride_f, spec.pad_f_lo,
                                 spec.pad_f_hi);
  const int to = conv_out_extent(out_t, kt, spec.stride_t, spec.pad_t_lo,
                                 spec.pad_t_hi);
  if (fo != input.dim(1) || to != input.dim(2))
    throw std::invalid_argument(
        "conv2d_transpose: declared output extent is inconsistent with the "
        "input extent under the matching forward conv");

  const std::size_t ckk = static_cast<std::size_t>(c_out) * kf * kt;
  const std::size_t ncols = static_cast<std::size_t>(fo) * to;

  // Forward = backward-input pass of the matching conv.
  std::vector<double> dcol(ckk * ncols, 0.0);
  detail::gemm_tn(static_cast<int>(ckk), static_cast<int>(ncols), c_in,
                  kernel.data(), static_cast<int>(ckk), input.data(),
                  static_cast<int>(ncols), dcol.data(),
                  static_cast<int>(ncols));
  Tensor result = Tensor::zeros({c_out, out_f, out_t});
  col2im_add(dcol.data(), c_out, out_f, out_t, kf, kt, spec, fo, to,
             result.data());
  check_finite(result, "conv2d_transpose");

  result.set_requires_grad(track(g, {&input, &kernel}));
  if (result.requires_grad()) {
    Tensor tx = input, tk = kernel, tz = result;
    g->record([tx, tk, tz, spec, c_in, c_out, kf, kt, out_f, out_t, fo, to,
               ckk, ncols]() mutable {
      const double* gz = tz.grad();
      std::vector<double> col(ckk * ncols);
      im2col(gz, c_out, out_f, out_t, kf, kt, spec, fo, to, col.data());
      if (tx.requires_grad())
        detail::gemm_nn(c_in, static_cast<int>(ncols), static_cast<int>(ckk),
                        tk.data(), static_cast<int>(ckk), col.data(),
                        static_cast<int>(ncols), tx.grad(),
                        static_cast<int>(ncols));
      if (tk.requires_grad())
        detail::gemm_nt(c_in, static_cast<int>(ckk), static_cast<int>(ncols),
                        tx.data(), static_cast<int>(ncols), col.data(),
                        static_cast<int>(ncols), tk.grad(),
                        static_cast<int>(ckk));
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// bias_add / instance_norm / adain

Tensor bias_add(Graph* g, const Tensor& x, const Tensor& b) {
  if (x.rank() != 3 || b.rank() != 1 || b.dim(0) != x.dim(0))
    throw std::invalid_argument("bias_add expects x (C,F,T), b (C)");
  const int c = x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  std::vector<double> out(x.size());
  const double* px = x.data();
  const double* pb = b.data();
  for (int ch = 0; ch < c; ++ch) {
    const double bias = pb[ch];
    const double* src = px + ch * plane;
    double* dst = out.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + bias;
  }
  Tensor result = Tensor::from(x.shape(), std::move(out));
  check_finite(result, "bias_add");
  result.set_requires_grad(track(g, {&x, &b}));
  if (result.requires_grad()) {
    Tensor tx = x, tb = b, to = result;
    g->record([tx, tb, to, c, plane]() mutable {
      const double* go = to.grad();
      if (tx.requires_grad()) {
        double* gx = tx.grad();
        for (std::size_t i = 0; i < tx.size(); ++i) gx[i] += go[i];
      }
      if (tb.requires_grad()) {
        double* gb = tb.grad();
        for (int ch = 0; ch < c; ++ch) {
          const double* src = go + ch * plane;
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += src[i];
          gb[ch] += acc;
        }
      }
    });
  }
  return result;
}

namespace {

struct ChannelStats {
  std::vector<double> mean, inv_std;
};

ChannelStats plane_stats(const double* x, int c, std::size_t plane,
                         double eps) {
  ChannelStats st;
  st.mean.resize(c);
  st.inv_std.resize(c);
  for (int ch = 0; ch < c; ++ch) {
    const double* src = x + ch * plane;
    double m = 0.0;
    for (std::size_t i = 0; i < plane; ++i) m += src[i];
    m /= static_cast<double>(plane);
    double v = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = src[i] - m;
      v += d * d;
    }
    v /= static_cast<double>(plane);
    st.mean[ch] = m;
    st.inv_std[ch] = 1.0 / std::sqrt(v + eps);
  }
  return st;
}

// dx for y_hat-style normalization given upstream d(y_hat).
void norm_backward_channel(const double* x, const double* dyh, double mean,
                           double inv_std, std::size_t plane, double* gx) {
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    const double xh = (x[i] - mean) * inv_std;
    m1 += dyh[i];
    m2 += dyh[i] * xh;
  }
  m1 /= static_cast<double>(plane);
  m2 /= static_cast<double>(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const double xh = (x[i] - mean) * inv_std;
    gx[i] += inv_std * (dyh[i] - m1 - xh * m2);
  }
}

}  // namespace

Tensor instance_norm(Graph* g, const Tensor& x, double eps) {
  if (x.rank() != 3)
    throw std::invalid_argument("instance_norm expects (C,F,T)");
  const int c = x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  const ChannelStats st = plane_stats(x.data(), c, plane, eps);

  std::vector<double> out(x.size());
  const double* px = x.data();
  for (int ch = 0; ch < c; ++ch) {
    const double* src = px + ch * plane;
    double* dst = out.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i)
      dst[i] = (src[i] - st.mean[ch]) * st.inv_std[ch];
  }
  Tensor result = Tensor::from(x.shape(), std::move(out));
  check_finite(result, "instance_norm");
  result.set_requires_grad(track(g, {&x}));
  if (result.requires_grad()) {
    Tensor tx = x, to = result;
    g->record([tx, to, st, c, plane]() mutable {
      const double* go = to.grad();
      const double* px = tx.data();
      double* gx = tx.grad();
      for (int ch = 0; ch < c; ++ch)
        norm_backward_channel(px + ch * plane, go + ch * plane, st.mean[ch],
                              st.inv_std[ch], plane, gx + ch * plane);
    });
  }
  return result;
}

Tensor adain(Graph* g, const Tensor& x, const Tensor& ys, const Tensor& yb,
             double eps) {
  if (x.rank() != 3)
    throw std::invalid_argument("adain expects x (C,F,T)");
  const int c = x.dim(0);
  if (ys.rank() != 1 || yb.rank() != 1 || ys.dim(0) != c || yb.dim(0) != c)
    throw std::invalid_argument("adain: channel count mismatch");
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  const ChannelStats st = plane_stats(x.data(), c, plane, eps);

  std::vector<double> out(x.size());
  const double* px = x.data();
  const double* ps = ys.data();
  const double* pb = yb.data();
  for (int ch = 0; ch < c; ++ch) {
    const double* src = px + ch * plane;
    double* dst = out.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i)
      dst[i] = ps[ch] * (src[i] - st.mean[ch]) * st.inv_std[ch] + pb[ch];
  }
  Tensor result = Tensor::from(x.shape(), std::move(out));
  check_finite(result, "adain");
  result.set_requires_grad(track(g, {&x, &ys, &yb}));
  if (result.requires_grad()) {
    Tensor tx = x, ts = ys, tb = yb, to = result;
    g->record([tx, ts, tb, to, st, c, plane]() mutable {
      const double* go = to.grad();
      const double* px = tx.data();
      const double* ps = ts.data();
      for (int ch = 0; ch < c; ++ch) {
        const double* gch = go + ch * plane;
        const double* xch = px + ch * plane;
        if (tb.requires_grad()) {
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += gch[i];
          tb.grad()[ch] += acc;
        }
        if (ts.requires_grad()) {
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i)
            acc += gch[i] * (xch[i] - st.mean[ch]) * st.inv_std[ch];
          ts.grad()[ch] += acc;
        }
        if (tx.requires_grad()) {
          std::vector<double> dyh(plane);
          for (std::size_t i = 0; i < plane; ++i) dyh[i] = ps[ch] * gch[i];
          norm_backward_channel(xch, dyh.data(), st.mean[ch], st.inv_std[ch],
                                plane, tx.grad() + ch * plane);
        }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// concat / split / reduce / reshape / permute / take_row / tile_plane

namespace {

// Decomposes shape around `axis` into (outer, axis extent, inner).
struct AxisSplit {
  std::size_t outer, inner;
  int extent;
};

AxisSplit axis_split(const Shape& s, int axis) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw std::invalid_argument("axis out of range");
  AxisSplit a{1, 1, s[static_cast<std::size_t>(axis)]};
  for (int i = 0; i < axis; ++i) a.outer *= static_cast<std::size_t>(s[i]);
  for (std::size_t i = axis + 1; i < s.size(); ++i)
    a.inner *= static_cast<std::size_t>(s[i]);
  return a;
}

}  // namespace

Tensor concat(Graph* g, const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  const Shape& first = parts[0].shape();
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != parts[0].rank())
      throw std::invalid_argument("concat: rank mismatch");
    for (int i = 0; i < p.rank(); ++i)
      if (i != axis && p.dim(i) != first[static_cast<std::size_t>(i)])
        throw std::invalid_argument("concat: incompatible shapes");
    total += p.dim(axis);
  }
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = total;

  Tensor result = Tensor::zeros(out_shape);
  const AxisSplit out_ax = axis_split(out_shape, axis);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const AxisSplit ax = axis_split(p.shape(), axis);
    const double* src = p.data();
    for (std::size_t o = 0; o < ax.outer; ++o) {
      double* dst = result.data() +
                    (o * static_cast<std::size_t>(out_ax.extent) + offset) *
                        out_ax.inner;
      std::memcpy(dst, src + o * ax.extent * ax.inner,
                  ax.extent * ax.inner * sizeof(double));
    }
    offset += static_cast<std::size_t>(ax.extent);
  }

  bool rg = false;
  if (g)
    for (const Tensor& p : parts) rg = rg || p.requires_grad();
  result.set_requires_grad(rg);
  if (rg) {
    std::vector<Tensor> tp = parts;
    Tensor to = result;
    g->record([tp, to, axis, out_ax]() mutable {
      const double* go = to.grad();
      std::size_t offset = 0;
      for (Tensor& p : tp) {
        const AxisSplit ax = axis_split(p.shape(), axis);
        if (p.requires_grad()) {
          double* gp = p.grad();
          for (std::size_t o = 0; o < ax.outer; ++o) {
            const double* src =
                go + (o * static_cast<std::size_t>(out_ax.extent) + offset) *
                         out_ax.inner;
            double* dst = gp + o * ax.extent * ax.inner;
            for (std::size_t i = 0; i < ax.extent * ax.inner; ++i)
              dst[i] += src[i];
          }
        }
        offset += static_cast<std::size_t>(ax.extent);
      }
    });
  }
  return result;
}

std::vector<Tensor> split(Graph* g, const Tensor& x, int axis,
                          const std::vector<int>& sizes) {
  const AxisSplit ax = axis_split(x.shape(), axis);
  int total = 0;
  for (int s : sizes) {
    if (s <= 0) throw std::invalid_argument("split: non-positive size");
    total += s;
  }
  if (total != ax.extent)
    throw std::invalid_argument("split: sizes do not cover the axis");

  std::vector<Tensor> parts;
  std::size_t offset = 0;
  for (int s : sizes) {
    Shape shape = x.shape();
    shape[static_cast<std::size_t>(axis)] = s;
    Tensor part = Tensor::zeros(shape);
    for (std::size_t o = 0; o < ax.outer; ++o) {
      const double* src =
          x.data() +
          (o * static_cast<std::size_t>(ax.extent) + offset) * ax.inner;
      std::memcpy(part.data() + o * static_cast<std::size_t>(s) * ax.inner,
                  src, static_cast<std::size_t>(s) * ax.inner * sizeof(double));
    }
    part.set_requires_grad(track(g, {&x}));
    if (part.requires_grad()) {
      Tensor tx = x, tp = part;
      const std::size_t off = offset;
      g->record([tx, tp, ax, off, s]() mutable {
        const double* gp = tp.grad();
        double* gx = tx.grad();
        for (std::size_t o = 0; o < ax.outer; ++o) {
          double* dst =
              gx + (o * static_cast<std::size_t>(ax.extent) + off) * ax.inner;
          const double* src = gp + o * static_cast<std::size_t>(s) * ax.inner;
          for (std::size_t i = 0; i < static_cast<std::size_t>(s) * ax.inner;
               ++i)
            dst[i] += src[i];
        }
      });
    }
    parts.push_back(std::move(part));
    offset += static_cast<std::size_t>(s);
  }
  return parts;
}

Tensor reduce(Graph* g, Reduce kind, const Tensor& x, std::vector<int> axes) {
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (int a : axes)
    if (a < 0 || a >= x.rank())
      throw std::invalid_argument("reduce: axis out of range");

  std::vector<bool> reduced(static_cast<std::size_t>(x.rank()), false);
  for (int a : axes) reduced[static_cast<std::size_t>(a)] = true;

  Shape out_shape;
  std::size_t count = 1;
  for (int i = 0; i < x.rank(); ++i) {
    if (reduced[static_cast<std::size_t>(i)])
      count *= static_cast<std::size_t>(x.dim(i));
    else
      out_shape.push_back(x.dim(i));
  }
  if (out_shape.empty()) out_shape = {1};

  // Map each input element to its output slot in one linear sweep.
  const int rank = x.rank();
  std::vector<std::size_t> out_stride(static_cast<std::size_t>(rank), 0);
  {
    std::size_t stride = 1;
    for (int i = rank - 1; i >= 0; --i) {
      if (!reduced[static_cast<std::size_t>(i)]) {
        out_stride[static_cast<std::size_t>(i)] = stride;
        stride *= static_cast<std::size_t>(x.dim(i));
      }
    }
  }

  Tensor result = Tensor::zeros(out_shape);
  double* po = result.data();
  const double* px = x.data();
  std::vector<int> idx(static_cast<std::size_t>(rank), 0);
  std::size_t out_flat = 0;
  for (std::size_t flat = 0; flat < x.size(); ++flat) {
    po[out_flat] += px[flat];
    // odometer increment
    for (int i = rank - 1; i >= 0; --i) {
      auto ui = static_cast<std::size_t>(i);
      ++idx[ui];
      out_flat += out_stride[ui];
      if (idx[ui] < x.dim(i)) break;
      idx[ui] = 0;
      out_flat -= out_stride[ui] * static_cast<std::size_t>(x.dim(i));
    }
  }
  const double inv_count = 1.0 / static_cast<double>(count);
  if (kind == Reduce::kMean)
    for (std::size_t i = 0; i < result.size(); ++i) po[i] *= inv_count;
  check_finite(result, "reduce");

  result.set_requires_grad(track(g, {&x}));
  if (result.requires_grad()) {
    Tensor tx = x, to = result;
    const double w = kind == Reduce::kMean ? inv_count : 1.0;
    g->record([tx, to, out_stride, reduced, rank, w]() mutable {
      const double* go = to.grad();
      double* gx = tx.grad();
      std::vector<int> idx(static_cast<std::size_t>(rank), 0);
      std::size_t out_flat = 0;
      for (std::size_t flat = 0; flat < tx.size(); ++flat) {
        gx[flat] += w * go[out_flat];
        for (int i = rank - 1; i >= 0; --i) {
          auto ui = static_cast<std::size_t>(i);
          ++idx[ui];
          out_flat += out_stride[ui];
          if (idx[ui] < tx.dim(i)) break;
          idx[ui] = 0;
          out_flat -= out_stride[ui] * static_cast<std::size_t>(tx.dim(i));
        }
      }
    });
  }
  return result;
}

Tensor reduce_all(Graph* g, Reduce kind, const Tensor& x) {
  std::vector<int> axes(static_cast<std::size_t>(x.rank()));
  std::iota(axes.begin(), axes.end(), 0);
  return reduce(g, kind, x, std::move(axes));
}

Tensor reshape(Graph* g, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw std::invalid_argument("reshape: element count mismatch " +
                                shape_str(x.shape()) + " -> " +
                                shape_str(shape));
  Tensor result = Tensor::from(std::move(shape), x.values());
  result.set_requires_grad(track(g, {&x}));
  if (result.requires_grad()) {
    Tensor tx = x, to = result;
    g->record([tx, to]() mutable {
      const double* go = to.grad();
      double* gx = tx.grad();
      for (std::size_t i = 0; i < tx.size(); ++i) gx[i] += go[i];
    });
  }
  return result;
}

Tensor permute(Graph* g, const Tensor& x, const std::vector<int>& perm) {
  const int rank = x.rank();
  if (static_cast<int>(perm.size()) != rank)
    throw std::invalid_argument("permute: rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(rank), false);
  for (int p : perm) {
    if (p < 0 || p >= rank || seen[static_cast<std::size_t>(p)])
      throw std::invalid_argument("permute: invalid permutation");
    seen[static_cast<std::size_t>(p)] = true;
  }

  Shape out_shape(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i)
    out_shape[static_cast<std::size_t>(i)] = x.dim(perm[static_cast<std::size_t>(i)]);

  std::vector<std::size_t> in_stride(static_cast<std::size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i)
    in_stride[static_cast<std::size_t>(i)] =
        in_stride[static_cast<std::size_t>(i + 1)] *
        static_cast<std::size_t>(x.dim(i + 1));
  // stride of output axis i in the input buffer
  std::vector<std::size_t> gather_stride(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i)
    gather_stride[static_cast<std::size_t>(i)] =
        in_stride[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];

  Tensor result = Tensor::zeros(out_shape);
  double* po = result.data();
  const double* px = x.data();
  std::vector<int> idx(static_cast<std::size_t>(rank), 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < x.size(); ++flat) {
    po[flat] = px[src];
    for (int i = rank - 1; i >= 0; --i) {
      auto ui = static_cast<std::size_t>(i);
      ++idx[ui];
      src += gather_stride[ui];
      if (idx[ui] < out_shape[ui]) break;
      idx[ui] = 0;
      src -= gather_stride[ui] * static_cast<std::size_t>(out_shape[ui]);
    }
  }

  result.set_requires_grad(track(g, {&x}));
  if (result.requires_grad()) {
    Tensor tx = x, to = result;
    g->record([tx, to, gather_stride, out_shape]() mutable {
      const int rank = to.rank();
      const double* go = to.grad();
      double* gx = tx.grad();
      std::vector<int> idx(static_cast<std::size_t>(rank), 0);
      std::size_t src = 0;
      for (std::size_t flat = 0; flat < to.size(); ++flat) {
        gx[src] += go[flat];
        for (int i = rank - 1; i >= 0; --i) {
          auto ui = static_cast<std::size_t>(i);
          ++idx[ui];
          src += gather_stride[ui];
          if (idx[ui] < out_shape[ui]) break;
          idx[ui] = 0;
          src -= gather_stride[ui] * static_cast<std::size_t>(out_shape[ui]);
        }
      }
    });
  }
  return result;
}

Tensor take_row(Graph* g, const Tensor& x, int row) {
  if (x.rank() != 2) throw std::invalid_argument("take_row expects (M,N)");
  if (row < 0 || row >= x.dim(0))
    throw std::out_of_range("take_row: row out of range");
  const int n = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n));
  std::memcpy(out.data(), x.data() + static_cast<std::size_t>(row) * n,
              static_cast<std::size_t>(n) * sizeof(double));
  Tensor result = Tensor::from({n, 1}, std::move(out));
  result.set_requires_grad(track(g, {&x}));
  if (result.requires_grad()) {
    Tensor tx = x, to = result;
    g->record([tx, to, row, n]() mutable {
      const double* go = to.grad();
      double* gx = tx.grad() + static_cast<std::size_t>(row) * n;
      for (int i = 0; i < n; ++i) gx[i] += go[i];
    });
  }
  return result;
}

Tensor tile_plane(Graph* g, const Tensor& z, int f, int t) {
  if (z.rank() != 1) throw std::invalid_argument("tile_plane expects (d)");
  const int d = z.dim(0);
  const std::size_t plane = static_cast<std::size_t>(f) * t;
  std::vector<double> out(static_cast<std::size_t>(d) * plane);
  const double* pz = z.data();
  for (int c = 0; c < d; ++c)
    std::fill(out.begin() + c * plane, out.begin() + (c + 1) * plane, pz[c]);
  Tensor result = Tensor::from({d, f, t}, std::move(out));
  result.set_requires_grad(track(g, {&z}));
  if (result.requires_grad()) {
    Tensor tz = z, to = result;
    g->record([tz, to, d, plane]() mutable {
      const double* go = to.grad();
      double* gz = tz.grad();
      for (int c = 0; c < d; ++c) {
        const double* src = go + c * plane;
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += src[i];
        gz[c] += acc;
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// GRU

GruOut gru_forward(Graph* g, const GruParams& p,
                   const std::vector<Tensor>& inputs) {
  if (inputs.empty())
    throw std::invalid_argument("gru_forward: empty input sequence");
  const int h = p.hidden();
  GruOut out;
  Tensor state = Tensor::zeros({h, 1});
  for (const Tensor& x : inputs) {
    Tensor zg = sigmoid(
        g, add(g, add(g, matmul(g, p.wz, x), matmul(g, p.uz, state)), p.bz));
    Tensor rg = sigmoid(
        g, add(g, add(g, matmul(g, p.wr, x), matmul(g, p.ur, state)), p.br));
    Tensor reset_state = mul(g, rg, state);
    Tensor cand = tanh_op(
        g,
        add(g, add(g, matmul(g, p.wh, x), matmul(g, p.uh, reset_state)), p.bh));
    Tensor keep = add_scalar(g, neg(g, zg), 1.0);
    state = add(g, mul(g, keep, cand), mul(g, zg, state));
    out.states.push_back(state);
  }
  out.final_state = state;
  return out;
}

// ---------------------------------------------------------------------------
// Adam

namespace {

inline double round_f32(double v) {
  return static_cast<double>(static_cast<float>(v));
}

}  // namespace

void adam_step(Tensor& param, AdamState& state, const AdamHyper& hyper) {
  const std::size_t n = param.size();
  if (state.m.empty()) state.m.assign(n, 0.0);
  if (state.v.empty()) state.v.assign(n, 0.0);
  if (state.m.size() != n || state.v.size() != n)
    throw std::invalid_argument("adam_step: state shape mismatch");
  if (!param.has_grad())
    throw std::invalid_argument("adam_step: parameter has no gradient");

  const double* grad = param.grad();
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(grad[i]))
      throw std::runtime_error("adam_step: non-finite gradient");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  double* pd = param.data();
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grad[i];
    state.v[i] =
        hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    pd[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    // Keep parameters and moments representable in 32 bits so checkpoints
    // round-trip exactly and resume matches an uninterrupted run.
    pd[i] = round_f32(pd[i]);
    state.m[i] = round_f32(state.m[i]);
    state.v[i] = round_f32(state.v[i]);
  }
}

void adam_step(std::vector<Tensor>& params, std::vector<AdamState>& states,
               const AdamHyper& hyper) {
  if (params.size() != states.size())
    throw std::invalid_argument("adam_step: params/state count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    adam_step(params[i], states[i], hyper);
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckReport gradient_check(
    const std::function<Tensor(Graph&, std::vector<Tensor>&)>& f,
    std::vector<Tensor> inputs, double tol, long max_probes,
    uint64_t probe_seed) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Graph g;
  Tensor out = f(g, inputs);
  if (out.size() != 1)
    throw std::invalid_argument("gradient_check: closure must return a scalar");
  g.backward(out);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor& t : inputs) analytic.push_back(t.grad_values());

  // FD passes run without recording.
  for (Tensor& t : inputs) t.set_requires_grad(false);

  auto eval = [&]() {
    Graph dummy;
    return f(dummy, inputs).value();
  };

  GradCheckReport report;
  report.max_rel_err = 0.0;
  Rng rng(probe_seed);
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    std::vector<std::size_t> probes;
    if (max_probes < 0 ||
        static_cast<std::size_t>(max_probes) >= t.size()) {
      probes.resize(t.size());
      std::iota(probes.begin(), probes.end(), std::size_t{0});
    } else {
      for (long i = 0; i < max_probes; ++i)
        probes.push_back(rng.uniform_int(t.size()));
    }
    for (std::size_t j : probes) {
      double* slot = t.data() + j;
      const double saved = *slot;
      const double h = 1e-5 * std::max(1.0, std::fabs(saved));
      *slot = saved + h;
      const double fp = eval();
      *slot = saved - h;
      const double fm = eval();
      *slot = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[ti][j];
      const double denom =
          std::max({std::fabs(an), std::fabs(fd), 1e-6});
      const double rel = std::fabs(an - fd) / denom;
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst =
            "input " + std::to_string(ti) + ", flat " + std::to_string(j);
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace qsep
