#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "qsep/rng.hpp"

namespace qsep {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Value-like handle to a shared buffer of 64-bit floats plus an optional
// gradient buffer of the same shape. Copies alias the same storage, which
// is what the tape relies on: a recorded node holds handles, and gradient
// accumulation through any alias lands in the one buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);
  // Entries ~ N(0, stddev^2).
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return static_cast<bool>(st_); }
  const Shape& shape() const;
  int rank() const;
  int dim(int i) const;
  std::size_t size() const;

  double* data();
  const double* data() const;
  std::vector<double>& values();
  const std::vector<double>& values() const;

  // Value of a single-element tensor.
  double value() const;
  double at(std::initializer_list<int> idx) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  // Allocates (zeroed) on first use.
  double* grad();
  const double* grad_data() const;
  std::vector<double>& grad_values();
  void zero_grad();
  void drop_grad();

  // Identity of the underlying buffer, for maps keyed by parameter.
  const void* id() const;

  bool same_storage(const Tensor& other) const;

 private:
  struct State;
  std::shared_ptr<State> st_;
  explicit Tensor(std::shared_ptr<State> st) : st_(std::move(st)) {}
};

// Reverse-mode tape. Ops append one closure per recorded node, in
// execution order; backward() replays them once, in reverse. A Graph is
// confined to the thread that records it.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  void record(std::function<void()> backward_step);
  std::size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and visits every node in reverse recording
  // order. `loss` must be a single-element tensor.
  void backward(Tensor& loss);

 private:
  std::vector<std::function<void()>> nodes_;
};

// ---------------------------------------------------------------------------
// Elementwise operations. `g` may be nullptr for pure inference; gradient
// rules are registered only when a graph is supplied and an input requires
// grad. Every forward op checks its output for NaN/Inf and throws instead
// of propagating.

enum class Ew { kAdd, kSub, kMul, kScale, kRelu, kSigmoid, kExp, kLog, kNeg, kAbs };

// Kind-dispatched core. Binary kinds take `b`; kScale takes `c`.
Tensor elementwise(Graph* g, Ew kind, const Tensor& a,
                   const Tensor* b = nullptr, double c = 0.0);

Tensor add(Graph* g, const Tensor& a, const Tensor& b);
Tensor add_scalar(Graph* g, const Tensor& a, double c);
Tensor sub(Graph* g, const Tensor& a, const Tensor& b);
Tensor mul(Graph* g, const Tensor& a, const Tensor& b);
Tensor scale(Graph* g, const Tensor& a, double c);
Tensor relu(Graph* g, const Tensor& a);
Tensor leaky_relu(Graph* g, const Tensor& a, double slope);
Tensor sigmoid(Graph* g, const Tensor& a);
Tensor exp_op(Graph* g, const Tensor& a);
Tensor log_op(Graph* g, const Tensor& a);
Tensor neg(Graph* g, const Tensor& a);
Tensor abs_op(Graph* g, const Tensor& a);
Tensor tanh_op(Graph* g, const Tensor& a);
// Pass-through gradient inside [lo, hi], zero outside.
Tensor clamp(Graph* g, const Tensor& a, double lo, double hi);

// ---------------------------------------------------------------------------
// Linear algebra and structure ops.

// (M x K) . (K x N) -> (M x N).
Tensor matmul(Graph* g, const Tensor& a, const Tensor& b);

struct ConvSpec {
  int stride_f = 1;
  int stride_t = 1;
  int pad_f_lo = 0, pad_f_hi = 0;
  int pad_t_lo = 0, pad_t_hi = 0;
};

// "Same"-style padding for kernel k and stride s so that the output extent
// is ceil(extent / s); the extra pad cell of an odd total goes high.
ConvSpec conv_same_spec(int kf, int kt, int sf, int st, int f, int t);

int conv_out_extent(int extent, int kernel, int stride, int pad_lo, int pad_hi);

// Cross-correlation (no kernel flip). input (Cin, F, T), kernel
// (Cout, Cin, kf, kt) -> (Cout, F', T').
Tensor conv2d(Graph* g, const Tensor& input, const Tensor& kernel,
              const ConvSpec& spec);

// Adjoint of conv2d: maps (Cin, F', T') back to (Cout', F, T) where the
// matching forward conv with `spec` and kernel (Cin, Cout', kf, kt) maps
// (Cout', F, T) -> (Cin, F', T'). The output extent is declared explicitly
// because stride makes inference ambiguous.
Tensor conv2d_transpose(Graph* g, const Tensor& input, const Tensor& kernel,
                        const ConvSpec& spec, int out_f, int out_t);

// x (C, F, T) + b (C), broadcast over the plane.
Tensor bias_add(Graph* g, const Tensor& x, const Tensor& b);

// Per-channel (x - mean) / sqrt(var + eps), statistics over each channel's
// F x T plane.
Tensor instance_norm(Graph* g, const Tensor& x, double eps);

// ys[c] * instance_norm(x)[c] + yb[c].
Tensor adain(Graph* g, const Tensor& x, const Tensor& ys, const Tensor& yb,
             double eps);

Tensor concat(Graph* g, const std::vector<Tensor>& parts, int axis);
std::vector<Tensor> split(Graph* g, const Tensor& x, int axis,
                          const std::vector<int>& sizes);

enum class Reduce { kSum, kMean };
// Reduces over `axes` (removed from the shape; full reduction yields {1}).
Tensor reduce(Graph* g, Reduce kind, const Tensor& x, std::vector<int> axes);
Tensor reduce_all(Graph* g, Reduce kind, const Tensor& x);

// Row-major relabeling; element count must match.
Tensor reshape(Graph* g, const Tensor& x, Shape shape);
// out[i0,..] = x[i_perm[0],..]; perm is the source axis for each output axis.
Tensor permute(Graph* g, const Tensor& x, const std::vector<int>& perm);
// x (M, N) -> row i as (N, 1).
Tensor take_row(Graph* g, const Tensor& x, int row);
// z (d) -> (d, F, T) with every plane constant.
Tensor tile_plane(Graph* g, const Tensor& z, int f, int t);

// ---------------------------------------------------------------------------
// GRU. Weights W* act on the input, U* on the state; the reset gate is
// applied to the previous state before the recurrent matmul.

struct GruParams {
  Tensor wz, wr, wh;  // (H, D)
  Tensor uz, ur, uh;  // (H, H)
  Tensor bz, br, bh;  // (H, 1)
  int hidden() const { return wz.dim(0); }
};

struct GruOut {
  std::vector<Tensor> states;  // one (H, 1) per input step
  Tensor final_state;
};

// inputs: non-empty sequence of (D, 1) columns; initial state is zero.
GruOut gru_forward(Graph* g, const GruParams& p,
                   const std::vector<Tensor>& inputs);

// ---------------------------------------------------------------------------
// Adam.

struct AdamState {
  std::vector<double> m, v;
  int64_t t = 0;
};

struct AdamHyper {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected update of `param` from its accumulated gradient.
// Throws on non-finite gradients. After the update both the parameter and
// the moments are rounded to the nearest 32-bit float so that checkpoint
// round trips are exact and resumed runs match uninterrupted ones.
void adam_step(Tensor& param, AdamState& state, const AdamHyper& hyper);
void adam_step(std::vector<Tensor>& params, std::vector<AdamState>& states,
               const AdamHyper& hyper);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  bool pass = false;
  std::string worst;  // "input i, flat j" for the worst entry
};

// `f` must be pure in `inputs` and return a single-element tensor. Analytic
// gradients come from one taped run; each probed entry is then perturbed by
// +-h with h = 1e-5 * max(1, |x|) and compared against the central
// difference. With max_probes >= 0 a deterministic subset of entries is
// probed per input; -1 probes everything.
GradCheckReport gradient_check(
    const std::function<Tensor(Graph&, std::vector<Tensor>&)>& f,
    std::vector<Tensor> inputs, double tol, long max_probes = -1,
    uint64_t probe_seed = 0x9c0ffee);

// ---------------------------------------------------------------------------
// Misc.

void check_finite(const Tensor& t, const char* op_name);
double dot(const Tensor& a, const Tensor& b);

}  // namespace qsep
