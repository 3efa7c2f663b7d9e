#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "nner/common.hpp"

namespace nner {

// Dense row-major tensor with an optional gradient buffer. Copies are
// shallow (shared storage); ops allocate fresh outputs. `node` is the index
// of the producing op on the current graph's tape, -1 for leaves.
template <class Real>
class Tensor {
 public:
  struct Data {
    Shape shape;
    std::vector<Real> values;
    std::vector<Real> grad;  // empty until materialized by backward
    bool requires_grad = false;
    int64_t node = -1;
  };

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.d_ = std::make_shared<Data>();
    int64_t n = count(shape);
    t.d_->shape = std::move(shape);
    t.d_->values.assign(static_cast<size_t>(n), Real(0));
    return t;
  }

  static Tensor from(Shape shape, std::vector<Real> values) {
    int64_t n = count(shape);
    if (n != static_cast<int64_t>(values.size())) {
      throw DimensionError(str("tensor: shape ", shape_str(shape), " needs ", n,
                               " values, got ", values.size()));
    }
    Tensor t;
    t.d_ = std::make_shared<Data>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    return t;
  }

  static Tensor scalar(Real v) { return from({1}, {v}); }

  // Leaf that participates in backward.
  static Tensor param(Shape shape) {
    Tensor t = zeros(std::move(shape));
    t.d_->requires_grad = true;
    return t;
  }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int64_t rank() const { return static_cast<int64_t>(d_->shape.size()); }
  int64_t dim(int64_t i) const { return d_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(d_->values.size()); }

  // Copies are shallow handles; const on the handle does not freeze the
  // shared payload.
  Real* data() const { return d_->values.data(); }
  std::vector<Real>& values() const { return d_->values; }

  Real item() const {
    if (numel() != 1) throw ContractError(str("item(): tensor has ", numel(), " elements"));
    return d_->values[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool b) const { d_->requires_grad = b; }
  int64_t node() const { return d_->node; }

  bool has_grad() const { return !d_->grad.empty(); }
  std::vector<Real>& grad() const {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), Real(0));
    return d_->grad;
  }
  void zero_grad() const { d_->grad.clear(); }

  Data* raw() const { return d_.get(); }

 private:
  static int64_t count(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) {
      if (e < 0) throw DimensionError(str("tensor: negative extent in ", shape_str(s)));
      n *= e;
    }
    return n;
  }

  std::shared_ptr<Data> d_;
};

// Validity mask over a padded batch of square grids. valid(b,i,j) is true
// iff both indices fall inside sentence b. Symmetric by construction.
struct Mask {
  int64_t batch = 0;
  int64_t n = 0;
  std::vector<uint8_t> v;  // batch*n*n

  static Mask full(int64_t batch, int64_t n) {
    Mask m;
    m.batch = batch;
    m.n = n;
    m.v.assign(static_cast<size_t>(batch * n * n), 1);
    return m;
  }

  static Mask from_lengths(int64_t n, const std::vector<int64_t>& lens) {
    Mask m;
    m.batch = static_cast<int64_t>(lens.size());
    m.n = n;
    m.v.assign(static_cast<size_t>(m.batch * n * n), 0);
    for (int64_t b = 0; b < m.batch; ++b) {
      const int64_t len = lens[static_cast<size_t>(b)];
      for (int64_t i = 0; i < len; ++i)
        for (int64_t j = 0; j < len; ++j) m.v[static_cast<size_t>((b * n + i) * n + j)] = 1;
    }
    return m;
  }

  bool at(int64_t b, int64_t i, int64_t j) const {
    return v[static_cast<size_t>((b * n + i) * n + j)] != 0;
  }
  const uint8_t* row(int64_t b, int64_t i) const { return v.data() + (b * n + i) * n; }
};

// Eagerly recorded tape. One graph per forward pass; backward walks the
// tape in exact reverse and then clears it. Pass a null graph to run ops
// in inference mode (no recording, no gradient work).
template <class Real>
class Graph {
 public:
  template <class F>
  void record(const Tensor<Real>& out, F bw) {
    out.raw()->node = static_cast<int64_t>(tape_.size());
    tape_.push_back(std::make_unique<Step<F>>(std::move(bw)));
  }

  // Seeds d(loss)/d(loss) = 1 and propagates through the tape in reverse.
  // Throws ContractError if loss is not scalar.
  void backward(Tensor<Real>& loss) {
    if (loss.numel() != 1) {
      throw ContractError(
          str("backward: loss must be scalar, got shape ", shape_str(loss.shape())));
    }
    loss.grad()[0] = Real(1);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)->run();
    tape_.clear();
  }

  size_t size() const { return tape_.size(); }

 private:
  struct StepBase {
    virtual ~StepBase() = default;
    virtual void run() = 0;
  };
  template <class F>
  struct Step final : StepBase {
    explicit Step(F f) : fn(std::move(f)) {}
    void run() override { fn(); }
    F fn;
  };

  std::vector<std::unique_ptr<StepBase>> tape_;
};

// True when backward must push gradients into t: either a trainable leaf or
// an intermediate produced on the active tape.
template <class Real>
bool needs_grad(const Tensor<Real>& t) {
  return t.requires_grad() || t.node() >= 0;
}

enum class Act { LeakyRelu, Gelu, Sigmoid };

using Groups = std::vector<std::pair<int64_t, int64_t>>;  // [begin, end) ranges

// ------------------------------------------------------------------ ops
//
// All ops are pure given their inputs, use fixed-order reductions, and are
// differentiable through the recorded graph unless noted.

// a: [..., k] times b: [k, p] -> [..., p]; leading dims of a are batch.
template <class Real>
Tensor<Real> matmul(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& b);

// a: [..., k] times b: [p, k] transposed -> [..., p].
template <class Real>
Tensor<Real> matmul_nt(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> add(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> activation(Graph<Real>* g, const Tensor<Real>& x, Act kind, Real slope = Real(0.01));

// Normalizes over the last dimension: (x - mean) / sqrt(var + eps) * gamma + beta.
template <class Real>
Tensor<Real> layer_norm_feature(Graph<Real>* g, const Tensor<Real>& x, const Tensor<Real>& gamma,
                                const Tensor<Real>& beta, Real eps);

// 2-D convolution over padded square grids, channels last, bias-free.
// x: [batch,n,n,cin] (or [n,n,cin]), kernels: [k,k,cin,cout], k odd.
// Out-of-grid and mask-false cells read as exact zero; mask-false output
// cells are exact zero.
template <class Real>
Tensor<Real> conv2d_zero_pad(Graph<Real>* g, const Tensor<Real>& x, const Tensor<Real>& kernels,
                             const Mask& mask);

// 1-D convolution over the token axis, zero-padded ends, bias-free.
// x: [n,d], kernels: [k,din,dout], k odd.
template <class Real>
Tensor<Real> conv1d_tokens(Graph<Real>* g, const Tensor<Real>& x, const Tensor<Real>& kernels);

// Row-wise max over contiguous groups that partition [0, p).
template <class Real>
Tensor<Real> piecewise_max_pool(Graph<Real>* g, const Tensor<Real>& x, const Groups& groups);

template <class Real>
Tensor<Real> embedding_lookup(Graph<Real>* g, const Tensor<Real>& table,
                              const std::vector<int64_t>& ids);

// Rows [start, start+len) of a matrix, as a copy that routes gradients back.
template <class Real>
Tensor<Real> slice_rows(Graph<Real>* g, const Tensor<Real>& x, int64_t start, int64_t len);

// Stacks per-sentence [n_i, d] matrices into [batch, n, d] with zero padding.
template <class Real>
Tensor<Real> pad_stack(Graph<Real>* g, const std::vector<Tensor<Real>>& rows, int64_t n);

// grid[b,i,j,:] = a[b,i,:] + bcols[b,j,:] + offs[clamp(i-j,-L,L)+L,:].
// a, bcols: [batch,n,r]; offs: [2L+1,r] -> [batch,n,n,r].
template <class Real>
Tensor<Real> grid_from_rows(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& bcols,
                            const Tensor<Real>& offs, int64_t max_offset);

// Multi-head bilinear span scores.
// hs, he: [batch,n,h]; u: [heads, h/heads, r/heads, h/heads] -> [batch,n,n,r];
// out[b,i,j, k*rk+f] = sum_{s,t} hs[b,i,k*hk+s] * u[k,s,f,t] * he[b,j,k*hk+t].
template <class Real>
Tensor<Real> mh_bilinear_grid(Graph<Real>* g, const Tensor<Real>& hs, const Tensor<Real>& he,
                              const Tensor<Real>& u);

// Zeroes every mask-false cell. x: [batch,n,n,c].
template <class Real>
Tensor<Real> apply_mask(Graph<Real>* g, const Tensor<Real>& x, const Mask& mask);

// y[..., t] = x[..., t] + bias[t].
template <class Real>
Tensor<Real> bias_add_last(Graph<Real>* g, const Tensor<Real>& x, const Tensor<Real>& bias);

// sum_i w[i] * x[i] as a scalar tensor.
template <class Real>
Tensor<Real> weighted_sum(Graph<Real>* g, const Tensor<Real>& x, const std::vector<Real>& w);

// Inverted dropout; active only when rate > 0. Draws are consumed from rng
// in flat index order.
template <class Real>
Tensor<Real> dropout(Graph<Real>* g, const Tensor<Real>& x, Real rate, Rng& rng);

// Mean binary cross entropy over valid (i,j,t) cells of a padded batch.
// p, y: [batch,n,n,t]; y must be 0/1 and symmetric in (i,j) over valid cells.
// Terms are paired as min+max over (i,j)/(j,i) so the result is exactly
// invariant under transposing p.
template <class Real>
Tensor<Real> bce_mean_masked(Graph<Real>* g, const Tensor<Real>& p, const Tensor<Real>& y,
                             const Mask& mask);

// Same loss computed from logits (softplus form); equal to
// bce_mean_masked(sigmoid(z), y) in exact arithmetic, stable in float.
template <class Real>
Tensor<Real> bce_logits_mean_masked(Graph<Real>* g, const Tensor<Real>& z, const Tensor<Real>& y,
                                    const Mask& mask);

}  // namespace nner
