#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedssc/rng.hpp"

namespace fedssc {

// Row-major dense matrix. Batches are stored one sample per row; conv/pool
// feature maps are flattened channel-major into the row.
template <class S>
struct MatT {
  std::size_t rows = 0, cols = 0;
  std::vector<S> v;

  MatT() = default;
  MatT(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, S(0)) {}

  S* row(std::size_t r) { return v.data() + r * cols; }
  const S* row(std::size_t r) const { return v.data() + r * cols; }
  std::span<const S> row_span(std::size_t r) const { return {row(r), cols}; }
  S& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  S at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

using Matrix = MatT<float>;

template <class S>
struct ParamArrayT {
  std::string name;
  std::vector<S> values;
};

// Ordered, named parameter arrays plus a fingerprint of the architecture they
// belong to. Weights, gradients and optimizer velocity all share this layout.
template <class S>
struct ParamSetT {
  std::uint64_t fingerprint = 0;
  std::vector<ParamArrayT<S>> arrays;

  std::size_t total_params() const {
    std::size_t n = 0;
    for (const auto& a : arrays) n += a.values.size();
    return n;
  }
  bool congruent_with(const ParamSetT& o) const {
    if (fingerprint != o.fingerprint || arrays.size() != o.arrays.size()) return false;
    for (std::size_t i = 0; i < arrays.size(); ++i)
      if (arrays[i].values.size() != o.arrays[i].values.size()) return false;
    return true;
  }
  bool all_finite() const {
    for (const auto& a : arrays)
      for (S x : a.values)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

using ModelWeights = ParamSetT<float>;
using Gradients = ParamSetT<float>;

struct ConvSpec {
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int pool = 0;  // max-pool window after the conv (stride = window); 0 = none
};

// Encoder (convs + fully-connected) -> projection head -> linear classifier.
// The projection output z is the representation both contrastive terms act on.
struct ModelArchitecture {
  int in_channels = 0, in_height = 0, in_width = 0;
  std::vector<ConvSpec> convs;
  std::vector<int> fc_widths;    // encoder fully-connected widths
  std::vector<int> proj_widths;  // projection head; last entry is the z dimension
  int num_classes = 0;

  int input_dim() const { return in_channels * in_height * in_width; }
  int projection_dim() const { return proj_widths.empty() ? 0 : proj_widths.back(); }

  std::string describe() const;
  std::uint64_t fingerprint() const { return fnv1a(describe()); }

  // Two conv + two pool + two fully-connected encoder layers, 256-d projection
  // head, linear classifier on top of the projection.
  static ModelArchitecture cifar_cnn(int num_classes = 10);
  static ModelArchitecture small_mlp(int input_dim, int num_classes);
};

enum class LayerOp { kConv, kPool, kDense };

struct LayerPlan {
  LayerOp op = LayerOp::kDense;
  std::string name;
  bool relu = false;
  // conv / pool geometry
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, out_h = 0, out_w = 0;
  int kernel = 0, stride = 1;
  // dense geometry
  int in_dim = 0, out_dim = 0;
  // parameter array indices (-1 for pool layers)
  int weight_idx = -1, bias_idx = -1;
};

template <class S>
struct TraceT {
  std::uint64_t fingerprint = 0;
  std::size_t batch = 0;
  MatT<S> input;
  std::vector<MatT<S>> acts;                // acts[i] = output of layer i (post-ReLU)
  std::vector<std::vector<int>> pool_src;   // per layer: argmax source index per output cell
  MatT<S> logits;                           // batch x C
  MatT<S> z;                                // batch x projection_dim
  // Distance to the nearest non-differentiable point: min |ReLU pre-act| and
  // min pool winner/runner-up gap. Finite-difference probes need this to
  // exceed the step size; irrelevant to training.
  double kink_margin = std::numeric_limits<double>::infinity();
};

using ForwardTrace = TraceT<float>;

namespace detail {

template <class S>
void dense_forward(const LayerPlan& L, const std::vector<S>& W, const std::vector<S>& b,
                   const MatT<S>& in, MatT<S>& out) {
  for (std::size_t r = 0; r < in.rows; ++r) {
    const S* x = in.row(r);
    S* y = out.row(r);
    for (int o = 0; o < L.out_dim; ++o) {
      const S* wrow = W.data() + static_cast<std::size_t>(o) * L.in_dim;
      S acc = b[o];
      for (int i = 0; i < L.in_dim; ++i) acc += wrow[i] * x[i];
      y[o] = acc;
    }
  }
}

template <class S>
void conv_forward(const LayerPlan& L, const std::vector<S>& W, const std::vector<S>& b,
                  const MatT<S>& in, MatT<S>& out) {
  const int ihw = L.in_h * L.in_w;
  const int ohw = L.out_h * L.out_w;
  const int ksq = L.kernel * L.kernel;
  for (std::size_t r = 0; r < in.rows; ++r) {
    const S* x = in.row(r);
    S* y = out.row(r);
    for (int oc = 0; oc < L.out_c; ++oc) {
      const S* wc = W.data() + static_cast<std::size_t>(oc) * L.in_c * ksq;
      S* yc = y + oc * ohw;
      for (int oy = 0; oy < L.out_h; ++oy) {
        for (int ox = 0; ox < L.out_w; ++ox) {
          S acc = b[oc];
          const int iy0 = oy * L.stride, ix0 = ox * L.stride;
          for (int ic = 0; ic < L.in_c; ++ic) {
            const S* xc = x + ic * ihw;
            const S* wk = wc + ic * ksq;
            for (int ky = 0; ky < L.kernel; ++ky) {
              const S* xrow = xc + (iy0 + ky) * L.in_w + ix0;
              const S* wrow = wk + ky * L.kernel;
              for (int kx = 0; kx < L.kernel; ++kx) acc += wrow[kx] * xrow[kx];
            }
          }
          yc[oy * L.out_w + ox] = acc;
        }
      }
    }
  }
}

template <class S>
void pool_forward(const LayerPlan& L, const MatT<S>& in, MatT<S>& out, std::vector<int>& src,
                  double& kink_margin) {
  const int ihw = L.in_h * L.in_w;
  const int ohw = L.out_h * L.out_w;
  src.assign(in.rows * static_cast<std::size_t>(L.out_c) * ohw, -1);
  for (std::size_t r = 0; r < in.rows; ++r) {
    const S* x = in.row(r);
    S* y = out.row(r);
    int* sp = src.data() + r * static_cast<std::size_t>(L.out_c) * ohw;
    for (int c = 0; c < L.out_c; ++c) {
      const S* xc = x + c * ihw;
      for (int oy = 0; oy < L.out_h; ++oy) {
        for (int ox = 0; ox < L.out_w; ++ox) {
          int best = (oy * L.stride) * L.in_w + ox * L.stride;
          S best_v = xc[best];
          S second_v = std::numeric_limits<S>::lowest();
          for (int ky = 0; ky < L.kernel; ++ky) {
            for (int kx = 0; kx < L.kernel; ++kx) {
              int idx = (oy * L.stride + ky) * L.in_w + (ox * L.stride + kx);
              if (xc[idx] > best_v) {  // first max wins on ties
                second_v = best_v;
                best_v = xc[idx];
                best = idx;
              } else if (idx != best && xc[idx] > second_v) {
                second_v = xc[idx];
              }
            }
          }
          if (second_v > std::numeric_limits<S>::lowest())
            kink_margin = std::min(kink_margin, static_cast<double>(best_v - second_v));
          y[c * ohw + oy * L.out_w + ox] = best_v;
          sp[c * ohw + oy * L.out_w + ox] = c * ihw + best;
        }
      }
    }
  }
}

}  // namespace detail

// Feed-forward network compiled from a ModelArchitecture. Pure const methods;
// instances are safe to share across threads.
template <class S>
class NetT {
 public:
  explicit NetT(ModelArchitecture arch) : arch_(std::move(arch)) { compile(); }

  const ModelArchitecture& arch() const { return arch_; }
  const std::vector<LayerPlan>& plan() const { return plan_; }
  std::uint64_t fingerprint() const { return fp_; }

  ParamSetT<S> zeros_like() const {
    ParamSetT<S> p;
    p.fingerprint = fp_;
    p.arrays.reserve(array_shapes_.size());
    for (const auto& [name, n, fan_in] : array_shapes_)
      p.arrays.push_back({name, std::vector<S>(n, S(0))});
    return p;
  }

  // Fan-in scaled uniform weights (+-1/sqrt(fan_in)), zero biases.
  ParamSetT<S> init(std::uint64_t seed) const {
    ParamSetT<S> p = zeros_like();
    auto eng = make_engine(mix_seed_tag(seed, "model-init", fp_));
    for (std::size_t a = 0; a < p.arrays.size(); ++a) {
      const auto& [name, n, fan_in] = array_shapes_[a];
      if (fan_in == 0) continue;  // bias arrays stay zero
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& x : p.arrays[a].values)
        x = static_cast<S>((2.0 * uniform01(eng) - 1.0) * bound);
    }
    return p;
  }

  TraceT<S> forward(const ParamSetT<S>& w, const MatT<S>& batch) const {
    check_params(w);
    if (batch.cols != static_cast<std::size_t>(arch_.input_dim()))
      throw std::invalid_argument("forward: input dim mismatch, expected " +
                                  std::to_string(arch_.input_dim()) + " got " +
                                  std::to_string(batch.cols));
    TraceT<S> tr;
    tr.fingerprint = fp_;
    tr.batch = batch.rows;
    tr.input = batch;
    tr.acts.resize(plan_.size());
    tr.pool_src.resize(plan_.size());
    const MatT<S>* cur = &tr.input;
    for (std::size_t i = 0; i < plan_.size(); ++i) {
      const LayerPlan& L = plan_[i];
      MatT<S>& out = tr.acts[i];
      out = MatT<S>(batch.rows, layer_out_size(L));
      switch (L.op) {
        case LayerOp::kDense:
          detail::dense_forward(L, w.arrays[L.weight_idx].values, w.arrays[L.bias_idx].values,
                                *cur, out);
          break;
        case LayerOp::kConv:
          detail::conv_forward(L, w.arrays[L.weight_idx].values, w.arrays[L.bias_idx].values,
                               *cur, out);
          break;
        case LayerOp::kPool:
          detail::pool_forward(L, *cur, out, tr.pool_src[i], tr.kink_margin);
          break;
      }
      if (L.relu) {
        for (const auto& x : out.v)
          tr.kink_margin = std::min(tr.kink_margin, std::fabs(static_cast<double>(x)));
        for (auto& x : out.v) x = x > S(0) ? x : S(0);
      }
      cur = &out;
    }
    tr.logits = tr.acts.back();
    tr.z = tr.acts[z_layer_];
    return tr;
  }

  // Exact reverse-mode gradients. Accepts simultaneous upstream contributions
  // into the logits and into z; either may be empty (treated as zero).
  ParamSetT<S> backward(const TraceT<S>& tr, const ParamSetT<S>& w, const MatT<S>& dlogits,
                        const MatT<S>& dz) const {
    check_params(w);
    if (tr.fingerprint != fp_)
      throw std::invalid_argument("backward: trace does not match this architecture");
    if (dlogits.rows != tr.batch || dlogits.cols != static_cast<std::size_t>(arch_.num_classes))
      throw std::invalid_argument("backward: dlogits shape mismatch");
    if (dz.rows != 0 && (dz.rows != tr.batch ||
                         dz.cols != static_cast<std::size_t>(arch_.projection_dim())))
      throw std::invalid_argument("backward: dz shape mismatch");

    ParamSetT<S> g = zeros_like();
    MatT<S> grad = dlogits;
    for (int i = static_cast<int>(plan_.size()) - 1; i >= 0; --i) {
      const LayerPlan& L = plan_[i];
      const MatT<S>& out = tr.acts[i];
      if (i == z_layer_ && dz.rows != 0)
        for (std::size_t k = 0; k < grad.v.size(); ++k) grad.v[k] += dz.v[k];
      if (L.relu)
        for (std::size_t k = 0; k < grad.v.size(); ++k)
          if (out.v[k] <= S(0)) grad.v[k] = S(0);
      const MatT<S>& in = (i == 0) ? tr.input : tr.acts[i - 1];
      MatT<S> din(in.rows, in.cols);
      switch (L.op) {
        case LayerOp::kDense:
          dense_backward(L, w.arrays[L.weight_idx].values, in, grad,
                         g.arrays[L.weight_idx].values, g.arrays[L.bias_idx].values, din);
          break;
        case LayerOp::kConv:
          conv_backward(L, w.arrays[L.weight_idx].values, in, grad,
                        g.arrays[L.weight_idx].values, g.arrays[L.bias_idx].values, din);
          break;
        case LayerOp::kPool: {
          const auto& src = tr.pool_src[i];
          const std::size_t per = grad.cols;
          for (std::size_t r = 0; r < grad.rows; ++r) {
            const S* gp = grad.row(r);
            S* dp = din.row(r);
            const int* sp = src.data() + r * per;
            for (std::size_t k = 0; k < per; ++k) dp[sp[k]] += gp[k];
          }
          break;
        }
      }
      grad = std::move(din);
    }
    return g;
  }

 private:
  ModelArchitecture arch_;
  std::vector<LayerPlan> plan_;
  std::vector<std::tuple<std::string, std::size_t, int>> array_shapes_;  // name, size, fan_in
  int z_layer_ = -1;
  std::uint64_t fp_ = 0;

  static std::size_t layer_out_size(const LayerPlan& L) {
    return L.op == LayerOp::kDense ? static_cast<std::size_t>(L.out_dim)
                                   : static_cast<std::size_t>(L.out_c) * L.out_h * L.out_w;
  }

  void check_params(const ParamSetT<S>& w) const {
    if (w.fingerprint != fp_)
      throw std::invalid_argument("weights fingerprint does not match network architecture");
    if (w.arrays.size() != array_shapes_.size())
      throw std::invalid_argument("weights array count mismatch");
    for (std::size_t i = 0; i < w.arrays.size(); ++i)
      if (w.arrays[i].values.size() != std::get<1>(array_shapes_[i]))
        throw std::invalid_argument("weights array size mismatch at " + w.arrays[i].name);
  }

  int add_param(const std::string& name, std::size_t n, int fan_in) {
    array_shapes_.emplace_back(name, n, fan_in);
    return static_cast<int>(array_shapes_.size()) - 1;
  }

  void compile() {
    const ModelArchitecture& a = arch_;
    if (a.in_channels <= 0 || a.in_height <= 0 || a.in_width <= 0)
      throw std::invalid_argument("architecture: input shape must be positive");
    if (a.num_classes < 2) throw std::invalid_argument("architecture: need at least 2 classes");
    if (a.proj_widths.empty() || a.proj_widths.back() <= 0)
      throw std::invalid_argument("architecture: projection head output dim must be > 0");

    int c = a.in_channels, h = a.in_height, w = a.in_width;
    int layer_index = 0;
    for (std::size_t i = 0; i < a.convs.size(); ++i) {
      const ConvSpec& cs = a.convs[i];
      LayerPlan L;
      L.op = LayerOp::kConv;
      L.name = "conv" + std::to_string(i + 1);
      L.relu = true;
      L.in_c = c; L.in_h = h; L.in_w = w;
      L.kernel = cs.kernel; L.stride = cs.stride;
      L.out_c = cs.out_channels;
      if (cs.kernel <= 0 || cs.stride <= 0 || cs.out_channels <= 0 || cs.kernel > h || cs.kernel > w)
        throw std::invalid_argument("architecture: bad conv spec at layer " +
                                    std::to_string(layer_index));
      L.out_h = (h - cs.kernel) / cs.stride + 1;
      L.out_w = (w - cs.kernel) / cs.stride + 1;
      L.weight_idx = add_param(L.name + ".weight",
                               static_cast<std::size_t>(L.out_c) * c * cs.kernel * cs.kernel,
                               c * cs.kernel * cs.kernel);
      L.bias_idx = add_param(L.name + ".bias", static_cast<std::size_t>(L.out_c), 0);
      plan_.push_back(L);
      c = L.out_c; h = L.out_h; w = L.out_w;
      ++layer_index;
      if (cs.pool > 0) {
        LayerPlan P;
        P.op = LayerOp::kPool;
        P.name = "pool" + std::to_string(i + 1);
        P.in_c = c; P.in_h = h; P.in_w = w;
        P.out_c = c;
        P.kernel = cs.pool; P.stride = cs.pool;
        if (cs.pool > h || cs.pool > w)
          throw std::invalid_argument("architecture: pool window exceeds input at layer " +
                                      std::to_string(layer_index));
        P.out_h = h / cs.pool;
        P.out_w = w / cs.pool;
        plan_.push_back(P);
        h = P.out_h; w = P.out_w;
        ++layer_index;
      }
    }
    int dim = c * h * w;
    auto add_dense = [&](const std::string& name, int out_dim, bool relu) {
      if (out_dim <= 0)
        throw std::invalid_argument("architecture: non-positive width at layer " +
                                    std::to_string(layer_index));
      LayerPlan L;
      L.op = LayerOp::kDense;
      L.name = name;
      L.relu = relu;
      L.in_dim = dim;
      L.out_dim = out_dim;
      L.weight_idx = add_param(name + ".weight",
                               static_cast<std::size_t>(out_dim) * dim, dim);
      L.bias_idx = add_param(name + ".bias", static_cast<std::size_t>(out_dim), 0);
      plan_.push_back(L);
      dim = out_dim;
      ++layer_index;
    };
    for (std::size_t i = 0; i < a.fc_widths.size(); ++i)
      add_dense("fc" + std::to_string(i + 1), a.fc_widths[i], true);
    for (std::size_t i = 0; i < a.proj_widths.size(); ++i)
      add_dense("proj" + std::to_string(i + 1), a.proj_widths[i],
                i + 1 < a.proj_widths.size());  // no ReLU on the projection output
    z_layer_ = static_cast<int>(plan_.size()) - 1;
    add_dense("classifier", a.num_classes, false);
    fp_ = a.fingerprint();
  }

  static void dense_backward(const LayerPlan& L, const std::vector<S>& W, const MatT<S>& in,
                             const MatT<S>& dout, std::vector<S>& dW, std::vector<S>& db,
                             MatT<S>& din) {
    for (std::size_t r = 0; r < in.rows; ++r) {
      const S* x = in.row(r);
      const S* gy = dout.row(r);
      S* gx = din.row(r);
      for (int o = 0; o < L.out_dim; ++o) {
        const S g = gy[o];
        if (g == S(0)) continue;
        const S* wrow = W.data() + static_cast<std::size_t>(o) * L.in_dim;
        S* dwrow = dW.data() + static_cast<std::size_t>(o) * L.in_dim;
        db[o] += g;
        for (int i = 0; i < L.in_dim; ++i) {
          dwrow[i] += g * x[i];
          gx[i] += g * wrow[i];
        }
      }
    }
  }

  static void conv_backward(const LayerPlan& L, const std::vector<S>& W, const MatT<S>& in,
                            const MatT<S>& dout, std::vector<S>& dW, std::vector<S>& db,
                            MatT<S>& din) {
    const int ihw = L.in_h * L.in_w;
    const int ohw = L.out_h * L.out_w;
    const int ksq = L.kernel * L.kernel;
    for (std::size_t r = 0; r < in.rows; ++r) {
      const S* x = in.row(r);
      const S* gy = dout.row(r);
      S* gx = din.row(r);
      for (int oc = 0; oc < L.out_c; ++oc) {
        const S* wc = W.data() + static_cast<std::size_t>(oc) * L.in_c * ksq;
        S* dwc = dW.data() + static_cast<std::size_t>(oc) * L.in_c * ksq;
        const S* gyc = gy + oc * ohw;
        for (int oy = 0; oy < L.out_h; ++oy) {
          for (int ox = 0; ox < L.out_w; ++ox) {
            const S g = gyc[oy * L.out_w + ox];
            if (g == S(0)) continue;
            db[oc] += g;
            const int iy0 = oy * L.stride, ix0 = ox * L.stride;
            for (int ic = 0; ic < L.in_c; ++ic) {
              const S* xc = x + ic * ihw;
              S* gxc = gx + ic * ihw;
              const S* wk = wc + ic * ksq;
              S* dwk = dwc + ic * ksq;
              for (int ky = 0; ky < L.kernel; ++ky) {
                const int irow = (iy0 + ky) * L.in_w + ix0;
                for (int kx = 0; kx < L.kernel; ++kx) {
                  dwk[ky * L.kernel + kx] += g * xc[irow + kx];
                  gxc[irow + kx] += g * wk[ky * L.kernel + kx];
                }
              }
            }
          }
        }
      }
    }
  }
};

using Network = NetT<float>;

// Mean over the batch of -log softmax(logits)[label], max-subtracted.
template <class S>
S cross_entropy(const MatT<S>& logits, std::span<const int> labels) {
  if (logits.rows != labels.size())
    throw std::invalid_argument("cross_entropy: batch size mismatch");
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
      throw std::invalid_argument("cross_entropy: label out of range at row " + std::to_string(r));
    const S* x = logits.row(r);
    double m = x[0];
    for (std::size_t c = 1; c < logits.cols; ++c) m = std::max(m, static_cast<double>(x[c]));
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) sum += std::exp(static_cast<double>(x[c]) - m);
    total += m + std::log(sum) - static_cast<double>(x[y]);
  }
  return static_cast<S>(total / static_cast<double>(logits.rows));
}

// d(mean cross-entropy)/d(logits) = (softmax - onehot) / batch.
template <class S>
MatT<S> cross_entropy_grad(const MatT<S>& logits, std::span<const int> labels) {
  if (logits.rows != labels.size())
    throw std::invalid_argument("cross_entropy_grad: batch size mismatch");
  MatT<S> g(logits.rows, logits.cols);
  const double inv_b = 1.0 / static_cast<double>(logits.rows);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
      throw std::invalid_argument("cross_entropy_grad: label out of range at row " +
                                  std::to_string(r));
    const S* x = logits.row(r);
    double m = x[0];
    for (std::size_t c = 1; c < logits.cols; ++c) m = std::max(m, static_cast<double>(x[c]));
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) sum += std::exp(static_cast<double>(x[c]) - m);
    S* gr = g.row(r);
    for (std::size_t c = 0; c < logits.cols; ++c)
      gr[c] = static_cast<S>(std::exp(static_cast<double>(x[c]) - m) / sum * inv_b);
    gr[y] -= static_cast<S>(inv_b);
  }
  return g;
}

// v <- momentum*v + g + weight_decay*w;  w <- w - lr*v  (classical momentum,
// decay folded into the gradient).
template <class S>
void sgd_step(ParamSetT<S>& w, const ParamSetT<S>& g, ParamSetT<S>& velocity, S lr, S momentum,
              S weight_decay) {
  if (!w.congruent_with(g)) throw std::invalid_argument("sgd_step: gradient shape mismatch");
  if (!w.congruent_with(velocity)) throw std::invalid_argument("sgd_step: velocity shape mismatch");
  for (std::size_t a = 0; a < w.arrays.size(); ++a) {
    auto& wa = w.arrays[a].values;
    const auto& ga = g.arrays[a].values;
    auto& va = velocity.arrays[a].values;
    for (std::size_t i = 0; i < wa.size(); ++i) {
      if (!std::isfinite(static_cast<double>(ga[i])))
        throw std::runtime_error("sgd_step: non-finite gradient in " + g.arrays[a].name);
      va[i] = momentum * va[i] + ga[i] + weight_decay * wa[i];
      wa[i] -= lr * va[i];
      if (!std::isfinite(static_cast<double>(wa[i])))
        throw std::runtime_error("sgd_step: non-finite weight in " + w.arrays[a].name);
    }
  }
}

// Central finite differences per parameter; test/diagnostic oracle only. The
// step actually realized after rounding to S is measured and used as the
// divisor.
template <class S>
ParamSetT<S> finite_diff_grad(const ParamSetT<S>& w,
                              const std::function<double(const ParamSetT<S>&)>& objective,
                              double eps) {
  ParamSetT<S> g = w;
  for (auto& a : g.arrays) std::fill(a.values.begin(), a.values.end(), S(0));
  ParamSetT<S> probe = w;
  for (std::size_t a = 0; a < w.arrays.size(); ++a) {
    for (std::size_t i = 0; i < w.arrays[a].values.size(); ++i) {
      const S orig = w.arrays[a].values[i];
      const S hi = static_cast<S>(static_cast<double>(orig) + eps);
      const S lo = static_cast<S>(static_cast<double>(orig) - eps);
      probe.arrays[a].values[i] = hi;
      const double fp = objective(probe);
      probe.arrays[a].values[i] = lo;
      const double fm = objective(probe);
      probe.arrays[a].values[i] = orig;
      const double h = static_cast<double>(hi) - static_cast<double>(lo);
      g.arrays[a].values[i] = static_cast<S>((fp - fm) / h);
    }
  }
  return g;
}

}  // namespace fedssc
