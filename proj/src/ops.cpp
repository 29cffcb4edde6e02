#include "hatsc/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "hatsc/errors.hpp"

namespace hatsc {

namespace {

template <class R>
struct Blas;

template <>
struct Blas<float> {
  static void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                   const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
};

template <>
struct Blas<double> {
  static void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                   const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
};

template <class R, class F>
void attach(TensorT<R>& out, const char* op, std::vector<TensorT<R>> inputs, F&& bw) {
  if (!autograd_enabled()) return;
  bool need = false;
  for (const TensorT<R>& t : inputs) need = need || t.requires_grad();
  if (!need) return;
  out.set_requires_grad(true);
  auto node = std::make_shared<TapeNodeT<R>>();
  node->op = op;
  node->inputs = std::move(inputs);
  node->backward = std::forward<F>(bw);
  out.set_node(std::move(node));
}

bool is_suffix(const Shape& suffix, const Shape& full) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

int normalize_axis(int axis, int rank, const char* op) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw UsageError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return a;
}

}  // namespace

template <class R>
TensorT<R> add(const TensorT<R>& a, const TensorT<R>& b) {
  if (!is_suffix(b.shape(), a.shape())) {
    throw UsageError("add: shape " + shape_str(b.shape()) + " is not broadcastable to " +
                     shape_str(a.shape()));
  }
  const int64_t n = a.size();
  const int64_t bn = b.size();
  TensorT<R> out(a.shape());
  const R* pa = a.data();
  const R* pb = b.data();
  R* po = out.data();
  if (bn == n) {
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  } else {
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i % bn];
  }
  attach(out, "add", {a, b}, [n, bn](const TensorT<R>& o) {
    TensorT<R> pa2 = o.node()->inputs[0];
    TensorT<R> pb2 = o.node()->inputs[1];
    const R* g = o.grad();
    if (pa2.requires_grad()) pa2.accumulate_grad(g, n);
    if (pb2.requires_grad()) {
      std::vector<R>& gb = pb2.grad_values();
      for (int64_t i = 0; i < n; ++i) gb[static_cast<size_t>(i % bn)] += g[i];
    }
  });
  return out;
}

template <class R>
TensorT<R> mul(const TensorT<R>& a, const TensorT<R>& b) {
  if (a.shape() != b.shape()) {
    throw UsageError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const int64_t n = a.size();
  TensorT<R> out(a.shape());
  const R* pa = a.data();
  const R* pb = b.data();
  R* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  attach(out, "mul", {a, b}, [n](const TensorT<R>& o) {
    TensorT<R> pa2 = o.node()->inputs[0];
    TensorT<R> pb2 = o.node()->inputs[1];
    const R* g = o.grad();
    if (pa2.requires_grad()) {
      std::vector<R>& ga = pa2.grad_values();
      const R* db = pb2.data();
      for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[i] * db[i];
    }
    if (pb2.requires_grad()) {
      std::vector<R>& gb = pb2.grad_values();
      const R* da = pa2.data();
      for (int64_t i = 0; i < n; ++i) gb[static_cast<size_t>(i)] += g[i] * da[i];
    }
  });
  return out;
}

template <class R>
TensorT<R> scale(const TensorT<R>& a, R factor) {
  const int64_t n = a.size();
  TensorT<R> out(a.shape());
  const R* pa = a.data();
  R* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * factor;
  attach(out, "scale", {a}, [n, factor](const TensorT<R>& o) {
    TensorT<R> pa2 = o.node()->inputs[0];
    if (!pa2.requires_grad()) return;
    const R* g = o.grad();
    std::vector<R>& ga = pa2.grad_values();
    for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[i] * factor;
  });
  return out;
}

namespace {

// Shared shape logic for matmul and its backward. batch == 0 encodes the
// rank-2 broadcast side.
struct MatmulPlan {
  int64_t batch;      // number of slices in the output
  bool a_broadcast;   // a is rank 2, shared across the batch
  bool b_broadcast;   // b is rank 2, shared across the batch
  int m, k, n;
  Shape out_shape;
};

template <class R>
MatmulPlan plan_matmul(const TensorT<R>& a, const TensorT<R>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw UsageError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  MatmulPlan p;
  p.m = a.dim(a.rank() - 2);
  p.k = a.dim(a.rank() - 1);
  const int bk = b.dim(b.rank() - 2);
  p.n = b.dim(b.rank() - 1);
  if (p.k != bk) {
    throw UsageError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  p.a_broadcast = batch_a.empty() && !batch_b.empty();
  p.b_broadcast = batch_b.empty() && !batch_a.empty();
  if (!p.a_broadcast && !p.b_broadcast && batch_a != batch_b) {
    throw UsageError("matmul: batch dimensions disagree, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const Shape& batch = p.a_broadcast ? batch_b : batch_a;
  p.batch = shape_numel(batch);
  p.out_shape = batch;
  p.out_shape.push_back(p.m);
  p.out_shape.push_back(p.n);
  return p;
}

}  // namespace

template <class R>
TensorT<R> matmul(const TensorT<R>& a, const TensorT<R>& b) {
  const MatmulPlan p = plan_matmul(a, b);
  TensorT<R> out(p.out_shape);
  const R* pa = a.data();
  const R* pb = b.data();
  R* po = out.data();
  const int64_t as = static_cast<int64_t>(p.m) * p.k;
  const int64_t bs = static_cast<int64_t>(p.k) * p.n;
  const int64_t cs = static_cast<int64_t>(p.m) * p.n;
  if (p.b_broadcast) {
    // One flat gemm over all batch rows.
    Blas<R>::gemm(false, false, static_cast<int>(p.batch * p.m), p.n, p.k, R(1), pa, p.k, pb, p.n,
                  R(0), po, p.n);
  } else {
    for (int64_t i = 0; i < p.batch; ++i) {
      Blas<R>::gemm(false, false, p.m, p.n, p.k, R(1), pa + (p.a_broadcast ? 0 : i * as), p.k,
                    pb + i * bs, p.n, R(0), po + i * cs, p.n);
    }
  }
  attach(out, "matmul", {a, b}, [p, as, bs, cs](const TensorT<R>& o) {
    TensorT<R> ta = o.node()->inputs[0];
    TensorT<R> tb = o.node()->inputs[1];
    const R* g = o.grad();
    const R* pa2 = ta.data();
    const R* pb2 = tb.data();
    if (ta.requires_grad()) {
      R* ga = ta.grad_values().data();
      if (p.b_broadcast) {
        // dA = dC * B^T in one flat gemm.
        Blas<R>::gemm(false, true, static_cast<int>(p.batch * p.m), p.k, p.n, R(1), g, p.n, pb2,
                      p.n, R(1), ga, p.k);
      } else {
        for (int64_t i = 0; i < p.batch; ++i) {
          Blas<R>::gemm(false, true, p.m, p.k, p.n, R(1), g + i * cs, p.n, pb2 + i * bs, p.n, R(1),
                        ga + (p.a_broadcast ? 0 : i * as), p.k);
        }
      }
    }
    if (tb.requires_grad()) {
      R* gb = tb.grad_values().data();
      if (p.b_broadcast) {
        // dB = A^T * dC, batch reduction folded into the flat gemm.
        Blas<R>::gemm(true, false, p.k, p.n, static_cast<int>(p.batch * p.m), R(1), pa2, p.k, g,
                      p.n, R(1), gb, p.n);
      } else {
        for (int64_t i = 0; i < p.batch; ++i) {
          Blas<R>::gemm(true, false, p.k, p.n, p.m, R(1), pa2 + (p.a_broadcast ? 0 : i * as), p.k,
                        g + i * cs, p.n, R(1), gb + i * bs, p.n);
        }
      }
    }
  });
  return out;
}

namespace {

template <class R>
void permute2_apply(const R* src, const Shape& src_shape, int ax0, int ax1, R* dst, bool accumulate) {
  // dst has src_shape with ax0/ax1 swapped; iterate dst linearly.
  const int rank = static_cast<int>(src_shape.size());
  Shape dst_shape = src_shape;
  std::swap(dst_shape[static_cast<size_t>(ax0)], dst_shape[static_cast<size_t>(ax1)]);
  std::vector<int64_t> src_strides(static_cast<size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i) {
    src_strides[static_cast<size_t>(i)] =
        src_strides[static_cast<size_t>(i + 1)] * src_shape[static_cast<size_t>(i + 1)];
  }
  // Stride of the destination walk expressed in source offsets.
  std::vector<int64_t> walk(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    int si = i;
    if (i == ax0) si = ax1;
    else if (i == ax1) si = ax0;
    walk[static_cast<size_t>(i)] = src_strides[static_cast<size_t>(si)];
  }
  const int64_t total = shape_numel(src_shape);
  std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
  int64_t src_off = 0;
  for (int64_t o = 0; o < total; ++o) {
    if (accumulate) dst[o] += src[src_off];
    else dst[o] = src[src_off];
    for (int i = rank - 1; i >= 0; --i) {
      idx[static_cast<size_t>(i)]++;
      src_off += walk[static_cast<size_t>(i)];
      if (idx[static_cast<size_t>(i)] < dst_shape[static_cast<size_t>(i)]) break;
      src_off -= walk[static_cast<size_t>(i)] * dst_shape[static_cast<size_t>(i)];
      idx[static_cast<size_t>(i)] = 0;
    }
  }
}

}  // namespace

template <class R>
TensorT<R> transpose(const TensorT<R>& x, int axis0, int axis1) {
  const int rank = x.rank();
  const int a0 = normalize_axis(axis0, rank, "transpose");
  const int a1 = normalize_axis(axis1, rank, "transpose");
  Shape out_shape = x.shape();
  std::swap(out_shape[static_cast<size_t>(a0)], out_shape[static_cast<size_t>(a1)]);
  TensorT<R> out(out_shape);
  permute2_apply(x.data(), x.shape(), a0, a1, out.data(), false);
  attach(out, "transpose", {x}, [a0, a1](const TensorT<R>& o) {
    TensorT<R> in = o.node()->inputs[0];
    if (!in.requires_grad()) return;
    // Swapping the same axes again maps the gradient back.
    permute2_apply(o.grad(), o.shape(), a0, a1, in.grad_values().data(), true);
  });
  return out;
}

template <class R>
TensorT<R> reshape(const TensorT<R>& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw UsageError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  TensorT<R> out(std::move(shape), x.values());
  const int64_t n = x.size();
  attach(out, "reshape", {x}, [n](const TensorT<R>& o) {
    TensorT<R> in = o.node()->inputs[0];
    if (in.requires_grad()) in.accumulate_grad(o.grad(), n);
  });
  return out;
}

template <class R>
TensorT<R> concat(const std::vector<TensorT<R>>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  const int rank = parts[0].rank();
  const int ax = normalize_axis(axis, rank, "concat");
  Shape out_shape = parts[0].shape();
  int total_axis = 0;
  for (const TensorT<R>& t : parts) {
    if (t.rank() != rank) {
      throw UsageError("concat: rank mismatch " + shape_str(t.shape()) + " vs " +
                       shape_str(parts[0].shape()));
    }
    for (int i = 0; i < rank; ++i) {
      if (i != ax && t.dim(i) != out_shape[static_cast<size_t>(i)]) {
        throw UsageError("concat: shape mismatch " + shape_str(t.shape()) + " vs " +
                         shape_str(parts[0].shape()));
      }
    }
    total_axis += t.dim(ax);
  }
  out_shape[static_cast<size_t>(ax)] = total_axis;
  TensorT<R> out(out_shape);

  int64_t outer = 1;
  for (int i = 0; i < ax; ++i) outer *= out_shape[static_cast<size_t>(i)];
  int64_t inner = 1;
  for (int i = ax + 1; i < rank; ++i) inner *= out_shape[static_cast<size_t>(i)];
  const int64_t out_row = static_cast<int64_t>(total_axis) * inner;

  std::vector<int64_t> offsets;  // per part, offset of its block within an outer row
  int64_t off = 0;
  for (const TensorT<R>& t : parts) {
    offsets.push_back(off);
    const int64_t block = static_cast<int64_t>(t.dim(ax)) * inner;
    for (int64_t o = 0; o < outer; ++o) {
      std::memcpy(out.data() + o * out_row + off, t.data() + o * block,
                  static_cast<size_t>(block) * sizeof(R));
    }
    off += block;
  }

  attach(out, "concat", parts, [outer, inner, out_row, offsets, ax](const TensorT<R>& o) {
    const R* g = o.grad();
    for (size_t pi = 0; pi < o.node()->inputs.size(); ++pi) {
      TensorT<R> in = o.node()->inputs[pi];
      if (!in.requires_grad()) continue;
      R* gi = in.grad_values().data();
      const int64_t block = static_cast<int64_t>(in.dim(ax)) * inner;
      for (int64_t ou = 0; ou < outer; ++ou) {
        const R* src = g + ou * out_row + offsets[pi];
        R* dst = gi + ou * block;
        for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
      }
    }
  });
  return out;
}

template <class R>
TensorT<R> relu(const TensorT<R>& x) {
  const int64_t n = x.size();
  TensorT<R> out(x.shape());
  const R* px = x.data();
  R* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] > R(0) ? px[i] : R(0);
  attach(out, "relu", {x}, [n](const TensorT<R>& o) {
    TensorT<R> in = o.node()->inputs[0];
    if (!in.requires_grad()) return;
    const R* g = o.grad();
    const R* px2 = in.data();
    std::vector<R>& gi = in.grad_values();
    for (int64_t i = 0; i < n; ++i) {
      if (px2[i] > R(0)) gi[static_cast<size_t>(i)] += g[i];
    }
  });
  return out;
}

template <class R>
TensorT<R> softmax(const TensorT<R>& x, int axis) {
  const int rank = x.rank();
  const int ax = normalize_axis(axis, rank, "softmax");
  const int len = x.dim(ax);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= x.dim(i);
  for (int i = ax + 1; i < rank; ++i) inner *= x.dim(i);

  TensorT<R> out(x.shape());
  const R* px = x.data();
  R* po = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = (o * len) * inner + in;
      R mx = px[base];
      for (int i = 1; i < len; ++i) mx = std::max(mx, px[base + i * inner]);
      R sum = R(0);
      for (int i = 0; i < len; ++i) {
        const R e = std::exp(px[base + i * inner] - mx);
        po[base + i * inner] = e;
        sum += e;
      }
      const R norm = R(1) / sum;
      for (int i = 0; i < len; ++i) po[base + i * inner] *= norm;
    }
  }
  attach(out, "softmax", {x}, [outer, inner, len](const TensorT<R>& o) {
    TensorT<R> in = o.node()->inputs[0];
    if (!in.requires_grad()) return;
    const R* g = o.grad();
    const R* y = o.data();
    std::vector<R>& gi = in.grad_values();
    for (int64_t ou = 0; ou < outer; ++ou) {
      for (int64_t ii = 0; ii < inner; ++ii) {
        const int64_t base = (ou * len) * inner + ii;
        R dot = R(0);
        for (int i = 0; i < len; ++i) dot += g[base + i * inner] * y[base + i * inner];
        for (int i = 0; i < len; ++i) {
          const int64_t idx = base + i * inner;
          gi[static_cast<size_t>(idx)] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
  return out;
}

template <class R>
TensorT<R> layer_norm(const TensorT<R>& x, const TensorT<R>& gain, const TensorT<R>& bias, R eps) {
  if (x.rank() < 1) throw UsageError("layer_norm: input must have rank >= 1");
  const int d = x.dim(x.rank() - 1);
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw UsageError("layer_norm: gain/bias must have shape (" + std::to_string(d) + "), got " +
                     shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  }
  const int64_t rows = x.size() / d;
  TensorT<R> out(x.shape());
  auto mean = std::make_shared<std::vector<R>>(static_cast<size_t>(rows));
  auto rstd = std::make_shared<std::vector<R>>(static_cast<size_t>(rows));
  const R* px = x.data();
  const R* pg = gain.data();
  const R* pb = bias.data();
  R* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const R* row = px + r * d;
    R mu = R(0);
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<R>(d);
    R var = R(0);
    for (int j = 0; j < d; ++j) {
      const R c = row[j] - mu;
      var += c * c;
    }
    var /= static_cast<R>(d);
    const R rs = R(1) / std::sqrt(var + eps);
    (*mean)[static_cast<size_t>(r)] = mu;
    (*rstd)[static_cast<size_t>(r)] = rs;
    R* orow = po + r * d;
    for (int j = 0; j < d; ++j) orow[j] = (row[j] - mu) * rs * pg[j] + pb[j];
  }
  attach(out, "layer_norm", {x, gain, bias}, [rows, d, mean, rstd](const TensorT<R>& o) {
    TensorT<R> tx = o.node()->inputs[0];
    TensorT<R> tg = o.node()->inputs[1];
    TensorT<R> tb = o.node()->inputs[2];
    const R* g = o.grad();
    const R* px2 = tx.data();
    const R* pg2 = tg.data();
    R* gx = tx.requires_grad() ? tx.grad_values().data() : nullptr;
    R* gg = tg.requires_grad() ? tg.grad_values().data() : nullptr;
    R* gb = tb.requires_grad() ? tb.grad_values().data() : nullptr;
    for (int64_t r = 0; r < rows; ++r) {
      const R mu = (*mean)[static_cast<size_t>(r)];
      const R rs = (*rstd)[static_cast<size_t>(r)];
      const R* grow = g + r * d;
      const R* xrow = px2 + r * d;
      if (gg || gb) {
        for (int j = 0; j < d; ++j) {
          if (gg) gg[j] += grow[j] * (xrow[j] - mu) * rs;
          if (gb) gb[j] += grow[j];
        }
      }
      if (gx) {
        R m1 = R(0), m2 = R(0);
        for (int j = 0; j < d; ++j) {
          const R dy = grow[j] * pg2[j];
          const R xh = (xrow[j] - mu) * rs;
          m1 += dy;
          m2 += dy * xh;
        }
        m1 /= static_cast<R>(d);
        m2 /= static_cast<R>(d);
        R* gxrow = gx + r * d;
        for (int j = 0; j < d; ++j) {
          const R dy = grow[j] * pg2[j];
          const R xh = (xrow[j] - mu) * rs;
          gxrow[j] += rs * (dy - m1 - xh * m2);
        }
      }
    }
  });
  return out;
}

template <class R>
TensorT<R> dropout(const TensorT<R>& x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw UsageError("dropout: probability " + std::to_string(p) + " outside [0, 1)");
  }
  if (!train || p == 0.0) return x;
  const int64_t n = x.size();
  const R keep_scale = static_cast<R>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<R>>(static_cast<size_t>(n));
  TensorT<R> out(x.shape());
  const R* px = x.data();
  R* po = out.data();
  for (int64_t i = 0; i < n; ++i) {
    const R m = rng.uniform() < p ? R(0) : keep_scale;
    (*mask)[static_cast<size_t>(i)] = m;
    po[i] = px[i] * m;
  }
  attach(out, "dropout", {x}, [n, mask](const TensorT<R>& o) {
    TensorT<R> in = o.node()->inputs[0];
    if (!in.requires_grad()) return;
    const R* g = o.grad();
    std::vector<R>& gi = in.grad_values();
    for (int64_t i = 0; i < n; ++i) gi[static_cast<size_t>(i)] += g[i] * (*mask)[static_cast<size_t>(i)];
  });
  return out;
}

template <class R>
TensorT<R> masked_fill(const TensorT<R>& x, const TensorT<R>& mask, R value) {
  if (x.shape() != mask.shape()) {
    throw UsageError("masked_fill: mask shape " + shape_str(mask.shape()) + " does not match " +
                     shape_str(x.shape()));
  }
  const int64_t n = x.size();
  TensorT<R> out(x.shape());
  const R* px = x.data();
  const R* pm = mask.data();
  R* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pm[i] != R(0) ? value : px[i];
  attach(out, "masked_fill", {x}, [n, mask](const TensorT<R>& o) {
    TensorT<R> in = o.node()->inputs[0];
    if (!in.requires_grad()) return;
    const R* g = o.grad();
    const R* pm2 = mask.data();
    std::vector<R>& gi = in.grad_values();
    for (int64_t i = 0; i < n; ++i) {
      if (pm2[i] == R(0)) gi[static_cast<size_t>(i)] += g[i];
    }
  });
  return out;
}

template <class R>
TensorT<R> embedding_lookup(const TensorT<R>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) {
    throw UsageError("embedding_lookup: table must be rank 2, got " + shape_str(table.shape()));
  }
  const int v = table.dim(0);
  const int d = table.dim(1);
  TensorT<R> out(Shape{static_cast<int>(ids.size()), d});
  const R* pt = table.data();
  R* po = out.data();
  for (size_t r = 0; r < ids.size(); ++r) {
    const int id = ids[r];
    if (id < 0 || id >= v) {
      throw DataError("embedding_lookup: id " + std::to_string(id) + " out of range for table of " +
                      std::to_string(v) + " rows");
    }
    std::memcpy(po + r * d, pt + static_cast<int64_t>(id) * d, static_cast<size_t>(d) * sizeof(R));
  }
  attach(out, "embedding_lookup", {table}, [ids, d](const TensorT<R>& o) {
    TensorT<R> tab = o.node()->inputs[0];
    if (!tab.requires_grad()) return;
    const R* g = o.grad();
    R* gt = tab.grad_values().data();
    for (size_t r = 0; r < ids.size(); ++r) {
      R* dst = gt + static_cast<int64_t>(ids[r]) * d;
      const R* src = g + r * d;
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
  return out;
}

template <class R>
TensorT<R> reduce_sum(const TensorT<R>& x) {
  const int64_t n = x.size();
  const R* px = x.data();
  R total = R(0);
  for (int64_t i = 0; i < n; ++i) total += px[i];
  TensorT<R> out = TensorT<R>::scalar(total);
  attach(out, "reduce_sum", {x}, [n](const TensorT<R>& o) {
    TensorT<R> in = o.node()->inputs[0];
    if (!in.requires_grad()) return;
    const R g = o.grad()[0];
    std::vector<R>& gi = in.grad_values();
    for (int64_t i = 0; i < n; ++i) gi[static_cast<size_t>(i)] += g;
  });
  return out;
}

template <class R>
TensorT<R> cross_entropy(const TensorT<R>& logits, const std::vector<int>& targets,
                         double label_smoothing, int pad_id) {
  if (logits.rank() != 2) {
    throw UsageError("cross_entropy: logits must be [positions, classes], got " +
                     shape_str(logits.shape()));
  }
  const int64_t n = logits.dim(0);
  const int v = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != n) {
    throw UsageError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(n) + " positions");
  }
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw UsageError("cross_entropy: label smoothing " + std::to_string(label_smoothing) +
                     " outside [0, 1)");
  }
  const R eps = static_cast<R>(label_smoothing);
  const R* pl = logits.data();
  auto logz = std::make_shared<std::vector<R>>(static_cast<size_t>(n));
  int64_t count = 0;
  R total = R(0);
  for (int64_t r = 0; r < n; ++r) {
    const int t = targets[static_cast<size_t>(r)];
    if (t == pad_id) continue;
    if (t < 0 || t >= v) {
      throw DataError("cross_entropy: target id " + std::to_string(t) + " out of range for " +
                      std::to_string(v) + " classes");
    }
    const R* row = pl + r * v;
    R mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    R sum = R(0), lsum = R(0);
    for (int j = 0; j < v; ++j) {
      sum += std::exp(row[j] - mx);
      lsum += row[j];
    }
    const R lz = mx + std::log(sum);
    (*logz)[static_cast<size_t>(r)] = lz;
    const R nll_target = lz - row[t];
    const R mean_nll = lz - lsum / static_cast<R>(v);
    total += (R(1) - eps) * nll_target + eps * mean_nll;
    ++count;
  }
  if (count == 0) throw UsageError("cross_entropy: batch has no non-pad positions");
  TensorT<R> out = TensorT<R>::scalar(total / static_cast<R>(count));
  attach(out, "cross_entropy", {logits},
         [targets, pad_id, eps, logz, count, n, v](const TensorT<R>& o) {
           TensorT<R> in = o.node()->inputs[0];
           if (!in.requires_grad()) return;
           const R g = o.grad()[0] / static_cast<R>(count);
           const R* pl2 = in.data();
           R* gl = in.grad_values().data();
           const R uniform = eps / static_cast<R>(v);
           for (int64_t r = 0; r < n; ++r) {
             const int t = targets[static_cast<size_t>(r)];
             if (t == pad_id) continue;
             const R lz = (*logz)[static_cast<size_t>(r)];
             const R* row = pl2 + r * v;
             R* grow = gl + r * v;
             for (int j = 0; j < v; ++j) {
               const R p = std::exp(row[j] - lz);
               const R q = uniform + (j == t ? (R(1) - eps) : R(0));
               grow[j] += g * (p - q);
             }
           }
         });
  return out;
}

#define HATSC_INSTANTIATE_OPS(R)                                                                  \
  template TensorT<R> add(const TensorT<R>&, const TensorT<R>&);                                  \
  template TensorT<R> mul(const TensorT<R>&, const TensorT<R>&);                                  \
  template TensorT<R> scale(const TensorT<R>&, R);                                                \
  template TensorT<R> matmul(const TensorT<R>&, const TensorT<R>&);                               \
  template TensorT<R> transpose(const TensorT<R>&, int, int);                                     \
  template TensorT<R> reshape(const TensorT<R>&, Shape);                                          \
  template TensorT<R> concat(const std::vector<TensorT<R>>&, int);                                \
  template TensorT<R> relu(const TensorT<R>&);                                                    \
  template TensorT<R> softmax(const TensorT<R>&, int);                                            \
  template TensorT<R> layer_norm(const TensorT<R>&, const TensorT<R>&, const TensorT<R>&, R);     \
  template TensorT<R> dropout(const TensorT<R>&, double, bool, Rng&);                             \
  template TensorT<R> masked_fill(const TensorT<R>&, const TensorT<R>&, R);                       \
  template TensorT<R> embedding_lookup(const TensorT<R>&, const std::vector<int>&);               \
  template TensorT<R> reduce_sum(const TensorT<R>&);                                              \
  template TensorT<R> cross_entropy(const TensorT<R>&, const std::vector<int>&, double, int);

HATSC_INSTANTIATE_OPS(float)
HATSC_INSTANTIATE_OPS(double)

#undef HATSC_INSTANTIATE_OPS

}  // namespace hatsc
