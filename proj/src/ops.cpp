#include <algorithm>
#include <cmath>

#include "scnet/autodiff.hpp"
#include "scnet/error.hpp"
#include "scnet/kernels.hpp"

namespace scnet {

namespace {

void require_image(const Tensor& t, const char* what) { require_rank(t, 4, what); }

// Two-tap interpolation weights along one axis of bilinear_up2.
struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Tap> upsample_taps(std::size_t n) {
  std::vector<Tap> taps(2 * n);
  for (std::size_t j = 0; j < 2 * n; ++j) {
    const double s = std::max(0.0, 0.5 * static_cast<double>(j) - 0.25);
    const auto i0 = std::min(static_cast<std::size_t>(s), n - 1);
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double f = s - static_cast<double>(i0);
    taps[j] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

struct Rank3 {
  std::size_t batch, rows, cols;
};

Rank3 as_batched_matrix(const Tensor& t, const char* what) {
  if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  throw ShapeError(std::string(what) + ": expected a matrix or batch of matrices, got " +
                   shape_str(t.shape()));
}

void cholesky_factor(std::vector<double>& a, std::size_t k, const std::string& label) {
  for (std::size_t j = 0; j < k; ++j) {
    double d = a[j * k + j];
    for (std::size_t p = 0; p < j; ++p) d -= a[j * k + p] * a[j * k + p];
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw NumericError(label + ": matrix is not positive definite (pivot " + std::to_string(j) +
                         " = " + std::to_string(d) + ")");
    }
    const double l = std::sqrt(d);
    a[j * k + j] = l;
    for (std::size_t i = j + 1; i < k; ++i) {
      double s = a[i * k + j];
      for (std::size_t p = 0; p < j; ++p) s -= a[i * k + p] * a[j * k + p];
      a[i * k + j] = s / l;
    }
  }
}

void cholesky_apply(const std::vector<double>& l, std::size_t k, std::span<double> bm, std::size_t m) {
  for (std::size_t col = 0; col < m; ++col) {
    for (std::size_t i = 0; i < k; ++i) {
      double s = bm[i * m + col];
      for (std::size_t p = 0; p < i; ++p) s -= l[i * k + p] * bm[p * m + col];
      bm[i * m + col] = s / l[i * k + i];
    }
    for (std::size_t i = k; i-- > 0;) {
      double s = bm[i * m + col];
      for (std::size_t p = i + 1; p < k; ++p) s -= l[p * k + i] * bm[p * m + col];
      bm[i * m + col] = s / l[i * k + i];
    }
  }
}

}  // namespace

void cholesky_solve_inplace(std::span<const double> a, std::size_t k, std::span<double> bm,
                            std::size_t m, const std::string& label) {
  for (double v : a) {
    if (!std::isfinite(v)) throw NumericError(label + ": non-finite entry in system matrix");
  }
  for (double v : bm) {
    if (!std::isfinite(v)) throw NumericError(label + ": non-finite entry in right-hand side");
  }
  std::vector<double> l(a.begin(), a.end());
  cholesky_factor(l, k, label);
  cholesky_apply(l, k, bm, m);
}

namespace ops {

Var conv2d(Tape& tape, Var x, Var w, Var b, std::size_t padding) {
  const Tensor& xt = tape.value(x);
  const Tensor& wt = tape.value(w);
  const Tensor& bt = tape.value(b);
  require_image(xt, "conv2d input");
  require_rank(wt, 4, "conv2d kernel");
  require_rank(bt, 1, "conv2d bias");
  if (wt.dim(1) != xt.dim(1)) {
    throw ShapeError("conv2d: kernel " + shape_str(wt.shape()) + " expects " + std::to_string(wt.dim(1)) +
                     " input channels, input is " + shape_str(xt.shape()));
  }
  if (bt.dim(0) != wt.dim(0)) {
    throw ShapeError("conv2d: bias " + shape_str(bt.shape()) + " does not match kernel " +
                     shape_str(wt.shape()));
  }
  if (wt.dim(2) % 2 == 0 || wt.dim(3) % 2 == 0) {
    throw ShapeError("conv2d: kernel extents must be odd, got " + shape_str(wt.shape()));
  }
  const kernels::Conv2dGeometry g{xt.dim(0), xt.dim(1), wt.dim(0), xt.dim(2),
                                  xt.dim(3), wt.dim(2), wt.dim(3), padding};
  if (xt.dim(2) + 2 * padding < wt.dim(2) || xt.dim(3) + 2 * padding < wt.dim(3)) {
    throw ShapeError("conv2d: kernel " + shape_str(wt.shape()) + " larger than padded input " +
                     shape_str(xt.shape()));
  }
  Tensor y({g.batch, g.out_channels, g.out_height(), g.out_width()});
  kernels::conv2d_forward(g, xt.data(), wt.data(), bt.data(), y.data());
  return tape.record(std::move(y), {x, w, b}, [x, w, b, g](Tape& t, const Tensor& gy) {
    if (t.requires_grad(x)) {
      Tensor gx = Tensor::zeros_like(t.value(x));
      kernels::conv2d_backward_input(g, gy.data(), t.value(w).data(), gx.data());
      t.accumulate(x, gx);
    }
    if (t.requires_grad(w) || t.requires_grad(b)) {
      Tensor gw = Tensor::zeros_like(t.value(w));
      Tensor gb = Tensor::zeros_like(t.value(b));
      kernels::conv2d_backward_params(g, t.value(x).data(), gy.data(), gw.data(), gb.data());
      t.accumulate(w, gw);
      t.accumulate(b, gb);
    }
  });
}

Var avgpool2(Tape& tape, Var x) {
  const Tensor& xt = tape.value(x);
  require_image(xt, "avgpool2");
  const std::size_t B = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
  if (H % 2 || W % 2) throw ShapeError("avgpool2: height and width must be even, got " + shape_str(xt.shape()));
  const std::size_t h = H / 2, w = W / 2;
  Tensor y({B, C, h, w});
  for (std::size_t p = 0; p < B * C; ++p) {
    const double* in = xt.data().data() + p * H * W;
    double* out = y.data().data() + p * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        out[i * w + j] = 0.25 * (in[2 * i * W + 2 * j] + in[2 * i * W + 2 * j + 1] +
                                 in[(2 * i + 1) * W + 2 * j] + in[(2 * i + 1) * W + 2 * j + 1]);
  }
  return tape.record(std::move(y), {x}, [x, B, C, H, W, h, w](Tape& t, const Tensor& gy) {
    Tensor* gx = t.grad_buffer(x);
    for (std::size_t p = 0; p < B * C; ++p) {
      const double* g = gy.data().data() + p * h * w;
      double* out = gx->data().data() + p * H * W;
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const double v = 0.25 * g[i * w + j];
          out[2 * i * W + 2 * j] += v;
          out[2 * i * W + 2 * j + 1] += v;
          out[(2 * i + 1) * W + 2 * j] += v;
          out[(2 * i + 1) * W + 2 * j + 1] += v;
        }
    }
  });
}

Var bilinear_up2(Tape& tape, Var x) {
  const Tensor& xt = tape.value(x);
  require_image(xt, "bilinear_up2");
  const std::size_t B = xt.dim(0), C = xt.dim(1), h = xt.dim(2), w = xt.dim(3);
  if (h == 0 || w == 0) throw ShapeError("bilinear_up2: empty spatial extent " + shape_str(xt.shape()));
  const std::size_t H = 2 * h, W = 2 * w;
  const auto row_taps = upsample_taps(h);
  const auto col_taps = upsample_taps(w);
  Tensor y({B, C, H, W});
  std::vector<double> tmp(h * W);
  for (std::size_t p = 0; p < B * C; ++p) {
    const double* in = xt.data().data() + p * h * w;
    double* out = y.data().data() + p * H * W;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const Tap& t = col_taps[j];
        tmp[i * W + j] = t.w0 * in[i * w + t.i0] + t.w1 * in[i * w + t.i1];
      }
    for (std::size_t i = 0; i < H; ++i) {
      const Tap& t = row_taps[i];
      for (std::size_t j = 0; j < W; ++j) out[i * W + j] = t.w0 * tmp[t.i0 * W + j] + t.w1 * tmp[t.i1 * W + j];
    }
  }
  return tape.record(std::move(y), {x}, [x, B, C, h, w, H, W, row_taps, col_taps](Tape& t, const Tensor& gy) {
    Tensor* gx = t.grad_buffer(x);
    std::vector<double> tmp(h * W);
    for (std::size_t p = 0; p < B * C; ++p) {
      const double* g = gy.data().data() + p * H * W;
      double* out = gx->data().data() + p * h * w;
      std::fill(tmp.begin(), tmp.end(), 0.0);
      for (std::size_t i = 0; i < H; ++i) {
        const Tap& tp = row_taps[i];
        for (std::size_t j = 0; j < W; ++j) {
          tmp[tp.i0 * W + j] += tp.w0 * g[i * W + j];
          tmp[tp.i1 * W + j] += tp.w1 * g[i * W + j];
        }
      }
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          const Tap& tp = col_taps[j];
          out[i * w + tp.i0] += tp.w0 * tmp[i * W + j];
          out[i * w + tp.i1] += tp.w1 * tmp[i * W + j];
        }
    }
  });
}

Var relu(Tape& tape, Var x) {
  Tensor y = tape.value(x);
  for (double& v : y.storage()) v = v > 0.0 ? v : 0.0;
  return tape.record(std::move(y), {x}, [x](Tape& t, const Tensor& gy) {
    const Tensor& xv = t.value(x);
    Tensor* gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (xv[i] > 0.0) (*gx)[i] += gy[i];
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "add");
  Tensor y = tape.value(a);
  const Tensor& bt = tape.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bt[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& gy) {
    t.accumulate(a, gy);
    t.accumulate(b, gy);
  });
}

Var sub(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "sub");
  Tensor y = tape.value(a);
  const Tensor& bt = tape.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bt[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& gy) {
    t.accumulate(a, gy);
    if (Tensor* gb = t.grad_buffer(b)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[i] -= gy[i];
    }
  });
}

Var mul_scalar(Tape& tape, Var x, double s) {
  Tensor y = tape.value(x);
  for (double& v : y.storage()) v *= s;
  return tape.record(std::move(y), {x}, [x, s](Tape& t, const Tensor& gy) {
    Tensor* gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += s * gy[i];
  });
}

Var concat_channels(Tape& tape, Var a, Var b) {
  const Tensor& at = tape.value(a);
  const Tensor& bt = tape.value(b);
  require_image(at, "concat_channels");
  require_image(bt, "concat_channels");
  if (at.dim(0) != bt.dim(0) || at.dim(2) != bt.dim(2) || at.dim(3) != bt.dim(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + shape_str(at.shape()) + " and " +
                     shape_str(bt.shape()));
  }
  const std::size_t B = at.dim(0), ca = at.dim(1), cb = bt.dim(1), plane = at.dim(2) * at.dim(3);
  Tensor y({B, ca + cb, at.dim(2), at.dim(3)});
  for (std::size_t n = 0; n < B; ++n) {
    std::copy_n(at.data().data() + n * ca * plane, ca * plane, y.data().data() + n * (ca + cb) * plane);
    std::copy_n(bt.data().data() + n * cb * plane, cb * plane,
                y.data().data() + (n * (ca + cb) + ca) * plane);
  }
  return tape.record(std::move(y), {a, b}, [a, b, B, ca, cb, plane](Tape& t, const Tensor& gy) {
    const double* g = gy.data().data();
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t i = 0; i < ca * plane; ++i) (*ga)[n * ca * plane + i] += g[n * (ca + cb) * plane + i];
    }
    if (Tensor* gb = t.grad_buffer(b)) {
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t i = 0; i < cb * plane; ++i)
          (*gb)[n * cb * plane + i] += g[(n * (ca + cb) + ca) * plane + i];
    }
  });
}

Var mse(Tape& tape, Var a, Var b) {
  const Tensor& at = tape.value(a);
  const Tensor& bt = tape.value(b);
  require_same_shape(at, bt, "mse");
  if (at.size() == 0) throw ShapeError("mse: empty operands");
  double acc = 0.0;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double d = at[i] - bt[i];
    acc += d * d;
  }
  const double n = static_cast<double>(at.size());
  return tape.record(Tensor(Shape{}, acc / n), {a, b}, [a, b, n](Tape& t, const Tensor& gy) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    const double scale = 2.0 * gy[0] / n;
    Tensor* ga = t.grad_buffer(a);
    Tensor* gb = t.grad_buffer(b);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = scale * (av[i] - bv[i]);
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

Var reshape(Tape& tape, Var x, Shape shape) {
  Tensor y = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(y), {x}, [x](Tape& t, const Tensor& gy) {
    t.accumulate(x, gy.reshaped(t.value(x).shape()));
  });
}

namespace {

// c[n×m] (+)= op(a)·b where op(a) is a (n×k) or aᵀ for a stored k×n.
void gemm(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m,
          bool transpose_a) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = transpose_a ? a[p * n + i] : a[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) c[i * m + j] += av * b[p * m + j];
    }
}

// c[n×m] += a(n×k)·b(m×k)ᵀ
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * m + j] += s;
    }
}

}  // namespace

Var matmul(Tape& tape, Var a, Var b) {
  const Tensor& at = tape.value(a);
  const Tensor& bt = tape.value(b);
  require_rank(at, 3, "matmul lhs");
  require_rank(bt, 3, "matmul rhs");
  const std::size_t B = at.dim(0), n = at.dim(1), k = at.dim(2), m = bt.dim(2);
  if (bt.dim(0) != B || bt.dim(1) != k) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(at.shape()) + " and " + shape_str(bt.shape()));
  }
  Tensor y({B, n, m});
  for (std::size_t q = 0; q < B; ++q)
    gemm(at.data().data() + q * n * k, bt.data().data() + q * k * m, y.data().data() + q * n * m, n, k, m, false);
  return tape.record(std::move(y), {a, b}, [a, b, B, n, k, m](Tape& t, const Tensor& gy) {
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t q = 0; q < B; ++q)
        gemm_nt(gy.data().data() + q * n * m, t.value(b).data().data() + q * k * m, ga->data().data() + q * n * k,
                n, m, k);
    }
    if (Tensor* gb = t.grad_buffer(b)) {
      for (std::size_t q = 0; q < B; ++q)
        gemm(t.value(a).data().data() + q * n * k, gy.data().data() + q * n * m, gb->data().data() + q * k * m, k,
             n, m, true);
    }
  });
}

Var matmul_tn(Tape& tape, Var a, Var b) {
  const Tensor& at = tape.value(a);
  const Tensor& bt = tape.value(b);
  require_rank(at, 3, "matmul_tn lhs");
  require_rank(bt, 3, "matmul_tn rhs");
  const std::size_t B = at.dim(0), n = at.dim(1), k = at.dim(2), m = bt.dim(2);
  if (bt.dim(0) != B || bt.dim(1) != n) {
    throw ShapeError("matmul_tn: incompatible shapes " + shape_str(at.shape()) + " and " +
                     shape_str(bt.shape()));
  }
  Tensor y({B, k, m});
  for (std::size_t q = 0; q < B; ++q)
    gemm(at.data().data() + q * n * k, bt.data().data() + q * n * m, y.data().data() + q * k * m, k, n, m, true);
  return tape.record(std::move(y), {a, b}, [a, b, B, n, k, m](Tape& t, const Tensor& gy) {
    // y = aᵀb: da = b·gyᵀ (n×k), db = a·gy (n×m)
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t q = 0; q < B; ++q)
        gemm_nt(t.value(b).data().data() + q * n * m, gy.data().data() + q * k * m, ga->data().data() + q * n * k,
                n, m, k);
    }
    if (Tensor* gb = t.grad_buffer(b)) {
      for (std::size_t q = 0; q < B; ++q)
        gemm(t.value(a).data().data() + q * n * k, gy.data().data() + q * k * m, gb->data().data() + q * n * m, n,
             k, m, false);
    }
  });
}

Var gram_regularized(Tape& tape, Var v, double relative, double floor) {
  const Tensor& vt = tape.value(v);
  require_rank(vt, 3, "gram_regularized");
  const std::size_t B = vt.dim(0), n = vt.dim(1), k = vt.dim(2);
  if (k == 0) throw ShapeError("gram_regularized: basis has no columns");
  Tensor y({B, k, k});
  std::vector<bool> relative_branch(B, false);
  for (std::size_t q = 0; q < B; ++q) {
    const double* vq = vt.data().data() + q * n * k;
    double* gq = y.data().data() + q * k * k;
    gemm(vq, vq, gq, k, n, k, true);
    double trace = 0.0;
    for (std::size_t i = 0; i < k; ++i) trace += gq[i * k + i];
    const double rel_eps = relative * trace / static_cast<double>(k);
    relative_branch[q] = rel_eps >= floor;
    const double eps = relative_branch[q] ? rel_eps : floor;
    for (std::size_t i = 0; i < k; ++i) gq[i * k + i] += eps;
  }
  return tape.record(std::move(y), {v}, [v, B, n, k, relative, relative_branch](Tape& t, const Tensor& gy) {
    const Tensor& vv = t.value(v);
    Tensor* gv = t.grad_buffer(v);
    std::vector<double> sym(k * k);
    for (std::size_t q = 0; q < B; ++q) {
      const double* g = gy.data().data() + q * k * k;
      double trace_g = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        trace_g += g[i * k + i];
        for (std::size_t j = 0; j < k; ++j) sym[i * k + j] = g[i * k + j] + g[j * k + i];
      }
      const double* vq = vv.data().data() + q * n * k;
      double* out = gv->data().data() + q * n * k;
      gemm(vq, sym.data(), out, n, k, k, false);
      if (relative_branch[q]) {
        const double s = 2.0 * relative * trace_g / static_cast<double>(k);
        for (std::size_t i = 0; i < n * k; ++i) out[i] += s * vq[i];
      }
    }
  });
}

Var solve_small(Tape& tape, Var a, Var bm, const std::string& label) {
  const Tensor& at = tape.value(a);
  const Tensor& bt = tape.value(bm);
  const Rank3 ad = as_batched_matrix(at, "solve_small matrix");
  const Rank3 bd = as_batched_matrix(bt, "solve_small rhs");
  if (at.rank() != bt.rank() || ad.batch != bd.batch || ad.rows != ad.cols || bd.rows != ad.rows) {
    throw ShapeError(label + ": incompatible system " + shape_str(at.shape()) + " with rhs " +
                     shape_str(bt.shape()));
  }
  const std::size_t B = ad.batch, k = ad.rows, m = bd.cols;
  Tensor x = bt;
  for (std::size_t q = 0; q < B; ++q) {
    cholesky_solve_inplace(at.data().subspan(q * k * k, k * k), k, x.data().subspan(q * k * m, k * m), m, label);
  }
  const Var out = tape.record(std::move(x), {a, bm}, {});
  // The closure needs its own output value, so it is attached after recording.
  if (!tape.requires_grad(out)) return out;
  Tape::Backward fn = [a, bm, out, B, k, m, label](Tape& t, const Tensor& gy) {
    Tensor gb = gy;
    const Tensor& av = t.value(a);
    for (std::size_t q = 0; q < B; ++q)
      cholesky_solve_inplace(av.data().subspan(q * k * k, k * k), k, gb.data().subspan(q * k * m, k * m), m, label);
    if (Tensor* ga = t.grad_buffer(a)) {
      const Tensor& xv = t.value(out);
      for (std::size_t q = 0; q < B; ++q) {
        const double* gbq = gb.data().data() + q * k * m;
        const double* xq = xv.data().data() + q * k * m;
        double* gaq = ga->data().data() + q * k * k;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < m; ++c) s += gbq[i * m + c] * xq[j * m + c] + gbq[j * m + c] * xq[i * m + c];
            gaq[i * k + j] -= 0.5 * s;
          }
      }
    }
    t.accumulate(bm, gb);
  };
  tape.set_backward(out, std::move(fn));
  return out;
}

Var tile_channels(Tape& tape, Var g, std::size_t channels) {
  const Tensor& gt = tape.value(g);
  require_image(gt, "tile_channels");
  if (channels == 0) throw ShapeError("tile_channels: channel count must be positive");
  const std::size_t B = gt.dim(0), k = gt.dim(1), plane = gt.dim(2) * gt.dim(3), n = channels * plane;
  Tensor v({B, n, k});
  for (std::size_t q = 0; q < B; ++q)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < plane; ++p)
        for (std::size_t j = 0; j < k; ++j) v[(q * n + c * plane + p) * k + j] = gt[(q * k + j) * plane + p];
  return tape.record(std::move(v), {g}, [g, B, k, plane, n, channels](Tape& t, const Tensor& gy) {
    Tensor* gg = t.grad_buffer(g);
    for (std::size_t q = 0; q < B; ++q)
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t p = 0; p < plane; ++p)
          for (std::size_t j = 0; j < k; ++j) (*gg)[(q * k + j) * plane + p] += gy[(q * n + c * plane + p) * k + j];
  });
}

}  // namespace ops
}  // namespace scnet
