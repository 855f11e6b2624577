#include "scnet/lipschitz.hpp"

#include <cmath>
#include <numbers>

#include "scnet/error.hpp"
#include "scnet/rng.hpp"

namespace scnet::lipschitz {

namespace {

double normalize(std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  const double n = std::sqrt(s);
  if (n > 0.0) {
    for (double& v : x) v /= n;
  }
  return n;
}

// Largest eigenvalue of a symmetric n×n matrix by cyclic Jacobi rotations.
double symmetric_max_eigenvalue(std::vector<double> a, std::size_t n) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) (i == j ? diag : off) += a[i * n + j] * a[i * n + j];
    if (off <= 1e-30 * (diag + 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
  }
  double best = a[0];
  for (std::size_t i = 1; i < n; ++i) best = std::max(best, a[i * n + i]);
  return best;
}

}  // namespace

Tensor reshape_kernel(const Tensor& w) {
  require_rank(w, 4, "reshape_kernel");
  return w.reshaped({w.dim(0), w.dim(1) * w.dim(2) * w.dim(3)});
}

Tensor unreshape_kernel(const Tensor& mat, const Shape& kernel_shape) {
  require_rank(mat, 2, "unreshape_kernel");
  if (kernel_shape.size() != 4 || kernel_shape[0] != mat.dim(0)) {
    throw ShapeError("unreshape_kernel: " + shape_str(mat.shape()) + " cannot become " + shape_str(kernel_shape));
  }
  return mat.reshaped(kernel_shape);
}

SpectralNormState make_state(std::string layer_id, std::size_t rows, std::size_t cols, double beta,
                             std::uint64_t seed) {
  if (!(beta > 0.0)) throw ConfigError("lipschitz: beta must be positive");
  SpectralNormState s;
  s.layer_id = std::move(layer_id);
  s.beta = beta;
  CounterRng rng(seed);
  s.u.resize(rows);
  s.v.resize(cols);
  for (double& x : s.u) x = rng.normal();
  for (double& x : s.v) x = rng.normal();
  normalize(s.u);
  normalize(s.v);
  return s;
}

double power_iterate(SpectralNormState& state, const Tensor& w_mat, int iters) {
  require_rank(w_mat, 2, "power_iterate");
  if (iters < 1) throw ConfigError("power_iterate: need at least one iteration");
  const std::size_t rows = w_mat.dim(0), cols = w_mat.dim(1);
  if (state.u.size() != rows || state.v.size() != cols) {
    throw ShapeError("power_iterate: state vectors do not match matrix " + shape_str(w_mat.shape()) +
                     " for layer " + state.layer_id);
  }
  std::vector<double> u = state.u, v(cols), wv(rows);
  for (int it = 0; it < iters; ++it) {
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) v[j] += w_mat[i * cols + j] * u[i];
    if (normalize(v) == 0.0) {
      state.last_estimate = 0.0;
      return 0.0;
    }
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += w_mat[i * cols + j] * v[j];
      u[i] = s;
    }
    if (normalize(u) == 0.0) {
      state.last_estimate = 0.0;
      return 0.0;
    }
  }
  double sigma = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += w_mat[i * cols + j] * v[j];
    sigma += u[i] * s;
  }
  state.u = std::move(u);
  state.v = std::move(v);
  state.last_estimate = std::max(0.0, sigma);
  return state.last_estimate;
}

bool clamp_weights(Tensor& w, const SpectralNormState& state, double beta) {
  if (!(beta > 0.0)) throw ConfigError("clamp_weights: beta must be positive");
  const double sigma = state.last_estimate;
  if (sigma <= beta) return false;
  const double scale = beta / sigma;
  for (double& x : w.storage()) x *= scale;
  return true;
}

double verified_norm(const Tensor& w_mat, int iters, std::uint64_t seed) {
  require_rank(w_mat, 2, "verified_norm");
  SpectralNormState s = make_state("verify", w_mat.dim(0), w_mat.dim(1), 1.0, seed);
  return power_iterate(s, w_mat, iters);
}

Tensor per_frequency_gain(const Tensor& w, std::size_t height, std::size_t width) {
  require_rank(w, 4, "per_frequency_gain");
  const std::size_t O = w.dim(0), C = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  if (height == 0 || width == 0) throw ShapeError("per_frequency_gain: empty frequency grid");
  const auto ph = static_cast<double>(KH / 2), pw = static_cast<double>(KW / 2);
  Tensor gain({height, width});
  // Real embedding [[Re, −Im], [Im, Re]] of the complex O×C transfer matrix
  // shares its singular values.
  const std::size_t rr = 2 * O, rc = 2 * C;
  std::vector<double> re(O * C), im(O * C), emb(rr * rc), gram(rc * rc);
  for (std::size_t fu = 0; fu < height; ++fu)
    for (std::size_t fv = 0; fv < width; ++fv) {
      std::fill(re.begin(), re.end(), 0.0);
      std::fill(im.begin(), im.end(), 0.0);
      for (std::size_t kh = 0; kh < KH; ++kh)
        for (std::size_t kw = 0; kw < KW; ++kw) {
          const double angle = 2.0 * std::numbers::pi *
                               ((static_cast<double>(kh) - ph) * static_cast<double>(fu) / static_cast<double>(height) +
                                (static_cast<double>(kw) - pw) * static_cast<double>(fv) / static_cast<double>(width));
          const double c = std::cos(angle), s = std::sin(angle);
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t ci = 0; ci < C; ++ci) {
              const double wv = w[((o * C + ci) * KH + kh) * KW + kw];
              re[o * C + ci] += wv * c;
              im[o * C + ci] += wv * s;
            }
        }
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t ci = 0; ci < C; ++ci) {
          emb[o * rc + ci] = re[o * C + ci];
          emb[o * rc + C + ci] = -im[o * C + ci];
          emb[(O + o) * rc + ci] = im[o * C + ci];
          emb[(O + o) * rc + C + ci] = re[o * C + ci];
        }
      std::fill(gram.begin(), gram.end(), 0.0);
      for (std::size_t i = 0; i < rc; ++i)
        for (std::size_t j = i; j < rc; ++j) {
          double s = 0.0;
          for (std::size_t r = 0; r < rr; ++r) s += emb[r * rc + i] * emb[r * rc + j];
          gram[i * rc + j] = gram[j * rc + i] = s;
        }
      gain(fu, fv) = std::sqrt(std::max(0.0, symmetric_max_eigenvalue(gram, rc)));
    }
  return gain;
}

}  // namespace scnet::lipschitz
