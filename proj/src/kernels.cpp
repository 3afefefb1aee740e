#include "slatphys/kernels.hpp"

#include <cmath>
#include <numbers>

#include <omp.h>

namespace slatphys::kernels {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

namespace {

inline void linear_row(const double* x, const double* w, const double* b, double* y,
                       std::size_t in, std::size_t out) {
  for (std::size_t o = 0; o < out; ++o) y[o] = b[o];
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    const double* wi = w + i * out;
    for (std::size_t o = 0; o < out; ++o) y[o] += xi * wi[o];
  }
}

inline void linear_dx_row(const double* w, const double* dy, double* dx, std::size_t in,
                          std::size_t out) {
  for (std::size_t i = 0; i < in; ++i) {
    const double* wi = w + i * out;
    double acc = 0.0;
    for (std::size_t o = 0; o < out; ++o) acc += dy[o] * wi[o];
    dx[i] = acc;
  }
}

inline void layernorm_row(const double* x, const double* gamma, const double* beta, double* y,
                          double* mean, double* rstd, std::size_t dim) {
  double m = 0.0;
  for (std::size_t c = 0; c < dim; ++c) m += x[c];
  m /= static_cast<double>(dim);
  double var = 0.0;
  for (std::size_t c = 0; c < dim; ++c) var += (x[c] - m) * (x[c] - m);
  var /= static_cast<double>(dim);
  const double r = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t c = 0; c < dim; ++c) y[c] = (x[c] - m) * r * gamma[c] + beta[c];
  *mean = m;
  *rstd = r;
}

inline void layernorm_dx_row(const double* x, const double* gamma, double mean, double rstd,
                             const double* dy, double* dx, std::size_t dim) {
  double sum_g = 0.0;
  double sum_gx = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    const double g = dy[c] * gamma[c];
    const double xhat = (x[c] - mean) * rstd;
    sum_g += g;
    sum_gx += g * xhat;
  }
  const double inv = 1.0 / static_cast<double>(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    const double xhat = (x[c] - mean) * rstd;
    dx[c] = rstd * (dy[c] * gamma[c] - sum_g * inv - xhat * sum_gx * inv);
  }
}

// One (window, head) task: softmax(q k^T * scale) v for all queries in the group.
void attention_task(const double* q, const double* k, const double* v,
                    const std::vector<std::size_t>& idx, std::size_t channels, std::size_t off,
                    std::size_t hd, double scale, double* out, std::vector<double>& p) {
  const std::size_t n = idx.size();
  p.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    const double* qa = q + idx[a] * channels + off;
    double mx = -INFINITY;
    for (std::size_t b = 0; b < n; ++b) {
      const double* kb = k + idx[b] * channels + off;
      double s = 0.0;
      for (std::size_t d = 0; d < hd; ++d) s += qa[d] * kb[d];
      p[b] = s * scale;
      mx = std::max(mx, p[b]);
    }
    double z = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      p[b] = std::exp(p[b] - mx);
      z += p[b];
    }
    double* oa = out + idx[a] * channels + off;
    for (std::size_t d = 0; d < hd; ++d) oa[d] = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const double w = p[b] / z;
      const double* vb = v + idx[b] * channels + off;
      for (std::size_t d = 0; d < hd; ++d) oa[d] += w * vb[d];
    }
  }
}

void attention_backward_task(const double* q, const double* k, const double* v,
                             const double* dout, const std::vector<std::size_t>& idx,
                             std::size_t channels, std::size_t off, std::size_t hd,
                             double scale, double* dq, double* dk, double* dv,
                             std::vector<double>& p, std::vector<double>& dp) {
  const std::size_t n = idx.size();
  p.resize(n);
  dp.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    double* dkb = dk + idx[b] * channels + off;
    double* dvb = dv + idx[b] * channels + off;
    for (std::size_t d = 0; d < hd; ++d) dkb[d] = dvb[d] = 0.0;
  }
  for (std::size_t a = 0; a < n; ++a) {
    const double* qa = q + idx[a] * channels + off;
    const double* doa = dout + idx[a] * channels + off;
    double mx = -INFINITY;
    for (std::size_t b = 0; b < n; ++b) {
      const double* kb = k + idx[b] * channels + off;
      double s = 0.0;
      for (std::size_t d = 0; d < hd; ++d) s += qa[d] * kb[d];
      p[b] = s * scale;
      mx = std::max(mx, p[b]);
    }
    double z = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      p[b] = std::exp(p[b] - mx);
      z += p[b];
    }
    double dot = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      p[b] /= z;
      const double* vb = v + idx[b] * channels + off;
      double s = 0.0;
      for (std::size_t d = 0; d < hd; ++d) s += doa[d] * vb[d];
      dp[b] = s;
      dot += p[b] * s;
    }
    double* dqa = dq + idx[a] * channels + off;
    for (std::size_t d = 0; d < hd; ++d) dqa[d] = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const double ds = p[b] * (dp[b] - dot) * scale;
      const double* kb = k + idx[b] * channels + off;
      double* dkb = dk + idx[b] * channels + off;
      double* dvb = dv + idx[b] * channels + off;
      for (std::size_t d = 0; d < hd; ++d) {
        dqa[d] += ds * kb[d];
        dkb[d] += ds * qa[d];
        dvb[d] += p[b] * doa[d];
      }
    }
  }
}

}  // namespace

namespace serial {

void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y, std::size_t rows,
                    std::size_t in, std::size_t out) {
  for (std::size_t n = 0; n < rows; ++n) {
    linear_row(x.data() + n * in, w.data(), b.data(), y.data() + n * out, in, out);
  }
}

void linear_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db, std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t n = 0; n < rows; ++n) {
    const double* dyn = dy.data() + n * out;
    if (!dx.empty()) linear_dx_row(w.data(), dyn, dx.data() + n * in, in, out);
    const double* xn = x.data() + n * in;
    for (std::size_t i = 0; i < in; ++i) {
      double* dwi = dw.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) dwi[o] += xn[i] * dyn[o];
    }
    for (std::size_t o = 0; o < out; ++o) db[o] += dyn[o];
  }
}

void layernorm_forward(std::span<const double> x, std::span<const double> gamma,
                       std::span<const double> beta, std::span<double> y,
                       std::span<double> mean, std::span<double> rstd, std::size_t rows,
                       std::size_t dim) {
  for (std::size_t n = 0; n < rows; ++n) {
    layernorm_row(x.data() + n * dim, gamma.data(), beta.data(), y.data() + n * dim, &mean[n],
                  &rstd[n], dim);
  }
}

void layernorm_backward(std::span<const double> x, std::span<const double> gamma,
                        std::span<const double> mean, std::span<const double> rstd,
                        std::span<const double> dy, std::span<double> dx,
                        std::span<double> dgamma, std::span<double> dbeta, std::size_t rows,
                        std::size_t dim) {
  for (std::size_t n = 0; n < rows; ++n) {
    const double* xn = x.data() + n * dim;
    const double* dyn = dy.data() + n * dim;
    layernorm_dx_row(xn, gamma.data(), mean[n], rstd[n], dyn, dx.data() + n * dim, dim);
    for (std::size_t c = 0; c < dim; ++c) {
      dgamma[c] += dyn[c] * ((xn[c] - mean[n]) * rstd[n]);
      dbeta[c] += dyn[c];
    }
  }
}

void gelu_forward(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
}

void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * gelu_grad(x[i]);
}

void window_attention_forward(std::span<const double> q, std::span<const double> k,
                              std::span<const double> v, const Groups& groups,
                              const AttentionShape& shape, std::span<double> out) {
  const std::size_t hd = shape.channels / shape.heads;
  std::vector<double> p;
  for (const auto& g : groups) {
    for (std::size_t h = 0; h < shape.heads; ++h) {
      attention_task(q.data(), k.data(), v.data(), g, shape.channels, h * hd, hd, shape.scale,
                     out.data(), p);
    }
  }
}

void window_attention_backward(std::span<const double> q, std::span<const double> k,
                               std::span<const double> v, std::span<const double> dout,
                               const Groups& groups, const AttentionShape& shape,
                               std::span<double> dq, std::span<double> dk, std::span<double> dv) {
  const std::size_t hd = shape.channels / shape.heads;
  std::vector<double> p, dp;
  for (const auto& g : groups) {
    for (std::size_t h = 0; h < shape.heads; ++h) {
      attention_backward_task(q.data(), k.data(), v.data(), dout.data(), g, shape.channels,
                              h * hd, hd, shape.scale, dq.data(), dk.data(), dv.data(), p, dp);
    }
  }
}

}  // namespace serial

namespace parallel {

void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y, std::size_t rows,
                    std::size_t in, std::size_t out) {
  const auto n_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < n_rows; ++n) {
    linear_row(x.data() + n * in, w.data(), b.data(), y.data() + n * out, in, out);
  }
}

void linear_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db, std::size_t rows, std::size_t in, std::size_t out) {
  const auto n_rows = static_cast<std::ptrdiff_t>(rows);
  const auto n_in = static_cast<std::ptrdiff_t>(in);
  if (!dx.empty()) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < n_rows; ++n) {
      linear_dx_row(w.data(), dy.data() + n * out, dx.data() + n * in, in, out);
    }
  }
  // Weight rows are independent; each still sums over samples in order.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n_in; ++i) {
    double* dwi = dw.data() + i * out;
    for (std::ptrdiff_t n = 0; n < n_rows; ++n) {
      const double xni = x[n * in + i];
      const double* dyn = dy.data() + n * out;
      for (std::size_t o = 0; o < out; ++o) dwi[o] += xni * dyn[o];
    }
  }
  for (std::ptrdiff_t n = 0; n < n_rows; ++n) {
    const double* dyn = dy.data() + n * out;
    for (std::size_t o = 0; o < out; ++o) db[o] += dyn[o];
  }
}

void layernorm_forward(std::span<const double> x, std::span<const double> gamma,
                       std::span<const double> beta, std::span<double> y,
                       std::span<double> mean, std::span<double> rstd, std::size_t rows,
                       std::size_t dim) {
  const auto n_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < n_rows; ++n) {
    layernorm_row(x.data() + n * dim, gamma.data(), beta.data(), y.data() + n * dim, &mean[n],
                  &rstd[n], dim);
  }
}

void layernorm_backward(std::span<const double> x, std::span<const double> gamma,
                        std::span<const double> mean, std::span<const double> rstd,
                        std::span<const double> dy, std::span<double> dx,
                        std::span<double> dgamma, std::span<double> dbeta, std::size_t rows,
                        std::size_t dim) {
  const auto n_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < n_rows; ++n) {
    layernorm_dx_row(x.data() + n * dim, gamma.data(), mean[n], rstd[n], dy.data() + n * dim,
                     dx.data() + n * dim, dim);
  }
  const auto n_dim = static_cast<std::ptrdiff_t>(dim);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < n_dim; ++c) {
    double g = dgamma[c];
    double b = dbeta[c];
    for (std::ptrdiff_t n = 0; n < n_rows; ++n) {
      const double d = dy[n * dim + c];
      g += d * ((x[n * dim + c] - mean[n]) * rstd[n]);
      b += d;
    }
    dgamma[c] = g;
    dbeta[c] = b;
  }
}

void gelu_forward(std::span<const double> x, std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = gelu(x[i]);
}

void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) dx[i] = dy[i] * gelu_grad(x[i]);
}

void window_attention_forward(std::span<const double> q, std::span<const double> k,
                              std::span<const double> v, const Groups& groups,
                              const AttentionShape& shape, std::span<double> out) {
  const std::size_t hd = shape.channels / shape.heads;
  const auto tasks = static_cast<std::ptrdiff_t>(groups.size() * shape.heads);
#pragma omp parallel
  {
    std::vector<double> p;
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < tasks; ++t) {
      const auto& g = groups[static_cast<std::size_t>(t) / shape.heads];
      const std::size_t h = static_cast<std::size_t>(t) % shape.heads;
      attention_task(q.data(), k.data(), v.data(), g, shape.channels, h * hd, hd, shape.scale,
                     out.data(), p);
    }
  }
}

void window_attention_backward(std::span<const double> q, std::span<const double> k,
                               std::span<const double> v, std::span<const double> dout,
                               const Groups& groups, const AttentionShape& shape,
                               std::span<double> dq, std::span<double> dk, std::span<double> dv) {
  const std::size_t hd = shape.channels / shape.heads;
  const auto tasks = static_cast<std::ptrdiff_t>(groups.size() * shape.heads);
#pragma omp parallel
  {
    std::vector<double> p, dp;
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < tasks; ++t) {
      const auto& g = groups[static_cast<std::size_t>(t) / shape.heads];
      const std::size_t h = static_cast<std::size_t>(t) % shape.heads;
      attention_backward_task(q.data(), k.data(), v.data(), dout.data(), g, shape.channels,
                              h * hd, hd, shape.scale, dq.data(), dk.data(), dv.data(), p, dp);
    }
  }
}

}  // namespace parallel

const KernelSet& kernel_set(Exec exec) {
  static const KernelSet kSerial{serial::linear_forward,           serial::linear_backward,
                                 serial::layernorm_forward,        serial::layernorm_backward,
                                 serial::gelu_forward,             serial::gelu_backward,
                                 serial::window_attention_forward, serial::window_attention_backward};
  static const KernelSet kParallel{
      parallel::linear_forward,           parallel::linear_backward,
      parallel::layernorm_forward,        parallel::layernorm_backward,
      parallel::gelu_forward,             parallel::gelu_backward,
      parallel::window_attention_forward, parallel::window_attention_backward};
  return exec == Exec::kSerial ? kSerial : kParallel;
}

}  // namespace slatphys::kernels
