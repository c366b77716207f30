#include "streamdf/kernels.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace streamdf::kernels {

namespace {

std::atomic<bool> g_parallel{true};

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

// Per-row bodies shared by the serial and OpenMP variants. Keeping one body
// per output row guarantees an identical floating-point evaluation order in
// both paths, so the variants are bit-identical for any thread count.

inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, int r, bool accum) {
  const double* arow = a.row(r);
  double* orow = out.row(r);
  for (int c = 0; c < b.cols; ++c) {
    double s = accum ? orow[c] : 0.0;
    for (int k = 0; k < a.cols; ++k) s += arow[k] * b.at(k, c);
    orow[c] = s;
  }
}

inline void matmul_transb_row(const Matrix& a, const Matrix& b, Matrix& out, int r) {
  const double* arow = a.row(r);
  double* orow = out.row(r);
  for (int c = 0; c < b.rows; ++c) {
    const double* brow = b.row(c);
    double s = 0.0;
    for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
    orow[c] = s;
  }
}

// out += a^T @ b, parallelized over rows of out (columns of a); the inner
// reduction over a.rows stays serial so the sum order is fixed.
inline void matmul_transa_row(const Matrix& a, const Matrix& b, Matrix& out, int r) {
  double* orow = out.row(r);
  for (int c = 0; c < b.cols; ++c) {
    double s = 0.0;
    for (int k = 0; k < a.rows; ++k) s += a.at(k, r) * b.at(k, c);
    orow[c] += s;
  }
}

inline void softmax_row(const Matrix& in, Matrix& out, int r) {
  const double* x = in.row(r);
  double* y = out.row(r);
  double mx = x[0];
  for (int c = 1; c < in.cols; ++c) mx = std::max(mx, x[c]);
  double z = 0.0;
  for (int c = 0; c < in.cols; ++c) {
    y[c] = std::exp(x[c] - mx);
    z += y[c];
  }
  double inv = 1.0 / z;
  for (int c = 0; c < in.cols; ++c) y[c] *= inv;
}

inline void layer_norm_row(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                           Matrix& out, Matrix& xhat, std::vector<double>& inv_std, int r) {
  const int d = x.cols;
  const double* xr = x.row(r);
  double mean = 0.0;
  for (int c = 0; c < d; ++c) mean += xr[c];
  mean /= d;
  double var = 0.0;
  for (int c = 0; c < d; ++c) {
    double t = xr[c] - mean;
    var += t * t;
  }
  var /= d;
  double is = 1.0 / std::sqrt(var + eps);
  inv_std[r] = is;
  double* hr = xhat.row(r);
  double* orow = out.row(r);
  for (int c = 0; c < d; ++c) {
    hr[c] = (xr[c] - mean) * is;
    orow[c] = hr[c] * gain.at(0, c) + bias.at(0, c);
  }
}

inline void layer_norm_backward_row(const Matrix& d_out, const Matrix& xhat,
                                    const std::vector<double>& inv_std, const Matrix& gain,
                                    Matrix& dx, int r) {
  const int d = d_out.cols;
  const double* dyr = d_out.row(r);
  const double* hr = xhat.row(r);
  double* dxr = dx.row(r);
  double sum_g = 0.0, sum_gh = 0.0;
  for (int c = 0; c < d; ++c) {
    double g = dyr[c] * gain.at(0, c);
    sum_g += g;
    sum_gh += g * hr[c];
  }
  double mg = sum_g / d;
  double mgh = sum_gh / d;
  for (int c = 0; c < d; ++c) {
    double g = dyr[c] * gain.at(0, c);
    dxr[c] = (g - mg - hr[c] * mgh) * inv_std[r];
  }
}

inline void gelu_row(const Matrix& z, Matrix& out, int r) {
  const double* zr = z.row(r);
  double* orow = out.row(r);
  for (int c = 0; c < z.cols; ++c) {
    double x = zr[c];
    orow[c] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
}

inline void gelu_backward_row(const Matrix& z, const Matrix& d_out, Matrix& dz, int r) {
  const double* zr = z.row(r);
  const double* dr = d_out.row(r);
  double* o = dz.row(r);
  for (int c = 0; c < z.cols; ++c) {
    double x = zr[c];
    double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    o[c] = dr[c] * (cdf + x * pdf);
  }
}

void check_matmul(const Matrix& a, const Matrix& b, const Matrix& out) {
  if (a.cols != b.rows || out.rows != a.rows || out.cols != b.cols)
    throw std::invalid_argument("matmul: shape mismatch");
}

}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_matmul(a, b, out);
  for (int r = 0; r < a.rows; ++r) matmul_row(a, b, out, r, false);
}

void matmul_accum(const Matrix& a, const Matrix& b, Matrix& out) {
  check_matmul(a, b, out);
  for (int r = 0; r < a.rows; ++r) matmul_row(a, b, out, r, true);
}

void matmul_transb(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols != b.cols || out.rows != a.rows || out.cols != b.rows)
    throw std::invalid_argument("matmul_transb: shape mismatch");
  for (int r = 0; r < a.rows; ++r) matmul_transb_row(a, b, out, r);
}

void matmul_transa_accum(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows != b.rows || out.rows != a.cols || out.cols != b.cols)
    throw std::invalid_argument("matmul_transa_accum: shape mismatch");
  for (int r = 0; r < out.rows; ++r) matmul_transa_row(a, b, out, r);
}

void add_bias_rows(Matrix& m, const Matrix& bias) {
  for (int r = 0; r < m.rows; ++r) {
    double* row = m.row(r);
    for (int c = 0; c < m.cols; ++c) row[c] += bias.at(0, c);
  }
}

void softmax_rows(const Matrix& in, Matrix& out) {
  for (int r = 0; r < in.rows; ++r) softmax_row(in, out, r);
}

void layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                        Matrix& out, Matrix& xhat, std::vector<double>& inv_std) {
  for (int r = 0; r < x.rows; ++r) layer_norm_row(x, gain, bias, eps, out, xhat, inv_std, r);
}

void layer_norm_backward(const Matrix& d_out, const Matrix& xhat,
                         const std::vector<double>& inv_std, const Matrix& gain, Matrix& dx,
                         Matrix& dgain, Matrix& dbias) {
  for (int r = 0; r < d_out.rows; ++r)
    layer_norm_backward_row(d_out, xhat, inv_std, gain, dx, r);
  // Parameter gradients reduce over rows; fixed order, kept serial.
  for (int c = 0; c < d_out.cols; ++c) {
    double sg = 0.0, sb = 0.0;
    for (int r = 0; r < d_out.rows; ++r) {
      sg += d_out.at(r, c) * xhat.at(r, c);
      sb += d_out.at(r, c);
    }
    dgain.at(0, c) += sg;
    dbias.at(0, c) += sb;
  }
}

void gelu_forward(const Matrix& z, Matrix& out) {
  for (int r = 0; r < z.rows; ++r) gelu_row(z, out, r);
}

void gelu_backward(const Matrix& z, const Matrix& d_out, Matrix& dz) {
  for (int r = 0; r < z.rows; ++r) gelu_backward_row(z, d_out, dz, r);
}

}  // namespace serial

namespace par {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_matmul(a, b, out);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < a.rows; ++r) matmul_row(a, b, out, r, false);
}

void matmul_accum(const Matrix& a, const Matrix& b, Matrix& out) {
  check_matmul(a, b, out);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < a.rows; ++r) matmul_row(a, b, out, r, true);
}

void matmul_transb(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols != b.cols || out.rows != a.rows || out.cols != b.rows)
    throw std::invalid_argument("matmul_transb: shape mismatch");
#pragma omp parallel for schedule(static)
  for (int r = 0; r < a.rows; ++r) matmul_transb_row(a, b, out, r);
}

void matmul_transa_accum(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows != b.rows || out.rows != a.cols || out.cols != b.cols)
    throw std::invalid_argument("matmul_transa_accum: shape mismatch");
#pragma omp parallel for schedule(static)
  for (int r = 0; r < out.rows; ++r) matmul_transa_row(a, b, out, r);
}

void add_bias_rows(Matrix& m, const Matrix& bias) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < m.rows; ++r) {
    double* row = m.row(r);
    for (int c = 0; c < m.cols; ++c) row[c] += bias.at(0, c);
  }
}

void softmax_rows(const Matrix& in, Matrix& out) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < in.rows; ++r) softmax_row(in, out, r);
}

void layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                        Matrix& out, Matrix& xhat, std::vector<double>& inv_std) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < x.rows; ++r) layer_norm_row(x, gain, bias, eps, out, xhat, inv_std, r);
}

void layer_norm_backward(const Matrix& d_out, const Matrix& xhat,
                         const std::vector<double>& inv_std, const Matrix& gain, Matrix& dx,
                         Matrix& dgain, Matrix& dbias) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < d_out.rows; ++r)
    layer_norm_backward_row(d_out, xhat, inv_std, gain, dx, r);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < d_out.cols; ++c) {
    double sg = 0.0, sb = 0.0;
    for (int r = 0; r < d_out.rows; ++r) {
      sg += d_out.at(r, c) * xhat.at(r, c);
      sb += d_out.at(r, c);
    }
    dgain.at(0, c) += sg;
    dbias.at(0, c) += sb;
  }
}

void gelu_forward(const Matrix& z, Matrix& out) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < z.rows; ++r) gelu_row(z, out, r);
}

void gelu_backward(const Matrix& z, const Matrix& d_out, Matrix& dz) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < z.rows; ++r) gelu_backward_row(z, d_out, dz, r);
}

}  // namespace par

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  parallel_enabled() ? par::matmul(a, b, out) : serial::matmul(a, b, out);
}
void matmul_accum(const Matrix& a, const Matrix& b, Matrix& out) {
  parallel_enabled() ? par::matmul_accum(a, b, out) : serial::matmul_accum(a, b, out);
}
void matmul_transb(const Matrix& a, const Matrix& b, Matrix& out) {
  parallel_enabled() ? par::matmul_transb(a, b, out) : serial::matmul_transb(a, b, out);
}
void matmul_transa_accum(const Matrix& a, const Matrix& b, Matrix& out) {
  parallel_enabled() ? par::matmul_transa_accum(a, b, out)
                     : serial::matmul_transa_accum(a, b, out);
}
void add_bias_rows(Matrix& m, const Matrix& bias) {
  parallel_enabled() ? par::add_bias_rows(m, bias) : serial::add_bias_rows(m, bias);
}
void softmax_rows(const Matrix& in, Matrix& out) {
  parallel_enabled() ? par::softmax_rows(in, out) : serial::softmax_rows(in, out);
}
void layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                        Matrix& out, Matrix& xhat, std::vector<double>& inv_std) {
  parallel_enabled() ? par::layer_norm_forward(x, gain, bias, eps, out, xhat, inv_std)
                     : serial::layer_norm_forward(x, gain, bias, eps, out, xhat, inv_std);
}
void layer_norm_backward(const Matrix& d_out, const Matrix& xhat,
                         const std::vector<double>& inv_std, const Matrix& gain, Matrix& dx,
                         Matrix& dgain, Matrix& dbias) {
  parallel_enabled() ? par::layer_norm_backward(d_out, xhat, inv_std, gain, dx, dgain, dbias)
                     : serial::layer_norm_backward(d_out, xhat, inv_std, gain, dx, dgain, dbias);
}
void gelu_forward(const Matrix& z, Matrix& out) {
  parallel_enabled() ? par::gelu_forward(z, out) : serial::gelu_forward(z, out);
}
void gelu_backward(const Matrix& z, const Matrix& d_out, Matrix& dz) {
  parallel_enabled() ? par::gelu_backward(z, d_out, dz) : serial::gelu_backward(z, d_out, dz);
}

Matrix slice_cols(const Matrix& m, int c0, int c1) {
  Matrix out(m.rows, c1 - c0);
  for (int r = 0; r < m.rows; ++r)
    for (int c = c0; c < c1; ++c) out.at(r, c - c0) = m.at(r, c);
  return out;
}

void add_into_cols(Matrix& dst, const Matrix& src, int c0) {
  for (int r = 0; r < src.rows; ++r)
    for (int c = 0; c < src.cols; ++c) dst.at(r, c0 + c) += src.at(r, c);
}

}  // namespace streamdf::kernels
