#pragma once

#include <vector>

#include "streamdf/tensor.hpp"

namespace streamdf::kernels {

// Global switch between the OpenMP kernels and the serial reference path.
// Both paths compute every output element with the same per-element code, so
// they agree bit for bit; the tests assert this and the benchmark target
// compares their throughput.
bool parallel_enabled();
void set_parallel(bool enabled);

namespace serial {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);         // out = a @ b
void matmul_accum(const Matrix& a, const Matrix& b, Matrix& out);   // out += a @ b
void matmul_transb(const Matrix& a, const Matrix& b, Matrix& out);  // out = a @ b^T
void matmul_transa_accum(const Matrix& a, const Matrix& b, Matrix& out);  // out += a^T @ b
void add_bias_rows(Matrix& m, const Matrix& bias);
void softmax_rows(const Matrix& in, Matrix& out);
void layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                        Matrix& out, Matrix& xhat, std::vector<double>& inv_std);
void layer_norm_backward(const Matrix& d_out, const Matrix& xhat,
                         const std::vector<double>& inv_std, const Matrix& gain, Matrix& dx,
                         Matrix& dgain, Matrix& dbias);
void gelu_forward(const Matrix& z, Matrix& out);
void gelu_backward(const Matrix& z, const Matrix& d_out, Matrix& dz);
}  // namespace serial

namespace par {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_accum(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_transb(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_transa_accum(const Matrix& a, const Matrix& b, Matrix& out);
void add_bias_rows(Matrix& m, const Matrix& bias);
void softmax_rows(const Matrix& in, Matrix& out);
void layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                        Matrix& out, Matrix& xhat, std::vector<double>& inv_std);
void layer_norm_backward(const Matrix& d_out, const Matrix& xhat,
                         const std::vector<double>& inv_std, const Matrix& gain, Matrix& dx,
                         Matrix& dgain, Matrix& dbias);
void gelu_forward(const Matrix& z, Matrix& out);
void gelu_backward(const Matrix& z, const Matrix& d_out, Matrix& dz);
}  // namespace par

// Dispatchers used by the model code.
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_accum(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_transb(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_transa_accum(const Matrix& a, const Matrix& b, Matrix& out);
void add_bias_rows(Matrix& m, const Matrix& bias);
void softmax_rows(const Matrix& in, Matrix& out);
void layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                        Matrix& out, Matrix& xhat, std::vector<double>& inv_std);
void layer_norm_backward(const Matrix& d_out, const Matrix& xhat,
                         const std::vector<double>& inv_std, const Matrix& gain, Matrix& dx,
                         Matrix& dgain, Matrix& dbias);
void gelu_forward(const Matrix& z, Matrix& out);
void gelu_backward(const Matrix& z, const Matrix& d_out, Matrix& dz);

// Column slicing helpers for per-head attention.
Matrix slice_cols(const Matrix& m, int c0, int c1);
void add_into_cols(Matrix& dst, const Matrix& src, int c0);

}  // namespace streamdf::kernels
