#include <doctest.h>

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "streamdf/kernels.hpp"
#include "streamdf/util.hpp"

using namespace streamdf;
namespace k = streamdf::kernels;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double bound = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform(-bound, bound);
  return m;
}

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < b.cols; ++c)
      for (int i = 0; i < a.cols; ++i) out.at(r, c) += a.at(r, i) * b.at(i, c);
  return out;
}

struct ParallelGuard {
  bool saved = k::parallel_enabled();
  ~ParallelGuard() { k::set_parallel(saved); }
};

}  // namespace

TEST_CASE("matmul family matches a naive reference") {
  Rng rng(11);
  Matrix a = random_matrix(rng, 5, 7);
  Matrix b = random_matrix(rng, 7, 3);
  Matrix expect = naive_matmul(a, b);

  Matrix out(5, 3);
  k::matmul(a, b, out);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 3; ++c) CHECK(out.at(r, c) == doctest::Approx(expect.at(r, c)).epsilon(1e-12));

  Matrix accum = random_matrix(rng, 5, 3);
  Matrix accum_expect = accum;
  k::matmul_accum(a, b, accum);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 3; ++c)
      CHECK(accum.at(r, c) ==
            doctest::Approx(accum_expect.at(r, c) + expect.at(r, c)).epsilon(1e-12));

  Matrix bt = random_matrix(rng, 3, 7);  // out = a @ bt^T
  Matrix out_tb(5, 3);
  k::matmul_transb(a, bt, out_tb);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int i = 0; i < 7; ++i) s += a.at(r, i) * bt.at(c, i);
      CHECK(out_tb.at(r, c) == doctest::Approx(s).epsilon(1e-12));
    }

  Matrix c2 = random_matrix(rng, 5, 4);  // out += a^T @ c2
  Matrix out_ta(7, 4);
  k::matmul_transa_accum(a, c2, out_ta);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 4; ++c) {
      double s = 0.0;
      for (int i = 0; i < 5; ++i) s += a.at(i, r) * c2.at(i, c);
      CHECK(out_ta.at(r, c) == doctest::Approx(s).epsilon(1e-12));
    }

  CHECK_THROWS(k::matmul(a, a, out));  // inner-dimension mismatch
}

TEST_CASE("softmax rows are normalized and shift invariant") {
  Rng rng(5);
  Matrix in = random_matrix(rng, 6, 9, 4.0);
  Matrix out(6, 9);
  k::softmax_rows(in, out);
  for (int r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 9; ++c) {
      CHECK(out.at(r, c) > 0.0);
      sum += out.at(r, c);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  Matrix shifted = in;
  for (int c = 0; c < 9; ++c) shifted.at(2, c) += 1000.0;  // also exercises overflow safety
  Matrix out2(6, 9);
  k::softmax_rows(shifted, out2);
  for (int c = 0; c < 9; ++c)
    CHECK(out2.at(2, c) == doctest::Approx(out.at(2, c)).epsilon(1e-9));
}

TEST_CASE("layer norm forward normalizes and backward matches finite differences") {
  Rng rng(17);
  const int n = 4, d = 8;
  Matrix x = random_matrix(rng, n, d, 2.0);
  Matrix gain = random_matrix(rng, 1, d);
  Matrix bias = random_matrix(rng, 1, d);
  const double eps = 1e-5;

  Matrix out(n, d), xhat(n, d);
  std::vector<double> inv_std(n);
  k::layer_norm_forward(x, gain, bias, eps, out, xhat, inv_std);
  for (int r = 0; r < n; ++r) {
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < d; ++c) mean += xhat.at(r, c);
    mean /= d;
    for (int c = 0; c < d; ++c) var += xhat.at(r, c) * xhat.at(r, c);
    var /= d;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shrinks it slightly
  }

  // Scalar loss sum(c .* out); exact gradient via the kernel vs central FD.
  Matrix weights = random_matrix(rng, n, d);
  auto loss = [&](const Matrix& xx) {
    Matrix o(n, d), xh(n, d);
    std::vector<double> is(n);
    k::layer_norm_forward(xx, gain, bias, eps, o, xh, is);
    double s = 0.0;
    for (size_t i = 0; i < o.data.size(); ++i) s += weights.data[i] * o.data[i];
    return s;
  };
  Matrix dx(n, d), dgain(1, d), dbias(1, d);
  k::layer_norm_backward(weights, xhat, inv_std, gain, dx, dgain, dbias);
  const double step = 1e-6;
  for (size_t i = 0; i < x.data.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data[i] += step;
    xm.data[i] -= step;
    double fd = (loss(xp) - loss(xm)) / (2 * step);
    CHECK(dx.data[i] == doctest::Approx(fd).epsilon(1e-5));
  }
  for (int c = 0; c < d; ++c) {
    double s = 0.0, sb = 0.0;
    for (int r = 0; r < n; ++r) {
      s += weights.at(r, c) * xhat.at(r, c);
      sb += weights.at(r, c);
    }
    CHECK(dgain.at(0, c) == doctest::Approx(s).epsilon(1e-12));
    CHECK(dbias.at(0, c) == doctest::Approx(sb).epsilon(1e-12));
  }
}

TEST_CASE("gelu forward matches the erf closed form and backward matches finite differences") {
  Rng rng(23);
  Matrix z = random_matrix(rng, 3, 11, 3.0);
  Matrix out(3, 11);
  k::gelu_forward(z, out);
  for (size_t i = 0; i < z.data.size(); ++i) {
    double x = z.data[i];
    CHECK(out.data[i] == doctest::Approx(0.5 * x * std::erfc(-x / std::sqrt(2.0))).epsilon(1e-12));
  }

  Matrix upstream = random_matrix(rng, 3, 11);
  Matrix dz(3, 11);
  k::gelu_backward(z, upstream, dz);
  const double step = 1e-6;
  for (size_t i = 0; i < z.data.size(); ++i) {
    double x = z.data[i];
    auto g = [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); };
    double fd = (g(x + step) - g(x - step)) / (2 * step);
    CHECK(dz.data[i] == doctest::Approx(upstream.data[i] * fd).epsilon(1e-6));
  }
}

TEST_CASE("serial and OpenMP kernels are bit-identical, including oversubscribed") {
  Rng rng(31);
  Matrix a = random_matrix(rng, 13, 7);
  Matrix b = random_matrix(rng, 7, 9);
  Matrix bias = random_matrix(rng, 1, 9);
  Matrix sq = random_matrix(rng, 13, 9, 3.0);
  Matrix gain = random_matrix(rng, 1, 9);
  Matrix lnb = random_matrix(rng, 1, 9);
  Matrix up = random_matrix(rng, 13, 9);

  auto run_all = [&]() {
    struct Results {
      Matrix mm{13, 9}, sm{13, 9}, ln{13, 9}, xh{13, 9}, lndx{13, 9}, lng{1, 9}, lnb2{1, 9};
      Matrix ge{13, 9}, gb{13, 9}, biased{13, 9}, ta{7, 9};
      std::vector<double> is = std::vector<double>(13);
    } res;
    k::matmul(a, b, res.mm);
    res.biased = res.mm;
    k::add_bias_rows(res.biased, bias);
    k::softmax_rows(sq, res.sm);
    k::layer_norm_forward(sq, gain, lnb, 1e-5, res.ln, res.xh, res.is);
    k::layer_norm_backward(up, res.xh, res.is, gain, res.lndx, res.lng, res.lnb2);
    k::gelu_forward(sq, res.ge);
    k::gelu_backward(sq, up, res.gb);
    k::matmul_transa_accum(a, res.sm, res.ta);
    return res;
  };

  ParallelGuard guard;
  k::set_parallel(false);
  auto serial = run_all();
  k::set_parallel(true);
#ifdef _OPENMP
  int saved_threads = omp_get_max_threads();
  omp_set_num_threads(3);  // oversubscribe the single sandbox core on purpose
#endif
  auto par = run_all();
#ifdef _OPENMP
  omp_set_num_threads(saved_threads);
#endif

  CHECK(bitwise_equal(serial.mm, par.mm));
  CHECK(bitwise_equal(serial.biased, par.biased));
  CHECK(bitwise_equal(serial.sm, par.sm));
  CHECK(bitwise_equal(serial.ln, par.ln));
  CHECK(bitwise_equal(serial.xh, par.xh));
  CHECK(serial.is == par.is);
  CHECK(bitwise_equal(serial.lndx, par.lndx));
  CHECK(bitwise_equal(serial.lng, par.lng));
  CHECK(bitwise_equal(serial.lnb2, par.lnb2));
  CHECK(bitwise_equal(serial.ge, par.ge));
  CHECK(bitwise_equal(serial.gb, par.gb));
  CHECK(bitwise_equal(serial.ta, par.ta));
}
