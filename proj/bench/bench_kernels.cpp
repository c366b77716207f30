// Throughput comparison of the serial reference kernels against the OpenMP
// kernels, plus an end-to-end encoder gradient comparison via the global
// dispatch switch. Each cell reports the median of several timed repetitions;
// outputs are checksummed so the work cannot be optimized away, and the two
// paths are checked for bitwise-identical results while timing.
//
// Usage: bench_kernels [--quick]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "streamdf/encoder.hpp"
#include "streamdf/kernels.hpp"
#include "streamdf/tensor.hpp"
#include "streamdf/util.hpp"

using namespace streamdf;

namespace {

double checksum_sink = 0.0;

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform(-1.0, 1.0);
  return m;
}

double median_ms(const std::function<void()>& fn, int reps) {
  std::vector<double> times;
  times.reserve(static_cast<size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

void print_row(const std::string& name, const std::string& shape, double serial_ms,
               double par_ms, bool equal) {
  std::printf("%-22s %-14s %10.3f %10.3f %7.2fx   %s\n", name.c_str(), shape.c_str(), serial_ms,
              par_ms, serial_ms / par_ms, equal ? "bitwise-equal" : "MISMATCH");
}

// Times one kernel under both namespaces on identical inputs.
void bench_kernel(const std::string& name, const std::string& shape, int reps,
                  const std::function<void(bool)>& run_once,
                  const std::function<bool()>& outputs_equal) {
  run_once(false);
  run_once(true);
  const bool equal = outputs_equal();
  const double serial_ms = median_ms([&] { run_once(false); }, reps);
  const double par_ms = median_ms([&] { run_once(true); }, reps);
  print_row(name, shape, serial_ms, par_ms, equal);
}

void bench_matmuls(int n, int reps, Rng& rng) {
  Matrix a = random_matrix(n, n, rng);
  Matrix b = random_matrix(n, n, rng);
  Matrix out_serial(n, n), out_par(n, n);
  const std::string shape = std::to_string(n) + "x" + std::to_string(n);

  bench_kernel(
      "matmul", shape, reps,
      [&](bool par) {
        Matrix& out = par ? out_par : out_serial;
        if (par)
          kernels::par::matmul(a, b, out);
        else
          kernels::serial::matmul(a, b, out);
        checksum_sink += out.at(0, 0);
      },
      [&] { return bitwise_equal(out_serial, out_par); });

  bench_kernel(
      "matmul_transb", shape, reps,
      [&](bool par) {
        Matrix& out = par ? out_par : out_serial;
        if (par)
          kernels::par::matmul_transb(a, b, out);
        else
          kernels::serial::matmul_transb(a, b, out);
        checksum_sink += out.at(0, 0);
      },
      [&] { return bitwise_equal(out_serial, out_par); });
}

void bench_rowwise(int rows, int cols, int reps, Rng& rng) {
  Matrix x = random_matrix(rows, cols, rng);
  Matrix gain = random_matrix(1, cols, rng);
  Matrix bias = random_matrix(1, cols, rng);
  const std::string shape = std::to_string(rows) + "x" + std::to_string(cols);

  Matrix sm_serial(rows, cols), sm_par(rows, cols);
  bench_kernel(
      "softmax_rows", shape, reps,
      [&](bool par) {
        Matrix& out = par ? sm_par : sm_serial;
        if (par)
          kernels::par::softmax_rows(x, out);
        else
          kernels::serial::softmax_rows(x, out);
        checksum_sink += out.at(0, 0);
      },
      [&] { return bitwise_equal(sm_serial, sm_par); });

  Matrix ln_serial(rows, cols), ln_par(rows, cols);
  Matrix xhat_serial(rows, cols), xhat_par(rows, cols);
  std::vector<double> inv_serial(static_cast<size_t>(rows)), inv_par(static_cast<size_t>(rows));
  bench_kernel(
      "layer_norm_forward", shape, reps,
      [&](bool par) {
        if (par)
          kernels::par::layer_norm_forward(x, gain, bias, 1e-5, ln_par, xhat_par, inv_par);
        else
          kernels::serial::layer_norm_forward(x, gain, bias, 1e-5, ln_serial, xhat_serial,
                                              inv_serial);
        checksum_sink += (par ? ln_par : ln_serial).at(0, 0);
      },
      [&] { return bitwise_equal(ln_serial, ln_par); });

  Matrix gelu_serial(rows, cols), gelu_par(rows, cols);
  bench_kernel(
      "gelu_forward", shape, reps,
      [&](bool par) {
        Matrix& out = par ? gelu_par : gelu_serial;
        if (par)
          kernels::par::gelu_forward(x, out);
        else
          kernels::serial::gelu_forward(x, out);
        checksum_sink += out.at(0, 0);
      },
      [&] { return bitwise_equal(gelu_serial, gelu_par); });
}

// End-to-end: one example_gradient call (full pass + every proper prefix)
// under each dispatch setting, desk-scale encoder.
void bench_example_gradient(int reps, Rng& rng) {
  EncoderConfig config;
  config.vocab_size = 60;
  config.max_len = 64;
  config.d_model = 32;
  config.n_layers = 2;
  config.n_heads = 2;
  config.d_ff = 64;
  config.seed = 11;
  Encoder encoder(config);

  const int n = 40;
  std::vector<int> ids, labels;
  for (int i = 0; i < n; ++i) {
    ids.push_back(rng.next_int(config.vocab_size));
    labels.push_back(rng.next_int(2));
  }
  LossConfig loss;

  Parameters grads_serial = Parameters::zeros(config);
  Parameters grads_par = Parameters::zeros(config);
  const bool was_parallel = kernels::parallel_enabled();

  auto run_once = [&](bool par) {
    kernels::set_parallel(par);
    Parameters& grads = par ? grads_par : grads_serial;
    grads.zero_all();
    LossBreakdown b = example_gradient(encoder, ids, labels, loss, grads, false, 0);
    checksum_sink += b.total;
  };
  run_once(false);
  run_once(true);
  bool equal = true;
  auto ts = grads_serial.named_tensors();
  auto tp = grads_par.named_tensors();
  for (size_t i = 0; i < ts.size(); ++i)
    if (!bitwise_equal(*ts[i].second, *tp[i].second)) equal = false;

  const double serial_ms = median_ms([&] { run_once(false); }, reps);
  const double par_ms = median_ms([&] { run_once(true); }, reps);
  kernels::set_parallel(was_parallel);
  print_row("example_gradient", "|x|=40 desk", serial_ms, par_ms, equal);
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  const int reps = quick ? 3 : 9;
  Rng rng(20260815);

  std::printf("%-22s %-14s %10s %10s %8s   %s\n", "kernel", "shape", "serial-ms", "par-ms",
              "speedup", "agreement");
  for (int n : {32, 64, 128, 256}) {
    if (quick && n > 128) continue;
    bench_matmuls(n, reps, rng);
  }
  bench_rowwise(256, 64, reps, rng);
  bench_rowwise(1024, 32, reps, rng);
  bench_example_gradient(quick ? 3 : 5, rng);

  std::printf("(checksum %g)\n", checksum_sink);
  return 0;
}
