// llevc/tools/bench_kernels.cpp

// Copyright 2026  The llevc Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Times every serial kernel against its OpenMP variant on one workload and
// verifies the outputs are bit-identical. Usage:
//   bench_kernels [threads] [T] [C] [reps]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>

#include "llevc/common.hpp"
#include "llevc/kernels.hpp"
#include "llevc/mat.hpp"

using namespace llevc;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Mat random_mat(Rng& rng, int r, int c) {
  Mat m(r, c);
  for (double& v : m.a) v = rng.normal();
  return m;
}

struct Row {
  std::string name;
  double serial_s = 0;
  double par_s = 0;
  bool identical = false;
};

double time_reps(int reps, const std::function<void()>& fn) {
  fn();  // warm up
  const double t0 = now_s();
  for (int i = 0; i < reps; ++i) fn();
  return (now_s() - t0) / reps;
}

}  // namespace

int main(int argc, char** argv) {
  const int threads = argc > 1 ? std::atoi(argv[1]) : 4;
  const int T = argc > 2 ? std::atoi(argv[2]) : 2048;
  const int C = argc > 3 ? std::atoi(argv[3]) : 64;
  const int reps = argc > 4 ? std::atoi(argv[4]) : 5;
  const int K = 5;

  Rng rng = Rng::substream(7, 0);
  Mat X = random_mat(rng, T, C);
  Mat Wa = random_mat(rng, C, C), ba = random_mat(rng, 1, C);
  Mat Wc = random_mat(rng, C, C * K), bc = random_mat(rng, 1, C);
  Mat G = random_mat(rng, T, C);

  std::vector<Row> rows;
  auto bench = [&](const std::string& name, const std::function<void(Mat&)>& s,
                   const std::function<void(Mat&)>& p, int r, int c) {
    Row row;
    row.name = name;
    Mat out_s(r, c), out_p(r, c);
    row.serial_s = time_reps(reps, [&] {
      out_s.fill(0.0);
      s(out_s);
    });
    kernels::set_threads(threads);
    row.par_s = time_reps(reps, [&] {
      out_p.fill(0.0);
      p(out_p);
    });
    kernels::set_threads(1);
    row.identical = bit_equal(out_s, out_p);
    rows.push_back(row);
  };

  bench("affine_nt",
        [&](Mat& o) { kernels::serial::affine_nt(X, Wa, ba, o); },
        [&](Mat& o) { kernels::par::affine_nt(X, Wa, ba, o); }, T, C);
  bench("affine_grad_x",
        [&](Mat& o) { kernels::serial::affine_grad_x(G, Wa, o); },
        [&](Mat& o) { kernels::par::affine_grad_x(G, Wa, o); }, T, C);
  bench("conv1d_same",
        [&](Mat& o) { kernels::serial::conv1d_same(X, Wc, bc, K, o); },
        [&](Mat& o) { kernels::par::conv1d_same(X, Wc, bc, K, o); }, T, C);
  bench("conv1d_same_grad_x",
        [&](Mat& o) { kernels::serial::conv1d_same_grad_x(G, Wc, K, o); },
        [&](Mat& o) { kernels::par::conv1d_same_grad_x(G, Wc, K, o); }, T, C);
  bench("conv1d_causal d=4",
        [&](Mat& o) { kernels::serial::conv1d_causal(X, Wc, bc, K, 4, o); },
        [&](Mat& o) { kernels::par::conv1d_causal(X, Wc, bc, K, 4, o); }, T,
        C);
  bench("tanh_fwd", [&](Mat& o) { kernels::serial::tanh_fwd(X, o); },
        [&](Mat& o) { kernels::par::tanh_fwd(X, o); }, T, C);
  bench("softmax_rows", [&](Mat& o) { kernels::serial::softmax_rows(X, o); },
        [&](Mat& o) { kernels::par::softmax_rows(X, o); }, T, C);

  std::printf("threads=%d T=%d C=%d K=%d reps=%d\n", threads, T, C, K, reps);
  std::printf("%-22s %12s %12s %9s %s\n", "kernel", "serial(ms)", "openmp(ms)",
              "speedup", "bit-identical");
  bool all_ok = true;
  for (const Row& r : rows) {
    std::printf("%-22s %12.3f %12.3f %8.2fx %s\n", r.name.c_str(),
                1e3 * r.serial_s, 1e3 * r.par_s, r.serial_s / r.par_s,
                r.identical ? "yes" : "NO");
    all_ok = all_ok && r.identical;
  }
  if (!all_ok) {
    std::fprintf(stderr, "mismatch between serial and parallel outputs\n");
    return 1;
  }
  return 0;
}
