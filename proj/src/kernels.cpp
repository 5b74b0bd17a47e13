// llevc/src/kernels.cpp

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

#include "llevc/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace llevc::kernels {

namespace {

int g_threads = 1;

// Per-output-element accumulations. Both the serial and the OpenMP loops call
// these, so the floating-point operation order of any single output element is
// identical in the two variants.

inline double affine_cell(const Mat& X, const Mat& W, const Mat& b, int i,
                          int j) {
  double acc = b.size() ? b(0, j) : 0.0;
  const double* xr = X.row_ptr(i);
  const double* wr = W.row_ptr(j);
  for (int k = 0; k < X.cols; ++k) acc += xr[k] * wr[k];
  return acc;
}

inline double affine_dx_cell(const Mat& dY, const Mat& W, int i, int k) {
  double acc = 0.0;
  for (int j = 0; j < dY.cols; ++j) acc += dY(i, j) * W(j, k);
  return acc;
}

inline double affine_dw_cell(const Mat& dY, const Mat& X, int j, int k) {
  double acc = 0.0;
  for (int i = 0; i < dY.rows; ++i) acc += dY(i, j) * X(i, k);
  return acc;
}

inline double col_sum(const Mat& M, int j) {
  double acc = 0.0;
  for (int i = 0; i < M.rows; ++i) acc += M(i, j);
  return acc;
}

inline double conv_same_cell(const Mat& X, const Mat& W, const Mat& b, int K,
                             int t, int o) {
  const int half = K / 2;
  double acc = b.size() ? b(0, o) : 0.0;
  const double* wr = W.row_ptr(o);
  for (int ci = 0; ci < X.cols; ++ci) {
    for (int k = 0; k < K; ++k) {
      int s = t + k - half;
      if (s < 0 || s >= X.rows) continue;
      acc += wr[ci * K + k] * X(s, ci);
    }
  }
  return acc;
}

inline double conv_same_dx_cell(const Mat& dY, const Mat& W, int K, int s,
                                int ci) {
  const int half = K / 2;
  double acc = 0.0;
  for (int k = 0; k < K; ++k) {
    int t = s - k + half;
    if (t < 0 || t >= dY.rows) continue;
    for (int o = 0; o < dY.cols; ++o) acc += dY(t, o) * W(o, ci * K + k);
  }
  return acc;
}

inline double conv_same_dw_cell(const Mat& dY, const Mat& X, int K, int o,
                                int ci, int k) {
  const int half = K / 2;
  double acc = 0.0;
  for (int t = 0; t < dY.rows; ++t) {
    int s = t + k - half;
    if (s < 0 || s >= X.rows) continue;
    acc += dY(t, o) * X(s, ci);
  }
  return acc;
}

inline double conv_causal_cell(const Mat& X, const Mat& W, const Mat& b, int K,
                               int dil, int t, int o) {
  double acc = b.size() ? b(0, o) : 0.0;
  const double* wr = W.row_ptr(o);
  for (int ci = 0; ci < X.cols; ++ci) {
    for (int k = 0; k < K; ++k) {
      int s = t - (K - 1 - k) * dil;
      if (s < 0) continue;
      acc += wr[ci * K + k] * X(s, ci);
    }
  }
  return acc;
}

inline double conv_causal_dx_cell(const Mat& dY, const Mat& W, int K, int dil,
                                  int s, int ci) {
  double acc = 0.0;
  for (int k = 0; k < K; ++k) {
    int t = s + (K - 1 - k) * dil;
    if (t >= dY.rows) continue;
    for (int o = 0; o < dY.cols; ++o) acc += dY(t, o) * W(o, ci * K + k);
  }
  return acc;
}

inline double conv_causal_dw_cell(const Mat& dY, const Mat& X, int K, int dil,
                                  int o, int ci, int k) {
  double acc = 0.0;
  for (int t = 0; t < dY.rows; ++t) {
    int s = t - (K - 1 - k) * dil;
    if (s < 0) continue;
    acc += dY(t, o) * X(s, ci);
  }
  return acc;
}

inline void softmax_row(const Mat& X, Mat& P, int i) {
  double mx = X(i, 0);
  for (int j = 1; j < X.cols; ++j) mx = std::max(mx, X(i, j));
  double z = 0.0;
  for (int j = 0; j < X.cols; ++j) {
    double e = std::exp(X(i, j) - mx);
    P(i, j) = e;
    z += e;
  }
  double inv = 1.0 / z;
  for (int j = 0; j < X.cols; ++j) P(i, j) *= inv;
}

inline void check_affine(const Mat& X, const Mat& W, const Mat& b, Mat& Y) {
  LLEVC_CHECK(X.cols == W.cols, "affine_nt: inner dim mismatch " << X.cols
                                                                 << " vs "
                                                                 << W.cols);
  LLEVC_CHECK(!b.size() || (b.rows == 1 && b.cols == W.rows),
              "affine_nt: bias shape");
  if (Y.rows != X.rows || Y.cols != W.rows) Y = Mat(X.rows, W.rows);
}

}  // namespace

void set_threads(int n) {
  LLEVC_CHECK(n >= 1, "set_threads: n must be >= 1");
  g_threads = n;
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

int threads() { return g_threads; }

// ---- serial reference ----

namespace serial {

void affine_nt(const Mat& X, const Mat& W, const Mat& b, Mat& Y) {
  check_affine(X, W, b, Y);
  for (int i = 0; i < Y.rows; ++i)
    for (int j = 0; j < Y.cols; ++j) Y(i, j) = affine_cell(X, W, b, i, j);
}

void affine_grad_x(const Mat& dY, const Mat& W, Mat& dX) {
  for (int i = 0; i < dX.rows; ++i)
    for (int k = 0; k < dX.cols; ++k) dX(i, k) += affine_dx_cell(dY, W, i, k);
}

void affine_grad_w(const Mat& dY, const Mat& X, Mat& dW, Mat& db) {
  for (int j = 0; j < dW.rows; ++j) {
    for (int k = 0; k < dW.cols; ++k) dW(j, k) += affine_dw_cell(dY, X, j, k);
    if (db.size()) db(0, j) += col_sum(dY, j);
  }
}

void conv1d_same(const Mat& X, const Mat& W, const Mat& b, int K, Mat& Y) {
  if (Y.rows != X.rows || Y.cols != W.rows) Y = Mat(X.rows, W.rows);
  for (int t = 0; t < Y.rows; ++t)
    for (int o = 0; o < Y.cols; ++o) Y(t, o) = conv_same_cell(X, W, b, K, t, o);
}

void conv1d_same_grad_x(const Mat& dY, const Mat& W, int K, Mat& dX) {
  for (int s = 0; s < dX.rows; ++s)
    for (int ci = 0; ci < dX.cols; ++ci)
      dX(s, ci) += conv_same_dx_cell(dY, W, K, s, ci);
}

void conv1d_same_grad_w(const Mat& dY, const Mat& X, int K, Mat& dW, Mat& db) {
  const int Cin = X.cols;
  for (int o = 0; o < dW.rows; ++o) {
    for (int ci = 0; ci < Cin; ++ci)
      for (int k = 0; k < K; ++k)
        dW(o, ci * K + k) += conv_same_dw_cell(dY, X, K, o, ci, k);
    if (db.size()) db(0, o) += col_sum(dY, o);
  }
}

void conv1d_causal(const Mat& X, const Mat& W, const Mat& b, int K, int dil,
                   Mat& Y) {
  if (Y.rows != X.rows || Y.cols != W.rows) Y = Mat(X.rows, W.rows);
  for (int t = 0; t < Y.rows; ++t)
    for (int o = 0; o < Y.cols; ++o)
      Y(t, o) = conv_causal_cell(X, W, b, K, dil, t, o);
}

void conv1d_causal_row(const Mat& X, const Mat& W, const Mat& b, int K,
                       int dil, int t, Mat& Y) {
  LLEVC_CHECK(Y.rows == X.rows && Y.cols == W.rows && t >= 0 && t < X.rows,
              "conv1d_causal_row: bad shapes or t");
  for (int o = 0; o < Y.cols; ++o)
    Y(t, o) = conv_causal_cell(X, W, b, K, dil, t, o);
}

void conv1d_causal_grad_x(const Mat& dY, const Mat& W, int K, int dil,
                          Mat& dX) {
  for (int s = 0; s < dX.rows; ++s)
    for (int ci = 0; ci < dX.cols; ++ci)
      dX(s, ci) += conv_causal_dx_cell(dY, W, K, dil, s, ci);
}

void conv1d_causal_grad_w(const Mat& dY, const Mat& X, int K, int dil, Mat& dW,
                          Mat& db) {
  const int Cin = X.cols;
  for (int o = 0; o < dW.rows; ++o) {
    for (int ci = 0; ci < Cin; ++ci)
      for (int k = 0; k < K; ++k)
        dW(o, ci * K + k) += conv_causal_dw_cell(dY, X, K, dil, o, ci, k);
    if (db.size()) db(0, o) += col_sum(dY, o);
  }
}

void tanh_fwd(const Mat& X, Mat& Y) {
  if (!Y.same_shape(X)) Y = Mat(X.rows, X.cols);
  for (size_t i = 0; i < X.a.size(); ++i) Y.a[i] = std::tanh(X.a[i]);
}

void tanh_bwd(const Mat& Y, const Mat& dY, Mat& dX) {
  for (size_t i = 0; i < Y.a.size(); ++i)
    dX.a[i] += dY.a[i] * (1.0 - Y.a[i] * Y.a[i]);
}

void softmax_rows(const Mat& X, Mat& P) {
  if (!P.same_shape(X)) P = Mat(X.rows, X.cols);
  for (int i = 0; i < X.rows; ++i) softmax_row(X, P, i);
}

}  // namespace serial

// ---- OpenMP variants ----

namespace par {

void affine_nt(const Mat& X, const Mat& W, const Mat& b, Mat& Y) {
  check_affine(X, W, b, Y);
  const int m = Y.rows, n = Y.cols;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) Y(i, j) = affine_cell(X, W, b, i, j);
}

void affine_grad_x(const Mat& dY, const Mat& W, Mat& dX) {
  const int m = dX.rows, kk = dX.cols;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < kk; ++k) dX(i, k) += affine_dx_cell(dY, W, i, k);
}

void affine_grad_w(const Mat& dY, const Mat& X, Mat& dW, Mat& db) {
  const int n = dW.rows;
#pragma omp parallel for schedule(static)
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < dW.cols; ++k) dW(j, k) += affine_dw_cell(dY, X, j, k);
    if (db.size()) db(0, j) += col_sum(dY, j);
  }
}

void conv1d_same(const Mat& X, const Mat& W, const Mat& b, int K, Mat& Y) {
  if (Y.rows != X.rows || Y.cols != W.rows) Y = Mat(X.rows, W.rows);
  const int T = Y.rows, n = Y.cols;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < T; ++t)
    for (int o = 0; o < n; ++o) Y(t, o) = conv_same_cell(X, W, b, K, t, o);
}

void conv1d_same_grad_x(const Mat& dY, const Mat& W, int K, Mat& dX) {
  const int T = dX.rows, c = dX.cols;
#pragma omp parallel for schedule(static)
  for (int s = 0; s < T; ++s)
    for (int ci = 0; ci < c; ++ci)
      dX(s, ci) += conv_same_dx_cell(dY, W, K, s, ci);
}

void conv1d_same_grad_w(const Mat& dY, const Mat& X, int K, Mat& dW, Mat& db) {
  const int n = dW.rows, Cin = X.cols;
#pragma omp parallel for schedule(static)
  for (int o = 0; o < n; ++o) {
    for (int ci = 0; ci < Cin; ++ci)
      for (int k = 0; k < K; ++k)
        dW(o, ci * K + k) += conv_same_dw_cell(dY, X, K, o, ci, k);
    if (db.size()) db(0, o) += col_sum(dY, o);
  }
}

void conv1d_causal(const Mat& X, const Mat& W, const Mat& b, int K, int dil,
                   Mat& Y) {
  if (Y.rows != X.rows || Y.cols != W.rows) Y = Mat(X.rows, W.rows);
  const int T = Y.rows, n = Y.cols;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < T; ++t)
    for (int o = 0; o < n; ++o)
      Y(t, o) = conv_causal_cell(X, W, b, K, dil, t, o);
}

void conv1d_causal_grad_x(const Mat& dY, const Mat& W, int K, int dil,
                          Mat& dX) {
  const int T = dX.rows, c = dX.cols;
#pragma omp parallel for schedule(static)
  for (int s = 0; s < T; ++s)
    for (int ci = 0; ci < c; ++ci)
      dX(s, ci) += conv_causal_dx_cell(dY, W, K, dil, s, ci);
}

void conv1d_causal_grad_w(const Mat& dY, const Mat& X, int K, int dil, Mat& dW,
                          Mat& db) {
  const int n = dW.rows, Cin = X.cols;
#pragma omp parallel for schedule(static)
  for (int o = 0; o < n; ++o) {
    for (int ci = 0; ci < Cin; ++ci)
      for (int k = 0; k < K; ++k)
        dW(o, ci * K + k) += conv_causal_dw_cell(dY, X, K, dil, o, ci, k);
    if (db.size()) db(0, o) += col_sum(dY, o);
  }
}

void tanh_fwd(const Mat& X, Mat& Y) {
  if (!Y.same_shape(X)) Y = Mat(X.rows, X.cols);
  const long n = long(X.a.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) Y.a[i] = std::tanh(X.a[i]);
}

void tanh_bwd(const Mat& Y, const Mat& dY, Mat& dX) {
  const long n = long(Y.a.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) dX.a[i] += dY.a[i] * (1.0 - Y.a[i] * Y.a[i]);
}

void softmax_rows(const Mat& X, Mat& P) {
  if (!P.same_shape(X)) P = Mat(X.rows, X.cols);
  const int m = X.rows;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) softmax_row(X, P, i);
}

}  // namespace par

// ---- dispatch ----

#define LLEVC_DISPATCH(fn, ...)          \
  do {                                   \
    if (g_threads > 1)                   \
      par::fn(__VA_ARGS__);              \
    else                                 \
      serial::fn(__VA_ARGS__);           \
  } while (0)

void affine_nt(const Mat& X, const Mat& W, const Mat& b, Mat& Y) {
  LLEVC_DISPATCH(affine_nt, X, W, b, Y);
}
void affine_grad_x(const Mat& dY, const Mat& W, Mat& dX) {
  LLEVC_DISPATCH(affine_grad_x, dY, W, dX);
}
void affine_grad_w(const Mat& dY, const Mat& X, Mat& dW, Mat& db) {
  LLEVC_DISPATCH(affine_grad_w, dY, X, dW, db);
}
void conv1d_same(const Mat& X, const Mat& W, const Mat& b, int K, Mat& Y) {
  LLEVC_DISPATCH(conv1d_same, X, W, b, K, Y);
}
void conv1d_same_grad_x(const Mat& dY, const Mat& W, int K, Mat& dX) {
  LLEVC_DISPATCH(conv1d_same_grad_x, dY, W, K, dX);
}
void conv1d_same_grad_w(const Mat& dY, const Mat& X, int K, Mat& dW, Mat& db) {
  LLEVC_DISPATCH(conv1d_same_grad_w, dY, X, K, dW, db);
}
void conv1d_causal(const Mat& X, const Mat& W, const Mat& b, int K, int dil,
                   Mat& Y) {
  LLEVC_DISPATCH(conv1d_causal, X, W, b, K, dil, Y);
}
void conv1d_causal_grad_x(const Mat& dY, const Mat& W, int K, int dil,
                          Mat& dX) {
  LLEVC_DISPATCH(conv1d_causal_grad_x, dY, W, K, dil, dX);
}
void conv1d_causal_grad_w(const Mat& dY, const Mat& X, int K, int dil, Mat& dW,
                          Mat& db) {
  LLEVC_DISPATCH(conv1d_causal_grad_w, dY, X, K, dil, dW, db);
}
void tanh_fwd(const Mat& X, Mat& Y) { LLEVC_DISPATCH(tanh_fwd, X, Y); }
void tanh_bwd(const Mat& Y, const Mat& dY, Mat& dX) {
  LLEVC_DISPATCH(tanh_bwd, Y, dY, dX);
}
void softmax_rows(const Mat& X, Mat& P) { LLEVC_DISPATCH(softmax_rows, X, P); }

#undef LLEVC_DISPATCH

}  // namespace llevc::kernels
