// llevc/kernels.hpp

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

#pragma once

#include "llevc/mat.hpp"

// Data-parallel inner loops of the model. Every kernel exists twice: a plain
// serial reference under kernels::serial and an OpenMP variant under
// kernels::par. The parallel variants split only the outer loop over output
// elements; each element is accumulated in the same order as the serial code,
// so the two variants produce bit-identical results for any thread count.
// The unprefixed functions dispatch on the configured thread count.

namespace llevc::kernels {

void set_threads(int n);
int threads();

// Weight convention for convolutions: W is Cout x (Cin*K), tap k of input
// channel ci lives at column ci*K + k. Biases are 1 x Cout row vectors.

namespace serial {
// Y = X * W^T + b        X: m x k, W: n x k, b: 1 x n, Y: m x n
void affine_nt(const Mat& X, const Mat& W, const Mat& b, Mat& Y);
// dX += dY * W
void affine_grad_x(const Mat& dY, const Mat& W, Mat& dX);
// dW += dY^T * X ; db += column sums of dY
void affine_grad_w(const Mat& dY, const Mat& X, Mat& dW, Mat& db);

// same-padded 1-D convolution over rows (time axis), odd K
void conv1d_same(const Mat& X, const Mat& W, const Mat& b, int K, Mat& Y);
void conv1d_same_grad_x(const Mat& dY, const Mat& W, int K, Mat& dX);
void conv1d_same_grad_w(const Mat& dY, const Mat& X, int K, Mat& dW, Mat& db);

// left-padded causal 1-D convolution with dilation
void conv1d_causal(const Mat& X, const Mat& W, const Mat& b, int K, int dil,
                   Mat& Y);
void conv1d_causal_grad_x(const Mat& dY, const Mat& W, int K, int dil,
                          Mat& dX);
void conv1d_causal_grad_w(const Mat& dY, const Mat& X, int K, int dil, Mat& dW,
                          Mat& db);

void tanh_fwd(const Mat& X, Mat& Y);
// dX += dY .* (1 - Y.^2)
void tanh_bwd(const Mat& Y, const Mat& dY, Mat& dX);

void softmax_rows(const Mat& X, Mat& P);

// fills row t of Y only, reading rows <= t of X; accumulation order matches
// conv1d_causal exactly, so incremental (free-running) evaluation is
// bit-identical to the batched pass
void conv1d_causal_row(const Mat& X, const Mat& W, const Mat& b, int K,
                       int dil, int t, Mat& Y);
}  // namespace serial

namespace par {
void affine_nt(const Mat& X, const Mat& W, const Mat& b, Mat& Y);
void affine_grad_x(const Mat& dY, const Mat& W, Mat& dX);
void affine_grad_w(const Mat& dY, const Mat& X, Mat& dW, Mat& db);
void conv1d_same(const Mat& X, const Mat& W, const Mat& b, int K, Mat& Y);
void conv1d_same_grad_x(const Mat& dY, const Mat& W, int K, Mat& dX);
void conv1d_same_grad_w(const Mat& dY, const Mat& X, int K, Mat& dW, Mat& db);
void conv1d_causal(const Mat& X, const Mat& W, const Mat& b, int K, int dil,
                   Mat& Y);
void conv1d_causal_grad_x(const Mat& dY, const Mat& W, int K, int dil,
                          Mat& dX);
void conv1d_causal_grad_w(const Mat& dY, const Mat& X, int K, int dil, Mat& dW,
                          Mat& db);
void tanh_fwd(const Mat& X, Mat& Y);
void tanh_bwd(const Mat& Y, const Mat& dY, Mat& dX);
void softmax_rows(const Mat& X, Mat& P);
}  // namespace par

void affine_nt(const Mat& X, const Mat& W, const Mat& b, Mat& Y);
void affine_grad_x(const Mat& dY, const Mat& W, Mat& dX);
void affine_grad_w(const Mat& dY, const Mat& X, Mat& dW, Mat& db);
void conv1d_same(const Mat& X, const Mat& W, const Mat& b, int K, Mat& Y);
void conv1d_same_grad_x(const Mat& dY, const Mat& W, int K, Mat& dX);
void conv1d_same_grad_w(const Mat& dY, const Mat& X, int K, Mat& dW, Mat& db);
void conv1d_causal(const Mat& X, const Mat& W, const Mat& b, int K, int dil,
                   Mat& Y);
void conv1d_causal_grad_x(const Mat& dY, const Mat& W, int K, int dil, Mat& dX);
void conv1d_causal_grad_w(const Mat& dY, const Mat& X, int K, int dil, Mat& dW,
                          Mat& db);
void tanh_fwd(const Mat& X, Mat& Y);
void tanh_bwd(const Mat& Y, const Mat& dY, Mat& dX);
void softmax_rows(const Mat& X, Mat& P);

}  // namespace llevc::kernels
