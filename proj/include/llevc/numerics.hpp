// llevc/numerics.hpp

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

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "llevc/mat.hpp"

namespace llevc {

// log-variances live in [-kLogVarClamp, kLogVarClamp]
inline constexpr double kLogVarClamp = 20.0;

// Diagonal Gaussian over a latent vector. log_var is clamped at construction.
struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> log_var;

  DiagGaussian(std::vector<double> m, std::vector<double> lv);
  int dim() const { return int(mean.size()); }
};

// Per-frame diagonal Gaussians of uniform dimension, matrix-backed.
struct DiagGaussianSeq {
  Mat mean;     // T x L
  Mat log_var;  // T x L

  DiagGaussianSeq(Mat m, Mat lv);
  int frames() const { return mean.rows; }
  int dim() const { return mean.cols; }
  DiagGaussian frame(int t) const;
};

// closed-form KL(p || q) for diagonal Gaussians, summed over dimensions
double gaussian_kld(const DiagGaussian& p, const DiagGaussian& q);
// 0.5*KL(p||q) + 0.5*KL(q||p); exactly symmetric under argument swap
double symmetrized_kld(const DiagGaussian& p, const DiagGaussian& q);
// mean + exp(0.5*log_var) .* noise
std::vector<double> reparam_sample(const DiagGaussian& g,
                                   const std::vector<double>& noise);

// Named parameter tensors with group tags. Groups are small integers owned by
// the model layer; the numerics layer only needs them to be enumerable.
struct ParamTensor {
  std::string name;
  int group = 0;
  Mat value;
};

struct ParamSet {
  std::vector<ParamTensor> t;

  int add(std::string name, int group, Mat value);
  int find(std::string_view name) const;  // -1 when absent
  int require(std::string_view name) const;
  Mat& value(std::string_view name) { return t[size_t(require(name))].value; }
  const Mat& value(std::string_view name) const {
    return t[size_t(require(name))].value;
  }
  size_t scalar_count() const;
};

// Reverse-mode tape over coarse matrix ops. Forward values are stored per
// node; backward closures accumulate into input gradients. Leaves bound to a
// ParamSet tensor report their gradients via add_param_grads.
class Tape {
 public:
  using Ref = int;

  Ref constant(Mat v);
  Ref param(const ParamSet& set, int tensor_index);

  Ref affine(Ref x, Ref w, Ref b);                       // X*W^T + b
  Ref conv_same(Ref x, Ref w, Ref b, int K);
  Ref conv_causal(Ref x, Ref w, Ref b, int K, int dil);
  Ref tanh_(Ref x);
  Ref add(Ref a, Ref b);
  Ref add_rowvec(Ref x, Ref v);                          // broadcast 1xC over rows
  Ref scale(Ref x, double s);
  Ref concat_cols(Ref a, Ref b);
  Ref slice_cols(Ref x, int c0, int c1);
  Ref row(Ref x, int r);                                 // 1xC copy of one row
  Ref concat_rows(const std::vector<Ref>& rows);
  Ref clamp(Ref x, double lo, double hi);
  Ref reparam(Ref mean, Ref log_var, Mat noise);
  Ref gather_rows(Ref table, std::vector<int> idx);
  Ref upsample_rows(Ref x, int factor);

  // scalar losses (1x1 nodes)
  Ref mse_vs(Ref pred, Mat target);       // sum of squares / rows
  Ref ce_rows(Ref logits, std::vector<int> targets);  // mean row cross-entropy
  Ref sym_kld_avg(Ref mean_p, Ref logvar_p, Ref mean_q, Ref logvar_q);
  Ref weighted_sum(const std::vector<Ref>& xs, const std::vector<double>& ws);

  const Mat& val(Ref r) const { return nodes_[size_t(r)].value; }
  double scalar(Ref r) const;
  void backward(Ref loss);
  // grads[i] += scale * d(loss)/d(tensor i); call after backward()
  void add_param_grads(std::vector<Mat>& grads, double scale = 1.0) const;
  const Mat* grad(Ref r) const;  // null when the node was not reached

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool has_grad = false;
    bool needs_grad = false;
    int param_id = -1;
    std::function<void(Tape&)> back;
  };

  std::vector<Node> nodes_;

  Ref push(Mat value, bool needs_grad, std::function<void(Tape&)> back);
  Mat& grad_buf(Ref r);
  bool needs(Ref r) const { return nodes_[size_t(r)].needs_grad; }
  friend struct TapeAccess;
};

struct GradReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  double eps = 0.0;
};

using ValueFn = std::function<double(const ParamSet&)>;
using GradFn = std::function<std::vector<Mat>(const ParamSet&)>;

// Central-difference check of every scalar in `params` against the analytic
// gradient. Relative error uses a unit floor: |a-f| / max(1, |a|, |f|).
GradReport grad_check(const ValueFn& value_fn, const GradFn& grad_fn,
                      ParamSet params, double eps);

}  // namespace llevc
