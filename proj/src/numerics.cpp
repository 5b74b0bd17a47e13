// llevc/src/numerics.cpp

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

#include "llevc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "llevc/common.hpp"
#include "llevc/kernels.hpp"

namespace llevc {

namespace {

std::vector<double> clamp_vec(std::vector<double> v, double lo, double hi) {
  for (double& x : v) x = std::min(hi, std::max(lo, x));
  return v;
}

}  // namespace

DiagGaussian::DiagGaussian(std::vector<double> m, std::vector<double> lv)
    : mean(std::move(m)),
      log_var(clamp_vec(std::move(lv), -kLogVarClamp, kLogVarClamp)) {
  LLEVC_CHECK(!mean.empty(), "DiagGaussian: empty mean");
  LLEVC_CHECK(mean.size() == log_var.size(),
              "DiagGaussian: mean/log_var size mismatch " << mean.size()
                                                          << " vs "
                                                          << log_var.size());
  for (double x : mean) LLEVC_CHECK(std::isfinite(x), "DiagGaussian: non-finite mean");
  for (double x : log_var)
    LLEVC_CHECK(std::isfinite(x), "DiagGaussian: non-finite log_var");
}

DiagGaussianSeq::DiagGaussianSeq(Mat m, Mat lv)
    : mean(std::move(m)), log_var(std::move(lv)) {
  LLEVC_CHECK(mean.rows > 0 && mean.cols > 0, "DiagGaussianSeq: empty");
  LLEVC_CHECK(same_shape(mean, log_var), "DiagGaussianSeq: shape mismatch");
  LLEVC_CHECK(all_finite(mean), "DiagGaussianSeq: non-finite mean");
  for (double& x : log_var.a) {
    LLEVC_CHECK(std::isfinite(x), "DiagGaussianSeq: non-finite log_var");
    x = std::min(kLogVarClamp, std::max(-kLogVarClamp, x));
  }
}

DiagGaussian DiagGaussianSeq::frame(int t) const {
  LLEVC_CHECK(t >= 0 && t < frames(), "DiagGaussianSeq::frame: t=" << t
                                       << " out of [0," << frames() << ")");
  std::vector<double> m(mean.row_ptr(t), mean.row_ptr(t) + mean.cols);
  std::vector<double> lv(log_var.row_ptr(t), log_var.row_ptr(t) + log_var.cols);
  return DiagGaussian(std::move(m), std::move(lv));
}

double gaussian_kld(const DiagGaussian& p, const DiagGaussian& q) {
  LLEVC_CHECK(p.dim() == q.dim(), "gaussian_kld: dim mismatch " << p.dim()
                                                                << " vs "
                                                                << q.dim());
  double s = 0.0;
  for (int i = 0; i < p.dim(); ++i) {
    const double a = p.log_var[size_t(i)];
    const double b = q.log_var[size_t(i)];
    const double dm = p.mean[size_t(i)] - q.mean[size_t(i)];
    s += std::exp(a - b) + dm * dm * std::exp(-b) - 1.0 + b - a;
  }
  return 0.5 * s;
}

double symmetrized_kld(const DiagGaussian& p, const DiagGaussian& q) {
  return 0.5 * gaussian_kld(p, q) + 0.5 * gaussian_kld(q, p);
}

std::vector<double> reparam_sample(const DiagGaussian& g,
                                   const std::vector<double>& noise) {
  LLEVC_CHECK(noise.size() == g.mean.size(),
              "reparam_sample: noise size " << noise.size() << " vs dim "
                                            << g.mean.size());
  std::vector<double> out(g.mean.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = g.mean[i] + std::exp(0.5 * g.log_var[i]) * noise[i];
  return out;
}

int ParamSet::add(std::string name, int group, Mat value) {
  LLEVC_CHECK(find(name) < 0, "ParamSet: duplicate tensor '" << name << "'");
  LLEVC_CHECK(value.rows > 0 && value.cols > 0,
              "ParamSet: empty tensor '" << name << "'");
  t.push_back(ParamTensor{std::move(name), group, std::move(value)});
  return int(t.size()) - 1;
}

int ParamSet::find(std::string_view name) const {
  for (size_t i = 0; i < t.size(); ++i)
    if (t[i].name == name) return int(i);
  return -1;
}

int ParamSet::require(std::string_view name) const {
  const int i = find(name);
  LLEVC_CHECK(i >= 0, "ParamSet: missing tensor '" << std::string(name) << "'");
  return i;
}

size_t ParamSet::scalar_count() const {
  size_t n = 0;
  for (const auto& pt : t) n += pt.value.a.size();
  return n;
}

Tape::Ref Tape::push(Mat value, bool needs_grad,
                     std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

Mat& Tape::grad_buf(Ref r) {
  Node& n = nodes_[size_t(r)];
  if (!n.has_grad) {
    n.grad = Mat(n.value.rows, n.value.cols);
    n.has_grad = true;
  }
  return n.grad;
}

Tape::Ref Tape::constant(Mat v) {
  LLEVC_CHECK(v.rows > 0 && v.cols > 0, "Tape::constant: empty");
  return push(std::move(v), false, nullptr);
}

Tape::Ref Tape::param(const ParamSet& set, int tensor_index) {
  LLEVC_CHECK(tensor_index >= 0 && tensor_index < int(set.t.size()),
              "Tape::param: bad index " << tensor_index);
  Ref r = push(set.t[size_t(tensor_index)].value, true, nullptr);
  nodes_[size_t(r)].param_id = tensor_index;
  return r;
}

// Ops push their output node first, then install a closure that knows the
// output ref, so the closure can read its own accumulated gradient.
#define LLEVC_INSTALL_BACK(out_ref, body)                      \
  do {                                                         \
    const Ref self__ = (out_ref);                              \
    nodes_[size_t(self__)].back = [=](Tape& t) { body };       \
  } while (0)

Tape::Ref Tape::affine(Ref x, Ref w, Ref b) {
  const Mat& X = val(x);
  const Mat& W = val(w);
  const Mat& B = val(b);
  Mat Y(X.rows, W.rows);
  kernels::affine_nt(X, W, B, Y);
  const bool ng = needs(x) || needs(w) || needs(b);
  Ref out = push(std::move(Y), ng, nullptr);
  if (ng) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      if (t.needs(x)) kernels::affine_grad_x(G, t.val(w), t.grad_buf(x));
      if (t.needs(w) || t.needs(b)) {
        Mat dw_tmp(t.val(w).rows, t.val(w).cols);
        Mat db_tmp(1, t.val(b).cols);
        kernels::affine_grad_w(G, t.val(x), dw_tmp, db_tmp);
        if (t.needs(w)) {
          Mat& dw = t.grad_buf(w);
          for (size_t i = 0; i < dw.a.size(); ++i) dw.a[i] += dw_tmp.a[i];
        }
        if (t.needs(b)) {
          Mat& db = t.grad_buf(b);
          for (size_t i = 0; i < db.a.size(); ++i) db.a[i] += db_tmp.a[i];
        }
      }
    });
  }
  return out;
}

Tape::Ref Tape::conv_same(Ref x, Ref w, Ref b, int K) {
  const Mat& X = val(x);
  const Mat& W = val(w);
  const Mat& B = val(b);
  Mat Y(X.rows, W.rows);
  kernels::conv1d_same(X, W, B, K, Y);
  const bool ng = needs(x) || needs(w) || needs(b);
  Ref out = push(std::move(Y), ng, nullptr);
  if (ng) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      if (t.needs(x))
        kernels::conv1d_same_grad_x(G, t.val(w), K, t.grad_buf(x));
      if (t.needs(w) || t.needs(b)) {
        Mat dw_tmp(t.val(w).rows, t.val(w).cols);
        Mat db_tmp(1, t.val(b).cols);
        kernels::conv1d_same_grad_w(G, t.val(x), K, dw_tmp, db_tmp);
        if (t.needs(w)) {
          Mat& dw = t.grad_buf(w);
          for (size_t i = 0; i < dw.a.size(); ++i) dw.a[i] += dw_tmp.a[i];
        }
        if (t.needs(b)) {
          Mat& db = t.grad_buf(b);
          for (size_t i = 0; i < db.a.size(); ++i) db.a[i] += db_tmp.a[i];
        }
      }
    });
  }
  return out;
}

Tape::Ref Tape::conv_causal(Ref x, Ref w, Ref b, int K, int dil) {
  const Mat& X = val(x);
  const Mat& W = val(w);
  const Mat& B = val(b);
  Mat Y(X.rows, W.rows);
  kernels::conv1d_causal(X, W, B, K, dil, Y);
  const bool ng = needs(x) || needs(w) || needs(b);
  Ref out = push(std::move(Y), ng, nullptr);
  if (ng) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      if (t.needs(x))
        kernels::conv1d_causal_grad_x(G, t.val(w), K, dil, t.grad_buf(x));
      if (t.needs(w) || t.needs(b)) {
        Mat dw_tmp(t.val(w).rows, t.val(w).cols);
        Mat db_tmp(1, t.val(b).cols);
        kernels::conv1d_causal_grad_w(G, t.val(x), K, dil, dw_tmp, db_tmp);
        if (t.needs(w)) {
          Mat& dw = t.grad_buf(w);
          for (size_t i = 0; i < dw.a.size(); ++i) dw.a[i] += dw_tmp.a[i];
        }
        if (t.needs(b)) {
          Mat& db = t.grad_buf(b);
          for (size_t i = 0; i < db.a.size(); ++i) db.a[i] += db_tmp.a[i];
        }
      }
    });
  }
  return out;
}

Tape::Ref Tape::tanh_(Ref x) {
  Mat Y(val(x).rows, val(x).cols);
  kernels::tanh_fwd(val(x), Y);
  Ref out = push(std::move(Y), needs(x), nullptr);
  if (needs(x)) {
    LLEVC_INSTALL_BACK(out, {
      kernels::tanh_bwd(t.val(self__), t.nodes_[size_t(self__)].grad,
                        t.grad_buf(x));
    });
  }
  return out;
}

Tape::Ref Tape::add(Ref a, Ref b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  LLEVC_CHECK(same_shape(A, B), "Tape::add: shape mismatch");
  Mat Y = A;
  for (size_t i = 0; i < Y.a.size(); ++i) Y.a[i] += B.a[i];
  Ref out = push(std::move(Y), needs(a) || needs(b), nullptr);
  if (nodes_[size_t(out)].needs_grad) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      if (t.needs(a)) {
        Mat& da = t.grad_buf(a);
        for (size_t i = 0; i < G.a.size(); ++i) da.a[i] += G.a[i];
      }
      if (t.needs(b)) {
        Mat& db = t.grad_buf(b);
        for (size_t i = 0; i < G.a.size(); ++i) db.a[i] += G.a[i];
      }
    });
  }
  return out;
}

Tape::Ref Tape::add_rowvec(Ref x, Ref v) {
  const Mat& X = val(x);
  const Mat& V = val(v);
  LLEVC_CHECK(V.rows == 1 && V.cols == X.cols,
              "Tape::add_rowvec: want 1x" << X.cols << ", got " << V.rows
                                          << "x" << V.cols);
  Mat Y = X;
  for (int r = 0; r < Y.rows; ++r)
    for (int c = 0; c < Y.cols; ++c) Y(r, c) += V(0, c);
  Ref out = push(std::move(Y), needs(x) || needs(v), nullptr);
  if (nodes_[size_t(out)].needs_grad) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      if (t.needs(x)) {
        Mat& dx = t.grad_buf(x);
        for (size_t i = 0; i < G.a.size(); ++i) dx.a[i] += G.a[i];
      }
      if (t.needs(v)) {
        Mat& dv = t.grad_buf(v);
        for (int c = 0; c < G.cols; ++c) {
          double s = 0.0;
          for (int r = 0; r < G.rows; ++r) s += G(r, c);
          dv(0, c) += s;
        }
      }
    });
  }
  return out;
}

Tape::Ref Tape::scale(Ref x, double s) {
  Mat Y = val(x);
  for (double& e : Y.a) e *= s;
  Ref out = push(std::move(Y), needs(x), nullptr);
  if (needs(x)) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      Mat& dx = t.grad_buf(x);
      for (size_t i = 0; i < G.a.size(); ++i) dx.a[i] += s * G.a[i];
    });
  }
  return out;
}

Tape::Ref Tape::concat_cols(Ref a, Ref b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  LLEVC_CHECK(A.rows == B.rows, "Tape::concat_cols: row mismatch");
  Mat Y(A.rows, A.cols + B.cols);
  for (int r = 0; r < A.rows; ++r) {
    for (int c = 0; c < A.cols; ++c) Y(r, c) = A(r, c);
    for (int c = 0; c < B.cols; ++c) Y(r, A.cols + c) = B(r, c);
  }
  const int ca = A.cols;
  Ref out = push(std::move(Y), needs(a) || needs(b), nullptr);
  if (nodes_[size_t(out)].needs_grad) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      if (t.needs(a)) {
        Mat& da = t.grad_buf(a);
        for (int r = 0; r < da.rows; ++r)
          for (int c = 0; c < ca; ++c) da(r, c) += G(r, c);
      }
      if (t.needs(b)) {
        Mat& db = t.grad_buf(b);
        for (int r = 0; r < db.rows; ++r)
          for (int c = 0; c < db.cols; ++c) db(r, c) += G(r, ca + c);
      }
    });
  }
  return out;
}

Tape::Ref Tape::slice_cols(Ref x, int c0, int c1) {
  const Mat& X = val(x);
  LLEVC_CHECK(0 <= c0 && c0 < c1 && c1 <= X.cols,
              "Tape::slice_cols: bad range [" << c0 << "," << c1 << ") of "
                                              << X.cols);
  Mat Y(X.rows, c1 - c0);
  for (int r = 0; r < X.rows; ++r)
    for (int c = c0; c < c1; ++c) Y(r, c - c0) = X(r, c);
  Ref out = push(std::move(Y), needs(x), nullptr);
  if (needs(x)) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      Mat& dx = t.grad_buf(x);
      for (int r = 0; r < G.rows; ++r)
        for (int c = 0; c < G.cols; ++c) dx(r, c0 + c) += G(r, c);
    });
  }
  return out;
}

Tape::Ref Tape::row(Ref x, int r) {
  const Mat& X = val(x);
  LLEVC_CHECK(r >= 0 && r < X.rows, "Tape::row: r=" << r << " of " << X.rows);
  Mat Y(1, X.cols);
  for (int c = 0; c < X.cols; ++c) Y(0, c) = X(r, c);
  Ref out = push(std::move(Y), needs(x), nullptr);
  if (needs(x)) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      Mat& dx = t.grad_buf(x);
      for (int c = 0; c < G.cols; ++c) dx(r, c) += G(0, c);
    });
  }
  return out;
}

Tape::Ref Tape::concat_rows(const std::vector<Ref>& rows) {
  LLEVC_CHECK(!rows.empty(), "Tape::concat_rows: empty input");
  const int cols = val(rows[0]).cols;
  int total = 0;
  bool ng = false;
  for (Ref r : rows) {
    LLEVC_CHECK(val(r).cols == cols, "Tape::concat_rows: col mismatch");
    total += val(r).rows;
    ng = ng || needs(r);
  }
  Mat Y(total, cols);
  int at = 0;
  for (Ref r : rows) {
    const Mat& X = val(r);
    for (int i = 0; i < X.rows; ++i)
      for (int c = 0; c < cols; ++c) Y(at + i, c) = X(i, c);
    at += X.rows;
  }
  std::vector<Ref> parts = rows;
  Ref out = push(std::move(Y), ng, nullptr);
  if (ng) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      int at2 = 0;
      for (Ref r : parts) {
        const int nr = t.val(r).rows;
        if (t.needs(r)) {
          Mat& dx = t.grad_buf(r);
          for (int i = 0; i < nr; ++i)
            for (int c = 0; c < G.cols; ++c) dx(i, c) += G(at2 + i, c);
        }
        at2 += nr;
      }
    });
  }
  return out;
}

Tape::Ref Tape::clamp(Ref x, double lo, double hi) {
  LLEVC_CHECK(lo < hi, "Tape::clamp: lo >= hi");
  const Mat& X = val(x);
  Mat Y = X;
  for (double& e : Y.a) e = std::min(hi, std::max(lo, e));
  Ref out = push(std::move(Y), needs(x), nullptr);
  if (needs(x)) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      const Mat& Xv = t.val(x);
      Mat& dx = t.grad_buf(x);
      for (size_t i = 0; i < G.a.size(); ++i)
        if (Xv.a[i] > lo && Xv.a[i] < hi) dx.a[i] += G.a[i];
    });
  }
  return out;
}

Tape::Ref Tape::reparam(Ref mean, Ref log_var, Mat noise) {
  const Mat& M = val(mean);
  const Mat& LV = val(log_var);
  LLEVC_CHECK(same_shape(M, LV), "Tape::reparam: mean/log_var mismatch");
  LLEVC_CHECK(same_shape(M, noise), "Tape::reparam: noise shape mismatch");
  Mat Y(M.rows, M.cols);
  for (size_t i = 0; i < Y.a.size(); ++i)
    Y.a[i] = M.a[i] + std::exp(0.5 * LV.a[i]) * noise.a[i];
  Mat eps = std::move(noise);
  Ref out = push(std::move(Y), needs(mean) || needs(log_var), nullptr);
  if (nodes_[size_t(out)].needs_grad) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      if (t.needs(mean)) {
        Mat& dm = t.grad_buf(mean);
        for (size_t i = 0; i < G.a.size(); ++i) dm.a[i] += G.a[i];
      }
      if (t.needs(log_var)) {
        const Mat& LVv = t.val(log_var);
        Mat& dlv = t.grad_buf(log_var);
        for (size_t i = 0; i < G.a.size(); ++i)
          dlv.a[i] += G.a[i] * 0.5 * std::exp(0.5 * LVv.a[i]) * eps.a[i];
      }
    });
  }
  return out;
}

Tape::Ref Tape::gather_rows(Ref table, std::vector<int> idx) {
  const Mat& T = val(table);
  LLEVC_CHECK(!idx.empty(), "Tape::gather_rows: empty index");
  for (int i : idx)
    LLEVC_CHECK(i >= 0 && i < T.rows,
                "Tape::gather_rows: index " << i << " of " << T.rows);
  Mat Y(int(idx.size()), T.cols);
  for (size_t r = 0; r < idx.size(); ++r)
    for (int c = 0; c < T.cols; ++c) Y(int(r), c) = T(idx[r], c);
  std::vector<int> ix = std::move(idx);
  Ref out = push(std::move(Y), needs(table), nullptr);
  if (needs(table)) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      Mat& dT = t.grad_buf(table);
      for (size_t r = 0; r < ix.size(); ++r)
        for (int c = 0; c < G.cols; ++c) dT(ix[r], c) += G(int(r), c);
    });
  }
  return out;
}

Tape::Ref Tape::upsample_rows(Ref x, int factor) {
  LLEVC_CHECK(factor >= 1, "Tape::upsample_rows: factor=" << factor);
  const Mat& X = val(x);
  Mat Y(X.rows * factor, X.cols);
  for (int r = 0; r < Y.rows; ++r)
    for (int c = 0; c < X.cols; ++c) Y(r, c) = X(r / factor, c);
  Ref out = push(std::move(Y), needs(x), nullptr);
  if (needs(x)) {
    LLEVC_INSTALL_BACK(out, {
      const Mat& G = t.nodes_[size_t(self__)].grad;
      Mat& dx = t.grad_buf(x);
      for (int r = 0; r < G.rows; ++r)
        for (int c = 0; c < G.cols; ++c) dx(r / factor, c) += G(r, c);
    });
  }
  return out;
}

Tape::Ref Tape::mse_vs(Ref pred, Mat target) {
  const Mat& P = val(pred);
  LLEVC_CHECK(same_shape(P, target), "Tape::mse_vs: shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < P.a.size(); ++i) {
    const double d = P.a[i] - target.a[i];
    s += d * d;
  }
  Mat Y(1, 1);
  Y(0, 0) = s / double(P.rows);
  Mat T = std::move(target);
  Ref out = push(std::move(Y), needs(pred), nullptr);
  if (needs(pred)) {
    LLEVC_INSTALL_BACK(out, {
      const double g = t.nodes_[size_t(self__)].grad(0, 0);
      const Mat& Pv = t.val(pred);
      Mat& dp = t.grad_buf(pred);
      const double k = 2.0 * g / double(Pv.rows);
      for (size_t i = 0; i < Pv.a.size(); ++i)
        dp.a[i] += k * (Pv.a[i] - T.a[i]);
    });
  }
  return out;
}

Tape::Ref Tape::ce_rows(Ref logits, std::vector<int> targets) {
  const Mat& L = val(logits);
  LLEVC_CHECK(int(targets.size()) == L.rows,
              "Tape::ce_rows: " << targets.size() << " targets for " << L.rows
                                << " rows");
  for (int c : targets)
    LLEVC_CHECK(c >= 0 && c < L.cols, "Tape::ce_rows: class " << c << " of "
                                                              << L.cols);
  Mat P(L.rows, L.cols);
  kernels::softmax_rows(L, P);
  // log p computed in log space; log(softmax) would overflow to -inf when the
  // target class underflows
  double s = 0.0;
  for (int r = 0; r < L.rows; ++r) {
    double mx = L(r, 0);
    for (int c = 1; c < L.cols; ++c) mx = std::max(mx, L(r, c));
    double z = 0.0;
    for (int c = 0; c < L.cols; ++c) z += std::exp(L(r, c) - mx);
    s -= L(r, targets[size_t(r)]) - mx - std::log(z);
  }
  Mat Y(1, 1);
  Y(0, 0) = s / double(L.rows);
  Mat probs = std::move(P);
  std::vector<int> tg = std::move(targets);
  Ref out = push(std::move(Y), needs(logits), nullptr);
  if (needs(logits)) {
    LLEVC_INSTALL_BACK(out, {
      const double g = t.nodes_[size_t(self__)].grad(0, 0);
      Mat& dl = t.grad_buf(logits);
      const double k = g / double(dl.rows);
      for (int r = 0; r < dl.rows; ++r)
        for (int c = 0; c < dl.cols; ++c)
          dl(r, c) += k * (probs(r, c) - (c == tg[size_t(r)] ? 1.0 : 0.0));
    });
  }
  return out;
}

Tape::Ref Tape::sym_kld_avg(Ref mean_p, Ref logvar_p, Ref mean_q,
                            Ref logvar_q) {
  const Mat& MP = val(mean_p);
  const Mat& AP = val(logvar_p);
  const Mat& MQ = val(mean_q);
  const Mat& AQ = val(logvar_q);
  LLEVC_CHECK(same_shape(MP, AP) && same_shape(MP, MQ) && same_shape(MP, AQ),
              "Tape::sym_kld_avg: shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < MP.a.size(); ++i) {
    const double a = AP.a[i];
    const double b = AQ.a[i];
    const double dm = MP.a[i] - MQ.a[i];
    const double kl_pq = std::exp(a - b) + dm * dm * std::exp(-b) - 1.0 + b - a;
    const double kl_qp = std::exp(b - a) + dm * dm * std::exp(-a) - 1.0 + a - b;
    s += 0.25 * (kl_pq + kl_qp);  // 0.5 per-KL factor times 0.5 symmetrizer
  }
  Mat Y(1, 1);
  Y(0, 0) = s / double(MP.rows);
  const bool ng =
      needs(mean_p) || needs(logvar_p) || needs(mean_q) || needs(logvar_q);
  Ref out = push(std::move(Y), ng, nullptr);
  if (ng) {
    LLEVC_INSTALL_BACK(out, {
      const double g0 = t.nodes_[size_t(self__)].grad(0, 0);
      const Mat& mp = t.val(mean_p);
      const Mat& ap = t.val(logvar_p);
      const Mat& mq = t.val(mean_q);
      const Mat& aq = t.val(logvar_q);
      const double k = g0 / double(mp.rows);
      for (size_t i = 0; i < mp.a.size(); ++i) {
        const double a = ap.a[i];
        const double b = aq.a[i];
        const double dm = mp.a[i] - mq.a[i];
        const double ea_b = std::exp(a - b);
        const double eb_a = std::exp(b - a);
        const double e_a = std::exp(-a);
        const double e_b = std::exp(-b);
        if (t.needs(mean_p))
          t.grad_buf(mean_p).a[i] += k * 0.5 * dm * (e_a + e_b);
        if (t.needs(mean_q))
          t.grad_buf(mean_q).a[i] -= k * 0.5 * dm * (e_a + e_b);
        if (t.needs(logvar_p))
          t.grad_buf(logvar_p).a[i] += k * 0.25 * (ea_b - eb_a - dm * dm * e_a);
        if (t.needs(logvar_q))
          t.grad_buf(logvar_q).a[i] += k * 0.25 * (eb_a - ea_b - dm * dm * e_b);
      }
    });
  }
  return out;
}

Tape::Ref Tape::weighted_sum(const std::vector<Ref>& xs,
                             const std::vector<double>& ws) {
  LLEVC_CHECK(!xs.empty() && xs.size() == ws.size(),
              "Tape::weighted_sum: " << xs.size() << " terms, " << ws.size()
                                     << " weights");
  double s = 0.0;
  bool ng = false;
  for (size_t i = 0; i < xs.size(); ++i) {
    s += ws[i] * scalar(xs[i]);
    ng = ng || needs(xs[i]);
  }
  Mat Y(1, 1);
  Y(0, 0) = s;
  std::vector<Ref> terms = xs;
  std::vector<double> wts = ws;
  Ref out = push(std::move(Y), ng, nullptr);
  if (ng) {
    LLEVC_INSTALL_BACK(out, {
      const double g = t.nodes_[size_t(self__)].grad(0, 0);
      for (size_t i = 0; i < terms.size(); ++i)
        if (t.needs(terms[i])) t.grad_buf(terms[i])(0, 0) += wts[i] * g;
    });
  }
  return out;
}

double Tape::scalar(Ref r) const {
  const Mat& v = val(r);
  LLEVC_CHECK(v.rows == 1 && v.cols == 1,
              "Tape::scalar: node is " << v.rows << "x" << v.cols);
  return v(0, 0);
}

void Tape::backward(Ref loss) {
  LLEVC_CHECK(loss >= 0 && loss < int(nodes_.size()), "Tape::backward: bad ref");
  const Mat& lv = val(loss);
  LLEVC_CHECK(lv.rows == 1 && lv.cols == 1, "Tape::backward: loss not scalar");
  grad_buf(loss)(0, 0) += 1.0;
  for (int i = loss; i >= 0; --i) {
    Node& n = nodes_[size_t(i)];
    if (n.has_grad && n.back) n.back(*this);
  }
}

void Tape::add_param_grads(std::vector<Mat>& grads, double scale) const {
  for (const Node& n : nodes_) {
    if (n.param_id < 0 || !n.has_grad) continue;
    LLEVC_CHECK(n.param_id < int(grads.size()),
                "Tape::add_param_grads: grads too small");
    Mat& g = grads[size_t(n.param_id)];
    LLEVC_CHECK(same_shape(g, n.grad), "Tape::add_param_grads: shape mismatch");
    for (size_t i = 0; i < g.a.size(); ++i) g.a[i] += scale * n.grad.a[i];
  }
}

const Mat* Tape::grad(Ref r) const {
  const Node& n = nodes_[size_t(r)];
  return n.has_grad ? &n.grad : nullptr;
}

GradReport grad_check(const ValueFn& value_fn, const GradFn& grad_fn,
                      ParamSet params, double eps) {
  LLEVC_CHECK(eps > 0.0, "grad_check: eps must be positive");
  GradReport rep;
  rep.eps = eps;
  const std::vector<Mat> analytic = grad_fn(params);
  LLEVC_CHECK(analytic.size() == params.t.size(),
              "grad_check: gradient count mismatch");
  for (size_t ti = 0; ti < params.t.size(); ++ti) {
    Mat& v = params.t[ti].value;
    LLEVC_CHECK(same_shape(analytic[ti], v),
                "grad_check: gradient shape mismatch for '" << params.t[ti].name
                                                            << "'");
    for (size_t i = 0; i < v.a.size(); ++i) {
      const double orig = v.a[i];
      v.a[i] = orig + eps;
      const double fp = value_fn(params);
      v.a[i] = orig - eps;
      const double fm = value_fn(params);
      v.a[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double an = analytic[ti].a[i];
      const double rel =
          std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = params.t[ti].name + "[" +
                          std::to_string(i / size_t(v.cols)) + "," +
                          std::to_string(i % size_t(v.cols)) + "]";
      }
    }
  }
  return rep;
}

}  // namespace llevc
