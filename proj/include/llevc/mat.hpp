// llevc/mat.hpp

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

#include <cmath>
#include <cstddef>
#include <cstring>
#include <vector>

#include "llevc/common.hpp"

namespace llevc {

// Dense row-major matrix of doubles. Row vectors are 1xN.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(size_t(r) * size_t(c), 0.0) {}

  double& operator()(int r, int c) { return a[size_t(r) * cols + c]; }
  double operator()(int r, int c) const { return a[size_t(r) * cols + c]; }
  double* row_ptr(int r) { return a.data() + size_t(r) * cols; }
  const double* row_ptr(int r) const { return a.data() + size_t(r) * cols; }
  size_t size() const { return a.size(); }
  bool same_shape(const Mat& o) const {
    return rows == o.rows && cols == o.cols;
  }

  void fill(double v) { a.assign(a.size(), v); }

  static Mat row(const std::vector<double>& v) {
    Mat m(1, int(v.size()));
    m.a = v;
    return m;
  }
};

inline bool same_shape(const Mat& a, const Mat& b) { return a.same_shape(b); }

inline bool all_finite(const Mat& m) {
  for (double v : m.a)
    if (!std::isfinite(v)) return false;
  return true;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  LLEVC_CHECK(a.same_shape(b), "max_abs_diff: shape mismatch");
  double m = 0;
  for (size_t i = 0; i < a.a.size(); ++i)
    m = std::max(m, std::abs(a.a[i] - b.a[i]));
  return m;
}

// true bit-pattern comparison: distinguishes +0.0 from -0.0 and treats
// identical NaNs as equal, unlike operator== on doubles
inline bool bit_equal(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) return false;
  if (a.a.empty()) return true;
  return std::memcmp(a.a.data(), b.a.data(),
                     a.a.size() * sizeof(double)) == 0;
}

}  // namespace llevc
