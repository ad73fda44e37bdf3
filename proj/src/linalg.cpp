/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The UBF Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ubf/linalg.hpp"

#include <cmath>

#include "ubf/errors.hpp"
#include "ubf/simd.hpp"

namespace ubf {

bool cholesky_factor(Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw DimensionError("cholesky: matrix is not square");
  for (std::size_t j = 0; j < n; ++j) {
    auto row_j = a.row(j).first(j);
    const double d = a(j, j) - simd::dot(row_j, row_j);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double pivot = std::sqrt(d);
    a(j, j) = pivot;
    for (std::size_t i = j + 1; i < n; ++i) {
      a(i, j) = (a(i, j) - simd::dot(a.row(i).first(j), row_j)) / pivot;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = 0.0;
  }
  return true;
}

std::vector<double> cholesky_solve(const Matrix& factor, std::span<const double> b) {
  const std::size_t n = factor.rows();
  if (b.size() != n) throw DimensionError("cholesky_solve: rhs length mismatch");
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = (b[i] - simd::dot(factor.row(i).first(i), std::span<const double>(y).first(i))) / factor(i, i);
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = y[i];
    for (std::size_t k = i + 1; k < n; ++k) acc -= factor(k, i) * x[k];
    x[i] = acc / factor(i, i);
  }
  return x;
}

}  // namespace ubf
