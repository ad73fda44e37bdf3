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

#pragma once

#include <span>
#include <vector>

#include "ubf/rfdata.hpp"

namespace ubf {

// In-place lower Cholesky factor of a symmetric positive definite matrix.
// Only the lower triangle of `a` is read. Returns false on a non-positive
// pivot, leaving `a` partially overwritten.
bool cholesky_factor(Matrix& a);

// Solves (L L^T) x = b for x given the factor from cholesky_factor.
std::vector<double> cholesky_solve(const Matrix& factor, std::span<const double> b);

}  // namespace ubf
