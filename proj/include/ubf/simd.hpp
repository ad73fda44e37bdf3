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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

// Data-parallel inner loops shared by the beamformers, the FIR filters and the
// convolution layers. Every kernel has a portable scalar reference and an AVX2
// variant; the variant is picked once at runtime from CPUID and can be pinned
// for equivalence testing.
namespace ubf::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

// Best ISA supported by the running CPU and compiled into the binary.
Isa detected_isa();

// ISA currently used by the dispatching entry points below.
Isa active_isa();

// Pins the dispatch table. Throws ConfigError if the ISA is unavailable.
void set_isa(Isa isa);

// Restores the detected ISA on destruction.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa);
  ~ScopedIsa();
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

double dot(std::span<const double> a, std::span<const double> b);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Sum of x[i] over entries with mask[i] != 0.
double masked_sum(std::span<const double> x, std::span<const std::uint8_t> mask);

// out[i] = sqrt(a[i]^2 + b[i]^2)
void magnitude(std::span<const double> a, std::span<const double> b, std::span<double> out);

// Same-length linear convolution with a centred odd-length kernel and zero
// padding: y[n] = sum_k taps[k] * x[n + h - k], h = (taps.size() - 1) / 2.
void convolve_same(std::span<const double> x, std::span<const double> taps, std::span<double> y);

// Raw kernels, exposed for the equivalence tests.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double masked_sum(const double* x, const std::uint8_t* mask, std::size_t n);
void magnitude(const double* a, const double* b, double* out, std::size_t n);
}  // namespace scalar

namespace avx2 {
bool compiled();
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double masked_sum(const double* x, const std::uint8_t* mask, std::size_t n);
void magnitude(const double* a, const double* b, double* out, std::size_t n);
}  // namespace avx2

}  // namespace ubf::simd
