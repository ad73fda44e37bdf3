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

#include <algorithm>
#include <atomic>
#include <string>

#include "ubf/errors.hpp"
#include "ubf/simd.hpp"

namespace ubf::simd {

namespace {

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*masked_sum)(const double*, const std::uint8_t*, std::size_t);
  void (*magnitude)(const double*, const double*, double*, std::size_t);
};

constexpr Table kScalarTable{&scalar::dot, &scalar::axpy, &scalar::masked_sum, &scalar::magnitude};
constexpr Table kAvx2Table{&avx2::dot, &avx2::axpy, &avx2::masked_sum, &avx2::magnitude};

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa probe() { return (avx2::compiled() && cpu_has_avx2()) ? Isa::kAvx2 : Isa::kScalar; }

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{probe()};
  return isa;
}

const Table& table() { return current().load(std::memory_order_relaxed) == Isa::kAvx2 ? kAvx2Table : kScalarTable; }

void check_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DimensionError(std::string("simd::") + what + ": length mismatch");
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
  static const Isa isa = probe();
  return isa;
}

Isa active_isa() { return current().load(); }

void set_isa(Isa isa) {
  if (isa == Isa::kAvx2 && detected_isa() != Isa::kAvx2) {
    throw ConfigError("AVX2 kernels are not available on this CPU/build");
  }
  current().store(isa);
}

ScopedIsa::ScopedIsa(Isa isa) : previous_(active_isa()) { set_isa(isa); }
ScopedIsa::~ScopedIsa() { current().store(previous_); }

double dot(std::span<const double> a, std::span<const double> b) {
  check_same_size(a.size(), b.size(), "dot");
  return table().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_same_size(x.size(), y.size(), "axpy");
  table().axpy(alpha, x.data(), y.data(), x.size());
}

double masked_sum(std::span<const double> x, std::span<const std::uint8_t> mask) {
  check_same_size(x.size(), mask.size(), "masked_sum");
  return table().masked_sum(x.data(), mask.data(), x.size());
}

void magnitude(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  check_same_size(a.size(), b.size(), "magnitude");
  check_same_size(a.size(), out.size(), "magnitude");
  table().magnitude(a.data(), b.data(), out.data(), a.size());
}

void convolve_same(std::span<const double> x, std::span<const double> taps, std::span<double> y) {
  check_same_size(x.size(), y.size(), "convolve_same");
  if (taps.size() % 2 == 0) throw ConfigError("convolve_same: kernel length must be odd");
  const auto& t = table();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(taps.size() - 1) / 2;
  std::fill(y.begin(), y.end(), 0.0);
  // tap k contributes taps[k] * x[n + h - k]; walk it as one shifted axpy
  for (std::size_t k = 0; k < taps.size(); ++k) {
    if (taps[k] == 0.0) continue;
    const std::ptrdiff_t shift = h - static_cast<std::ptrdiff_t>(k);
    const std::ptrdiff_t out_begin = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t out_end = std::min<std::ptrdiff_t>(n, n - shift);
    if (out_end <= out_begin) continue;
    t.axpy(taps[k], x.data() + out_begin + shift, y.data() + out_begin,
           static_cast<std::size_t>(out_end - out_begin));
  }
}

}  // namespace ubf::simd
