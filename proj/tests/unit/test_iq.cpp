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

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "ubf/errors.hpp"
#include "ubf/iq.hpp"
#include "ubf/random.hpp"

using namespace ubf;

namespace {

constexpr double kPi = std::numbers::pi;

std::complex<double> response(const HilbertKernel& k, double omega) {
  std::complex<double> acc = 0.0;
  const int h = static_cast<int>(k.length() - 1) / 2;
  for (int m = -h; m <= h; ++m) acc += k.taps[static_cast<std::size_t>(m + h)] * std::polar(1.0, -omega * m);
  return acc;
}

BeamformedLines signal(std::size_t n, auto&& f) {
  BeamformedLines u{Matrix(1, n)};
  for (std::size_t i = 0; i < n; ++i) u.u(0, i) = f(static_cast<double>(i));
  return u;
}

}  // namespace

TEST(Hilbert, TapStructure) {
  const HilbertKernel k = hilbert_fir(63);
  ASSERT_EQ(k.length(), 63u);
  const int h = 31;
  for (int m = -h; m <= h; ++m) {
    const double t = k.taps[static_cast<std::size_t>(m + h)];
    EXPECT_NEAR(t, -k.taps[static_cast<std::size_t>(h - m)], 1e-15);
    if (m % 2 == 0) {
      EXPECT_EQ(t, 0.0);
    } else {
      const double w = 0.54 - 0.46 * std::cos(2.0 * kPi * (m + h) / 62.0);
      EXPECT_NEAR(t, w * 2.0 / (kPi * m), 1e-15);
    }
  }
  EXPECT_NEAR(k.taps[32], 2.0 / kPi * (0.54 - 0.46 * std::cos(2.0 * kPi * 32.0 / 62.0)), 1e-15);
}

TEST(Hilbert, QuarterRateGainNearUnity) {
  const std::complex<double> h = response(hilbert_fir(63), kPi / 2.0);
  EXPECT_GE(std::abs(h), 0.99);
  EXPECT_LE(std::abs(h), 1.01);
  // Phase of -j: a minus ninety degree shift.
  EXPECT_NEAR(std::arg(h), -kPi / 2.0, 1e-9);
}

TEST(Hilbert, RejectsBadLengths) {
  EXPECT_THROW(hilbert_fir(64), ConfigError);
  EXPECT_THROW(hilbert_fir(5), ConfigError);
  EXPECT_NO_THROW(hilbert_fir(7));
}

TEST(Analytic, ToneEnvelopeIsFlat) {
  const double omega = 2.0 * kPi * 5.0e6 / 4.0e7;
  const auto u = signal(400, [&](double n) { return std::cos(omega * n + 0.3); });
  const IqImage iq = to_analytic(u, hilbert_fir(63));
  const Matrix env = iq.envelope();
  for (std::size_t n = 40; n < 360; ++n) EXPECT_NEAR(env(0, n), 1.0, 0.02) << n;
  EXPECT_EQ(iq.i_part, u.u);
}

TEST(Analytic, AmEnvelopeIsRecovered) {
  const double omega = 2.0 * kPi * 5.0e6 / 4.0e7;
  const double slow = 2.0 * kPi / 400.0;
  auto a = [&](double n) { return 1.0 + 0.5 * std::cos(slow * n); };
  const auto u = signal(800, [&](double n) { return a(n) * std::cos(omega * n); });
  const Matrix env = to_analytic(u, hilbert_fir(63)).envelope();
  for (std::size_t n = 40; n < 760; ++n) EXPECT_NEAR(env(0, n), a(static_cast<double>(n)), 0.03 * a(static_cast<double>(n)));
}

TEST(Analytic, NegativeFrequencyResidualIsSmall) {
  // I + jQ of a cosine should be almost a single positive-frequency phasor.
  const double omega = 2.0 * kPi / 8.0;
  const std::size_t n = 512;
  const auto u = signal(n, [&](double t) { return std::cos(omega * t); });
  const IqImage iq = to_analytic(u, hilbert_fir(63));
  std::complex<double> pos = 0.0, neg = 0.0;
  for (std::size_t t = 64; t < n - 64; ++t) {
    const std::complex<double> z(iq.i_part(0, t), iq.q_part(0, t));
    pos += z * std::polar(1.0, -omega * static_cast<double>(t));
    neg += z * std::polar(1.0, omega * static_cast<double>(t));
  }
  EXPECT_LT(std::abs(neg), 0.02 * std::abs(pos));
}

TEST(Analytic, LinearInInput) {
  Rng rng(2);
  BeamformedLines a{Matrix(3, 50)}, b{Matrix(3, 50)}, s{Matrix(3, 50)};
  for (auto& v : a.u.values()) v = rng.normal();
  for (auto& v : b.u.values()) v = rng.normal();
  for (std::size_t k = 0; k < s.u.size(); ++k) s.u.values()[k] = 0.5 * a.u.values()[k] - 2.0 * b.u.values()[k];
  const HilbertKernel k = hilbert_fir(31);
  const IqImage qa = to_analytic(a, k), qb = to_analytic(b, k), qs = to_analytic(s, k);
  for (std::size_t i = 0; i < s.u.size(); ++i) {
    EXPECT_NEAR(qs.q_part.values()[i], 0.5 * qa.q_part.values()[i] - 2.0 * qb.q_part.values()[i], 1e-12);
  }
}

TEST(Analytic, MatchesSpectralOracleInBand) {
  // Periodic in-band signal: the DFT analytic signal is exact, so it serves as the oracle.
  const std::size_t n = 256;
  Rng rng(4);
  std::vector<double> x(n, 0.0);
  for (int tone = 0; tone < 5; ++tone) {
    const double bin = std::floor(rng.uniform(0.12, 0.38) * static_cast<double>(n));
    const double amp = rng.uniform(0.5, 1.0), phase = rng.uniform(0.0, 2.0 * kPi);
    for (std::size_t t = 0; t < n; ++t) x[t] += amp * std::cos(2.0 * kPi * bin * static_cast<double>(t) / n + phase);
  }
  std::vector<double> oracle(n, 0.0);
  for (std::size_t k = 1; k < n / 2; ++k) {
    std::complex<double> xk = 0.0;
    for (std::size_t t = 0; t < n; ++t) xk += x[t] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * t) / n);
    for (std::size_t t = 0; t < n; ++t) {
      oracle[t] += (2.0 / n) * (xk * std::polar(1.0, 2.0 * kPi * static_cast<double>(k * t) / n)).imag();
    }
  }
  const auto u = signal(n, [&](double t) { return x[static_cast<std::size_t>(t)]; });
  const IqImage iq = to_analytic(u, hilbert_fir(63));
  double peak = 0.0, worst = 0.0;
  for (std::size_t t = 0; t < n; ++t) peak = std::max(peak, std::abs(oracle[t]));
  for (std::size_t t = 64; t < n - 64; ++t) worst = std::max(worst, std::abs(iq.q_part(0, t) - oracle[t]));
  EXPECT_LT(worst, 0.03 * peak);
}
