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

#include "ubf/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "binary_io.hpp"
#include "ubf/errors.hpp"
#include "ubf/linalg.hpp"
#include "ubf/random.hpp"
#include "ubf/simd.hpp"

namespace ubf {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

// Valid flat range of an H x W plane for a (dy, dx) shift: positions f whose
// shifted partner f + dy*W + dx stays inside the plane, except for the
// row-wrapped columns which `for_wrapped` enumerates for correction.
struct ShiftRange {
  std::ptrdiff_t lo = 0, hi = 0, offset = 0;
  int y0 = 0, y1 = 0;
  bool empty() const { return lo >= hi; }
};

ShiftRange shift_range(int h, int w, int dy, int dx) {
  ShiftRange r;
  if (std::abs(dx) >= w || std::abs(dy) >= h) return r;
  r.y0 = std::max(0, -dy);
  r.y1 = std::min(h, h - dy);
  r.offset = static_cast<std::ptrdiff_t>(dy) * w + dx;
  r.lo = static_cast<std::ptrdiff_t>(r.y0) * w + std::max(0, -dx);
  r.hi = static_cast<std::ptrdiff_t>(r.y1) * w - std::max(0, dx);
  return r;
}

// Calls fn(f) for every position inside [lo, hi) whose shifted partner wrapped
// into a neighbouring row.
template <typename Fn>
void for_wrapped(const ShiftRange& r, int w, int dx, Fn&& fn) {
  if (dx == 0) return;
  for (int y = r.y0; y < r.y1; ++y) {
    const int x_begin = dx < 0 ? 0 : w - dx;
    const int x_end = dx < 0 ? -dx : w;
    for (int x = x_begin; x < x_end; ++x) {
      const std::ptrdiff_t f = static_cast<std::ptrdiff_t>(y) * w + x;
      if (f >= r.lo && f < r.hi) fn(f);
    }
  }
}

// dst[f] += alpha * src[f + dy*W + dx] wherever both positions lie in the plane.
void shifted_axpy(double alpha, const double* src, double* dst, int h, int w, int dy, int dx) {
  const ShiftRange r = shift_range(h, w, dy, dx);
  if (r.empty()) return;
  const auto n = static_cast<std::size_t>(r.hi - r.lo);
  simd::axpy(alpha, {src + r.lo + r.offset, n}, {dst + r.lo, n});
  for_wrapped(r, w, dx, [&](std::ptrdiff_t f) { dst[f] -= alpha * src[f + r.offset]; });
}

// sum_f a[f] * src[f + dy*W + dx] over the same positions.
double shifted_dot(const double* a, const double* src, int h, int w, int dy, int dx) {
  const ShiftRange r = shift_range(h, w, dy, dx);
  if (r.empty()) return 0.0;
  const auto n = static_cast<std::size_t>(r.hi - r.lo);
  double s = simd::dot({a + r.lo, n}, {src + r.lo + r.offset, n});
  for_wrapped(r, w, dx, [&](std::ptrdiff_t f) { s -= a[f] * src[f + r.offset]; });
  return s;
}

using LayerPlan = SkipLink;

std::vector<LayerPlan> make_plan(const ArchSpec& a) { return skip_plan(a); }

void conv_into(const ConvLayer& layer, const double* in, double* out, int h, int w, bool with_bias) {
  const auto hw = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  const int ph = (layer.kernel_h - 1) / 2;
  const int pw = (layer.kernel_w - 1) / 2;
  for (int o = 0; o < layer.out_channels; ++o) {
    double* dst = out + static_cast<std::size_t>(o) * hw;
    std::fill_n(dst, hw, with_bias && layer.has_bias ? layer.bias[static_cast<std::size_t>(o)] : 0.0);
    for (int i = 0; i < layer.in_channels; ++i) {
      const double* src = in + static_cast<std::size_t>(i) * hw;
      for (int ky = 0; ky < layer.kernel_h; ++ky) {
        for (int kx = 0; kx < layer.kernel_w; ++kx) {
          const double wt = layer.w(o, i, ky, kx);
          if (wt != 0.0) shifted_axpy(wt, src, dst, h, w, ky - ph, kx - pw);
        }
      }
    }
  }
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Forward/backward state for one batch.
class Pass {
 public:
  Pass(const NetworkParams& params, Mode mode, std::size_t batch)
      : p_(params), mode_(mode), batch_(batch), plan_(make_plan(params.arch)),
        h_(params.arch.height), w_(params.arch.width),
        hw_(static_cast<std::size_t>(h_) * static_cast<std::size_t>(w_)) {
    const std::size_t n = p_.layers.size();
    in_.resize(n);
    pre_.resize(n);
    xhat_.resize(n);
    y_.resize(n);
    out_.resize(n);
    mean_.resize(n);
    inv_std_.resize(n);
    batch_var_.resize(n);
  }

  std::vector<std::vector<double>> run(const std::vector<std::span<const double>>& slabs) {
    const ArchSpec& a = p_.arch;
    std::vector<std::vector<std::vector<double>>> skips(static_cast<std::size_t>(a.stages));
    std::vector<std::vector<double>> cur(batch_);
    for (std::size_t b = 0; b < batch_; ++b) {
      if (slabs[b].size() != a.input_size()) {
        throw DimensionError("slab has " + std::to_string(slabs[b].size()) + " values, network expects " +
                             std::to_string(a.input_size()));
      }
      cur[b].assign(slabs[b].begin(), slabs[b].end());
    }
    for (std::size_t l = 0; l < p_.layers.size(); ++l) {
      const ConvLayer& layer = p_.layers[l];
      const LayerPlan& plan = plan_[l];
      in_[l].resize(batch_);
      for (std::size_t b = 0; b < batch_; ++b) {
        in_[l][b] = std::move(cur[b]);
        if (plan.concat_skip >= 0) {
          const auto& s = skips[static_cast<std::size_t>(plan.concat_skip)][b];
          in_[l][b].insert(in_[l][b].end(), s.begin(), s.end());
        }
      }
      layer_forward(l, layer);
      for (std::size_t b = 0; b < batch_; ++b) {
        if (!all_finite(out_[l][b])) throw NumericalError("non-finite activation at layer " + std::to_string(l));
        cur[b] = out_[l][b];
      }
      if (plan.save_skip >= 0) skips[static_cast<std::size_t>(plan.save_skip)] = cur;
    }
    // Average over the receive axis.
    std::vector<std::vector<double>> result(batch_, std::vector<double>(a.output_size(), 0.0));
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t r = 0; r < a.output_size(); ++r) {
        const double* row = cur[b].data() + r * static_cast<std::size_t>(w_);
        result[b][r] = std::accumulate(row, row + w_, 0.0) / w_;
      }
      if (a.bypass) {
        const auto extra = bypass_apply(p_, slabs[b]);
        for (std::size_t r = 0; r < a.output_size(); ++r) result[b][r] += extra[r];
      }
    }
    return result;
  }

  // d(loss)/d(output) in, parameter gradient out.
  NetworkParams back(const std::vector<std::vector<double>>& g_result) {
    const ArchSpec& a = p_.arch;
    NetworkParams grad = NetworkParams::zeros(a);
    for (auto& layer : grad.layers) std::fill(layer.gamma.begin(), layer.gamma.end(), 0.0);
    for (auto& layer : grad.layers) std::fill(layer.running_var.begin(), layer.running_var.end(), 0.0);
    if (a.bypass) {
      const auto planes = static_cast<std::size_t>(a.depth_planes);
      const auto height = static_cast<std::size_t>(h_);
      for (std::size_t b = 0; b < batch_; ++b) {
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t y = 0; y < height; ++y) {
            const double* row = in_[0][b].data() + (p * height + y) * static_cast<std::size_t>(w_);
            const double m = std::accumulate(row, row + w_, 0.0) / w_;
            for (std::size_t o = 0; o < 2; ++o) grad.bypass[o * planes + p] += g_result[b][o * height + y] * m;
          }
        }
      }
    }
    std::vector<std::vector<std::vector<double>>> g_skip(static_cast<std::size_t>(a.stages));
    std::vector<std::vector<double>> g(batch_);
    for (std::size_t b = 0; b < batch_; ++b) {
      g[b].assign(a.output_size() * static_cast<std::size_t>(w_), 0.0);
      for (std::size_t r = 0; r < a.output_size(); ++r) {
        std::fill_n(g[b].begin() + static_cast<std::ptrdiff_t>(r * static_cast<std::size_t>(w_)), w_,
                    g_result[b][r] / w_);
      }
    }
    for (std::size_t l = p_.layers.size(); l-- > 0;) {
      const LayerPlan& plan = plan_[l];
      if (plan.save_skip >= 0) {
        auto& gs = g_skip[static_cast<std::size_t>(plan.save_skip)];
        for (std::size_t b = 0; b < batch_ && !gs.empty(); ++b) {
          simd::axpy(1.0, gs[b], g[b]);
        }
      }
      std::vector<std::vector<double>> g_in = layer_backward(l, p_.layers[l], grad.layers[l], g);
      if (plan.concat_skip >= 0) {
        const std::size_t split = static_cast<std::size_t>(a.channels) * hw_;
        auto& gs = g_skip[static_cast<std::size_t>(plan.concat_skip)];
        gs.resize(batch_);
        for (std::size_t b = 0; b < batch_; ++b) {
          gs[b].assign(g_in[b].begin() + static_cast<std::ptrdiff_t>(split), g_in[b].end());
          g_in[b].resize(split);
        }
      }
      g = std::move(g_in);
    }
    return grad;
  }

  const std::vector<std::vector<double>>& batch_mean() const { return mean_; }
  const std::vector<std::vector<double>>& batch_var() const { return batch_var_; }

 private:
  void layer_forward(std::size_t l, const ConvLayer& layer) {
    pre_[l].assign(batch_, std::vector<double>(static_cast<std::size_t>(layer.out_channels) * hw_, 0.0));
    for (std::size_t b = 0; b < batch_; ++b) conv_into(layer, in_[l][b].data(), pre_[l][b].data(), h_, w_, true);
    if (layer.norm) {
      normalize(l, layer);
    } else {
      y_[l] = pre_[l];
    }
    out_[l] = y_[l];
    if (layer.relu) {
      for (auto& v : out_[l]) {
        for (auto& x : v) x = x > 0.0 ? x : 0.0;
      }
    }
  }

  void normalize(std::size_t l, const ConvLayer& layer) {
    const auto co = static_cast<std::size_t>(layer.out_channels);
    mean_[l].assign(co, 0.0);
    inv_std_[l].assign(co, 0.0);
    batch_var_[l].assign(co, 0.0);
    const double count = static_cast<double>(batch_ * hw_);
    for (std::size_t o = 0; o < co; ++o) {
      double mu, var;
      if (mode_ == Mode::kTrain) {
        double s = 0.0;
        for (std::size_t b = 0; b < batch_; ++b) {
          const double* v = pre_[l][b].data() + o * hw_;
          s = std::accumulate(v, v + hw_, s);
        }
        mu = s / count;
        double sq = 0.0;
        for (std::size_t b = 0; b < batch_; ++b) {
          const double* v = pre_[l][b].data() + o * hw_;
          for (std::size_t k = 0; k < hw_; ++k) sq += (v[k] - mu) * (v[k] - mu);
        }
        var = sq / count;
      } else {
        mu = layer.running_mean[o];
        var = layer.running_var[o];
      }
      mean_[l][o] = mu;
      batch_var_[l][o] = var;
      inv_std_[l][o] = 1.0 / std::sqrt(var + kNormEpsilon);
    }
    xhat_[l] = pre_[l];
    y_[l] = pre_[l];
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t o = 0; o < co; ++o) {
        double* xh = xhat_[l][b].data() + o * hw_;
        double* y = y_[l][b].data() + o * hw_;
        for (std::size_t k = 0; k < hw_; ++k) {
          xh[k] = (xh[k] - mean_[l][o]) * inv_std_[l][o];
          y[k] = layer.gamma[o] * xh[k] + layer.beta[o];
        }
      }
    }
  }

  std::vector<std::vector<double>> layer_backward(std::size_t l, const ConvLayer& layer, ConvLayer& grad,
                                                  std::vector<std::vector<double>>& g) {
    const auto co = static_cast<std::size_t>(layer.out_channels);
    const int ci = layer.in_channels;
    const int ph = (layer.kernel_h - 1) / 2;
    const int pw = (layer.kernel_w - 1) / 2;
    if (layer.relu) {
      for (std::size_t b = 0; b < batch_; ++b) {
        for (std::size_t k = 0; k < g[b].size(); ++k) {
          if (!(y_[l][b][k] > 0.0)) g[b][k] = 0.0;
        }
      }
    }
    if (layer.norm) {
      const double count = static_cast<double>(batch_ * hw_);
      for (std::size_t o = 0; o < co; ++o) {
        double sg = 0.0, sgx = 0.0;
        for (std::size_t b = 0; b < batch_; ++b) {
          const double* gy = g[b].data() + o * hw_;
          const double* xh = xhat_[l][b].data() + o * hw_;
          for (std::size_t k = 0; k < hw_; ++k) {
            sg += gy[k];
            sgx += gy[k] * xh[k];
          }
        }
        grad.gamma[o] += sgx;
        grad.beta[o] += sg;
        const double scale = layer.gamma[o] * inv_std_[l][o];
        for (std::size_t b = 0; b < batch_; ++b) {
          double* gy = g[b].data() + o * hw_;
          const double* xh = xhat_[l][b].data() + o * hw_;
          for (std::size_t k = 0; k < hw_; ++k) {
            gy[k] = mode_ == Mode::kTrain ? scale * (gy[k] - sg / count - xh[k] * sgx / count) : scale * gy[k];
          }
        }
      }
    }
    std::vector<std::vector<double>> g_in(batch_, std::vector<double>(static_cast<std::size_t>(ci) * hw_, 0.0));
    for (std::size_t b = 0; b < batch_; ++b) {
      const double* in = in_[l][b].data();
      for (std::size_t o = 0; o < co; ++o) {
        const double* gp = g[b].data() + o * hw_;
        if (layer.has_bias) grad.bias[o] += std::accumulate(gp, gp + hw_, 0.0);
        for (int i = 0; i < ci; ++i) {
          const double* src = in + static_cast<std::size_t>(i) * hw_;
          double* gi = g_in[b].data() + static_cast<std::size_t>(i) * hw_;
          for (int ky = 0; ky < layer.kernel_h; ++ky) {
            for (int kx = 0; kx < layer.kernel_w; ++kx) {
              grad.w(static_cast<int>(o), i, ky, kx) += shifted_dot(gp, src, h_, w_, ky - ph, kx - pw);
              const double wt = layer.w(static_cast<int>(o), i, ky, kx);
              if (wt != 0.0) shifted_axpy(wt, gp, gi, h_, w_, ph - ky, pw - kx);
            }
          }
        }
      }
    }
    return g_in;
  }

  const NetworkParams& p_;
  Mode mode_;
  std::size_t batch_;
  std::vector<LayerPlan> plan_;
  int h_, w_;
  std::size_t hw_;
  // [layer][sample] activations
  std::vector<std::vector<std::vector<double>>> in_, pre_, xhat_, y_, out_;
  std::vector<std::vector<double>> mean_, inv_std_, batch_var_;
};

template <typename Layer, typename Fn>
void visit_trainables(Layer& layer, Fn&& fn) {
  for (auto& v : layer.weights) fn(v);
  for (auto& v : layer.bias) fn(v);
  for (auto& v : layer.gamma) fn(v);
  for (auto& v : layer.beta) fn(v);
}

}  // namespace

std::vector<SkipLink> skip_plan(const ArchSpec& a) {
  std::vector<SkipLink> plan(static_cast<std::size_t>(a.conv_layers()));
  const int p = a.convs_per_stage;
  for (int s = 0; s < a.stages; ++s) plan[static_cast<std::size_t>((s + 1) * p - 1)].save_skip = s;
  const int dec0 = a.stages * p + p;
  for (int s = 0; s < a.stages; ++s) plan[static_cast<std::size_t>(dec0 + s * p)].concat_skip = a.stages - 1 - s;
  return plan;
}

std::vector<double> conv_apply(const ConvLayer& layer, std::span<const double> in, int height, int width,
                               bool with_bias) {
  const auto hw = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (in.size() != static_cast<std::size_t>(layer.in_channels) * hw) throw DimensionError("conv_apply: input size");
  std::vector<double> out(static_cast<std::size_t>(layer.out_channels) * hw);
  conv_into(layer, in.data(), out.data(), height, width, with_bias);
  return out;
}

NormKind parse_norm_kind(std::string_view name) {
  if (name == "batch") return NormKind::kBatch;
  if (name == "none") return NormKind::kNone;
  throw ConfigError("unknown norm kind '" + std::string(name) + "'");
}

std::string_view norm_kind_name(NormKind kind) { return kind == NormKind::kBatch ? "batch" : "none"; }

void ArchSpec::validate() const {
  if (stages < 0) throw ConfigError("stages must be >= 0");
  if (convs_per_stage < 1) throw ConfigError("convs_per_stage must be >= 1");
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (depth_planes != 1 && depth_planes != 3) throw ConfigError("depth_planes must be 1 or 3");
  if (height < 1 || width < 1) throw ConfigError("input height and width must be >= 1");
}

std::size_t ArchSpec::input_size() const {
  return static_cast<std::size_t>(depth_planes) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
}

ArchSpec ArchSpec::full_scale() {
  ArchSpec a;
  a.stages = 4;
  a.convs_per_stage = 4;
  a.channels = 64;
  a.height = 96;
  a.width = 64;
  a.bypass = false;
  return a;
}

NetworkParams NetworkParams::zeros(const ArchSpec& arch) {
  arch.validate();
  NetworkParams p;
  p.arch = arch;
  const int total = arch.conv_layers();
  const auto plan = make_plan(arch);
  const bool norm = arch.norm == NormKind::kBatch;
  for (int l = 0; l < total; ++l) {
    ConvLayer c;
    const bool last = l == total - 1;
    c.in_channels = l == 0 ? arch.depth_planes : arch.channels;
    if (plan[static_cast<std::size_t>(l)].concat_skip >= 0) c.in_channels = 2 * arch.channels;
    c.out_channels = last ? 2 : arch.channels;
    c.kernel_h = 3;
    c.kernel_w = last ? 1 : 3;
    c.norm = norm && !last;
    c.relu = !last;
    c.has_bias = !c.norm && arch.bias;
    c.weights.assign(static_cast<std::size_t>(c.out_channels * c.in_channels * c.kernel_h * c.kernel_w), 0.0);
    const auto co = static_cast<std::size_t>(c.out_channels);
    if (c.has_bias) c.bias.assign(co, 0.0);
    if (c.norm) {
      c.gamma.assign(co, 1.0);
      c.beta.assign(co, 0.0);
      c.running_mean.assign(co, 0.0);
      c.running_var.assign(co, 1.0);
    }
    p.layers.push_back(std::move(c));
  }
  if (arch.bypass) p.bypass.assign(2 * static_cast<std::size_t>(arch.depth_planes), 0.0);
  return p;
}

std::size_t NetworkParams::trainable_count() const {
  std::size_t n = 0;
  for_each_trainable([&n](double) { ++n; });
  return n;
}

void NetworkParams::for_each_trainable(const std::function<void(double&)>& fn) {
  for (auto& layer : layers) visit_trainables(layer, fn);
  for (auto& v : bypass) fn(v);
}

void NetworkParams::for_each_trainable(const std::function<void(double)>& fn) const {
  for (const auto& layer : layers) visit_trainables(layer, fn);
  for (double v : bypass) fn(v);
}

std::uint64_t NetworkParams::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](double v) { h = mix64(h ^ std::bit_cast<std::uint64_t>(v)); };
  for (const auto& layer : layers) {
    visit_trainables(layer, feed);
    for (double v : layer.running_mean) feed(v);
    for (double v : layer.running_var) feed(v);
  }
  for (double v : bypass) feed(v);
  return h;
}

void NetworkParams::validate() const {
  const NetworkParams ref = zeros(arch);
  if (ref.layers.size() != layers.size()) throw DimensionError("layer count does not match the architecture");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    const auto& b = ref.layers[l];
    if (a.in_channels != b.in_channels || a.out_channels != b.out_channels || a.kernel_h != b.kernel_h ||
        a.kernel_w != b.kernel_w || a.weights.size() != b.weights.size() || a.bias.size() != b.bias.size() ||
        a.gamma.size() != b.gamma.size() || a.beta.size() != b.beta.size() ||
        a.running_mean.size() != b.running_mean.size() || a.running_var.size() != b.running_var.size() ||
        a.norm != b.norm || a.relu != b.relu || a.has_bias != b.has_bias) {
      throw DimensionError("layer " + std::to_string(l) + " shape does not match the architecture");
    }
  }
  if (bypass.size() != ref.bypass.size()) throw DimensionError("bypass size does not match the architecture");
  bool finite = true;
  for_each_trainable([&finite](double v) { finite = finite && std::isfinite(v); });
  for (const auto& layer : layers) {
    finite = finite && all_finite(layer.running_mean) && all_finite(layer.running_var);
  }
  if (!finite) throw NumericalError("network parameters contain non-finite values");
}

NetworkParams init_params(const ArchSpec& arch, std::uint64_t seed) {
  NetworkParams p = NetworkParams::zeros(arch);
  Rng rng(derive_seed(seed, {0x1A17}));
  for (auto& layer : p.layers) {
    const double taps = layer.kernel_h * layer.kernel_w;
    const double sd = std::sqrt(2.0 / (layer.in_channels * taps + layer.out_channels * taps));
    for (auto& v : layer.weights) v = sd * rng.normal();
  }
  return p;
}

std::vector<double> bypass_apply(const NetworkParams& params, std::span<const double> slab) {
  const ArchSpec& a = params.arch;
  const auto planes = static_cast<std::size_t>(a.depth_planes);
  const auto height = static_cast<std::size_t>(a.height);
  const auto width = static_cast<std::size_t>(a.width);
  if (slab.size() != a.input_size()) throw DimensionError("bypass_apply: slab size does not match the network");
  std::vector<double> out(a.output_size(), 0.0);
  if (!a.bypass) return out;
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < height; ++y) {
      const double* row = slab.data() + (p * height + y) * width;
      const double m = std::accumulate(row, row + width, 0.0) / static_cast<double>(width);
      for (std::size_t o = 0; o < 2; ++o) out[o * height + y] += params.bypass[o * planes + p] * m;
    }
  }
  return out;
}

std::vector<double> forward(const NetworkParams& params, std::span<const double> slab, Mode mode) {
  return forward_batch(params, {slab}, mode).front();
}

std::vector<std::vector<double>> forward_batch(const NetworkParams& params,
                                               const std::vector<std::span<const double>>& slabs, Mode mode) {
  if (slabs.empty()) return {};
  Pass pass(params, mode, slabs.size());
  return pass.run(slabs);
}

LossGradient backward(const NetworkParams& params, const std::vector<std::span<const double>>& slabs,
                      const std::vector<std::span<const double>>& targets, double lambda, Mode mode) {
  if (slabs.empty() || slabs.size() != targets.size()) throw DimensionError("backward: batch sizes differ or are zero");
  const std::size_t batch = slabs.size();
  Pass pass(params, mode, batch);
  const auto out = pass.run(slabs);
  LossGradient lg;
  std::vector<std::vector<double>> g(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    if (targets[b].size() != out[b].size()) throw DimensionError("target size does not match the network output");
    g[b].resize(out[b].size());
    for (std::size_t k = 0; k < out[b].size(); ++k) {
      const double diff = out[b][k] - targets[b][k];
      lg.loss += diff * diff / static_cast<double>(batch);
      g[b][k] = 2.0 * diff / static_cast<double>(batch);
    }
  }
  lg.gradient = pass.back(g);
  if (lambda != 0.0) {
    std::vector<double> theta;
    params.for_each_trainable([&theta](double v) { theta.push_back(v); });
    std::size_t k = 0;
    lg.gradient.for_each_trainable([&](double& gv) {
      lg.loss += lambda * theta[k] * theta[k];
      gv += 2.0 * lambda * theta[k];
      ++k;
    });
  }
  lg.batch_mean = pass.batch_mean();
  lg.batch_var = pass.batch_var();
  return lg;
}

double nonzero_rms(std::span<const double> values) {
  double sq = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (v != 0.0) {
      sq += v * v;
      ++n;
    }
  }
  return n == 0 ? 1.0 : std::sqrt(sq / static_cast<double>(n));
}

std::vector<double> assemble_slab(const RfCube& z, std::size_t depth, int planes) {
  if (z.kind != CubeKind::kAperture) throw ConfigError("assemble_slab expects an aperture cube");
  if (planes != 1 && planes != 3) throw ConfigError("planes must be 1 or 3");
  if (depth >= z.depths()) throw DimensionError("depth index outside the cube");
  const std::size_t lines = z.scanlines();
  const std::size_t ch = z.channels();
  std::vector<double> slab(static_cast<std::size_t>(planes) * lines * ch);
  const auto last = static_cast<std::ptrdiff_t>(z.depths()) - 1;
  const int half = planes / 2;
  for (int p = 0; p < planes; ++p) {
    const auto n = static_cast<std::size_t>(
        std::clamp(static_cast<std::ptrdiff_t>(depth) + p - half, std::ptrdiff_t{0}, last));
    const std::size_t active = z.mask ? z.mask->keep_count(n) : ch;
    const double gain = active == 0 ? 0.0 : static_cast<double>(ch) / static_cast<double>(active);
    for (std::size_t l = 0; l < lines; ++l) {
      const auto row = z.data.row(l, n);
      std::transform(row.begin(), row.end(), slab.begin() + static_cast<std::ptrdiff_t>((p * lines + l) * ch),
                     [gain](double v) { return v * gain; });
    }
  }
  return slab;
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !(lr_final > 0.0)) throw ConfigError("learning rates must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (norm_momentum < 0.0 || norm_momentum > 1.0) throw ConfigError("norm_momentum must lie in [0, 1]");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
}

double TrainConfig::learning_rate(double epoch) const {
  if (epoch >= epochs) return lr_final;
  return lr0 * std::pow(lr_final / lr0, epoch / epochs);
}

TrainResult train(const std::vector<TrainingSample>& samples, const ArchSpec& arch, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  NetworkParams params = init_params(arch, cfg.seed);
  if (arch.bypass && !samples.empty()) fit_bypass(params, samples);
  return train_from(std::move(params), samples, cfg, on_epoch);
}

TrainResult train_from(NetworkParams params, const std::vector<TrainingSample>& samples, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  cfg.validate();
  params.validate();
  if (samples.empty()) throw ConfigError("training set is empty");
  const ArchSpec& arch = params.arch;
  for (const auto& s : samples) {
    if (s.slab.size() != arch.input_size() || s.target.size() != arch.output_size()) {
      throw DimensionError("training sample shape does not match the architecture");
    }
  }
  TrainResult result;
  std::vector<double> velocity(params.trainable_count(), 0.0);
  std::vector<std::size_t> order(samples.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, {0xE90C, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const double lr = cfg.learning_rate(epoch);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::vector<std::vector<double>> xs, ts;
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = samples[order[k]];
        const double scale = s.scale;
        xs.push_back(s.slab);
        ts.push_back(s.target);
        for (auto& v : xs.back()) v /= scale;
        for (auto& v : ts.back()) v /= scale;
      }
      std::vector<std::span<const double>> xv(xs.begin(), xs.end()), tv(ts.begin(), ts.end());
      LossGradient lg = backward(params, xv, tv, cfg.lambda, Mode::kTrain);
      if (!std::isfinite(lg.loss)) {
        std::string trace;
        for (double v : result.epoch_loss) trace += " " + std::to_string(v);
        throw NumericalError("training diverged in epoch " + std::to_string(epoch) + "; loss trace:" + trace);
      }
      std::vector<double> grads;
      lg.gradient.for_each_trainable([&grads](double v) { grads.push_back(v); });
      std::size_t k = 0;
      params.for_each_trainable([&](double& v) {
        velocity[k] = cfg.momentum * velocity[k] - lr * grads[k];
        v += velocity[k];
        ++k;
      });
      for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        for (std::size_t o = 0; o < layer.running_mean.size(); ++o) {
          layer.running_mean[o] += cfg.norm_momentum * (lg.batch_mean[l][o] - layer.running_mean[o]);
          layer.running_var[o] += cfg.norm_momentum * (lg.batch_var[l][o] - layer.running_var[o]);
        }
      }
      epoch_loss += lg.loss;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
  }
  result.params = std::move(params);
  return result;
}

void fit_bypass(NetworkParams& params, const std::vector<TrainingSample>& samples) {
  const ArchSpec& a = params.arch;
  if (!a.bypass) throw ConfigError("fit_bypass: the architecture has no bypass");
  const auto planes = static_cast<std::size_t>(a.depth_planes);
  const auto height = static_cast<std::size_t>(a.height);
  const auto width = static_cast<std::size_t>(a.width);
  // Normal equations over plane means, shared by the I and Q rows.
  Matrix gram(planes, planes);
  Matrix rhs(2, planes);
  std::vector<double> m(planes);
  for (const auto& s : samples) {
    if (s.slab.size() != a.input_size() || s.target.size() != a.output_size()) {
      throw DimensionError("training sample shape does not match the architecture");
    }
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t p = 0; p < planes; ++p) {
        const double* row = s.slab.data() + (p * height + y) * width;
        m[p] = std::accumulate(row, row + width, 0.0) / static_cast<double>(width) / s.scale;
      }
      for (std::size_t i = 0; i < planes; ++i) {
        for (std::size_t j = 0; j < planes; ++j) gram(i, j) += m[i] * m[j];
        for (std::size_t o = 0; o < 2; ++o) rhs(o, i) += m[i] * s.target[o * height + y] / s.scale;
      }
    }
  }
  // Tiny ridge keeps the solve defined for degenerate data.
  double trace = 0.0;
  for (std::size_t i = 0; i < planes; ++i) trace += gram(i, i);
  for (std::size_t i = 0; i < planes; ++i) gram(i, i) += 1e-9 * trace + 1e-300;
  if (!cholesky_factor(gram)) throw NumericalError("fit_bypass: plane means are degenerate");
  for (std::size_t o = 0; o < 2; ++o) {
    const std::vector<double> sol = cholesky_solve(gram, rhs.row(o));
    for (std::size_t p = 0; p < planes; ++p) params.bypass[o * planes + p] = sol[p];
  }
}

double evaluate_loss(const NetworkParams& params, const std::vector<TrainingSample>& samples) {
  if (samples.empty()) throw ConfigError("evaluation set is empty");
  double total = 0.0;
  for (const auto& s : samples) {
    const double scale = s.scale;
    std::vector<double> x = s.slab;
    for (auto& v : x) v /= scale;
    const auto out = forward(params, x, Mode::kInfer);
    for (std::size_t k = 0; k < out.size(); ++k) {
      const double d = out[k] - s.target[k] / scale;
      total += d * d;
    }
  }
  return total / static_cast<double>(samples.size());
}

IqImage infer_frame(const NetworkParams& params, const RfCube& z, double dynamic_range_db) {
  if (z.kind != CubeKind::kAperture) throw ConfigError("infer_frame expects an aperture cube");
  const ArchSpec& a = params.arch;
  if (z.scanlines() != static_cast<std::size_t>(a.height) || z.channels() != static_cast<std::size_t>(a.width)) {
    throw DimensionError("cube is " + std::to_string(z.scanlines()) + " x " + std::to_string(z.channels()) +
                         " (scanlines x channels), network expects " + std::to_string(a.height) + " x " +
                         std::to_string(a.width));
  }
  const double scale = nonzero_rms(z.data.values());
  IqImage img;
  img.dynamic_range_db = dynamic_range_db;
  img.i_part = Matrix(z.scanlines(), z.depths());
  img.q_part = Matrix(z.scanlines(), z.depths());
  for (std::size_t n = 0; n < z.depths(); ++n) {
    auto slab = assemble_slab(z, n, a.depth_planes);
    for (auto& v : slab) v /= scale;
    const auto out = forward(params, slab, Mode::kInfer);
    for (std::size_t l = 0; l < z.scanlines(); ++l) {
      img.i_part(l, n) = out[l] * scale;
      img.q_part(l, n) = out[z.scanlines() + l] * scale;
    }
  }
  return img;
}

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path) {
  params.validate();
  detail::ByteWriter w;
  w.bytes("UBFW");
  w.u32(kCheckpointVersion);
  const ArchSpec& a = params.arch;
  for (int v : {a.stages, a.convs_per_stage, a.channels, a.depth_planes, a.height, a.width}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u8(static_cast<std::uint8_t>(a.norm));
  w.u8(a.bias ? 1 : 0);
  w.u8(a.bypass ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& layer : params.layers) {
    for (int v : {layer.in_channels, layer.out_channels, layer.kernel_h, layer.kernel_w}) {
      w.u32(static_cast<std::uint32_t>(v));
    }
    w.u8(static_cast<std::uint8_t>((layer.norm ? 1 : 0) | (layer.relu ? 2 : 0) | (layer.has_bias ? 4 : 0)));
    for (const auto* vec : {&layer.weights, &layer.bias, &layer.gamma, &layer.beta, &layer.running_mean,
                            &layer.running_var}) {
      for (double v : *vec) w.f32(static_cast<float>(v));
    }
  }
  for (double v : params.bypass) w.f32(static_cast<float>(v));
  w.save(path);
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path);
  if (r.bytes(4) != "UBFW") throw FormatError(path.string() + ": not a UBFW checkpoint");
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  ArchSpec a;
  for (int* f : {&a.stages, &a.convs_per_stage, &a.channels, &a.depth_planes, &a.height, &a.width}) {
    *f = static_cast<int>(r.u32());
  }
  const auto norm = r.u8();
  if (norm > 1) throw FormatError(path.string() + ": bad norm kind");
  a.norm = static_cast<NormKind>(norm);
  a.bias = r.u8() != 0;
  a.bypass = r.u8() != 0;
  try {
    a.validate();
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  NetworkParams p = NetworkParams::zeros(a);
  if (r.u32() != p.layers.size()) throw FormatError(path.string() + ": layer count disagrees with the architecture");
  for (auto& layer : p.layers) {
    for (int expect : {layer.in_channels, layer.out_channels, layer.kernel_h, layer.kernel_w}) {
      if (static_cast<int>(r.u32()) != expect) throw FormatError(path.string() + ": layer shape mismatch");
    }
    const auto flags = r.u8();
    if (((flags & 1) != 0) != layer.norm || ((flags & 2) != 0) != layer.relu || ((flags & 4) != 0) != layer.has_bias) {
      throw FormatError(path.string() + ": layer flags mismatch");
    }
    for (auto* vec : {&layer.weights, &layer.bias, &layer.gamma, &layer.beta, &layer.running_mean,
                      &layer.running_var}) {
      for (double& v : *vec) v = r.f32();
    }
  }
  for (double& v : p.bypass) v = r.f32();
  if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes after checkpoint");
  p.validate();
  return p;
}

}  // namespace ubf
