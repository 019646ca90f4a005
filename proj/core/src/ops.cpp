/*
 * Copyright (C) 2026 The mtv-cpp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mtv/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mtv/errors.hpp"

namespace mtv::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using Impl = std::shared_ptr<TensorImpl>;

std::size_t norm_axis(int axis, std::size_t rank) {
  int r = static_cast<int>(rank);
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= s[i];
  return n;
}

// Elementwise binary op with leading-dimension broadcasting. `fwd(x, y)`
// computes the value; `dx(x, y)`, `dy(x, y)` the local partials.
template <typename Fwd, typename Dx, typename Dy>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Dx dx, Dy dy) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Shape out_shape;
  if (sa == sb || is_suffix(sb, sa)) {
    out_shape = sa;
  } else if (is_suffix(sa, sb)) {
    out_shape = sb;
  } else {
    throw DimensionError(std::string(name) + ": shapes " + shape_str(sa) + " and " + shape_str(sb) +
                         " are not broadcast-compatible");
  }
  auto out = Tensor::zeros(out_shape);
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  const std::size_t na = x.size();
  const std::size_t nb = y.size();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(x[i % na], y[i % nb]);

  Impl ia = a.impl();
  Impl ib = b.impl();
  detail::record(out, {&a, &b}, [ia, ib, dx, dy](const Buffer& g) {
    const std::size_t na = ia->data.size();
    const std::size_t nb = ib->data.size();
    if (ia->requires_grad) {
      auto& ga = ia->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i % na] += g[i] * dx(ia->data[i % na], ib->data[i % nb]);
    }
    if (ib->requires_grad) {
      auto& gb = ib->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i] * dy(ia->data[i % na], ib->data[i % nb]);
    }
  });
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() < 2 || b.dim() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.size(-2), k = a.size(-1), n = b.size(-1);
  if (b.size(-2) != k) {
    throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) + " @ " + shape_str(b.shape()));
  }
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Shape batch_a(sa.begin(), sa.end() - 2);
  Shape batch_b(sb.begin(), sb.end() - 2);

  Impl ia = a.impl();
  Impl ib = b.impl();
  const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);

  if (batch_b.empty()) {
    // One GEMM over all batch rows.
    const auto rows = static_cast<Eigen::Index>(shape_numel(batch_a) * m);
    Shape out_shape = batch_a;
    out_shape.push_back(m);
    out_shape.push_back(n);
    auto out = Tensor::zeros(out_shape);
    MapMat(out.mutable_data().data(), rows, ni).noalias() =
        CMapMat(ia->data.data(), rows, ki) * CMapMat(ib->data.data(), ki, ni);
    detail::record(out, {&a, &b}, [ia, ib, rows, ki, ni](const Buffer& g) {
      CMapMat G(g.data(), rows, ni);
      if (ia->requires_grad) {
        MapMat(ia->ensure_grad().data(), rows, ki).noalias() += G * CMapMat(ib->data.data(), ki, ni).transpose();
      }
      if (ib->requires_grad) {
        MapMat(ib->ensure_grad().data(), ki, ni).noalias() += CMapMat(ia->data.data(), rows, ki).transpose() * G;
      }
    });
    return out;
  }

  // Batched: either the same batch shape on both sides, or a plain 2-D left
  // operand shared across the batch of the right one.
  const bool shared_a = batch_a.empty();
  if (!shared_a && batch_a != batch_b) {
    throw DimensionError("matmul batch dimensions differ: " + shape_str(sa) + " @ " + shape_str(sb));
  }
  const Shape& batch = shared_a ? batch_b : batch_a;
  const std::size_t nbatch = shape_numel(batch);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  auto out = Tensor::zeros(out_shape);
  double* po = out.mutable_data().data();
  const std::size_t step_a = shared_a ? 0 : m * k;
  for (std::size_t i = 0; i < nbatch; ++i) {
    MapMat(po + i * m * n, mi, ni).noalias() =
        CMapMat(ia->data.data() + i * step_a, mi, ki) * CMapMat(ib->data.data() + i * k * n, ki, ni);
  }
  detail::record(out, {&a, &b}, [ia, ib, nbatch, step_a, m, k, n, mi, ki, ni](const Buffer& g) {
    for (std::size_t i = 0; i < nbatch; ++i) {
      CMapMat G(g.data() + i * m * n, mi, ni);
      if (ia->requires_grad) {
        MapMat(ia->ensure_grad().data() + i * step_a, mi, ki).noalias() +=
            G * CMapMat(ib->data.data() + i * k * n, ki, ni).transpose();
      }
      if (ib->requires_grad) {
        MapMat(ib->ensure_grad().data() + i * k * n, ki, ni).noalias() +=
            CMapMat(ia->data.data() + i * step_a, mi, ki).transpose() * G;
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  auto out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  Impl ia = a.impl();
  detail::record(out, {&a}, [ia, factor](const Buffer& g) {
    auto& ga = ia->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto out = Tensor::scalar(s);
  Impl ia = a.impl();
  detail::record(out, {&a}, [ia](const Buffer& g) {
    auto& ga = ia->ensure_grad();
    for (auto& v : ga) v += g[0];
  });
  return out;
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto out = Tensor::scalar(s * inv);
  Impl ia = a.impl();
  detail::record(out, {&a}, [ia, inv](const Buffer& g) {
    auto& ga = ia->ensure_grad();
    for (auto& v : ga) v += g[0] * inv;
  });
  return out;
}

Tensor mean(const Tensor& a, int axis) {
  const Shape& s = a.shape();
  const std::size_t ax = norm_axis(axis, s.size());
  const std::size_t outer = prod(s, 0, ax), len = s[ax], inner = prod(s, ax + 1, s.size());
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != ax) out_shape.push_back(s[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  auto out = Tensor::zeros(out_shape);
  auto o = out.mutable_data();
  auto x = a.data();
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t p = 0; p < outer; ++p) {
    for (std::size_t j = 0; j < len; ++j) {
      for (std::size_t q = 0; q < inner; ++q) o[p * inner + q] += x[(p * len + j) * inner + q];
    }
  }
  for (auto& v : o) v *= inv;
  Impl ia = a.impl();
  detail::record(out, {&a}, [ia, outer, len, inner, inv](const Buffer& g) {
    auto& ga = ia->ensure_grad();
    for (std::size_t p = 0; p < outer; ++p) {
      for (std::size_t j = 0; j < len; ++j) {
        for (std::size_t q = 0; q < inner; ++q) ga[(p * len + j) * inner + q] += g[p * inner + q] * inv;
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// softmax family

Tensor softmax(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  const std::size_t ax = norm_axis(axis, s.size());
  const std::size_t outer = prod(s, 0, ax), len = s[ax], inner = prod(s, ax + 1, s.size());
  auto out = Tensor::zeros(s);
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t p = 0; p < outer; ++p) {
    for (std::size_t q = 0; q < inner; ++q) {
      const std::size_t base = p * len * inner + q;
      double mx = in[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, in[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        double e = std::exp(in[base + j * inner] - mx);
        o[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) o[base + j * inner] /= z;
    }
  }
  Impl ix = x.impl();
  Impl io = out.impl();
  // The output is captured weakly through its impl: the tape node already
  // owns it, so no cycle is formed.
  std::weak_ptr<TensorImpl> wo = io;
  detail::record(out, {&x}, [ix, wo, outer, len, inner](const Buffer& g) {
    auto io = wo.lock();
    const auto& y = io->data;
    auto& gx = ix->ensure_grad();
    for (std::size_t p = 0; p < outer; ++p) {
      for (std::size_t q = 0; q < inner; ++q) {
        const std::size_t base = p * len * inner + q;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          gx[base + j * inner] += y[base + j * inner] * (g[base + j * inner] - dot);
        }
      }
    }
  });
  return out;
}

Tensor log_softmax(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  const std::size_t ax = norm_axis(axis, s.size());
  const std::size_t outer = prod(s, 0, ax), len = s[ax], inner = prod(s, ax + 1, s.size());
  auto out = Tensor::zeros(s);
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t p = 0; p < outer; ++p) {
    for (std::size_t q = 0; q < inner; ++q) {
      const std::size_t base = p * len * inner + q;
      double mx = in[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, in[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) z += std::exp(in[base + j * inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t j = 0; j < len; ++j) o[base + j * inner] = in[base + j * inner] - lz;
    }
  }
  Impl ix = x.impl();
  std::weak_ptr<TensorImpl> wo = out.impl();
  detail::record(out, {&x}, [ix, wo, outer, len, inner](const Buffer& g) {
    auto io = wo.lock();
    const auto& y = io->data;
    auto& gx = ix->ensure_grad();
    for (std::size_t p = 0; p < outer; ++p) {
      for (std::size_t q = 0; q < inner; ++q) {
        const std::size_t base = p * len * inner + q;
        double gs = 0.0;
        for (std::size_t j = 0; j < len; ++j) gs += g[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          gx[base + j * inner] += g[base + j * inner] - std::exp(y[base + j * inner]) * gs;
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// normalisation / activation

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.size(-1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma/beta must have shape [" + std::to_string(d) + "], got " +
                         shape_str(gamma.shape()) + " / " + shape_str(beta.shape()));
  }
  const std::size_t rows = x.numel() / d;
  auto out = Tensor::zeros(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  auto xhat = std::make_shared<Buffer>(x.numel());
  auto inv_std = std::make_shared<Buffer>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      o[r * d + j] = h * gm[j] + bt[j];
    }
  }
  Impl ix = x.impl(), ig = gamma.impl(), ib = beta.impl();
  detail::record(out, {&x, &gamma, &beta}, [ix, ig, ib, xhat, inv_std, rows, d](const Buffer& g) {
    const auto& gm = ig->data;
    if (ig->requires_grad || ib->requires_grad) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          if (ig->requires_grad) ig->ensure_grad()[j] += g[r * d + j] * (*xhat)[r * d + j];
          if (ib->requires_grad) ib->ensure_grad()[j] += g[r * d + j];
        }
      }
    }
    if (!ix->requires_grad) return;
    auto& gx = ix->ensure_grad();
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double dh = g[r * d + j] * gm[j];
        m1 += dh;
        m2 += dh * (*xhat)[r * d + j];
      }
      m1 *= inv_d;
      m2 *= inv_d;
      for (std::size_t j = 0; j < d; ++j) {
        const double dh = g[r * d + j] * gm[j];
        gx[r * d + j] += (*inv_std)[r] * (dh - m1 - (*xhat)[r * d + j] * m2);
      }
    }
  });
  return out;
}

Tensor gelu(const Tensor& x) {
  auto out = Tensor::zeros(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * std::numbers::sqrt2 * 0.5));
  }
  Impl ix = x.impl();
  detail::record(out, {&x}, [ix](const Buffer& g) {
    auto& gx = ix->ensure_grad();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = ix->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 * 0.5));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// layout

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  const std::size_t ax = norm_axis(axis, s0.size());
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  bool needs_grad = false;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != s0[i]) {
        throw DimensionError("concat: shapes " + shape_str(s0) + " and " + shape_str(s) + " differ off-axis");
      }
    }
    lens.push_back(s[ax]);
    total += s[ax];
    needs_grad = needs_grad || (grad_enabled() && p.requires_grad());
  }
  const std::size_t outer = prod(s0, 0, ax), inner = prod(s0, ax + 1, s0.size());
  Shape out_shape = s0;
  out_shape[ax] = total;
  auto out = Tensor::zeros(out_shape);
  auto o = out.mutable_data();
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto x = parts[k].data();
    const std::size_t block = lens[k] * inner;
    for (std::size_t p = 0; p < outer; ++p) {
      std::copy_n(x.data() + p * block, block, o.data() + p * total * inner + offset * inner);
    }
    offset += lens[k];
  }
  std::vector<Impl> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  detail::record_if(out, needs_grad, [impls, lens, outer, inner, total](const Buffer& g) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < impls.size(); ++k) {
      const std::size_t block = lens[k] * inner;
      if (impls[k]->requires_grad) {
        auto& gk = impls[k]->ensure_grad();
        for (std::size_t p = 0; p < outer; ++p) {
          const double* src = g.data() + p * total * inner + offset * inner;
          for (std::size_t i = 0; i < block; ++i) gk[p * block + i] += src[i];
        }
      }
      offset += lens[k];
    }
  });
  return out;
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  const std::size_t ax = norm_axis(axis, s.size());
  if (begin >= end || end > s[ax]) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                         shape_str(s));
  }
  const std::size_t outer = prod(s, 0, ax), len = s[ax], inner = prod(s, ax + 1, s.size());
  const std::size_t n = end - begin;
  Shape out_shape = s;
  out_shape[ax] = n;
  auto out = Tensor::zeros(out_shape);
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t p = 0; p < outer; ++p) {
    std::copy_n(in.data() + (p * len + begin) * inner, n * inner, o.data() + p * n * inner);
  }
  Impl ix = x.impl();
  detail::record(out, {&x}, [ix, outer, len, inner, begin, n](const Buffer& g) {
    auto& gx = ix->ensure_grad();
    for (std::size_t p = 0; p < outer; ++p) {
      for (std::size_t i = 0; i < n * inner; ++i) gx[(p * len + begin) * inner + i] += g[p * n * inner + i];
    }
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
  }
  auto out = Tensor::from_data(std::move(shape), Buffer(x.data().begin(), x.data().end()));
  Impl ix = x.impl();
  detail::record(out, {&x}, [ix](const Buffer& g) {
    auto& gx = ix->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return out;
}

Tensor transpose(const Tensor& x, int axis_a, int axis_b) {
  const Shape& s = x.shape();
  const std::size_t a = norm_axis(axis_a, s.size());
  const std::size_t b = norm_axis(axis_b, s.size());
  Shape out_shape = s;
  std::swap(out_shape[a], out_shape[b]);
  // in_stride[i]: stride in the input for output axis i.
  std::vector<std::size_t> in_strides(s.size());
  {
    std::vector<std::size_t> st(s.size());
    std::size_t acc = 1;
    for (std::size_t i = s.size(); i-- > 0;) {
      st[i] = acc;
      acc *= s[i];
    }
    in_strides = st;
    std::swap(in_strides[a], in_strides[b]);
  }
  auto perm = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> idx(s.size(), 0);
  for (std::size_t lin = 0; lin < x.numel(); ++lin) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) src += idx[i] * in_strides[i];
    (*perm)[lin] = src;
    for (std::size_t i = idx.size(); i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  auto out = Tensor::zeros(out_shape);
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[(*perm)[i]];
  Impl ix = x.impl();
  detail::record(out, {&x}, [ix, perm](const Buffer& g) {
    auto& gx = ix->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[(*perm)[i]] += g[i];
  });
  return out;
}

Tensor expand(const Tensor& x, const Shape& leading) {
  Shape out_shape = leading;
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  const std::size_t reps = shape_numel(leading);
  const std::size_t n = x.numel();
  auto out = Tensor::zeros(out_shape);
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t r = 0; r < reps; ++r) std::copy_n(in.data(), n, o.data() + r * n);
  Impl ix = x.impl();
  detail::record(out, {&x}, [ix, reps, n](const Buffer& g) {
    auto& gx = ix->ensure_grad();
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[r * n + i];
    }
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.dim() != 2 || x.size(-1) != w.size(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  const std::size_t in = w.size(0), outd = w.size(1);
  if (b.defined() && b.shape() != Shape{outd}) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " does not match weight " + shape_str(w.shape()));
  }
  const auto rows = static_cast<Eigen::Index>(x.numel() / in);
  const auto ii = static_cast<Eigen::Index>(in), oi = static_cast<Eigen::Index>(outd);
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  auto out = Tensor::zeros(out_shape);
  MapMat O(out.mutable_data().data(), rows, oi);
  O.noalias() = CMapMat(x.data().data(), rows, ii) * CMapMat(w.data().data(), ii, oi);
  if (b.defined()) {
    O.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), oi);
  }
  Impl ix = x.impl(), iw = w.impl();
  Impl ib = b.defined() ? b.impl() : nullptr;
  detail::record(out, {&x, &w, b.defined() ? &b : nullptr}, [ix, iw, ib, rows, ii, oi](const Buffer& g) {
    CMapMat G(g.data(), rows, oi);
    if (ix->requires_grad) {
      MapMat(ix->ensure_grad().data(), rows, ii).noalias() += G * CMapMat(iw->data.data(), ii, oi).transpose();
    }
    if (iw->requires_grad) {
      MapMat(iw->ensure_grad().data(), ii, oi).noalias() += CMapMat(ix->data.data(), rows, ii).transpose() * G;
    }
    if (ib && ib->requires_grad) {
      Eigen::Map<Eigen::RowVectorXd>(ib->ensure_grad().data(), oi) += G.colwise().sum();
    }
  });
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, double smoothing) {
  if (logits.dim() != 2) throw DimensionError("cross_entropy expects [batch, classes], got " + shape_str(logits.shape()));
  const std::size_t batch = logits.size(0), classes = logits.size(1);
  if (labels.size() != batch) throw DimensionError("cross_entropy: label count does not match batch");
  if (smoothing < 0.0 || smoothing >= 1.0) throw ConfigError("label smoothing must lie in [0, 1)");
  auto probs = std::make_shared<Buffer>(logits.numel());
  auto targets = std::make_shared<Buffer>(logits.numel(), smoothing / static_cast<double>(classes));
  auto x = logits.data();
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ContractError("cross_entropy: label " + std::to_string(label) + " out of range");
    }
    (*targets)[r * classes + static_cast<std::size_t>(label)] += 1.0 - smoothing;
    const double* row = x.data() + r * classes;
    double mx = row[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t c = 0; c < classes; ++c) {
      const double lp = row[c] - lz;
      (*probs)[r * classes + c] = std::exp(lp);
      total -= (*targets)[r * classes + c] * lp;
    }
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  auto out = Tensor::scalar(total * inv_b);
  Impl il = logits.impl();
  detail::record(out, {&logits}, [il, probs, targets, inv_b](const Buffer& g) {
    auto& gl = il->ensure_grad();
    for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += g[0] * inv_b * ((*probs)[i] - (*targets)[i]);
  });
  return out;
}

// ---------------------------------------------------------------------------
// attention

namespace {

struct AttnDims {
  std::size_t groups, sq, sk, d, dv, heads, dk, dvh;
};

AttnDims attention_dims(const Tensor& q, const Tensor& k, const Tensor* v, std::size_t num_heads) {
  if (q.dim() < 2 || k.dim() < 2 || (v && v->dim() < 2)) throw DimensionError("attention operands need rank >= 2");
  const Shape& sq = q.shape();
  const Shape& sk = k.shape();
  if (!std::equal(sq.begin(), sq.end() - 2, sk.begin(), sk.end() - 2) || sq.size() != sk.size()) {
    throw DimensionError("attention: query " + shape_str(sq) + " and key " + shape_str(sk) + " leading dims differ");
  }
  if (sq.back() != sk.back()) throw DimensionError("attention: query/key widths differ");
  AttnDims dims{};
  dims.sq = sq[sq.size() - 2];
  dims.sk = sk[sk.size() - 2];
  dims.d = sq.back();
  dims.groups = q.numel() / (dims.sq * dims.d);
  dims.heads = num_heads;
  if (num_heads == 0 || dims.d % num_heads != 0) {
    throw ConfigError("attention width " + std::to_string(dims.d) + " not divisible by " + std::to_string(num_heads) +
                      " heads");
  }
  dims.dk = dims.d / num_heads;
  if (v) {
    const Shape& sv = v->shape();
    if (sv.size() != sk.size() || !std::equal(sk.begin(), sk.end() - 1, sv.begin())) {
      throw DimensionError("attention: key " + shape_str(sk) + " and value " + shape_str(sv) + " differ");
    }
    dims.dv = sv.back();
    if (dims.dv % num_heads != 0) throw ConfigError("attention value width not divisible by heads");
    dims.dvh = dims.dv / num_heads;
  }
  return dims;
}

// Fills probs [groups, heads, sq, sk].
void attention_probs(const AttnDims& a, const double* q, const double* k, double* probs) {
  const double scl = 1.0 / std::sqrt(static_cast<double>(a.dk));
  const auto sq = static_cast<Eigen::Index>(a.sq), sk = static_cast<Eigen::Index>(a.sk);
  const auto dk = static_cast<Eigen::Index>(a.dk), d = static_cast<Eigen::Index>(a.d);
  for (std::size_t g = 0; g < a.groups; ++g) {
    for (std::size_t h = 0; h < a.heads; ++h) {
      CStridedMap Q(q + g * a.sq * a.d + h * a.dk, sq, dk, Eigen::OuterStride<>(d));
      CStridedMap K(k + g * a.sk * a.d + h * a.dk, sk, dk, Eigen::OuterStride<>(d));
      MapMat P(probs + (g * a.heads + h) * a.sq * a.sk, sq, sk);
      P.noalias() = scl * (Q * K.transpose());
      for (Eigen::Index r = 0; r < sq; ++r) {
        const double mx = P.row(r).maxCoeff();
        P.row(r) = (P.row(r).array() - mx).exp();
        P.row(r) /= P.row(r).sum();
      }
    }
  }
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t num_heads) {
  const AttnDims a = attention_dims(q, k, &v, num_heads);
  auto probs = std::make_shared<Buffer>(a.groups * a.heads * a.sq * a.sk);
  attention_probs(a, q.data().data(), k.data().data(), probs->data());

  Shape out_shape = q.shape();
  out_shape.back() = a.dv;
  auto out = Tensor::zeros(out_shape);
  double* po = out.mutable_data().data();
  const double* pv = v.data().data();
  const auto sq = static_cast<Eigen::Index>(a.sq), sk = static_cast<Eigen::Index>(a.sk);
  const auto dvh = static_cast<Eigen::Index>(a.dvh), dv = static_cast<Eigen::Index>(a.dv);
  for (std::size_t g = 0; g < a.groups; ++g) {
    for (std::size_t h = 0; h < a.heads; ++h) {
      CMapMat P(probs->data() + (g * a.heads + h) * a.sq * a.sk, sq, sk);
      CStridedMap V(pv + g * a.sk * a.dv + h * a.dvh, sk, dvh, Eigen::OuterStride<>(dv));
      StridedMap O(po + g * a.sq * a.dv + h * a.dvh, sq, dvh, Eigen::OuterStride<>(dv));
      O.noalias() = P * V;
    }
  }

  Impl iq = q.impl(), ik = k.impl(), iv = v.impl();
  detail::record(out, {&q, &k, &v}, [iq, ik, iv, probs, a](const Buffer& g) {
    const double scl = 1.0 / std::sqrt(static_cast<double>(a.dk));
    const auto sq = static_cast<Eigen::Index>(a.sq), sk = static_cast<Eigen::Index>(a.sk);
    const auto dk = static_cast<Eigen::Index>(a.dk), d = static_cast<Eigen::Index>(a.d);
    const auto dvh = static_cast<Eigen::Index>(a.dvh), dv = static_cast<Eigen::Index>(a.dv);
    double* gq = iq->requires_grad ? iq->ensure_grad().data() : nullptr;
    double* gk = ik->requires_grad ? ik->ensure_grad().data() : nullptr;
    double* gv = iv->requires_grad ? iv->ensure_grad().data() : nullptr;
    RowMat dP(sq, sk), dS(sq, sk);
    for (std::size_t grp = 0; grp < a.groups; ++grp) {
      for (std::size_t h = 0; h < a.heads; ++h) {
        CMapMat P(probs->data() + (grp * a.heads + h) * a.sq * a.sk, sq, sk);
        CStridedMap dO(g.data() + grp * a.sq * a.dv + h * a.dvh, sq, dvh, Eigen::OuterStride<>(dv));
        CStridedMap V(iv->data.data() + grp * a.sk * a.dv + h * a.dvh, sk, dvh, Eigen::OuterStride<>(dv));
        if (gv) {
          StridedMap GV(gv + grp * a.sk * a.dv + h * a.dvh, sk, dvh, Eigen::OuterStride<>(dv));
          GV.noalias() += P.transpose() * dO;
        }
        if (!gq && !gk) continue;
        dP.noalias() = dO * V.transpose();
        for (Eigen::Index r = 0; r < sq; ++r) {
          const double dot = P.row(r).dot(dP.row(r));
          dS.row(r) = P.row(r).array() * (dP.row(r).array() - dot);
        }
        dS *= scl;
        CStridedMap Q(iq->data.data() + grp * a.sq * a.d + h * a.dk, sq, dk, Eigen::OuterStride<>(d));
        CStridedMap K(ik->data.data() + grp * a.sk * a.d + h * a.dk, sk, dk, Eigen::OuterStride<>(d));
        if (gq) {
          StridedMap GQ(gq + grp * a.sq * a.d + h * a.dk, sq, dk, Eigen::OuterStride<>(d));
          GQ.noalias() += dS * K;
        }
        if (gk) {
          StridedMap GK(gk + grp * a.sk * a.d + h * a.dk, sk, dk, Eigen::OuterStride<>(d));
          GK.noalias() += dS.transpose() * Q;
        }
      }
    }
  });
  return out;
}

Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t num_heads) {
  const AttnDims a = attention_dims(q, k, nullptr, num_heads);
  Shape out_shape(q.shape().begin(), q.shape().end() - 2);
  out_shape.push_back(a.heads);
  out_shape.push_back(a.sq);
  out_shape.push_back(a.sk);
  auto out = Tensor::zeros(out_shape);
  attention_probs(a, q.data().data(), k.data().data(), out.mutable_data().data());
  return out;
}

void check_finite(const Tensor& x, const char* what) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value encountered");
  }
}

}  // namespace mtv::ops
