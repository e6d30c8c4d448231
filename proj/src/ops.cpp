#include "cclab/ops.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "cclab/kernels.hpp"

namespace cclab::ops {

namespace {

template <class T>
bool wants_grad(const Tensor<T>& t) {
  return grad_enabled() && t.requires_grad();
}

template <class T>
void attach(Tensor<T>& out, std::vector<std::shared_ptr<TensorImpl<T>>> parents,
            std::function<void()> backward) {
  out.impl()->requires_grad = true;
  out.impl()->parents = std::move(parents);
  out.impl()->backward = std::move(backward);
}

std::string dim_error(const char* op, const char* what, int got, int want) {
  return std::string(op) + ": " + what + " is " + std::to_string(got) + ", expected " +
         std::to_string(want);
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::runtime_error("add: shape mismatch");
  }
  auto out = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t n = out.numel();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    po[i] = pa[i] + pb[i];
  }
  if (wants_grad(a) || wants_grad(b)) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl().get();
    attach(out, {ai, bi}, [ai, bi, oi]() {
      const std::size_t n2 = oi->grad.size();
      if (ai->requires_grad) {
        for (std::size_t i = 0; i < n2; ++i) {
          ai->grad[i] += oi->grad[i];
        }
      }
      if (bi->requires_grad) {
        for (std::size_t i = 0; i < n2; ++i) {
          bi->grad[i] += oi->grad[i];
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  const int n = x.rows();
  const int c = x.cols();
  if (b.ndim() != 1 || b.dim(0) != c) {
    throw std::runtime_error(dim_error("add_bias", "bias length", static_cast<int>(b.numel()), c));
  }
  auto out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  const T* pb = b.data();
  T* po = out.data();
  kernels::detail::for_each_row(n, [&](int r) {
    const std::size_t off = static_cast<std::size_t>(r) * c;
#pragma omp simd
    for (int j = 0; j < c; ++j) {
      po[off + j] = px[off + j] + pb[j];
    }
  });
  if (wants_grad(x) || wants_grad(b)) {
    auto xi = x.impl();
    auto bi = b.impl();
    auto oi = out.impl().get();
    attach(out, {xi, bi}, [xi, bi, oi, n, c]() {
      if (xi->requires_grad) {
        const std::size_t n2 = oi->grad.size();
        for (std::size_t i = 0; i < n2; ++i) {
          xi->grad[i] += oi->grad[i];
        }
      }
      if (bi->requires_grad) {
        for (int j = 0; j < c; ++j) {
          T acc = 0;
          for (int r = 0; r < n; ++r) {
            acc += oi->grad[static_cast<std::size_t>(r) * c + j];
          }
          bi->grad[j] += acc;
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::runtime_error("mul: shape mismatch");
  }
  auto out = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t n = out.numel();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    po[i] = pa[i] * pb[i];
  }
  if (wants_grad(a) || wants_grad(b)) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl().get();
    attach(out, {ai, bi}, [ai, bi, oi]() {
      const std::size_t n2 = oi->grad.size();
      if (ai->requires_grad) {
        for (std::size_t i = 0; i < n2; ++i) {
          ai->grad[i] += oi->grad[i] * bi->data[i];
        }
      }
      if (bi->requires_grad) {
        for (std::size_t i = 0; i < n2; ++i) {
          bi->grad[i] += oi->grad[i] * ai->data[i];
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  auto out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const std::size_t n = out.numel();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    po[i] = px[i] * s;
  }
  if (wants_grad(x)) {
    auto xi = x.impl();
    auto oi = out.impl().get();
    attach(out, {xi}, [xi, oi, s]() {
      const std::size_t n2 = oi->grad.size();
      for (std::size_t i = 0; i < n2; ++i) {
        xi->grad[i] += oi->grad[i] * s;
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const int m = a.rows();
  const int k = a.cols();
  if (b.rows() != k) {
    throw std::runtime_error(dim_error("matmul", "inner dimension of b", b.rows(), k));
  }
  const int n = b.cols();
  auto out = Tensor<T>::zeros({m, n});
  kernels::matmul_nn(m, n, k, a.data(), b.data(), out.data(), false);
  if (wants_grad(a) || wants_grad(b)) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl().get();
    attach(out, {ai, bi}, [ai, bi, oi, m, n, k]() {
      if (ai->requires_grad) {
        kernels::matmul_nt(m, k, n, oi->grad.data(), bi->data.data(), ai->grad.data(), true);
      }
      if (bi->requires_grad) {
        kernels::matmul_tn(k, n, m, ai->data.data(), oi->grad.data(), bi->grad.data(), true);
      }
    });
  }
  return out;
}

namespace {
// 1/sqrt(2), 1/sqrt(2*pi)
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const std::size_t n = out.numel();
  kernels::detail::for_each_row(static_cast<int>(n), [&](int i) {
    const double v = static_cast<double>(px[i]);
    po[i] = static_cast<T>(v * 0.5 * (1.0 + std::erf(v * kInvSqrt2)));
  });
  if (wants_grad(x)) {
    auto xi = x.impl();
    auto oi = out.impl().get();
    attach(out, {xi}, [xi, oi]() {
      const std::size_t n2 = oi->grad.size();
      for (std::size_t i = 0; i < n2; ++i) {
        const double v = static_cast<double>(xi->data[i]);
        const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        xi->grad[i] += oi->grad[i] * static_cast<T>(phi + v * pdf);
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> silu(const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const std::size_t n = out.numel();
  kernels::detail::for_each_row(static_cast<int>(n), [&](int i) {
    const T v = px[i];
    po[i] = v / (T(1) + std::exp(-v));
  });
  if (wants_grad(x)) {
    auto xi = x.impl();
    auto oi = out.impl().get();
    attach(out, {xi}, [xi, oi]() {
      const std::size_t n2 = oi->grad.size();
      for (std::size_t i = 0; i < n2; ++i) {
        const T v = xi->data[i];
        const T sg = T(1) / (T(1) + std::exp(-v));
        xi->grad[i] += oi->grad[i] * sg * (T(1) + v * (T(1) - sg));
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int padding) {
  const int len = x.rows();
  const int cin = x.cols();
  if (kernel.ndim() != 3) {
    throw std::runtime_error("conv1d: kernel must be [cout×cin×k]");
  }
  const int cout = kernel.dim(0);
  const int k = kernel.dim(2);
  if (kernel.dim(1) != cin) {
    throw std::runtime_error(dim_error("conv1d", "kernel input channels", kernel.dim(1), cin));
  }
  if (k < 1 || stride < 1 || padding < 0) {
    throw std::runtime_error("conv1d: k and stride must be >= 1, padding >= 0");
  }
  if (len + 2 * padding < k) {
    throw std::runtime_error("conv1d: input length " + std::to_string(len) + " with padding " +
                             std::to_string(padding) + " is shorter than kernel " +
                             std::to_string(k));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != cout)) {
    throw std::runtime_error(dim_error("conv1d", "bias length", static_cast<int>(bias.numel()), cout));
  }
  const int out_len = kernels::conv1d_out_len(len, k, stride, padding);
  auto out = Tensor<T>::zeros({out_len, cout});
  kernels::conv1d_forward(len, cin, cout, k, stride, padding, x.data(), kernel.data(),
                          bias.defined() ? bias.data() : nullptr, out.data());
  const bool bg = bias.defined() && wants_grad(bias);
  if (wants_grad(x) || wants_grad(kernel) || bg) {
    auto xi = x.impl();
    auto ki = kernel.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    auto oi = out.impl().get();
    std::vector<std::shared_ptr<TensorImpl<T>>> parents = {xi, ki};
    if (bi) {
      parents.push_back(bi);
    }
    attach(out, std::move(parents), [xi, ki, bi, oi, len, cin, cout, k, stride, padding]() {
      if (xi->requires_grad) {
        kernels::conv1d_backward_input(len, cin, cout, k, stride, padding, ki->data.data(),
                                       oi->grad.data(), xi->grad.data());
      }
      if (ki->requires_grad || (bi && bi->requires_grad)) {
        kernels::conv1d_backward_filter(len, cin, cout, k, stride, padding, xi->data.data(),
                                        oi->grad.data(),
                                        ki->requires_grad ? ki->grad.data() : nullptr,
                                        (bi && bi->requires_grad) ? bi->grad.data() : nullptr);
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, T eps, const Tensor<T>& gain,
                     const Tensor<T>& shift) {
  const int len = x.rows();
  const int c = x.cols();
  if (groups < 1 || c % groups != 0) {
    throw std::runtime_error("group_norm: channels " + std::to_string(c) +
                             " not divisible by groups " + std::to_string(groups));
  }
  if (!(eps > T(0))) {
    throw std::runtime_error("group_norm: eps must be > 0");
  }
  if (gain.ndim() != 1 || gain.dim(0) != c || shift.ndim() != 1 || shift.dim(0) != c) {
    throw std::runtime_error("group_norm: gain/shift must have one entry per channel");
  }
  auto out = Tensor<T>::zeros(x.shape());
  auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(len) * groups);
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(len) * groups);
  kernels::group_norm_forward(len, c, groups, eps, x.data(), gain.data(), shift.data(),
                              out.data(), mean->data(), inv_std->data());
  if (wants_grad(x) || wants_grad(gain) || wants_grad(shift)) {
    auto xi = x.impl();
    auto gi = gain.impl();
    auto si = shift.impl();
    auto oi = out.impl().get();
    attach(out, {xi, gi, si}, [xi, gi, si, oi, mean, inv_std, len, c, groups]() {
      // dx path needs a buffer even when only gain/shift require grads.
      std::vector<T> scratch;
      T* dx = nullptr;
      if (xi->requires_grad) {
        dx = xi->grad.data();
      } else {
        scratch.assign(static_cast<std::size_t>(len) * c, T(0));
        dx = scratch.data();
      }
      kernels::group_norm_backward(len, c, groups, xi->data.data(), gi->data.data(),
                                   mean->data(), inv_std->data(), oi->grad.data(), dx,
                                   gi->requires_grad ? gi->grad.data() : nullptr,
                                   si->requires_grad ? si->grad.data() : nullptr);
    });
  }
  return out;
}

template <class T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, int target_len) {
  const int len = x.rows();
  const int c = x.cols();
  if (target_len < 1 || target_len > len) {
    throw std::runtime_error("adaptive_avg_pool: target_len " + std::to_string(target_len) +
                             " outside [1, " + std::to_string(len) + "]");
  }
  auto out = Tensor<T>::zeros({target_len, c});
  const T* px = x.data();
  T* po = out.data();
  kernels::detail::for_each_row(target_len, [&](int i) {
    const int begin = static_cast<int>((static_cast<long long>(i) * len) / target_len);
    const int end = static_cast<int>(((static_cast<long long>(i) + 1) * len + target_len - 1) /
                                     target_len);
    const T inv = T(1) / static_cast<T>(end - begin);
    T* orow = po + static_cast<std::size_t>(i) * c;
    for (int r = begin; r < end; ++r) {
      const T* xrow = px + static_cast<std::size_t>(r) * c;
#pragma omp simd
      for (int j = 0; j < c; ++j) {
        orow[j] += xrow[j];
      }
    }
#pragma omp simd
    for (int j = 0; j < c; ++j) {
      orow[j] *= inv;
    }
  });
  if (wants_grad(x)) {
    auto xi = x.impl();
    auto oi = out.impl().get();
    attach(out, {xi}, [xi, oi, len, c, target_len]() {
      for (int i = 0; i < target_len; ++i) {
        const int begin = static_cast<int>((static_cast<long long>(i) * len) / target_len);
        const int end = static_cast<int>(
            ((static_cast<long long>(i) + 1) * len + target_len - 1) / target_len);
        const T inv = T(1) / static_cast<T>(end - begin);
        const T* grow = oi->grad.data() + static_cast<std::size_t>(i) * c;
        for (int r = begin; r < end; ++r) {
          T* xg = xi->grad.data() + static_cast<std::size_t>(r) * c;
          for (int j = 0; j < c; ++j) {
            xg[j] += grow[j] * inv;
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& weight, T eps) {
  const int rows = x.rows();
  const int c = x.cols();
  if (weight.ndim() != 1 || weight.dim(0) != c) {
    throw std::runtime_error(dim_error("rmsnorm", "weight length", weight.dim(0), c));
  }
  auto out = Tensor<T>::zeros(x.shape());
  auto inv_rms = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  kernels::rmsnorm_forward(rows, c, eps, x.data(), weight.data(), out.data(), inv_rms->data());
  if (wants_grad(x) || wants_grad(weight)) {
    auto xi = x.impl();
    auto wi = weight.impl();
    auto oi = out.impl().get();
    attach(out, {xi, wi}, [xi, wi, oi, inv_rms, rows, c]() {
      std::vector<T> scratch;
      T* dx = nullptr;
      if (xi->requires_grad) {
        dx = xi->grad.data();
      } else {
        scratch.assign(static_cast<std::size_t>(rows) * c, T(0));
        dx = scratch.data();
      }
      kernels::rmsnorm_backward(rows, c, xi->data.data(), wi->data.data(), inv_rms->data(),
                                oi->grad.data(), dx,
                                wi->requires_grad ? wi->grad.data() : nullptr);
    });
  }
  return out;
}

template <class T>
Tensor<T> rope(const Tensor<T>& x, int heads, std::span<const int> positions, T base) {
  const int s = x.rows();
  const int d = x.cols();
  if (heads < 1 || d % heads != 0) {
    throw std::runtime_error("rope: width not divisible by heads");
  }
  const int dh = d / heads;
  if (dh % 2 != 0) {
    throw std::runtime_error("rope: head_dim " + std::to_string(dh) + " must be even");
  }
  if (static_cast<int>(positions.size()) != s) {
    throw std::runtime_error(dim_error("rope", "positions length",
                                       static_cast<int>(positions.size()), s));
  }
  if (!(base > T(0))) {
    throw std::runtime_error("rope: base must be > 0");
  }
  auto out = Tensor<T>::zeros(x.shape());
  std::vector<int> pos(positions.begin(), positions.end());
  const T* px = x.data();
  T* po = out.data();
  auto rotate = [dh, heads, d, base](const T* in, T* dst, const std::vector<int>& p, int s2,
                                     bool inverse) {
    kernels::detail::for_each_row(s2, [&](int r) {
      const double position = static_cast<double>(p[static_cast<std::size_t>(r)]);
      for (int h = 0; h < heads; ++h) {
        const std::size_t off = static_cast<std::size_t>(r) * d + static_cast<std::size_t>(h) * dh;
        for (int e = 0; e < dh / 2; ++e) {
          const double freq =
              std::pow(static_cast<double>(base), -2.0 * static_cast<double>(e) / dh);
          double theta = position * freq;
          if (inverse) {
            theta = -theta;
          }
          const T ct = static_cast<T>(std::cos(theta));
          const T st = static_cast<T>(std::sin(theta));
          const T a = in[off + 2 * e];
          const T b = in[off + 2 * e + 1];
          dst[off + 2 * e] = a * ct - b * st;
          dst[off + 2 * e + 1] = a * st + b * ct;
        }
      }
    });
  };
  rotate(px, po, pos, s, false);
  if (wants_grad(x)) {
    auto xi = x.impl();
    auto oi = out.impl().get();
    attach(out, {xi}, [xi, oi, rotate, pos, s]() {
      // Rotation is orthogonal: d/dx = rotation by -theta applied to dy.
      std::vector<T> tmp(oi->grad.size());
      rotate(oi->grad.data(), tmp.data(), pos, s, true);
      for (std::size_t i = 0; i < tmp.size(); ++i) {
        xi->grad[i] += tmp[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> attention_causal(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           int heads) {
  const int s = q.rows();
  const int d = q.cols();
  if (k.shape() != q.shape() || v.shape() != q.shape()) {
    throw std::runtime_error("attention: q/k/v shapes differ");
  }
  if (heads < 1 || d % heads != 0) {
    throw std::runtime_error("attention: width not divisible by heads");
  }
  const int dh = d / heads;
  auto out = Tensor<T>::zeros(q.shape());
  auto probs = std::make_shared<std::vector<T>>(
      static_cast<std::size_t>(heads) * s * s, T(0));
  kernels::attention_forward(s, heads, dh, q.data(), k.data(), v.data(), out.data(),
                             probs->data());
  if (wants_grad(q) || wants_grad(k) || wants_grad(v)) {
    auto qi = q.impl();
    auto ki = k.impl();
    auto vi = v.impl();
    auto oi = out.impl().get();
    attach(out, {qi, ki, vi}, [qi, ki, vi, oi, probs, s, heads, dh]() {
      // The kernel writes all three grads together; route non-required ones
      // into scratch.
      auto grad_or_scratch = [&](TensorImpl<T>* t, std::vector<T>& scratch) -> T* {
        if (t->requires_grad) {
          return t->grad.data();
        }
        scratch.assign(t->data.size(), T(0));
        return scratch.data();
      };
      std::vector<T> sq, sk, sv;
      T* dq = grad_or_scratch(qi.get(), sq);
      T* dk = grad_or_scratch(ki.get(), sk);
      T* dv = grad_or_scratch(vi.get(), sv);
      kernels::attention_backward(s, heads, dh, qi->data.data(), ki->data.data(),
                                  vi->data.data(), probs->data(), oi->grad.data(), dq, dk, dv);
    });
  }
  return out;
}

template <class T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids) {
  const int vocab = table.rows();
  const int d = table.cols();
  const int n = static_cast<int>(ids.size());
  for (int i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw std::runtime_error("embedding: id " + std::to_string(ids[i]) +
                               " outside vocabulary of " + std::to_string(vocab));
    }
  }
  auto out = Tensor<T>::zeros({n, d});
  const T* pt = table.data();
  T* po = out.data();
  std::vector<int> idv(ids.begin(), ids.end());
  kernels::detail::for_each_row(n, [&](int i) {
    std::memcpy(po + static_cast<std::size_t>(i) * d,
                pt + static_cast<std::size_t>(idv[static_cast<std::size_t>(i)]) * d,
                sizeof(T) * static_cast<std::size_t>(d));
  });
  if (wants_grad(table)) {
    auto ti = table.impl();
    auto oi = out.impl().get();
    attach(out, {ti}, [ti, oi, idv, n, d]() {
      // Serial scatter: duplicate ids must accumulate in a fixed order.
      for (int i = 0; i < n; ++i) {
        T* dst = ti->grad.data() + static_cast<std::size_t>(idv[static_cast<std::size_t>(i)]) * d;
        const T* src = oi->grad.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
          dst[j] += src[j];
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) {
    throw std::runtime_error("concat_rows: no parts");
  }
  int total = 0;
  const int c = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw std::runtime_error(dim_error("concat_rows", "part width", p.cols(), c));
    }
    total += p.rows();
  }
  auto out = Tensor<T>::zeros({total, c});
  T* po = out.data();
  int at = 0;
  bool grad = false;
  for (const auto& p : parts) {
    std::memcpy(po + static_cast<std::size_t>(at) * c, p.data(),
                sizeof(T) * p.numel());
    at += p.rows();
    grad = grad || wants_grad(p);
  }
  if (grad) {
    std::vector<std::shared_ptr<TensorImpl<T>>> parents;
    parents.reserve(parts.size());
    std::vector<int> row_counts;
    for (const auto& p : parts) {
      parents.push_back(p.impl());
      row_counts.push_back(p.rows());
    }
    auto oi = out.impl().get();
    auto parents_copy = parents;
    attach(out, std::move(parents), [parents_copy, oi, row_counts, c]() {
      int at2 = 0;
      for (std::size_t i = 0; i < parents_copy.size(); ++i) {
        auto& p = parents_copy[i];
        if (p->requires_grad) {
          const T* src = oi->grad.data() + static_cast<std::size_t>(at2) * c;
          for (std::size_t j = 0; j < p->data.size(); ++j) {
            p->grad[j] += src[j];
          }
        }
        at2 += row_counts[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, int begin, int end) {
  const int n = x.rows();
  const int c = x.cols();
  if (begin < 0 || end > n || begin > end) {
    throw std::runtime_error("slice_rows: range [" + std::to_string(begin) + ", " +
                             std::to_string(end) + ") outside 0.." + std::to_string(n));
  }
  auto out = Tensor<T>::zeros({end - begin, c});
  std::memcpy(out.data(), x.data() + static_cast<std::size_t>(begin) * c,
              sizeof(T) * out.numel());
  if (wants_grad(x)) {
    auto xi = x.impl();
    auto oi = out.impl().get();
    attach(out, {xi}, [xi, oi, begin, c]() {
      T* dst = xi->grad.data() + static_cast<std::size_t>(begin) * c;
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        dst[i] += oi->grad[i];
      }
    });
  }
  return out;
}

template <class T>
XentResult<T> cross_entropy_logits(const Tensor<T>& logits, std::span<const int> targets,
                                   std::span<const std::uint8_t> mask) {
  const int n = logits.rows();
  const int vocab = logits.cols();
  if (static_cast<int>(targets.size()) != n || static_cast<int>(mask.size()) != n) {
    throw std::runtime_error("cross_entropy: targets/mask length must equal logit rows");
  }
  int count = 0;
  for (int i = 0; i < n; ++i) {
    if (mask[i]) {
      ++count;
      if (targets[i] < 0 || targets[i] >= vocab) {
        throw std::runtime_error("cross_entropy: target " + std::to_string(targets[i]) +
                                 " outside vocabulary of " + std::to_string(vocab));
      }
    }
  }
  if (count == 0) {
    throw std::runtime_error("cross_entropy: all positions masked out");
  }
  XentResult<T> res;
  res.n_scored = count;
  res.per_token.assign(static_cast<std::size_t>(n), T(0));
  auto lse = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n), T(0));
  auto tg = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  auto mk = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
  kernels::softmax_xent_forward(n, vocab, logits.data(), tg->data(), mk->data(),
                                res.per_token.data(), lse->data());
  T total = 0;
  for (int i = 0; i < n; ++i) {
    total += res.per_token[static_cast<std::size_t>(i)];
  }
  auto loss = Tensor<T>::from({1}, {total / static_cast<T>(count)});
  if (wants_grad(logits)) {
    auto li = logits.impl();
    auto oi = loss.impl().get();
    attach(loss, {li}, [li, oi, lse, tg, mk, n, vocab, count]() {
      const T scale = oi->grad[0] / static_cast<T>(count);
      kernels::softmax_xent_backward(n, vocab, li->data.data(), tg->data(), mk->data(),
                                     lse->data(), scale, li->grad.data());
    });
  }
  res.loss = loss;
  return res;
}

template <class T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights) {
  if (weights.size() != x.numel()) {
    throw std::runtime_error("weighted_sum: weight count must equal element count");
  }
  T acc = 0;
  const T* px = x.data();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += px[i] * weights[i];
  }
  auto out = Tensor<T>::from({1}, {acc});
  if (wants_grad(x)) {
    auto xi = x.impl();
    auto oi = out.impl().get();
    attach(out, {xi}, [xi, oi, w = weights]() {
      for (std::size_t i = 0; i < w.size(); ++i) {
        xi->grad[i] += oi->grad[0] * w[i];
      }
    });
  }
  return out;
}

template <class T>
void assert_finite(const Tensor<T>& x, const char* what) {
  for (const T v : x.values()) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string("non-finite value in ") + what);
    }
  }
}

#define CCLAB_OPS_INSTANTIATE(T)                                                             \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> add_bias<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                          \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                              \
  template Tensor<T> silu<T>(const Tensor<T>&);                                              \
  template Tensor<T> conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,    \
                               int);                                                         \
  template Tensor<T> group_norm<T>(const Tensor<T>&, int, T, const Tensor<T>&,               \
                                   const Tensor<T>&);                                        \
  template Tensor<T> adaptive_avg_pool<T>(const Tensor<T>&, int);                            \
  template Tensor<T> rmsnorm<T>(const Tensor<T>&, const Tensor<T>&, T);                      \
  template Tensor<T> rope<T>(const Tensor<T>&, int, std::span<const int>, T);                \
  template Tensor<T> attention_causal<T>(const Tensor<T>&, const Tensor<T>&,                 \
                                         const Tensor<T>&, int);                             \
  template Tensor<T> embedding<T>(const Tensor<T>&, std::span<const int>);                   \
  template Tensor<T> concat_rows<T>(const std::vector<Tensor<T>>&);                          \
  template Tensor<T> slice_rows<T>(const Tensor<T>&, int, int);                              \
  template XentResult<T> cross_entropy_logits<T>(const Tensor<T>&, std::span<const int>,     \
                                                 std::span<const std::uint8_t>);             \
  template Tensor<T> weighted_sum<T>(const Tensor<T>&, const std::vector<T>&);               \
  template void assert_finite<T>(const Tensor<T>&, const char*);

CCLAB_OPS_INSTANTIATE(float)
CCLAB_OPS_INSTANTIATE(double)
#undef CCLAB_OPS_INSTANTIATE

}  // namespace cclab::ops
