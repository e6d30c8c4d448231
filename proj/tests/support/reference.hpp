#pragma once

// Brute-force serial reference implementations used as independent oracles.
// These stay deliberately naive and separate from the library kernels.

#include <cmath>
#include <vector>

namespace cclab::ref {

// y[t][co] = b[co] + sum_{ci,kk} x[t*stride+kk-pad][ci] * w[co][ci][kk]
template <class T>
std::vector<T> conv1d(const std::vector<T>& x, int len, int cin, const std::vector<T>& w,
                      int cout, int k, const std::vector<T>& b, int stride, int pad,
                      int* out_len_out) {
  int out_len = 0;
  for (int start = -pad; start + k <= len + pad; start += stride) {
    ++out_len;
  }
  std::vector<T> y(static_cast<std::size_t>(out_len) * cout, T(0));
  int t = 0;
  for (int start = -pad; start + k <= len + pad; start += stride, ++t) {
    for (int co = 0; co < cout; ++co) {
      T acc = b.empty() ? T(0) : b[co];
      for (int ci = 0; ci < cin; ++ci) {
        for (int kk = 0; kk < k; ++kk) {
          const int in = start + kk;
          if (in >= 0 && in < len) {
            acc += x[static_cast<std::size_t>(in) * cin + ci] *
                   w[(static_cast<std::size_t>(co) * cin + ci) * k + kk];
          }
        }
      }
      y[static_cast<std::size_t>(t) * cout + co] = acc;
    }
  }
  *out_len_out = out_len;
  return y;
}

// Mean pooling window oracle: full windows i = 0..floor((n-w)/s), then one
// remainder vector for tokens after the last full window, if any. Summation
// runs in ascending row order and divides once at the end.
template <class T>
std::vector<std::vector<T>> mean_pool_windows(const std::vector<T>& e, int n, int d, int w,
                                              int s) {
  std::vector<std::vector<T>> out;
  int covered = 0;
  if (n >= w) {
    const int last = (n - w) / s;
    for (int i = 0; i <= last; ++i) {
      std::vector<T> acc(static_cast<std::size_t>(d), T(0));
      for (int j = 0; j < w; ++j) {
        const int row = i * s + j;
        for (int c = 0; c < d; ++c) {
          acc[c] += e[static_cast<std::size_t>(row) * d + c];
        }
      }
      for (int c = 0; c < d; ++c) {
        acc[c] /= static_cast<T>(w);
      }
      out.push_back(std::move(acc));
    }
    covered = last * s + w;
  }
  if (covered < n) {
    const int rem = n - covered;
    std::vector<T> acc(static_cast<std::size_t>(d), T(0));
    for (int row = covered; row < n; ++row) {
      for (int c = 0; c < d; ++c) {
        acc[c] += e[static_cast<std::size_t>(row) * d + c];
      }
    }
    for (int c = 0; c < d; ++c) {
      acc[c] /= static_cast<T>(rem);
    }
    out.push_back(std::move(acc));
  }
  return out;
}

// Adaptive average pooling slice oracle per the floor/ceil bounds rule.
template <class T>
std::vector<T> adaptive_avg_pool(const std::vector<T>& x, int len, int c, int t) {
  std::vector<T> y(static_cast<std::size_t>(t) * c, T(0));
  for (int i = 0; i < t; ++i) {
    const int begin = (i * len) / t;
    const int end = ((i + 1) * len + t - 1) / t;
    for (int j = 0; j < c; ++j) {
      T acc = 0;
      for (int r = begin; r < end; ++r) {
        acc += x[static_cast<std::size_t>(r) * c + j];
      }
      y[static_cast<std::size_t>(i) * c + j] = acc / static_cast<T>(end - begin);
    }
  }
  return y;
}

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace cclab::ref
