#include "cclab/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

namespace cclab::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() noexcept { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) noexcept { g_parallel.store(on, std::memory_order_relaxed); }

template <class T>
void matmul_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  detail::for_each_row(m, [&](int i) {
    T* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) {
      std::memset(crow, 0, sizeof(T) * static_cast<std::size_t>(n));
    }
    const T* arow = a + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const T aik = arow[kk];
      const T* brow = b + static_cast<std::size_t>(kk) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) {
        crow[j] += aik * brow[j];
      }
    }
  });
}

template <class T>
void matmul_nt(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  detail::for_each_row(m, [&](int i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<std::size_t>(j) * k;
      T acc = 0;
#pragma omp simd reduction(+ : acc)
      for (int kk = 0; kk < k; ++kk) {
        acc += arow[kk] * brow[kk];
      }
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  });
}

template <class T>
void matmul_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  // a is [k×m]; output row i reads column i of a.
  detail::for_each_row(m, [&](int i) {
    T* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) {
      std::memset(crow, 0, sizeof(T) * static_cast<std::size_t>(n));
    }
    for (int kk = 0; kk < k; ++kk) {
      const T aki = a[static_cast<std::size_t>(kk) * m + i];
      const T* brow = b + static_cast<std::size_t>(kk) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) {
        crow[j] += aki * brow[j];
      }
    }
  });
}

int conv1d_out_len(int len, int k, int stride, int pad) {
  return (len + 2 * pad - k) / stride + 1;
}

template <class T>
void conv1d_forward(int len, int cin, int cout, int k, int stride, int pad,
                    const T* x, const T* w, const T* b, T* y) {
  const int out_len = conv1d_out_len(len, k, stride, pad);
  detail::for_each_row(out_len, [&](int t) {
    T* yrow = y + static_cast<std::size_t>(t) * cout;
    const int in0 = t * stride - pad;
    for (int co = 0; co < cout; ++co) {
      T acc = b ? b[co] : T(0);
      const T* wf = w + static_cast<std::size_t>(co) * cin * k;
      for (int ci = 0; ci < cin; ++ci) {
        const T* wk = wf + static_cast<std::size_t>(ci) * k;
        for (int kk = 0; kk < k; ++kk) {
          const int in = in0 + kk;
          if (in >= 0 && in < len) {
            acc += x[static_cast<std::size_t>(in) * cin + ci] * wk[kk];
          }
        }
      }
      yrow[co] = acc;
    }
  });
}

template <class T>
void conv1d_backward_input(int len, int cin, int cout, int k, int stride, int pad,
                           const T* w, const T* dy, T* dx) {
  const int out_len = conv1d_out_len(len, k, stride, pad);
  detail::for_each_row(len, [&](int in) {
    T* dxrow = dx + static_cast<std::size_t>(in) * cin;
    for (int kk = 0; kk < k; ++kk) {
      const int num = in + pad - kk;
      if (num < 0 || num % stride != 0) {
        continue;
      }
      const int t = num / stride;
      if (t < 0 || t >= out_len) {
        continue;
      }
      const T* dyrow = dy + static_cast<std::size_t>(t) * cout;
      for (int co = 0; co < cout; ++co) {
        const T g = dyrow[co];
        const T* wk = w + (static_cast<std::size_t>(co) * cin) * k;
#pragma omp simd
        for (int ci = 0; ci < cin; ++ci) {
          dxrow[ci] += g * wk[static_cast<std::size_t>(ci) * k + kk];
        }
      }
    }
  });
}

template <class T>
void conv1d_backward_filter(int len, int cin, int cout, int k, int stride, int pad,
                            const T* x, const T* dy, T* dw, T* db) {
  const int out_len = conv1d_out_len(len, k, stride, pad);
  detail::for_each_row(cout, [&](int co) {
    T* dwf = dw + static_cast<std::size_t>(co) * cin * k;
    T dbacc = 0;
    for (int t = 0; t < out_len; ++t) {
      const T g = dy[static_cast<std::size_t>(t) * cout + co];
      dbacc += g;
      const int in0 = t * stride - pad;
      for (int kk = 0; kk < k; ++kk) {
        const int in = in0 + kk;
        if (in < 0 || in >= len) {
          continue;
        }
        const T* xrow = x + static_cast<std::size_t>(in) * cin;
        for (int ci = 0; ci < cin; ++ci) {
          dwf[static_cast<std::size_t>(ci) * k + kk] += g * xrow[ci];
        }
      }
    }
    if (db) {
      db[co] += dbacc;
    }
  });
}

template <class T>
void group_norm_forward(int len, int c, int groups, T eps, const T* x,
                        const T* gain, const T* shift, T* y, T* mean, T* inv_std) {
  const int gc = c / groups;
  detail::for_each_row(len, [&](int r) {
    const T* xrow = x + static_cast<std::size_t>(r) * c;
    T* yrow = y + static_cast<std::size_t>(r) * c;
    for (int g = 0; g < groups; ++g) {
      const T* xg = xrow + g * gc;
      T mu = 0;
      for (int j = 0; j < gc; ++j) {
        mu += xg[j];
      }
      mu /= static_cast<T>(gc);
      T var = 0;
      for (int j = 0; j < gc; ++j) {
        const T d = xg[j] - mu;
        var += d * d;
      }
      var /= static_cast<T>(gc);
      const T is = T(1) / std::sqrt(var + eps);
      mean[static_cast<std::size_t>(r) * groups + g] = mu;
      inv_std[static_cast<std::size_t>(r) * groups + g] = is;
      for (int j = 0; j < gc; ++j) {
        const int ch = g * gc + j;
        yrow[ch] = (xg[j] - mu) * is * gain[ch] + shift[ch];
      }
    }
  });
}

template <class T>
void group_norm_backward(int len, int c, int groups, const T* x, const T* gain,
                         const T* mean, const T* inv_std, const T* dy,
                         T* dx, T* dgain, T* dshift) {
  const int gc = c / groups;
  detail::for_each_row(len, [&](int r) {
    const T* xrow = x + static_cast<std::size_t>(r) * c;
    const T* dyrow = dy + static_cast<std::size_t>(r) * c;
    T* dxrow = dx + static_cast<std::size_t>(r) * c;
    for (int g = 0; g < groups; ++g) {
      const T mu = mean[static_cast<std::size_t>(r) * groups + g];
      const T is = inv_std[static_cast<std::size_t>(r) * groups + g];
      T sum_dyg = 0;
      T sum_dyg_xhat = 0;
      for (int j = 0; j < gc; ++j) {
        const int ch = g * gc + j;
        const T xhat = (xrow[ch] - mu) * is;
        const T dyg = dyrow[ch] * gain[ch];
        sum_dyg += dyg;
        sum_dyg_xhat += dyg * xhat;
      }
      const T inv_n = T(1) / static_cast<T>(gc);
      for (int j = 0; j < gc; ++j) {
        const int ch = g * gc + j;
        const T xhat = (xrow[ch] - mu) * is;
        const T dyg = dyrow[ch] * gain[ch];
        dxrow[ch] += is * (dyg - inv_n * sum_dyg - xhat * inv_n * sum_dyg_xhat);
      }
    }
  });
  if (dgain || dshift) {
    // Channel-major pass keeps the per-channel sums race-free.
    detail::for_each_row(c, [&](int ch) {
      const int g = ch / gc;
      T dg = 0;
      T ds = 0;
      for (int r = 0; r < len; ++r) {
        const T mu = mean[static_cast<std::size_t>(r) * groups + g];
        const T is = inv_std[static_cast<std::size_t>(r) * groups + g];
        const T xhat = (x[static_cast<std::size_t>(r) * c + ch] - mu) * is;
        const T d = dy[static_cast<std::size_t>(r) * c + ch];
        dg += d * xhat;
        ds += d;
      }
      if (dgain) {
        dgain[ch] += dg;
      }
      if (dshift) {
        dshift[ch] += ds;
      }
    });
  }
}

template <class T>
void rmsnorm_forward(int rows, int c, T eps, const T* x, const T* w, T* y, T* inv_rms) {
  detail::for_each_row(rows, [&](int r) {
    const T* xrow = x + static_cast<std::size_t>(r) * c;
    T* yrow = y + static_cast<std::size_t>(r) * c;
    T ss = 0;
    for (int j = 0; j < c; ++j) {
      ss += xrow[j] * xrow[j];
    }
    const T ir = T(1) / std::sqrt(ss / static_cast<T>(c) + eps);
    inv_rms[r] = ir;
#pragma omp simd
    for (int j = 0; j < c; ++j) {
      yrow[j] = xrow[j] * ir * w[j];
    }
  });
}

template <class T>
void rmsnorm_backward(int rows, int c, const T* x, const T* w, const T* inv_rms,
                      const T* dy, T* dx, T* dw) {
  detail::for_each_row(rows, [&](int r) {
    const T* xrow = x + static_cast<std::size_t>(r) * c;
    const T* dyrow = dy + static_cast<std::size_t>(r) * c;
    T* dxrow = dx + static_cast<std::size_t>(r) * c;
    const T ir = inv_rms[r];
    T dot = 0;
    for (int j = 0; j < c; ++j) {
      dot += dyrow[j] * w[j] * xrow[j];
    }
    const T k = dot * ir * ir * ir / static_cast<T>(c);
#pragma omp simd
    for (int j = 0; j < c; ++j) {
      dxrow[j] += dyrow[j] * w[j] * ir - xrow[j] * k;
    }
  });
  if (dw) {
    detail::for_each_row(c, [&](int j) {
      T acc = 0;
      for (int r = 0; r < rows; ++r) {
        acc += dy[static_cast<std::size_t>(r) * c + j] *
               x[static_cast<std::size_t>(r) * c + j] * inv_rms[r];
      }
      dw[j] += acc;
    });
  }
}

template <class T>
void attention_forward(int s, int h, int dh, const T* q, const T* k, const T* v,
                       T* out, T* probs) {
  const int d = h * dh;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  detail::for_each_row(h * s, [&](int hi) {
    const int head = hi / s;
    const int i = hi % s;
    const T* qi = q + static_cast<std::size_t>(i) * d + head * dh;
    T* prow = probs + (static_cast<std::size_t>(head) * s + i) * s;
    // causal scores, streaming max for a stable softmax
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j <= i; ++j) {
      const T* kj = k + static_cast<std::size_t>(j) * d + head * dh;
      T acc = 0;
#pragma omp simd reduction(+ : acc)
      for (int e = 0; e < dh; ++e) {
        acc += qi[e] * kj[e];
      }
      acc *= scale;
      prow[j] = acc;
      if (acc > mx) {
        mx = acc;
      }
    }
    T denom = 0;
    for (int j = 0; j <= i; ++j) {
      prow[j] = std::exp(prow[j] - mx);
      denom += prow[j];
    }
    const T inv = T(1) / denom;
    for (int j = 0; j <= i; ++j) {
      prow[j] *= inv;
    }
    T* orow = out + static_cast<std::size_t>(i) * d + head * dh;
    for (int e = 0; e < dh; ++e) {
      orow[e] = 0;
    }
    for (int j = 0; j <= i; ++j) {
      const T p = prow[j];
      const T* vj = v + static_cast<std::size_t>(j) * d + head * dh;
#pragma omp simd
      for (int e = 0; e < dh; ++e) {
        orow[e] += p * vj[e];
      }
    }
  });
}

template <class T>
void attention_backward(int s, int h, int dh, const T* q, const T* k, const T* v,
                        const T* probs, const T* dout, T* dq, T* dk, T* dv) {
  const int d = h * dh;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  // r_i = sum_j p_ij * (dout_i . v_j), needed by both dq and dk.
  std::vector<T> rowdot(static_cast<std::size_t>(h) * s, T(0));
  detail::for_each_row(h * s, [&](int hi) {
    const int head = hi / s;
    const int i = hi % s;
    const T* prow = probs + (static_cast<std::size_t>(head) * s + i) * s;
    const T* doi = dout + static_cast<std::size_t>(i) * d + head * dh;
    T r = 0;
    for (int j = 0; j <= i; ++j) {
      const T* vj = v + static_cast<std::size_t>(j) * d + head * dh;
      T acc = 0;
#pragma omp simd reduction(+ : acc)
      for (int e = 0; e < dh; ++e) {
        acc += doi[e] * vj[e];
      }
      r += prow[j] * acc;
    }
    rowdot[static_cast<std::size_t>(head) * s + i] = r;
  });
  // dq: one row per (head, i).
  detail::for_each_row(h * s, [&](int hi) {
    const int head = hi / s;
    const int i = hi % s;
    const T* prow = probs + (static_cast<std::size_t>(head) * s + i) * s;
    const T* doi = dout + static_cast<std::size_t>(i) * d + head * dh;
    const T r = rowdot[static_cast<std::size_t>(head) * s + i];
    T* dqi = dq + static_cast<std::size_t>(i) * d + head * dh;
    for (int j = 0; j <= i; ++j) {
      const T* vj = v + static_cast<std::size_t>(j) * d + head * dh;
      T dp = 0;
#pragma omp simd reduction(+ : dp)
      for (int e = 0; e < dh; ++e) {
        dp += doi[e] * vj[e];
      }
      const T dscore = prow[j] * (dp - r) * scale;
      const T* kj = k + static_cast<std::size_t>(j) * d + head * dh;
#pragma omp simd
      for (int e = 0; e < dh; ++e) {
        dqi[e] += dscore * kj[e];
      }
    }
  });
  // dk, dv: one row per (head, j); sums over queries i >= j.
  detail::for_each_row(h * s, [&](int hj) {
    const int head = hj / s;
    const int j = hj % s;
    const T* vj = v + static_cast<std::size_t>(j) * d + head * dh;
    T* dkj = dk + static_cast<std::size_t>(j) * d + head * dh;
    T* dvj = dv + static_cast<std::size_t>(j) * d + head * dh;
    for (int i = j; i < s; ++i) {
      const T p = probs[(static_cast<std::size_t>(head) * s + i) * s + j];
      const T* doi = dout + static_cast<std::size_t>(i) * d + head * dh;
#pragma omp simd
      for (int e = 0; e < dh; ++e) {
        dvj[e] += p * doi[e];
      }
      T dp = 0;
#pragma omp simd reduction(+ : dp)
      for (int e = 0; e < dh; ++e) {
        dp += doi[e] * vj[e];
      }
      const T dscore = p * (dp - rowdot[static_cast<std::size_t>(head) * s + i]) * scale;
      const T* qi = q + static_cast<std::size_t>(i) * d + head * dh;
#pragma omp simd
      for (int e = 0; e < dh; ++e) {
        dkj[e] += dscore * qi[e];
      }
    }
  });
}

template <class T>
void softmax_xent_forward(int n, int vocab, const T* logits, const int* targets,
                          const unsigned char* mask, T* nll, T* lse) {
  detail::for_each_row(n, [&](int r) {
    if (!mask[r]) {
      nll[r] = 0;
      lse[r] = 0;
      return;
    }
    const T* row = logits + static_cast<std::size_t>(r) * vocab;
    T mx = row[0];
    for (int j = 1; j < vocab; ++j) {
      if (row[j] > mx) {
        mx = row[j];
      }
    }
    T denom = 0;
    for (int j = 0; j < vocab; ++j) {
      denom += std::exp(row[j] - mx);
    }
    const T l = mx + std::log(denom);
    lse[r] = l;
    nll[r] = l - row[targets[r]];
  });
}

template <class T>
void softmax_xent_backward(int n, int vocab, const T* logits, const int* targets,
                           const unsigned char* mask, const T* lse, T scale, T* dlogits) {
  detail::for_each_row(n, [&](int r) {
    if (!mask[r]) {
      return;
    }
    const T* row = logits + static_cast<std::size_t>(r) * vocab;
    T* drow = dlogits + static_cast<std::size_t>(r) * vocab;
    const T l = lse[r];
#pragma omp simd
    for (int j = 0; j < vocab; ++j) {
      drow[j] += scale * std::exp(row[j] - l);
    }
    drow[targets[r]] -= scale;
  });
}

#define CCLAB_INSTANTIATE(T)                                                               \
  template void matmul_nn<T>(int, int, int, const T*, const T*, T*, bool);                 \
  template void matmul_nt<T>(int, int, int, const T*, const T*, T*, bool);                 \
  template void matmul_tn<T>(int, int, int, const T*, const T*, T*, bool);                 \
  template void conv1d_forward<T>(int, int, int, int, int, int, const T*, const T*,        \
                                  const T*, T*);                                           \
  template void conv1d_backward_input<T>(int, int, int, int, int, int, const T*, const T*, \
                                         T*);                                              \
  template void conv1d_backward_filter<T>(int, int, int, int, int, int, const T*,          \
                                          const T*, T*, T*);                               \
  template void group_norm_forward<T>(int, int, int, T, const T*, const T*, const T*, T*,  \
                                      T*, T*);                                             \
  template void group_norm_backward<T>(int, int, int, const T*, const T*, const T*,        \
                                       const T*, const T*, T*, T*, T*);                    \
  template void rmsnorm_forward<T>(int, int, T, const T*, const T*, T*, T*);               \
  template void rmsnorm_backward<T>(int, int, const T*, const T*, const T*, const T*, T*,  \
                                    T*);                                                   \
  template void attention_forward<T>(int, int, int, const T*, const T*, const T*, T*, T*); \
  template void attention_backward<T>(int, int, int, const T*, const T*, const T*,         \
                                      const T*, const T*, T*, T*, T*);                     \
  template void softmax_xent_forward<T>(int, int, const T*, const int*,                    \
                                        const unsigned char*, T*, T*);                     \
  template void softmax_xent_backward<T>(int, int, const T*, const int*,                   \
                                         const unsigned char*, const T*, T, T*);

CCLAB_INSTANTIATE(float)
CCLAB_INSTANTIATE(double)
#undef CCLAB_INSTANTIATE

}  // namespace cclab::kernels
