#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cclab/tensor.hpp"

namespace cclab::ops {

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// x: [n×c] plus a per-channel bias b: [c].
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b);

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s);

// a: [m×k], b: [k×n]
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Exact Gaussian-CDF GELU: x * Phi(x).
template <class T>
Tensor<T> gelu(const Tensor<T>& x);

template <class T>
Tensor<T> silu(const Tensor<T>& x);

// x: [len×cin], kernel: [cout×cin×k], bias: [cout] (optional, may be undefined)
template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int padding);

// x: [len×c]; per-(position, group) statistics.
template <class T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, T eps, const Tensor<T>& gain,
                     const Tensor<T>& shift);

// Output position i averages rows [floor(i*len/t), ceil((i+1)*len/t)).
template <class T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, int target_len);

template <class T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& weight, T eps);

// Rotary embedding over [s × heads*head_dim]; head_dim must be even. Each
// adjacent value pair rotates by pos * base^(-2i/head_dim).
template <class T>
Tensor<T> rope(const Tensor<T>& x, int heads, std::span<const int> positions, T base);

// Causal multi-head attention; q/k/v: [s × heads*head_dim].
template <class T>
Tensor<T> attention_causal(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           int heads);

template <class T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids);

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);

// Rows [begin, end).
template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, int begin, int end);

template <class T>
struct XentResult {
  Tensor<T> loss;            // scalar: mean nll over masked-in rows
  std::vector<T> per_token;  // nll per row, 0 where masked out
  int n_scored = 0;
};

// logits: [n×V]; loss is the mean of -log softmax(logits)[target] over
// masked-in rows, stable for logits up to ~1e4 in magnitude.
template <class T>
XentResult<T> cross_entropy_logits(const Tensor<T>& logits, std::span<const int> targets,
                                   std::span<const std::uint8_t> mask);

// Scalar projection sum_i x_i * w_i; handy to turn any op output into a
// scalar objective for gradient checking.
template <class T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights);

// Raised when an op output stops being finite (divergence, overflow).
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
void assert_finite(const Tensor<T>& x, const char* what);

}  // namespace cclab::ops
