#pragma once

// Dense compute kernels. All kernels are deterministic for any thread count:
// parallelism only ever splits disjoint output rows and every reduction runs
// in a fixed sequential order inside one thread. `set_parallel(false)` forces
// the serial path; the benchmark tool and the parity tests compare the two.

namespace cclab::kernels {

bool parallel_enabled() noexcept;
void set_parallel(bool on) noexcept;

namespace detail {

template <class F>
void for_each_row(int n, F&& body) {
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      body(i);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      body(i);
    }
  }
}

}  // namespace detail

// c[m×n] = a[m×k]·b[k×n], += when accumulate.
template <class T>
void matmul_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

// c[m×n] = a[m×k]·b[n×k]^T
template <class T>
void matmul_nt(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

// c[m×n] = a[k×m]^T·b[k×n]
template <class T>
void matmul_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

// x: [len×cin], w: [cout×cin×k], b: [cout] (may be null), y: [out_len×cout]
// out_len = (len + 2*pad - k)/stride + 1.
int conv1d_out_len(int len, int k, int stride, int pad);

template <class T>
void conv1d_forward(int len, int cin, int cout, int k, int stride, int pad,
                    const T* x, const T* w, const T* b, T* y);

template <class T>
void conv1d_backward_input(int len, int cin, int cout, int k, int stride, int pad,
                           const T* w, const T* dy, T* dx);

template <class T>
void conv1d_backward_filter(int len, int cin, int cout, int k, int stride, int pad,
                            const T* x, const T* dy, T* dw, T* db);

// Per-(row, group) statistics over c/groups channels; saves mean/inv_std for
// the backward pass.
template <class T>
void group_norm_forward(int len, int c, int groups, T eps, const T* x,
                        const T* gain, const T* shift, T* y, T* mean, T* inv_std);

template <class T>
void group_norm_backward(int len, int c, int groups, const T* x, const T* gain,
                         const T* mean, const T* inv_std, const T* dy,
                         T* dx, T* dgain, T* dshift);

// y = x / rms(row) * w, rms = sqrt(mean(x^2) + eps); saves inv_rms per row.
template <class T>
void rmsnorm_forward(int rows, int c, T eps, const T* x, const T* w, T* y, T* inv_rms);

template <class T>
void rmsnorm_backward(int rows, int c, const T* x, const T* w, const T* inv_rms,
                      const T* dy, T* dx, T* dw);

// Multi-head causal attention over one sequence. q/k/v/out: [s × h*dh]
// row-major with heads laid out contiguously per row. probs: [h*s*s] scratch
// written by the forward pass and consumed by the backward pass.
template <class T>
void attention_forward(int s, int h, int dh, const T* q, const T* k, const T* v,
                       T* out, T* probs);

template <class T>
void attention_backward(int s, int h, int dh, const T* q, const T* k, const T* v,
                        const T* probs, const T* dout, T* dq, T* dk, T* dv);

// Row-wise -log softmax(logits)[target] for masked-in rows (nll=0 elsewhere);
// saves logsumexp per row. Backward accumulates scale*(softmax - onehot) into
// dlogits for masked-in rows.
template <class T>
void softmax_xent_forward(int n, int vocab, const T* logits, const int* targets,
                          const unsigned char* mask, T* nll, T* lse);

template <class T>
void softmax_xent_backward(int n, int vocab, const T* logits, const int* targets,
                           const unsigned char* mask, const T* lse, T scale, T* dlogits);

}  // namespace cclab::kernels
