#include "cclab/decoder.hpp"

#include <cmath>
#include <stdexcept>

#include "cclab/ops.hpp"

namespace cclab {

void DecoderSpec::validate() const {
  if (layers < 1 || d < 1 || heads < 1 || head_dim < 1 || ffn_dim < 1 || vocab < 2) {
    throw std::runtime_error("decoder: all dimensions must be positive");
  }
  if (heads * head_dim != d) {
    throw std::runtime_error("decoder: heads*head_dim must equal d (got " +
                             std::to_string(heads) + "*" + std::to_string(head_dim) +
                             " vs " + std::to_string(d) + ")");
  }
  if (head_dim % 2 != 0) {
    throw std::runtime_error("decoder: head_dim must be even for rotary embeddings");
  }
  if (!(rope_base > 0)) {
    throw std::runtime_error("decoder: rope_base must be > 0");
  }
}

DecoderSpec desk_decoder_spec() { return DecoderSpec{}; }

DecoderSpec paper_decoder_spec() {
  DecoderSpec s;
  s.layers = 12;
  s.d = 1280;
  s.heads = 10;
  s.head_dim = 128;
  s.ffn_dim = 6848;
  s.vocab = 4096;
  return s;
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> rope_apply(const Tensor<T>& q, const Tensor<T>& k, int heads,
                                           std::span<const int> positions, T base) {
  return {ops::rope(q, heads, positions, base), ops::rope(k, heads, positions, base)};
}

template <class T>
Decoder<T>::Decoder(DecoderSpec spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  const T std = T(0.02);
  const T out_scale = static_cast<T>(1.0 / std::sqrt(2.0 * spec_.layers));
  tok_emb_ = Tensor<T>::randn({spec_.vocab, spec_.d}, rng, std, true);
  unembed_ = Tensor<T>::randn({spec_.d, spec_.vocab}, rng, std, true);
  final_norm_ = Tensor<T>::full({spec_.d}, T(1), true);
  for (int l = 0; l < spec_.layers; ++l) {
    Layer layer;
    layer.attn_norm = Tensor<T>::full({spec_.d}, T(1), true);
    layer.wq = Tensor<T>::randn({spec_.d, spec_.d}, rng, std, true);
    layer.wk = Tensor<T>::randn({spec_.d, spec_.d}, rng, std, true);
    layer.wv = Tensor<T>::randn({spec_.d, spec_.d}, rng, std, true);
    layer.wo = Tensor<T>::randn({spec_.d, spec_.d}, rng, std * out_scale, true);
    layer.ffn_norm = Tensor<T>::full({spec_.d}, T(1), true);
    layer.w_gate = Tensor<T>::randn({spec_.d, spec_.ffn_dim}, rng, std, true);
    layer.w_up = Tensor<T>::randn({spec_.d, spec_.ffn_dim}, rng, std, true);
    layer.w_down = Tensor<T>::randn({spec_.ffn_dim, spec_.d}, rng, std * out_scale, true);
    layers_.push_back(std::move(layer));
  }
}

template <class T>
Tensor<T> Decoder<T>::forward(const DecoderInput<T>& input) const {
  const int p = input.prefix.defined() ? input.prefix.rows() : 0;
  if (p > 0 && input.prefix.cols() != spec_.d) {
    throw std::runtime_error("decoder: prefix width " + std::to_string(input.prefix.cols()) +
                             " does not match d=" + std::to_string(spec_.d));
  }
  if (input.bos_id < 0 || input.bos_id >= spec_.vocab) {
    throw std::runtime_error("decoder: bos id outside vocabulary");
  }
  const int n_tok = static_cast<int>(input.tokens.size());
  const T eps = T(1e-5);

  std::vector<std::int32_t> bos = {input.bos_id};
  std::vector<Tensor<T>> parts;
  parts.push_back(ops::embedding<T>(tok_emb_, bos));
  if (p > 0) {
    parts.push_back(input.prefix);
  }
  if (n_tok > 0) {
    parts.push_back(ops::embedding<T>(tok_emb_, input.tokens));
  }
  Tensor<T> x = parts.size() == 1 ? parts.front() : ops::concat_rows(parts);

  const int s = x.rows();
  std::vector<int> positions(static_cast<std::size_t>(s));
  for (int i = 0; i < s; ++i) {
    positions[static_cast<std::size_t>(i)] = i;
  }
  const T base = static_cast<T>(spec_.rope_base);

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    auto normed = ops::rmsnorm(x, layer.attn_norm, eps);
    auto q = ops::rope(ops::matmul(normed, layer.wq), spec_.heads, positions, base);
    auto k = ops::rope(ops::matmul(normed, layer.wk), spec_.heads, positions, base);
    auto v = ops::matmul(normed, layer.wv);
    auto att = ops::attention_causal(q, k, v, spec_.heads);
    x = ops::add(x, ops::matmul(att, layer.wo));

    auto normed2 = ops::rmsnorm(x, layer.ffn_norm, eps);
    Tensor<T> ffn_out;
    if (spec_.ffn == FfnKind::silu_gate) {
      auto gate = ops::silu(ops::matmul(normed2, layer.w_gate));
      auto up = ops::matmul(normed2, layer.w_up);
      ffn_out = ops::matmul(ops::mul(gate, up), layer.w_down);
    } else {
      ffn_out = ops::matmul(ops::gelu(ops::matmul(normed2, layer.w_gate)), layer.w_down);
    }
    x = ops::add(x, ffn_out);
    const std::string where = "decoder layer " + std::to_string(l) + " output";
    ops::assert_finite(x, where.c_str());
  }
  x = ops::rmsnorm(x, final_norm_, eps);

  // Predictor rows: token j sits at global p+1+j and is predicted from p+j.
  const int begin = p;
  const int end = p + std::max(n_tok, 1);
  return ops::matmul(ops::slice_rows(x, begin, end), unembed_);
}

template <class T>
std::vector<NamedParam<T>> Decoder<T>::params() {
  std::vector<NamedParam<T>> out;
  out.push_back({"decoder.tok_emb", tok_emb_});
  out.push_back({"decoder.unembed", unembed_});
  out.push_back({"decoder.final_norm", final_norm_});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    const std::string prefix = "decoder.layer" + std::to_string(l) + ".";
    out.push_back({prefix + "attn_norm", layer.attn_norm});
    out.push_back({prefix + "wq", layer.wq});
    out.push_back({prefix + "wk", layer.wk});
    out.push_back({prefix + "wv", layer.wv});
    out.push_back({prefix + "wo", layer.wo});
    out.push_back({prefix + "ffn_norm", layer.ffn_norm});
    out.push_back({prefix + "w_gate", layer.w_gate});
    out.push_back({prefix + "w_up", layer.w_up});
    out.push_back({prefix + "w_down", layer.w_down});
  }
  return out;
}

template <class T>
std::int64_t Decoder<T>::param_count() const {
  std::int64_t total = 0;
  auto self = const_cast<Decoder<T>*>(this);
  for (const auto& p : self->params()) {
    total += static_cast<std::int64_t>(p.tensor.numel());
  }
  return total;
}

template <class T>
std::vector<std::int32_t> Decoder<T>::greedy_decode(const Tensor<T>& prefix,
                                                    std::int32_t bos_id, int steps) const {
  NoGradGuard ng;
  DecoderInput<T> input;
  input.prefix = prefix;
  input.bos_id = bos_id;
  std::vector<std::int32_t> out;
  for (int i = 0; i < steps; ++i) {
    input.tokens = out;
    auto logits = forward(input);
    const int last = logits.rows() - 1;
    const T* row = logits.data() + static_cast<std::size_t>(last) * spec_.vocab;
    int best = 0;
    for (int v = 1; v < spec_.vocab; ++v) {
      if (row[v] > row[best]) {
        best = v;
      }
    }
    out.push_back(best);
  }
  return out;
}

template std::pair<Tensor<float>, Tensor<float>> rope_apply<float>(const Tensor<float>&,
                                                                   const Tensor<float>&, int,
                                                                   std::span<const int>, float);
template std::pair<Tensor<double>, Tensor<double>> rope_apply<double>(
    const Tensor<double>&, const Tensor<double>&, int, std::span<const int>, double);
template class Decoder<float>;
template class Decoder<double>;

}  // namespace cclab
