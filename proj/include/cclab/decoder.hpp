#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cclab/encoders.hpp"
#include "cclab/rng.hpp"
#include "cclab/tensor.hpp"

namespace cclab {

enum class FfnKind { silu_gate, gelu };

struct DecoderSpec {
  int layers = 4;
  int d = 256;
  int heads = 4;
  int head_dim = 64;
  int ffn_dim = 1024;
  int vocab = 4096;
  double rope_base = 10000.0;
  FfnKind ffn = FfnKind::silu_gate;

  void validate() const;
};

DecoderSpec desk_decoder_spec();
// Published architecture shape (12 layers, 1280 wide, 10 heads, 6848 ffn);
// used for shape/parameter bookkeeping tests only.
DecoderSpec paper_decoder_spec();

// The decoder consumes [BOS, prefix vectors, text tokens] as one causal
// sequence with shared global positions. `tokens` never includes BOS; it is
// prepended internally and accounts for the +1 in all context token counts.
template <class T>
struct DecoderInput {
  Tensor<T> prefix;  // p×d compressed context incl. separator; may be undefined
  std::vector<std::int32_t> tokens;
  std::int32_t bos_id = 0;
};

// Standard pairwise rotation by pos * base^(-2i/head_dim); kept as a free
// function so the relative-position property can be probed directly.
template <class T>
std::pair<Tensor<T>, Tensor<T>> rope_apply(const Tensor<T>& q, const Tensor<T>& k, int heads,
                                           std::span<const int> positions, T base);

template <class T>
class Decoder {
 public:
  Decoder(DecoderSpec spec, Rng& rng);

  const DecoderSpec& spec() const { return spec_; }

  // Next-token logits, one row per entry of input.tokens (row j predicts
  // token j, computed from the preceding position). With no tokens, returns
  // the single row following the whole prefix.
  Tensor<T> forward(const DecoderInput<T>& input) const;

  std::vector<NamedParam<T>> params();
  std::int64_t param_count() const;
  Tensor<T>& token_embedding() { return tok_emb_; }

  // Greedy rollout for qualitative reconstruction dumps.
  std::vector<std::int32_t> greedy_decode(const Tensor<T>& prefix, std::int32_t bos_id,
                                          int steps) const;

 private:
  struct Layer {
    Tensor<T> attn_norm, wq, wk, wv, wo;
    Tensor<T> ffn_norm, w_gate, w_up, w_down;
  };

  DecoderSpec spec_;
  Tensor<T> tok_emb_;   // vocab×d
  Tensor<T> unembed_;   // d×vocab, untied
  Tensor<T> final_norm_;
  std::vector<Layer> layers_;
};

}  // namespace cclab
