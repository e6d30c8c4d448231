#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cclab/rng.hpp"
#include "cclab/tensor.hpp"

namespace cclab {

enum class EncoderKind { mean_pool, hierarchical, optical, truncation };

const char* encoder_kind_name(EncoderKind kind);
EncoderKind encoder_kind_from_name(const std::string& name);

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

// Encoder output: a short sequence of decoder-space vectors with the
// learnable separator as the final row. Truncation produces no vectors and
// carries the kept text tail instead.
template <class T>
struct CompressedContext {
  Tensor<T> vectors;  // z_len×d when present
  bool includes_separator = false;
  EncoderKind kind = EncoderKind::mean_pool;
  int source_len = 0;
  std::vector<std::int32_t> tail;  // truncation only

  int z_len() const { return vectors.defined() ? vectors.rows() : 0; }
};

struct MeanPoolConfig {
  int window = 4;
  int stride = 4;
};

struct HierConfig {
  int levels = 2;
  int width_cap_multiple = 4;  // widths double per block from d up to cap*d
  int groups = 8;              // falls back to 1 when a width is not divisible
};

struct OpticalTier {
  std::string name;
  int canvas = 96;  // square canvas in pixels
  int out_tokens = 18;
};

struct OpticalConfig {
  int glyph = 8;  // per-token glyph bitmap is glyph×glyph
  int patch = 8;
  int channels = 32;
  int conv_layers = 1;  // strided k=3,s=2,p=1 convs over the patch sequence
  OpticalTier tier = {"tiny", 96, 18};

  int cells_per_row() const { return tier.canvas / glyph; }
  int capacity() const { return cells_per_row() * cells_per_row(); }
};

// Desk-scale tier table, ~1/4 of the published vision tier sizes.
OpticalTier desk_tier(const std::string& name);
// Published tier table (token-count fixtures only).
OpticalTier paper_tier(const std::string& name);

struct EncoderSpec {
  EncoderKind kind = EncoderKind::mean_pool;
  MeanPoolConfig pool;
  HierConfig hier;
  OpticalConfig optical;
  int n_keep = 0;  // truncation budget
};

// Length bookkeeping. z lengths include the separator.
int mean_pool_z_len(int n, int window, int stride);
int hier_z_len(int n, int levels);
int optical_z_len(const OpticalConfig& cfg);

// Decoder-visible prefix length: BOS + compressed (incl. separator) + k text
// tokens; truncation is BOS + kept tail (clamped to the source length).
int context_token_count(const EncoderSpec& spec, int n, int k);

struct Bitmap {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // row-major, values in [0,1]
};

// Deterministic per-id glyph: the first bits encode the id directly (atlas
// injectivity by construction), the rest is a hash-seeded dot pattern.
std::vector<float> glyph_bitmap(std::int32_t id, int glyph);

Bitmap render_tokens(std::span<const std::int32_t> tokens, const OpticalConfig& cfg);
void write_pgm(const std::filesystem::path& path, const Bitmap& bmp);

template <class T>
class ContextEncoder {
 public:
  virtual ~ContextEncoder() = default;
  virtual EncoderKind kind() const = 0;
  virtual bool needs_embeddings() const { return true; }
  // tokens: the raw context ids; embeddings: decoder-space rows for those
  // tokens (undefined tensor when needs_embeddings() is false).
  virtual CompressedContext<T> encode(std::span<const std::int32_t> tokens,
                                      const Tensor<T>& embeddings) = 0;
  virtual std::vector<NamedParam<T>> params() = 0;
  virtual std::string config_string() const = 0;
  virtual int z_len_for(int n) const = 0;
};

template <class T>
class MeanPoolEncoder final : public ContextEncoder<T> {
 public:
  MeanPoolEncoder(MeanPoolConfig cfg, int d, Rng& rng);
  EncoderKind kind() const override { return EncoderKind::mean_pool; }
  CompressedContext<T> encode(std::span<const std::int32_t> tokens,
                              const Tensor<T>& embeddings) override;
  std::vector<NamedParam<T>> params() override;
  std::string config_string() const override;
  int z_len_for(int n) const override { return mean_pool_z_len(n, cfg_.window, cfg_.stride); }

 private:
  MeanPoolConfig cfg_;
  Tensor<T> sep_;
};

template <class T>
class HierEncoder final : public ContextEncoder<T> {
 public:
  HierEncoder(HierConfig cfg, int d, Rng& rng);
  EncoderKind kind() const override { return EncoderKind::hierarchical; }
  CompressedContext<T> encode(std::span<const std::int32_t> tokens,
                              const Tensor<T>& embeddings) override;
  std::vector<NamedParam<T>> params() override;
  std::string config_string() const override;
  int z_len_for(int n) const override { return hier_z_len(n, cfg_.levels); }
  // block output = GELU(GroupNorm(conv k3 s2) of GELU(GroupNorm(conv k5 s1))
  // plus the pooled skip), halving the length
  Tensor<T> run_block(const Tensor<T>& x, int block) const;
  const std::vector<int>& widths() const { return widths_; }

 private:
  struct Block {
    Tensor<T> conv_a_w, conv_a_b, gn_a_gain, gn_a_shift;
    Tensor<T> conv_b_w, conv_b_b, gn_b_gain, gn_b_shift;
    Tensor<T> skip_w;  // bias-free 1x1
    int groups = 1;
  };
  HierConfig cfg_;
  std::vector<int> widths_;
  std::vector<Block> blocks_;
  Tensor<T> proj_w_;  // bias-free 1x1 back to d
  Tensor<T> sep_;
};

template <class T>
class OpticalEncoder final : public ContextEncoder<T> {
 public:
  OpticalEncoder(OpticalConfig cfg, int d, Rng& rng);
  EncoderKind kind() const override { return EncoderKind::optical; }
  bool needs_embeddings() const override { return false; }
  CompressedContext<T> encode(std::span<const std::int32_t> tokens,
                              const Tensor<T>& embeddings) override;
  // pixels in, compressed vectors out; the render detour drops gradients
  CompressedContext<T> encode_bitmap(const Bitmap& bmp);
  std::vector<NamedParam<T>> params() override;
  std::string config_string() const override;
  int z_len_for(int) const override { return optical_z_len(cfg_); }

 private:
  OpticalConfig cfg_;
  Tensor<T> patch_w_, patch_b_;
  std::vector<Tensor<T>> conv_w_, conv_b_;
  Tensor<T> out_w_, out_b_;
  Tensor<T> sep_;
};

template <class T>
class TruncationEncoder final : public ContextEncoder<T> {
 public:
  explicit TruncationEncoder(int n_keep) : n_keep_(n_keep) {}
  EncoderKind kind() const override { return EncoderKind::truncation; }
  bool needs_embeddings() const override { return false; }
  CompressedContext<T> encode(std::span<const std::int32_t> tokens,
                              const Tensor<T>& embeddings) override;
  std::vector<NamedParam<T>> params() override { return {}; }
  std::string config_string() const override;
  int z_len_for(int) const override { return 0; }

 private:
  int n_keep_;
};

template <class T>
std::unique_ptr<ContextEncoder<T>> make_encoder(const EncoderSpec& spec, int d, Rng& rng);

}  // namespace cclab
