#include "cclab/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "cclab/ops.hpp"

namespace cclab {

const char* encoder_kind_name(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::mean_pool:
      return "mean_pool";
    case EncoderKind::hierarchical:
      return "hierarchical";
    case EncoderKind::optical:
      return "optical";
    case EncoderKind::truncation:
      return "truncation";
  }
  return "?";
}

EncoderKind encoder_kind_from_name(const std::string& name) {
  if (name == "mean_pool") {
    return EncoderKind::mean_pool;
  }
  if (name == "hierarchical") {
    return EncoderKind::hierarchical;
  }
  if (name == "optical") {
    return EncoderKind::optical;
  }
  if (name == "truncation") {
    return EncoderKind::truncation;
  }
  throw std::runtime_error("unknown encoder kind: " + name);
}

OpticalTier desk_tier(const std::string& name) {
  if (name == "tiny") {
    return {"tiny", 96, 18};
  }
  if (name == "small") {
    return {"small", 112, 28};
  }
  if (name == "base") {
    return {"base", 128, 68};
  }
  if (name == "large") {
    return {"large", 160, 105};
  }
  throw std::runtime_error("unknown optical tier: " + name);
}

OpticalTier paper_tier(const std::string& name) {
  if (name == "tiny") {
    return {"tiny", 512, 73};
  }
  if (name == "small") {
    return {"small", 640, 111};
  }
  if (name == "base") {
    return {"base", 1024, 273};
  }
  if (name == "large") {
    return {"large", 1280, 421};
  }
  throw std::runtime_error("unknown optical tier: " + name);
}

int mean_pool_z_len(int n, int window, int stride) {
  if (window < 1 || stride < 1 || stride > window) {
    throw std::runtime_error("mean_pool: need 1 <= stride <= window");
  }
  int full = 0;
  int covered = 0;
  if (n >= window) {
    full = (n - window) / stride + 1;
    covered = (full - 1) * stride + window;
  }
  const int remainder = covered < n ? 1 : 0;
  return full + remainder + 1;  // + separator
}

int hier_z_len(int n, int levels) {
  if (levels < 1) {
    throw std::runtime_error("hierarchical: levels must be >= 1");
  }
  int len = n;
  for (int l = 0; l < levels; ++l) {
    len = (len + 1) / 2;
  }
  return len + 1;  // + separator
}

int optical_z_len(const OpticalConfig& cfg) { return cfg.tier.out_tokens + 1; }

int context_token_count(const EncoderSpec& spec, int n, int k) {
  switch (spec.kind) {
    case EncoderKind::mean_pool:
      return 1 + mean_pool_z_len(n, spec.pool.window, spec.pool.stride) + k;
    case EncoderKind::hierarchical:
      return 1 + hier_z_len(n, spec.hier.levels) + k;
    case EncoderKind::optical:
      return 1 + optical_z_len(spec.optical) + k;
    case EncoderKind::truncation:
      return 1 + std::min(spec.n_keep, n);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// glyph rendering
// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<float> glyph_bitmap(std::int32_t id, int glyph) {
  const int cells = glyph * glyph;
  std::vector<float> g(static_cast<std::size_t>(cells), 0.0f);
  // low id bits go straight into the leading cells, so glyphs stay distinct
  const int id_bits = std::min(cells, 24);
  for (int b = 0; b < id_bits; ++b) {
    g[static_cast<std::size_t>(b)] = ((static_cast<std::uint32_t>(id) >> b) & 1u) ? 1.0f : 0.0f;
  }
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(id) * 0x2545f4914f6cdd1dull + 1);
  int drawn = 0;
  for (int b = id_bits; b < cells; ++b, ++drawn) {
    if (drawn > 0 && drawn % 64 == 0) {
      h = splitmix64(h);
    }
    g[static_cast<std::size_t>(b)] = ((h >> (drawn % 64)) & 1u) ? 1.0f : 0.0f;
  }
  return g;
}

Bitmap render_tokens(std::span<const std::int32_t> tokens, const OpticalConfig& cfg) {
  const int cpr = cfg.cells_per_row();
  const int capacity = cfg.capacity();
  if (static_cast<int>(tokens.size()) > capacity) {
    throw std::runtime_error("render_tokens: " + std::to_string(tokens.size()) +
                             " tokens exceed tier '" + cfg.tier.name + "' capacity of " +
                             std::to_string(capacity));
  }
  Bitmap bmp;
  bmp.height = cfg.tier.canvas;
  bmp.width = cfg.tier.canvas;
  bmp.pixels.assign(static_cast<std::size_t>(bmp.height) * bmp.width, 0.0f);
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    const auto g = glyph_bitmap(tokens[static_cast<std::size_t>(i)], cfg.glyph);
    const int cell_row = i / cpr;
    const int cell_col = i % cpr;
    for (int y = 0; y < cfg.glyph; ++y) {
      for (int x = 0; x < cfg.glyph; ++x) {
        const std::size_t py = static_cast<std::size_t>(cell_row * cfg.glyph + y);
        const std::size_t px = static_cast<std::size_t>(cell_col * cfg.glyph + x);
        bmp.pixels[py * bmp.width + px] = g[static_cast<std::size_t>(y * cfg.glyph + x)];
      }
    }
  }
  return bmp;
}

void write_pgm(const std::filesystem::path& path, const Bitmap& bmp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << "P5\n" << bmp.width << " " << bmp.height << "\n255\n";
  for (float v : bmp.pixels) {
    const int q = std::clamp(static_cast<int>(v * 255.0f + 0.5f), 0, 255);
    out.put(static_cast<char>(q));
  }
}

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

namespace {

// Window mean with the oracle's arithmetic: ascending-row sums, one division.
template <class T>
Tensor<T> window_mean(const Tensor<T>& e, int window, int stride) {
  const int n = e.rows();
  const int d = e.cols();
  int full = 0;
  int covered = 0;
  if (n >= window) {
    full = (n - window) / stride + 1;
    covered = (full - 1) * stride + window;
  }
  const int remainder = covered < n ? 1 : 0;
  const int rows = full + remainder;
  auto out = Tensor<T>::zeros({rows, d});
  const T* pe = e.data();
  T* po = out.data();
  auto average = [&](int row, int begin, int count) {
    T* orow = po + static_cast<std::size_t>(row) * d;
    for (int r = begin; r < begin + count; ++r) {
      const T* erow = pe + static_cast<std::size_t>(r) * d;
      for (int j = 0; j < d; ++j) {
        orow[j] += erow[j];
      }
    }
    for (int j = 0; j < d; ++j) {
      orow[j] /= static_cast<T>(count);
    }
  };
  for (int i = 0; i < full; ++i) {
    average(i, i * stride, window);
  }
  if (remainder) {
    average(full, covered, n - covered);
  }
  if (grad_enabled() && e.requires_grad()) {
    auto ei = e.impl();
    auto oi = out.impl().get();
    out.impl()->requires_grad = true;
    out.impl()->parents = {ei};
    out.impl()->backward = [ei, oi, n, d, window, stride, full, covered, remainder]() {
      auto spread = [&](int row, int begin, int count) {
        const T* grow = oi->grad.data() + static_cast<std::size_t>(row) * d;
        for (int r = begin; r < begin + count; ++r) {
          T* dst = ei->grad.data() + static_cast<std::size_t>(r) * d;
          for (int j = 0; j < d; ++j) {
            dst[j] += grow[j] / static_cast<T>(count);
          }
        }
      };
      for (int i = 0; i < full; ++i) {
        spread(i, i * stride, window);
      }
      if (remainder) {
        spread(full, covered, n - covered);
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> init_weight(std::vector<int> shape, int fan_in, Rng& rng) {
  const T std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  return Tensor<T>::randn(std::move(shape), rng, std, true);
}

int group_count_for(int width, int preferred) {
  return (width >= preferred && width % preferred == 0) ? preferred : 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// mean pooling
// ---------------------------------------------------------------------------

template <class T>
MeanPoolEncoder<T>::MeanPoolEncoder(MeanPoolConfig cfg, int d, Rng& rng) : cfg_(cfg) {
  if (cfg_.stride < 1 || cfg_.stride > cfg_.window) {
    throw std::runtime_error("mean_pool: need 1 <= stride <= window");
  }
  sep_ = Tensor<T>::randn({1, d}, rng, T(0.02), true);
}

template <class T>
CompressedContext<T> MeanPoolEncoder<T>::encode(std::span<const std::int32_t> tokens,
                                                const Tensor<T>& embeddings) {
  (void)tokens;
  if (embeddings.rows() < 1) {
    throw std::runtime_error("mean_pool: empty context");
  }
  auto pooled = window_mean(embeddings, cfg_.window, cfg_.stride);
  CompressedContext<T> ctx;
  ctx.vectors = ops::concat_rows<T>({pooled, sep_});
  ctx.includes_separator = true;
  ctx.kind = EncoderKind::mean_pool;
  ctx.source_len = embeddings.rows();
  return ctx;
}

template <class T>
std::vector<NamedParam<T>> MeanPoolEncoder<T>::params() {
  return {{"encoder.sep", sep_}};
}

template <class T>
std::string MeanPoolEncoder<T>::config_string() const {
  return "w=" + std::to_string(cfg_.window) + ",s=" + std::to_string(cfg_.stride);
}

// ---------------------------------------------------------------------------
// hierarchical conv
// ---------------------------------------------------------------------------

template <class T>
HierEncoder<T>::HierEncoder(HierConfig cfg, int d, Rng& rng) : cfg_(cfg) {
  if (cfg_.levels < 1) {
    throw std::runtime_error("hierarchical: levels must be >= 1");
  }
  const int cap = cfg_.width_cap_multiple * d;
  int c_in = d;
  for (int l = 0; l < cfg_.levels; ++l) {
    const int c_out = std::min(c_in * 2, cap);
    widths_.push_back(c_out);
    Block b;
    b.groups = group_count_for(c_out, cfg_.groups);
    b.conv_a_w = init_weight<T>({c_out, c_in, 5}, c_in * 5, rng);
    b.conv_a_b = Tensor<T>::zeros({c_out}, true);
    b.gn_a_gain = Tensor<T>::full({c_out}, T(1), true);
    b.gn_a_shift = Tensor<T>::zeros({c_out}, true);
    b.conv_b_w = init_weight<T>({c_out, c_out, 3}, c_out * 3, rng);
    b.conv_b_b = Tensor<T>::zeros({c_out}, true);
    b.gn_b_gain = Tensor<T>::full({c_out}, T(1), true);
    b.gn_b_shift = Tensor<T>::zeros({c_out}, true);
    b.skip_w = init_weight<T>({c_out, c_in, 1}, c_in, rng);
    blocks_.push_back(std::move(b));
    c_in = c_out;
  }
  proj_w_ = init_weight<T>({d, c_in, 1}, c_in, rng);
  sep_ = Tensor<T>::randn({1, d}, rng, T(0.02), true);
}

template <class T>
Tensor<T> HierEncoder<T>::run_block(const Tensor<T>& x, int block) const {
  const auto& b = blocks_[static_cast<std::size_t>(block)];
  const T eps = T(1e-5);
  auto h = ops::gelu(ops::group_norm(ops::conv1d(x, b.conv_a_w, b.conv_a_b, 1, 2), b.groups,
                                     eps, b.gn_a_gain, b.gn_a_shift));
  auto m = ops::group_norm(ops::conv1d(h, b.conv_b_w, b.conv_b_b, 2, 1), b.groups, eps,
                           b.gn_b_gain, b.gn_b_shift);
  const int half = (x.rows() + 1) / 2;
  auto skip = ops::conv1d(ops::adaptive_avg_pool(x, half), b.skip_w, Tensor<T>(), 1, 0);
  return ops::gelu(ops::add(m, skip));
}

template <class T>
CompressedContext<T> HierEncoder<T>::encode(std::span<const std::int32_t> tokens,
                                            const Tensor<T>& embeddings) {
  (void)tokens;
  if (embeddings.rows() < 1) {
    throw std::runtime_error("hierarchical: empty context");
  }
  Tensor<T> x = embeddings;
  for (int l = 0; l < cfg_.levels; ++l) {
    x = run_block(x, l);
  }
  if (x.rows() < 2) {
    std::cerr << "hierarchical: warning: compressed length " << x.rows() << " from "
              << embeddings.rows() << " input tokens\n";
  }
  auto z = ops::conv1d(x, proj_w_, Tensor<T>(), 1, 0);
  CompressedContext<T> ctx;
  ctx.vectors = ops::concat_rows<T>({z, sep_});
  ctx.includes_separator = true;
  ctx.kind = EncoderKind::hierarchical;
  ctx.source_len = embeddings.rows();
  return ctx;
}

template <class T>
std::vector<NamedParam<T>> HierEncoder<T>::params() {
  std::vector<NamedParam<T>> out;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    auto& b = blocks_[l];
    const std::string p = "encoder.block" + std::to_string(l) + ".";
    out.push_back({p + "conv_a.w", b.conv_a_w});
    out.push_back({p + "conv_a.b", b.conv_a_b});
    out.push_back({p + "gn_a.gain", b.gn_a_gain});
    out.push_back({p + "gn_a.shift", b.gn_a_shift});
    out.push_back({p + "conv_b.w", b.conv_b_w});
    out.push_back({p + "conv_b.b", b.conv_b_b});
    out.push_back({p + "gn_b.gain", b.gn_b_gain});
    out.push_back({p + "gn_b.shift", b.gn_b_shift});
    out.push_back({p + "skip.w", b.skip_w});
  }
  out.push_back({"encoder.proj.w", proj_w_});
  out.push_back({"encoder.sep", sep_});
  return out;
}

template <class T>
std::string HierEncoder<T>::config_string() const {
  return "L=" + std::to_string(cfg_.levels);
}

// ---------------------------------------------------------------------------
// optical (render then encode)
// ---------------------------------------------------------------------------

template <class T>
OpticalEncoder<T>::OpticalEncoder(OpticalConfig cfg, int d, Rng& rng) : cfg_(cfg) {
  if (cfg_.tier.canvas % cfg_.glyph != 0) {
    throw std::runtime_error("optical: glyph grid must tile the canvas exactly");
  }
  if (cfg_.tier.canvas % cfg_.patch != 0) {
    throw std::runtime_error("optical: patch grid must tile the canvas exactly");
  }
  int seq = (cfg_.tier.canvas / cfg_.patch) * (cfg_.tier.canvas / cfg_.patch);
  for (int l = 0; l < cfg_.conv_layers; ++l) {
    seq = (seq + 1) / 2;
  }
  if (seq < cfg_.tier.out_tokens) {
    throw std::runtime_error("optical: conv stack output " + std::to_string(seq) +
                             " shorter than tier token count " +
                             std::to_string(cfg_.tier.out_tokens));
  }
  const int pp = cfg_.patch * cfg_.patch;
  patch_w_ = init_weight<T>({pp, cfg_.channels}, pp, rng);
  patch_b_ = Tensor<T>::zeros({cfg_.channels}, true);
  for (int l = 0; l < cfg_.conv_layers; ++l) {
    conv_w_.push_back(init_weight<T>({cfg_.channels, cfg_.channels, 3}, cfg_.channels * 3, rng));
    conv_b_.push_back(Tensor<T>::zeros({cfg_.channels}, true));
  }
  out_w_ = init_weight<T>({cfg_.channels, d}, cfg_.channels, rng);
  out_b_ = Tensor<T>::zeros({d}, true);
  sep_ = Tensor<T>::randn({1, d}, rng, T(0.02), true);
}

template <class T>
CompressedContext<T> OpticalEncoder<T>::encode(std::span<const std::int32_t> tokens,
                                               const Tensor<T>& embeddings) {
  (void)embeddings;  // the detour starts from pixels, not embeddings
  return encode_bitmap(render_tokens(tokens, cfg_));
}

template <class T>
CompressedContext<T> OpticalEncoder<T>::encode_bitmap(const Bitmap& bmp) {
  if (bmp.height != cfg_.tier.canvas || bmp.width != cfg_.tier.canvas) {
    throw std::runtime_error("optical: bitmap is " + std::to_string(bmp.width) + "x" +
                             std::to_string(bmp.height) + ", tier '" + cfg_.tier.name +
                             "' expects " + std::to_string(cfg_.tier.canvas));
  }
  const int grid = cfg_.tier.canvas / cfg_.patch;
  const int pp = cfg_.patch * cfg_.patch;
  auto patches = Tensor<T>::zeros({grid * grid, pp});
  T* pd = patches.data();
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      T* row = pd + static_cast<std::size_t>(gy * grid + gx) * pp;
      for (int y = 0; y < cfg_.patch; ++y) {
        for (int x = 0; x < cfg_.patch; ++x) {
          row[y * cfg_.patch + x] = static_cast<T>(
              bmp.pixels[static_cast<std::size_t>(gy * cfg_.patch + y) * bmp.width +
                         gx * cfg_.patch + x]);
        }
      }
    }
  }
  auto h = ops::gelu(ops::add_bias(ops::matmul(patches, patch_w_), patch_b_));
  for (std::size_t l = 0; l < conv_w_.size(); ++l) {
    h = ops::gelu(ops::conv1d(h, conv_w_[l], conv_b_[l], 2, 1));
  }
  auto pooled = ops::adaptive_avg_pool(h, cfg_.tier.out_tokens);
  auto z = ops::add_bias(ops::matmul(pooled, out_w_), out_b_);
  CompressedContext<T> ctx;
  ctx.vectors = ops::concat_rows<T>({z, sep_});
  ctx.includes_separator = true;
  ctx.kind = EncoderKind::optical;
  ctx.source_len = 0;
  return ctx;
}

template <class T>
std::vector<NamedParam<T>> OpticalEncoder<T>::params() {
  std::vector<NamedParam<T>> out;
  out.push_back({"encoder.patch.w", patch_w_});
  out.push_back({"encoder.patch.b", patch_b_});
  for (std::size_t l = 0; l < conv_w_.size(); ++l) {
    out.push_back({"encoder.conv" + std::to_string(l) + ".w", conv_w_[l]});
    out.push_back({"encoder.conv" + std::to_string(l) + ".b", conv_b_[l]});
  }
  out.push_back({"encoder.out.w", out_w_});
  out.push_back({"encoder.out.b", out_b_});
  out.push_back({"encoder.sep", sep_});
  return out;
}

template <class T>
std::string OpticalEncoder<T>::config_string() const {
  return cfg_.tier.name;
}

// ---------------------------------------------------------------------------
// truncation
// ---------------------------------------------------------------------------

template <class T>
CompressedContext<T> TruncationEncoder<T>::encode(std::span<const std::int32_t> tokens,
                                                  const Tensor<T>& embeddings) {
  (void)embeddings;
  CompressedContext<T> ctx;
  ctx.kind = EncoderKind::truncation;
  ctx.includes_separator = false;
  ctx.source_len = static_cast<int>(tokens.size());
  const int keep = std::min<int>(n_keep_, static_cast<int>(tokens.size()));
  ctx.tail.assign(tokens.end() - keep, tokens.end());
  return ctx;
}

template <class T>
std::string TruncationEncoder<T>::config_string() const {
  return "n=" + std::to_string(n_keep_);
}

template <class T>
std::unique_ptr<ContextEncoder<T>> make_encoder(const EncoderSpec& spec, int d, Rng& rng) {
  switch (spec.kind) {
    case EncoderKind::mean_pool:
      return std::make_unique<MeanPoolEncoder<T>>(spec.pool, d, rng);
    case EncoderKind::hierarchical:
      return std::make_unique<HierEncoder<T>>(spec.hier, d, rng);
    case EncoderKind::optical:
      return std::make_unique<OpticalEncoder<T>>(spec.optical, d, rng);
    case EncoderKind::truncation:
      return std::make_unique<TruncationEncoder<T>>(spec.n_keep);
  }
  throw std::runtime_error("make_encoder: bad kind");
}

template class MeanPoolEncoder<float>;
template class MeanPoolEncoder<double>;
template class HierEncoder<float>;
template class HierEncoder<double>;
template class OpticalEncoder<float>;
template class OpticalEncoder<double>;
template class TruncationEncoder<float>;
template class TruncationEncoder<double>;
template std::unique_ptr<ContextEncoder<float>> make_encoder<float>(const EncoderSpec&, int,
                                                                    Rng&);
template std::unique_ptr<ContextEncoder<double>> make_encoder<double>(const EncoderSpec&, int,
                                                                      Rng&);

}  // namespace cclab
