#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cclab {

// Byte-level BPE with byte fallback. Ids 0..255 are raw bytes, then the three
// reserved specials, then merged tokens in rank order. Encoding raw text can
// never produce a special id, and decode(encode(s)) == s for any byte string.
class Tokenizer {
 public:
  static constexpr int kByteTokens = 256;
  static constexpr int kBos = 256;
  static constexpr int kSepText = 257;
  static constexpr int kPad = 258;
  static constexpr int kFirstMerge = 259;

  // Deterministic given the document bytes and target_vocab. Pair counting is
  // capped at max_train_bytes of corpus prefix; merges never span documents.
  static Tokenizer train(std::span<const std::string> documents, int target_vocab,
                         std::size_t max_train_bytes = 8u << 20);

  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::int32_t> ids) const;

  int vocab_size() const { return kFirstMerge + static_cast<int>(merges_.size()); }

  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path);

  // Versioned text form (also the on-disk format).
  std::string to_text() const;
  static Tokenizer from_text(std::string_view text);

 private:
  void build_tables();

  std::vector<std::pair<std::int32_t, std::int32_t>> merges_;
  std::vector<std::string> expansion_;                    // per id; empty for specials
  std::unordered_map<std::uint64_t, std::int32_t> pair_rank_;  // (l,r) -> merged id
};

}  // namespace cclab
