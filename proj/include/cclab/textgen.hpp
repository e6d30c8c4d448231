#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cclab {

// Deterministic synthetic prose generator. Documents mix shared function
// words with topic-specific vocabulary and a handful of document-local entity
// names that recur throughout, so later text stays predictable from earlier
// context. Stands in for a real-text corpus in this sandboxed setup.
struct TextGenConfig {
  std::uint64_t seed = 7;
  std::size_t target_chars = 1u << 20;
  int n_topics = 40;
  int vocab_words = 6000;
  int topic_words = 300;
  int function_words = 60;
};

std::vector<std::string> generate_documents(const TextGenConfig& cfg);

}  // namespace cclab
