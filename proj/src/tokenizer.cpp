#include "cclab/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace cclab {

namespace {

constexpr std::int32_t kBreak = -1;  // document boundary, never merged across

std::uint64_t pair_key(std::int32_t l, std::int32_t r) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)) << 32) |
         static_cast<std::uint32_t>(r);
}

struct HeapEntry {
  std::int64_t count;
  std::int32_t left;
  std::int32_t right;
};

struct HeapLess {
  bool operator()(const HeapEntry& a, const HeapEntry& b) const {
    if (a.count != b.count) {
      return a.count < b.count;
    }
    if (a.left != b.left) {
      return a.left > b.left;  // smaller pair wins ties
    }
    return a.right > b.right;
  }
};

}  // namespace

Tokenizer Tokenizer::train(std::span<const std::string> documents, int target_vocab,
                           std::size_t max_train_bytes) {
  if (documents.empty()) {
    throw std::runtime_error("tokenizer: empty corpus");
  }
  std::size_t total = 0;
  for (const auto& d : documents) {
    total += d.size();
  }
  if (total == 0) {
    throw std::runtime_error("tokenizer: empty corpus");
  }
  if (target_vocab < kFirstMerge) {
    throw std::runtime_error("tokenizer: target_vocab must be at least " +
                             std::to_string(kFirstMerge) + " (256 bytes + 3 specials)");
  }

  // Flatten a corpus prefix with break sentinels between documents.
  std::vector<std::int32_t> tok;
  tok.reserve(std::min(total + documents.size(), max_train_bytes + documents.size()));
  std::size_t used = 0;
  for (const auto& d : documents) {
    if (used >= max_train_bytes) {
      break;
    }
    const std::size_t take = std::min(d.size(), max_train_bytes - used);
    for (std::size_t i = 0; i < take; ++i) {
      tok.push_back(static_cast<std::uint8_t>(d[i]));
    }
    used += take;
    tok.push_back(kBreak);
  }
  const int n = static_cast<int>(tok.size());
  std::vector<std::int32_t> next(n), prev(n);
  for (int i = 0; i < n; ++i) {
    next[i] = i + 1 < n ? i + 1 : -1;
    prev[i] = i - 1;
  }
  std::vector<std::uint8_t> alive(n, 1);

  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, std::vector<std::int32_t>> positions;
  for (int i = 0; i + 1 < n; ++i) {
    if (tok[i] == kBreak || tok[i + 1] == kBreak) {
      continue;
    }
    const auto key = pair_key(tok[i], tok[i + 1]);
    counts[key]++;
    positions[key].push_back(i);
  }

  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapLess> heap;
  for (const auto& [key, cnt] : counts) {
    heap.push({cnt, static_cast<std::int32_t>(key >> 32),
               static_cast<std::int32_t>(key & 0xffffffff)});
  }

  Tokenizer t;
  const int max_merges = target_vocab - kFirstMerge;
  auto bump = [&](std::int32_t l, std::int32_t r, std::int32_t pos, std::int64_t delta) {
    if (l == kBreak || r == kBreak || l < 0 || r < 0) {
      return;
    }
    const auto key = pair_key(l, r);
    const auto cnt = counts[key] += delta;
    if (delta > 0) {
      positions[key].push_back(pos);
      heap.push({cnt, l, r});
    }
  };

  while (static_cast<int>(t.merges_.size()) < max_merges && !heap.empty()) {
    HeapEntry top = heap.top();
    heap.pop();
    const auto key = pair_key(top.left, top.right);
    auto it = counts.find(key);
    if (it == counts.end() || it->second != top.count) {
      continue;  // stale entry
    }
    if (top.count < 2) {
      break;  // nothing left worth merging
    }
    const std::int32_t merged = kFirstMerge + static_cast<std::int32_t>(t.merges_.size());
    t.merges_.emplace_back(top.left, top.right);

    auto pos_list = std::move(positions[key]);
    positions.erase(key);
    counts.erase(key);
    std::sort(pos_list.begin(), pos_list.end());
    for (const std::int32_t i : pos_list) {
      if (!alive[i] || tok[i] != top.left) {
        continue;
      }
      const std::int32_t j = next[i];
      if (j < 0 || !alive[j] || tok[j] != top.right) {
        continue;
      }
      const std::int32_t p = prev[i];
      const std::int32_t q = next[j];
      if (p >= 0 && alive[p]) {
        bump(tok[p], tok[i], p, -1);
      }
      if (q >= 0 && alive[q]) {
        bump(tok[j], tok[q], j, -1);
      }
      tok[i] = merged;
      alive[j] = 0;
      next[i] = q;
      if (q >= 0) {
        prev[q] = i;
      }
      if (p >= 0 && alive[p]) {
        bump(tok[p], merged, p, +1);
      }
      if (q >= 0 && alive[q]) {
        bump(merged, tok[q], i, +1);
      }
    }
  }

  t.build_tables();
  return t;
}

void Tokenizer::build_tables() {
  expansion_.assign(static_cast<std::size_t>(vocab_size()), std::string());
  for (int i = 0; i < kByteTokens; ++i) {
    expansion_[i] = std::string(1, static_cast<char>(static_cast<unsigned char>(i)));
  }
  pair_rank_.clear();
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto [l, rr] = merges_[r];
    const int id = kFirstMerge + static_cast<int>(r);
    if (l < 0 || l >= id || rr < 0 || rr >= id || expansion_[l].empty() ||
        expansion_[rr].empty()) {
      throw std::runtime_error("tokenizer: invalid merge table entry at rank " +
                               std::to_string(r));
    }
    expansion_[id] = expansion_[l] + expansion_[rr];
    pair_rank_[pair_key(l, rr)] = id;
  }
}

std::vector<std::int32_t> Tokenizer::encode(std::string_view text) const {
  const int n = static_cast<int>(text.size());
  if (n == 0) {
    return {};
  }
  std::vector<std::int32_t> tok(n);
  std::vector<std::int32_t> next(n), prev(n);
  std::vector<std::uint8_t> alive(n, 1);
  for (int i = 0; i < n; ++i) {
    tok[i] = static_cast<std::uint8_t>(text[i]);
    next[i] = i + 1 < n ? i + 1 : -1;
    prev[i] = i - 1;
  }
  // (merged id, position): lowest rank first, then leftmost occurrence.
  using Cand = std::pair<std::int32_t, std::int32_t>;
  std::priority_queue<Cand, std::vector<Cand>, std::greater<Cand>> heap;
  auto push_if_merge = [&](int i) {
    if (i < 0) {
      return;
    }
    const int j = next[i];
    if (j < 0) {
      return;
    }
    const auto it = pair_rank_.find(pair_key(tok[i], tok[j]));
    if (it != pair_rank_.end()) {
      heap.push({it->second, i});
    }
  };
  for (int i = 0; i + 1 < n; ++i) {
    push_if_merge(i);
  }
  while (!heap.empty()) {
    const auto [id, i] = heap.top();
    heap.pop();
    if (!alive[i]) {
      continue;
    }
    const int j = next[i];
    if (j < 0 || !alive[j]) {
      continue;
    }
    const auto it = pair_rank_.find(pair_key(tok[i], tok[j]));
    if (it == pair_rank_.end() || it->second != id) {
      continue;  // stale candidate
    }
    tok[i] = id;
    alive[j] = 0;
    const int q = next[j];
    next[i] = q;
    if (q >= 0) {
      prev[q] = i;
    }
    push_if_merge(prev[i]);
    push_if_merge(i);
  }
  std::vector<std::int32_t> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i >= 0; i = next[i]) {
    out.push_back(tok[i]);
  }
  return out;
}

std::string Tokenizer::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (const std::int32_t id : ids) {
    if (id < 0 || id >= vocab_size()) {
      throw std::runtime_error("tokenizer: id " + std::to_string(id) +
                               " outside vocabulary of " + std::to_string(vocab_size()));
    }
    out += expansion_[static_cast<std::size_t>(id)];  // specials expand to ""
  }
  return out;
}

std::string Tokenizer::to_text() const {
  std::ostringstream os;
  os << "cclab-tokenizer v1\n";
  os << "vocab " << vocab_size() << "\n";
  os << "specials bos=" << kBos << " sep=" << kSepText << " pad=" << kPad << "\n";
  os << "merges " << merges_.size() << "\n";
  for (const auto& [l, r] : merges_) {
    os << l << " " << r << "\n";
  }
  return os.str();
}

Tokenizer Tokenizer::from_text(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line) || line != "cclab-tokenizer v1") {
    throw std::runtime_error("tokenizer: unrecognized file header");
  }
  std::string word;
  int vocab = 0;
  is >> word >> vocab;
  if (word != "vocab") {
    throw std::runtime_error("tokenizer: malformed vocab line");
  }
  is >> word >> line >> line >> line;  // specials line (ids are fixed)
  std::size_t n_merges = 0;
  is >> word >> n_merges;
  if (word != "merges") {
    throw std::runtime_error("tokenizer: malformed merges line");
  }
  Tokenizer t;
  t.merges_.reserve(n_merges);
  for (std::size_t i = 0; i < n_merges; ++i) {
    std::int32_t l = 0, r = 0;
    if (!(is >> l >> r)) {
      throw std::runtime_error("tokenizer: truncated merge table");
    }
    t.merges_.emplace_back(l, r);
  }
  if (t.vocab_size() != vocab) {
    throw std::runtime_error("tokenizer: vocab header disagrees with merge count");
  }
  t.build_tables();
  return t;
}

void Tokenizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("tokenizer: cannot write " + path.string());
  }
  out << to_text();
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("tokenizer: cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

}  // namespace cclab
