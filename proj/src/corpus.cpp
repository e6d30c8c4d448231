#include "cclab/corpus.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cclab/rng.hpp"

namespace cclab {

SegmentSplit make_segments(const std::vector<std::int32_t>& tokens, int seg_len, int n_train,
                           int n_val, std::uint64_t seed) {
  if (seg_len < 1 || n_train < 0 || n_val < 0) {
    throw std::runtime_error("make_segments: invalid parameters");
  }
  const std::int64_t windows = static_cast<std::int64_t>(tokens.size()) / seg_len;
  const std::int64_t need = static_cast<std::int64_t>(n_train) + n_val;
  if (windows < need) {
    throw std::runtime_error("make_segments: corpus too short: need " +
                             std::to_string(need * seg_len) + " tokens, have " +
                             std::to_string(tokens.size()));
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(windows));
  for (std::int64_t i = 0; i < windows; ++i) {
    order[static_cast<std::size_t>(i)] = i;
  }
  Rng rng(seed);
  rng.shuffle(order);

  auto take = [&](std::int64_t from, int count) {
    std::vector<Segment> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const std::int64_t w = order[static_cast<std::size_t>(from + i)];
      Segment s;
      s.source_offset = w * seg_len;
      s.tokens.assign(tokens.begin() + s.source_offset,
                      tokens.begin() + s.source_offset + seg_len);
      out.push_back(std::move(s));
    }
    return out;
  };
  SegmentSplit split;
  split.train = take(0, n_train);
  split.val = take(n_train, n_val);
  return split;
}

TaskExample to_task(const Segment& seg, TaskKind task, int m, int k) {
  const int seg_len = static_cast<int>(seg.tokens.size());
  TaskExample ex;
  if (task == TaskKind::reconstruction) {
    if (m < 1 || m > seg_len) {
      throw std::runtime_error("to_task: reconstruction needs 1 <= m <= seg_len");
    }
    if (k != 0) {
      throw std::runtime_error("to_task: reconstruction has no uncompressed tail");
    }
    ex.context.assign(seg.tokens.begin(), seg.tokens.begin() + m);
    ex.k = 0;
    return ex;
  }
  if (m < 1 || m >= seg_len) {
    throw std::runtime_error("to_task: lm needs 1 <= m < seg_len");
  }
  if (k < 0 || k > m) {
    throw std::runtime_error("to_task: k must satisfy 0 <= k <= m");
  }
  ex.context.assign(seg.tokens.begin(), seg.tokens.begin() + m);
  ex.continuation.assign(seg.tokens.begin() + m, seg.tokens.end());
  ex.k = k;
  return ex;
}

std::string segment_manifest(const SegmentSplit& split, int seg_len, std::uint64_t seed) {
  std::ostringstream os;
  os << "cclab-segments v1\n";
  os << "seg_len " << seg_len << " n_train " << split.train.size() << " n_val "
     << split.val.size() << " seed " << seed << "\n";
  for (const auto& s : split.train) {
    os << "train " << s.source_offset << "\n";
  }
  for (const auto& s : split.val) {
    os << "val " << s.source_offset << "\n";
  }
  return os.str();
}

void write_segment_manifest(const std::filesystem::path& path, const SegmentSplit& split,
                            int seg_len, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write manifest: " + path.string());
  }
  out << segment_manifest(split, seg_len, seed);
}

void save_token_stream(const std::filesystem::path& path,
                       const std::vector<std::int32_t>& tokens) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write token stream: " + path.string());
  }
  out << "cclab-tokens v1 " << tokens.size() << "\n";
  for (const auto t : tokens) {
    out << t << "\n";
  }
}

std::vector<std::int32_t> load_token_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open token stream: " + path.string());
  }
  std::string tag, version;
  std::size_t n = 0;
  in >> tag >> version >> n;
  if (tag != "cclab-tokens" || version != "v1") {
    throw std::runtime_error("unrecognized token stream header in " + path.string());
  }
  std::vector<std::int32_t> tokens(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> tokens[i])) {
      throw std::runtime_error("truncated token stream: " + path.string());
    }
  }
  return tokens;
}

}  // namespace cclab
