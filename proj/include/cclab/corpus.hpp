#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cclab {

struct Segment {
  std::vector<std::int32_t> tokens;  // exactly seg_len ids, all < V
  std::int64_t source_offset = 0;    // token index in the corpus stream
};

enum class TaskKind { reconstruction, lm };

struct TaskExample {
  std::vector<std::int32_t> context;       // first m tokens
  std::vector<std::int32_t> continuation;  // empty for reconstruction
  int k = 0;                               // uncompressed tail length
};

struct SegmentSplit {
  std::vector<Segment> train;
  std::vector<Segment> val;
};

// Non-overlapping seg_len windows over the token stream, deterministically
// shuffled by seed and split train/val. Throws when the corpus is too short,
// reporting required vs available tokens.
SegmentSplit make_segments(const std::vector<std::int32_t>& tokens, int seg_len, int n_train,
                           int n_val, std::uint64_t seed);

TaskExample to_task(const Segment& seg, TaskKind task, int m, int k);

// One record per segment: "<split> <offset>", byte-stable for a given seed.
std::string segment_manifest(const SegmentSplit& split, int seg_len, std::uint64_t seed);
void write_segment_manifest(const std::filesystem::path& path, const SegmentSplit& split,
                            int seg_len, std::uint64_t seed);

// Token stream container format: ASCII header, then one id per line.
void save_token_stream(const std::filesystem::path& path,
                       const std::vector<std::int32_t>& tokens);
std::vector<std::int32_t> load_token_stream(const std::filesystem::path& path);

}  // namespace cclab
