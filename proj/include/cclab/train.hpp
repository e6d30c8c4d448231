#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cclab/corpus.hpp"
#include "cclab/decoder.hpp"
#include "cclab/encoders.hpp"

namespace cclab {

enum class Phase { reconstruction, lm };
const char* phase_name(Phase phase);

struct TrainConfig {
  double lr_peak = 1e-4;
  double lr_encoder_override = 0.0;  // 0 disables the override
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double warmup_ratio = 0.1;
  double adam_eps = 1e-8;
  int batch_size = 16;
  int grad_accum = 1;
  int epochs = 1;
  int max_steps = 0;  // 0: derived from epochs
  std::uint64_t seed = 1;
  std::set<std::string> freeze;  // parameter groups: "encoder", "decoder"

  void validate() const;
};

// Linear warmup to lr_peak over the first warmup_ratio*total steps, then
// cosine decay to zero over the remainder.
double lr_at(int step, int total, const TrainConfig& cfg);

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t t = 0;

  void init(const std::vector<NamedParam<float>>& params);
};

// Decoupled weight decay with bias-corrected moments. lr_scales holds one
// multiplier per parameter (encoder LR override); throws on a NaN gradient,
// naming the parameter.
void adamw_step(std::vector<NamedParam<float>>& params, AdamState& state,
                const TrainConfig& cfg, double lr, const std::vector<double>& lr_scales);

struct Checkpoint {
  struct Record {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
  };

  std::string phase;
  std::string config_fingerprint;
  std::int64_t step = 0;
  std::int64_t adam_t = 0;
  std::vector<Record> params;
  std::vector<Record> opt;  // adam moments as m.<name> / v.<name>

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  static Checkpoint capture(const std::string& phase, const std::string& fingerprint,
                            std::int64_t step, std::vector<NamedParam<float>>& params,
                            const AdamState* adam);
  // Copies stored values into matching names; throws on missing name or
  // shape mismatch.
  void restore(std::vector<NamedParam<float>>& params) const;
  void restore_adam(AdamState& state, const std::vector<NamedParam<float>>& params) const;
};

struct TrainResult {
  Checkpoint checkpoint;
  double final_loss = 0.0;
  int steps_run = 0;
  bool aborted_non_finite = false;
  std::string metrics_csv;  // header + one row per step: step,lr,loss,grad_norm
};

// One optimization phase over task examples. `encoder` may be null for the
// context-free baseline (plain next-token training on the same decoder).
// Reconstruction with a truncation encoder is rejected as ill-posed.
TrainResult train_phase(Phase phase, ContextEncoder<float>* encoder, Decoder<float>& decoder,
                        const std::vector<TaskExample>& examples, const TrainConfig& cfg,
                        std::int32_t bos_id, const std::string& config_fingerprint);

// (prefix tokens, text tokens, loss mask) assembly shared by training and
// evaluation.
struct AssembledExample {
  Tensor<float> prefix;  // undefined when the encoder yields no vectors
  std::vector<std::int32_t> tokens;
  std::vector<std::uint8_t> mask;
};

AssembledExample assemble_example(Phase phase, ContextEncoder<float>* encoder,
                                  Decoder<float>& decoder, const TaskExample& ex);

}  // namespace cclab
