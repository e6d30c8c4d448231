#include "cclab/train.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "cclab/ops.hpp"

namespace cclab {

const char* phase_name(Phase phase) {
  return phase == Phase::reconstruction ? "recon" : "lm";
}

void TrainConfig::validate() const {
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
    throw std::runtime_error("train: warmup_ratio must be in [0, 1)");
  }
  if (!(clip_norm > 0.0)) {
    throw std::runtime_error("train: clip_norm must be > 0");
  }
  if (batch_size < 1 || grad_accum < 1 || epochs < 0 || max_steps < 0) {
    throw std::runtime_error("train: batch/accum/epochs/max_steps out of range");
  }
  for (const auto& g : freeze) {
    if (g != "encoder" && g != "decoder") {
      throw std::runtime_error("train: unknown freeze group '" + g + "'");
    }
  }
}

double lr_at(int step, int total, const TrainConfig& cfg) {
  if (total <= 0) {
    throw std::runtime_error("lr_at: total steps must be positive");
  }
  if (step < 0 || step > total) {
    throw std::runtime_error("lr_at: step outside [0, total]");
  }
  const double warmup = cfg.warmup_ratio * total;
  if (warmup > 0.0 && step <= warmup) {
    return cfg.lr_peak * (static_cast<double>(step) / warmup);
  }
  const double span = total - warmup;
  if (span <= 0.0) {
    return cfg.lr_peak;
  }
  const double progress = (static_cast<double>(step) - warmup) / span;
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

void AdamState::init(const std::vector<NamedParam<float>>& params) {
  m.clear();
  v.clear();
  t = 0;
  for (const auto& p : params) {
    m.emplace_back(p.tensor.numel(), 0.0f);
    v.emplace_back(p.tensor.numel(), 0.0f);
  }
}

void adamw_step(std::vector<NamedParam<float>>& params, AdamState& state,
                const TrainConfig& cfg, double lr, const std::vector<double>& lr_scales) {
  if (state.m.size() != params.size() || lr_scales.size() != params.size()) {
    throw std::runtime_error("adamw: state/scale size mismatch");
  }
  if (lr < 0.0) {
    throw std::runtime_error("adamw: negative learning rate");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.tensor.requires_grad()) {
      continue;
    }
    const double lr_p = lr * lr_scales[i];
    auto values = p.tensor.values();
    auto grads = p.tensor.grad();
    auto& mi = state.m[i];
    auto& vi = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads[j];
      if (!std::isfinite(g)) {
        throw std::runtime_error("adamw: non-finite gradient in " + p.name);
      }
      const double mn = cfg.beta1 * mi[j] + (1.0 - cfg.beta1) * g;
      const double vn = cfg.beta2 * vi[j] + (1.0 - cfg.beta2) * g * g;
      mi[j] = static_cast<float>(mn);
      vi[j] = static_cast<float>(vn);
      const double mhat = mn / bc1;
      const double vhat = vn / bc2;
      double x = values[j];
      x -= lr_p * cfg.weight_decay * x;  // decoupled decay
      x -= lr_p * mhat / (std::sqrt(vhat) + cfg.adam_eps);
      values[j] = static_cast<float>(x);
    }
  }
}

// ---------------------------------------------------------------------------
// checkpoint container
// ---------------------------------------------------------------------------

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ofstream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string read_str(std::ifstream& in) {
  const auto n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

void write_record(std::ofstream& out, const Checkpoint::Record& r) {
  write_str(out, r.name);
  out.put(static_cast<char>(0));  // dtype 0 = f32 little-endian
  write_u32(out, static_cast<std::uint32_t>(r.shape.size()));
  for (int d : r.shape) {
    write_u32(out, static_cast<std::uint32_t>(d));
  }
  out.write(reinterpret_cast<const char*>(r.data.data()),
            static_cast<std::streamsize>(r.data.size() * sizeof(float)));
}

Checkpoint::Record read_record(std::ifstream& in) {
  Checkpoint::Record r;
  r.name = read_str(in);
  const int dtype = in.get();
  if (dtype != 0) {
    throw std::runtime_error("checkpoint: unsupported dtype for " + r.name);
  }
  const auto ndim = read_u32(in);
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const auto d = read_u32(in);
    r.shape.push_back(static_cast<int>(d));
    numel *= d;
  }
  r.data.resize(numel);
  in.read(reinterpret_cast<char*>(r.data.data()),
          static_cast<std::streamsize>(numel * sizeof(float)));
  if (!in) {
    throw std::runtime_error("checkpoint: truncated record " + r.name);
  }
  return r;
}

static_assert(sizeof(float) == 4);

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("checkpoint: cannot write " + path.string());
  }
  out.write("CCKP", 4);
  write_u32(out, 1);  // format version
  write_str(out, phase);
  write_str(out, config_fingerprint);
  write_u64(out, static_cast<std::uint64_t>(step));
  write_u64(out, static_cast<std::uint64_t>(adam_t));
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& r : params) {
    write_record(out, r);
  }
  write_u32(out, static_cast<std::uint32_t>(opt.size()));
  for (const auto& r : opt) {
    write_record(out, r);
  }
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("checkpoint: cannot open " + path.string());
  }
  char magic[4] = {};
  in.read(magic, 4);
  if (std::memcmp(magic, "CCKP", 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  const auto version = read_u32(in);
  if (version != 1) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  c.phase = read_str(in);
  c.config_fingerprint = read_str(in);
  c.step = static_cast<std::int64_t>(read_u64(in));
  c.adam_t = static_cast<std::int64_t>(read_u64(in));
  const auto n_params = read_u32(in);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    c.params.push_back(read_record(in));
  }
  const auto n_opt = read_u32(in);
  for (std::uint32_t i = 0; i < n_opt; ++i) {
    c.opt.push_back(read_record(in));
  }
  return c;
}

Checkpoint Checkpoint::capture(const std::string& phase, const std::string& fingerprint,
                               std::int64_t step, std::vector<NamedParam<float>>& params,
                               const AdamState* adam) {
  Checkpoint c;
  c.phase = phase;
  c.config_fingerprint = fingerprint;
  c.step = step;
  for (auto& p : params) {
    Record r;
    r.name = p.name;
    r.shape = p.tensor.shape();
    r.data.assign(p.tensor.values().begin(), p.tensor.values().end());
    c.params.push_back(std::move(r));
  }
  if (adam) {
    c.adam_t = adam->t;
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.opt.push_back({"m." + params[i].name, params[i].tensor.shape(), adam->m[i]});
      c.opt.push_back({"v." + params[i].name, params[i].tensor.shape(), adam->v[i]});
    }
  }
  return c;
}

void Checkpoint::restore(std::vector<NamedParam<float>>& target) const {
  for (auto& p : target) {
    const Record* found = nullptr;
    for (const auto& r : params) {
      if (r.name == p.name) {
        found = &r;
        break;
      }
    }
    if (!found) {
      throw std::runtime_error("checkpoint: missing parameter " + p.name);
    }
    if (found->shape != p.tensor.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
    }
    std::copy(found->data.begin(), found->data.end(), p.tensor.values().begin());
  }
}

void Checkpoint::restore_adam(AdamState& state,
                              const std::vector<NamedParam<float>>& params) const {
  state.init(params);
  state.t = adam_t;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const auto& r : opt) {
      if (r.name == "m." + params[i].name) {
        state.m[i] = r.data;
      } else if (r.name == "v." + params[i].name) {
        state.v[i] = r.data;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// phase runner
// ---------------------------------------------------------------------------

AssembledExample assemble_example(Phase phase, ContextEncoder<float>* encoder,
                                  Decoder<float>& decoder, const TaskExample& ex) {
  AssembledExample out;
  if (phase == Phase::reconstruction) {
    if (encoder) {
      Tensor<float> emb;
      if (encoder->needs_embeddings()) {
        emb = ops::embedding<float>(decoder.token_embedding(), ex.context);
      }
      auto cc = encoder->encode(ex.context, emb);
      out.prefix = cc.vectors;
    }
    out.tokens = ex.context;
    out.mask.assign(out.tokens.size(), 1);
    return out;
  }
  // lm phase
  std::vector<std::int32_t> tail;
  if (encoder && encoder->kind() == EncoderKind::truncation) {
    Tensor<float> none;
    auto cc = encoder->encode(ex.context, none);
    tail = cc.tail;
  } else if (encoder) {
    Tensor<float> emb;
    if (encoder->needs_embeddings()) {
      emb = ops::embedding<float>(decoder.token_embedding(), ex.context);
    }
    auto cc = encoder->encode(ex.context, emb);
    out.prefix = cc.vectors;
    if (ex.k > 0) {
      tail.assign(ex.context.end() - ex.k, ex.context.end());
    }
  }
  out.tokens = tail;
  out.tokens.insert(out.tokens.end(), ex.continuation.begin(), ex.continuation.end());
  out.mask.assign(tail.size(), 0);
  out.mask.insert(out.mask.end(), ex.continuation.size(), 1);
  return out;
}

TrainResult train_phase(Phase phase, ContextEncoder<float>* encoder, Decoder<float>& decoder,
                        const std::vector<TaskExample>& examples, const TrainConfig& cfg,
                        std::int32_t bos_id, const std::string& config_fingerprint) {
  cfg.validate();
  if (examples.empty()) {
    throw std::runtime_error("train: no examples");
  }
  if (phase == Phase::reconstruction && encoder &&
      encoder->kind() == EncoderKind::truncation) {
    throw std::runtime_error(
        "train: truncation encoder in the reconstruction phase is ill-posed");
  }

  std::vector<NamedParam<float>> params = decoder.params();
  std::size_t n_decoder_params = params.size();
  if (encoder) {
    for (auto& p : encoder->params()) {
      params.push_back(p);
    }
  }
  std::vector<double> lr_scales(params.size(), 1.0);
  const bool has_override = cfg.lr_encoder_override > 0.0 && cfg.lr_peak > 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool is_encoder = i >= n_decoder_params;
    if (is_encoder && has_override) {
      lr_scales[i] = cfg.lr_encoder_override / cfg.lr_peak;
    }
    const char* group = is_encoder ? "encoder" : "decoder";
    params[i].tensor.set_requires_grad(cfg.freeze.count(group) == 0);
  }

  AdamState adam;
  adam.init(params);

  const std::size_t per_step =
      static_cast<std::size_t>(cfg.batch_size) * static_cast<std::size_t>(cfg.grad_accum);
  const int steps_per_epoch =
      static_cast<int>((examples.size() + per_step - 1) / per_step);
  const int total_steps =
      cfg.max_steps > 0 ? cfg.max_steps : std::max(1, cfg.epochs * steps_per_epoch);

  TrainResult result;
  std::string metrics = "step,lr,loss,grad_norm\n";
  Rng order_rng(cfg.seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  order_rng.shuffle(order);
  std::size_t cursor = 0;

  char line[160];
  for (int step = 0; step < total_steps; ++step) {
    const double lr = lr_at(step + 1, total_steps, cfg);
    for (auto& p : params) {
      p.tensor.ensure_grad();
      p.tensor.zero_grad();
    }

    // deterministic batch: reshuffle when the epoch wraps
    std::vector<std::size_t> batch;
    for (std::size_t i = 0; i < per_step; ++i) {
      if (cursor >= order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }

    bool non_finite = false;
    double sum_nll = 0.0;
    long total_scored = 0;
    std::vector<AssembledExample> assembled;
    std::vector<ops::XentResult<float>> partial;
    try {
      // first pass for the pooled token count
      assembled.reserve(batch.size());
      for (const auto bi : batch) {
        assembled.push_back(assemble_example(phase, encoder, decoder, examples[bi]));
        long scored = 0;
        for (auto m : assembled.back().mask) {
          scored += m;
        }
        total_scored += scored;
      }
      if (total_scored == 0) {
        throw std::runtime_error("train: batch has no scored tokens");
      }
      for (auto& ae : assembled) {
        DecoderInput<float> input;
        input.prefix = ae.prefix;
        input.tokens = ae.tokens;
        input.bos_id = bos_id;
        auto logits = decoder.forward(input);
        auto res = ops::cross_entropy_logits<float>(logits, ae.tokens, ae.mask);
        const float w = static_cast<float>(res.n_scored) / static_cast<float>(total_scored);
        sum_nll += static_cast<double>(res.loss.item()) * res.n_scored;
        res.loss.backward(w);
        // assembled graphs free as `res`/`ae` go out of scope
      }
    } catch (const ops::NonFiniteError&) {
      non_finite = true;
    }
    const double pooled_loss = total_scored > 0 ? sum_nll / total_scored : 0.0;
    if (non_finite || !std::isfinite(pooled_loss)) {
      result.aborted_non_finite = true;
      result.checkpoint =
          Checkpoint::capture(phase_name(phase), config_fingerprint, step, params, &adam);
      result.metrics_csv = metrics;
      result.steps_run = step;
      return result;
    }

    // global-norm clipping over trainable parameters
    double norm_sq = 0.0;
    for (auto& p : params) {
      if (!p.tensor.requires_grad()) {
        continue;
      }
      for (const float g : p.tensor.grad()) {
        norm_sq += static_cast<double>(g) * g;
      }
    }
    const double grad_norm = std::sqrt(norm_sq);
    if (grad_norm > cfg.clip_norm) {
      const float scale = static_cast<float>(cfg.clip_norm / grad_norm);
      for (auto& p : params) {
        if (!p.tensor.requires_grad()) {
          continue;
        }
        for (auto& g : p.tensor.grad()) {
          g *= scale;
        }
      }
    }

    adamw_step(params, adam, cfg, lr, lr_scales);

    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g\n", step + 1, lr, pooled_loss,
                  grad_norm);
    metrics += line;
    result.final_loss = pooled_loss;
  }

  result.steps_run = total_steps;
  result.checkpoint =
      Checkpoint::capture(phase_name(phase), config_fingerprint, total_steps, params, &adam);
  result.metrics_csv = metrics;
  return result;
}

}  // namespace cclab
