#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "indrnn/network.hpp"
#include "indrnn/rng.hpp"
#include "indrnn/training.hpp"
#include "indrnn/types.hpp"

namespace indrnn {

// Complete training snapshot. Serialization is sectioned binary (magic
// "INDR", version, then per-section name + length + payload + crc32), so a
// flipped byte is reported with its offset instead of producing a silently
// wrong resume.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string config_text;     // canonical run config
  std::uint64_t loop_pos = 0;  // batches or epochs completed, per the task
  std::uint64_t opt_step = 0;
  double lr = 0.0;
  double best_metric = 0.0;
  std::uint64_t bad_evals = 0;
  std::uint64_t patience = 0;
  double lr_factor = 0.0;
  std::array<std::uint64_t, 4> rng_state{};
  Vec params;
  Vec adam_m;
  Vec adam_v;
  std::vector<std::pair<std::string, Mat>> buffers;  // running stats and friends
};

Checkpoint make_checkpoint(const std::string& config_text, const Network& net,
                           const TrainState& state, const Rng& rng,
                           std::uint64_t loop_pos);

// Applies parameters and named buffers back onto a freshly built network and
// rehydrates the optimizer/RNG state. Throws ConfigError when the checkpoint
// does not fit the network (wrong parameter count, unknown buffer).
void restore_checkpoint(const Checkpoint& ck, Network& net, TrainState& state, Rng& rng);

std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace indrnn
