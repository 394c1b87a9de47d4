#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "afusion/ccc.hpp"
#include "afusion/scheduler.hpp"
#include "afusion/tensor.hpp"

namespace afusion {

// Versioned binary container ("ACKP"): named parameter tensors with group
// tags, optimizer moments, scheduler state, run identity, the best validation
// report, and the linguistic normalization statistics the model was trained
// with. Numeric tensor payloads are 32-bit little-endian floats.
struct CheckpointData {
  std::string config_text;  // effective run configuration, flat key=value

  std::vector<std::string> param_names;
  std::vector<int> param_groups;
  std::vector<TensorF> param_values;

  std::vector<std::int64_t> adam_t;  // 0 = no state for that parameter
  std::vector<TensorF> adam_m, adam_v;

  PlateauScheduler::State sched;

  std::uint64_t run_seed = 0;
  std::int32_t fold = 0;
  std::int32_t best_epoch = -1;
  bool has_report = false;
  CccReport best;

  bool has_ling_norm = false;
  TensorF ling_mean, ling_std;
};

constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const CheckpointData& ckpt);
CheckpointData parse_checkpoint(const std::vector<std::uint8_t>& bytes,
                                const std::string& origin);

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& ckpt);
CheckpointData load_checkpoint(const std::filesystem::path& path);

}  // namespace afusion
