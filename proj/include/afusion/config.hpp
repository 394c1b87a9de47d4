#pragma once

#include <string>
#include <vector>

#include "afusion/adam.hpp"
#include "afusion/model.hpp"
#include "afusion/scheduler.hpp"

namespace afusion {

// Run configuration: every field has a default; defaults mirror the standard
// training recipe (window 300 / hop 200, batch 12, lr 1e-5 down to 1e-8,
// weight decay 0.001, patience 5, factor 0.1, max 100 epochs, early stop 20).
// Serialized as flat key=value text; unknown keys are rejected by name.
struct RunConfig {
  std::string model = "can";      // lfan | can
  std::string modalities;         // comma list; empty = per-model default
  std::string leader = "visual";  // LFAN leader modality
  std::string fold = "0";         // fold index or "all"
  std::string seeds = "1";        // comma list of run seeds
  std::uint64_t fold_seed = 1;

  Index window = 300;
  Index hop = 200;
  Index batch = 12;

  double lr = 1e-5;
  double min_lr = 1e-8;
  double weight_decay = 0.001;
  double factor = 0.1;
  int patience = 5;
  int warmup_epochs = 5;
  int max_epoch = 100;
  int early_stop = 20;

  double dropout = 0.1;
  int tcn_levels = 6;
  Index branch_dim = 64;
  Index attn_dim = 32;
  Index fuse_dim = 64;
  Index n_patch = 8;
  std::string backbone_channels = "8,16,32";

  bool overfit = false;  // degenerate fold 0: train = val = every fold trial

  std::string store;    // preprocessed record directory
  std::string out_dir;  // run output root
};

std::string serialize_config(const RunConfig& cfg);
RunConfig parse_config_text(const std::string& text);
void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value);

std::vector<std::string> config_modalities(const RunConfig& cfg);
std::vector<std::uint64_t> config_seeds(const RunConfig& cfg);

ModelConfig make_model_config(const RunConfig& cfg);
SchedulerConfig make_scheduler_config(const RunConfig& cfg);
AdamConfig make_adam_config(const RunConfig& cfg);

}  // namespace afusion
