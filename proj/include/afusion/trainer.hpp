#pragma once

#include <filesystem>

#include "afusion/adam.hpp"
#include "afusion/checkpoint.hpp"
#include "afusion/config.hpp"
#include "afusion/folds.hpp"
#include "afusion/scheduler.hpp"
#include "afusion/windows.hpp"

namespace afusion {

struct EpochRow {
  int epoch = 0;
  std::string phase;
  double lr = 0.0;        // value at the epoch boundary
  std::string groups;     // unfrozen backbone groups, e.g. "12"
  CccReport train, val;
  double best_val = 0.0;
  int since_best = 0;
  int early_stop = 0;
};

struct RunResult {
  std::vector<EpochRow> rows;  // rows produced by this invocation
  CccReport best_val;
  int best_epoch = -1;
  std::filesystem::path run_dir;
  std::filesystem::path checkpoint_path;
  std::filesystem::path log_path;
};

struct RecordStore {
  std::vector<TrialRecord> records;

  const TrialRecord* find(const std::string& trial_id) const;
  static RecordStore load_dir(const std::filesystem::path& store_dir);
};

// Trains one (fold, seed) run to completion (scheduler stop or max_epoch),
// reloading the best validation state at every epoch end and checkpointing
// each epoch. Deterministic given (fold, seed, config, store): all stochastic
// streams are keyed by (seed, purpose, epoch). With resume=true an existing
// checkpoint in run_dir continues exactly where it stopped.
RunResult run_fold(const RecordStore& store, const FoldSpec& fold, const RunConfig& cfg,
                   std::uint64_t seed, const std::filesystem::path& run_dir, bool resume);

struct TrialPrediction {
  Tensor<float> stitched;  // [N,2], clamped to [-1,1]
  std::vector<std::pair<Index, Tensor<float>>> window_attention;  // (start, per-step rows)
};

TrialPrediction predict_trial(const AffectModel<float>& model, const TrialRecord& trial,
                              const RunConfig& cfg, const LingStats* ling,
                              bool want_attention);

CccReport evaluate_partition(const AffectModel<float>& model, const TrialView& trials,
                             const RunConfig& cfg, const LingStats* ling);

std::string epoch_log_header();
std::string format_epoch_row(const EpochRow& row);

}  // namespace afusion
