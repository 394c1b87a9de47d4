#pragma once

#include <iosfwd>

#include "afusion/config.hpp"
#include "afusion/synth.hpp"
#include "afusion/trainer.hpp"

namespace afusion {

void cmd_synth(const SynthSpec& spec, const std::filesystem::path& out_dir,
               std::ostream& out);

struct PreprocessSummary {
  int trials_ok = 0;
  Index total_frames = 0;
  Index masked_frames = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // (trial_id, reason)
};

// Preprocesses every manifest trial into <out>/<trial_id>.aftr. Per-trial
// failures are reported and do not stop the other trials.
PreprocessSummary cmd_preprocess(const std::filesystem::path& manifest_path,
                                 const std::filesystem::path& out_dir, std::ostream& out);

struct RunSummary {
  std::string model;
  int fold = 0;
  std::uint64_t seed = 0;
  int best_epoch = -1;
  int epochs = 0;
  CccReport val;
  std::filesystem::path run_dir;
};

struct TrainOutcome {
  std::vector<RunSummary> runs;
  std::vector<FoldSpec> folds;
};

TrainOutcome cmd_train(const RunConfig& cfg, const std::filesystem::path& folds_file,
                       bool resume, std::ostream& out);

void restore_model_params(AffectModel<float>& model, const CheckpointData& ckpt);

struct PredictOutcome {
  std::vector<std::pair<std::string, Index>> rows_per_trial;
};

PredictOutcome cmd_predict(const std::filesystem::path& checkpoint_path,
                           const std::filesystem::path& store_dir,
                           const std::filesystem::path& out_dir,
                           const std::filesystem::path& attention_dir,
                           const std::string& split_filter, std::ostream& out);

// Table-shaped grid (method x fold -> valence/arousal CCC) from run
// directories; absent cells render as "-".
void cmd_report(const std::vector<std::filesystem::path>& run_roots,
                const std::filesystem::path& out_dir, std::ostream& out);

struct GradcheckOutcome {
  double max_operator_err = 0.0;
  double max_composed_err = 0.0;
  double seconds = 0.0;
  bool pass = false;
};

// Operator-level and composed-model gradient verification, 64-bit.
GradcheckOutcome run_gradcheck_suite(std::ostream& out);

}  // namespace afusion
