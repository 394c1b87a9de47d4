#pragma once

#include <span>

#include "afusion/model.hpp"
#include "afusion/trial.hpp"

namespace afusion {

struct WindowRef {
  int trial_index = 0;
  Index start = 0;
  Index valid_len = 0;  // frames actually backed by the trial; rest is padding
};

// Window anchors for a length-n trial: {0, hop, 2*hop, ...} while start+window
// fits. Trials no longer than one window yield a single zero-padded window.
// In eval mode an extra tail window anchored at n-window guarantees full
// frame coverage when the hop does not land flush.
std::vector<Index> window_starts(Index n, Index window, Index hop, bool eval_mode);

using TrialView = std::vector<const TrialRecord*>;

inline TrialView trial_view(const std::vector<TrialRecord>& trials) {
  TrialView v;
  v.reserve(trials.size());
  for (const auto& t : trials) v.push_back(&t);
  return v;
}

std::vector<WindowRef> make_windows(const TrialView& trials, Index window, Index hop,
                                    bool eval_mode);

// Per-frame average of all covering windows' outputs; padded positions are
// discarded. Coverage gaps are an error.
Tensor<float> stitch_predictions(const std::vector<WindowRef>& windows,
                                 const std::vector<Tensor<float>>& outputs, Index n,
                                 Index window);

// Training-partition statistics for per-dimension linguistic standardization.
// Zero-variance dimensions are shifted but never scaled.
struct LingStats {
  Tensor<float> mean;   // [768]
  Tensor<float> stdev;  // [768]
};

LingStats compute_ling_stats(const TrialView& trials);

struct AssemblyConfig {
  Index window = 300;
  Index crop = 40;
  Index n_patch = 8;
  bool visual = true;
  bool audio = true;
  bool linguistic = false;
};

struct BatchData {
  ModelInput<float> input;
  Tensor<float> labels;           // [B,T,2]
  std::vector<Index> valid_rows;  // flattened [B*T] indices under label+pad mask
  std::vector<WindowRef> refs;
};

// Materializes one batch of windows. Training mode draws one flip decision and
// one crop offset per window from aug_rng (spatial params shared by all frames
// of the window); eval mode center-crops deterministically. Pixels are scaled
// to [0,1] then normalized to mean=std=0.5; padded steps are all-zero inputs.
BatchData assemble_batch(const TrialView& trials,
                         std::span<const WindowRef> refs, const AssemblyConfig& cfg,
                         const LingStats* ling, bool training, Rng* aug_rng);

}  // namespace afusion
