#pragma once

#include <filesystem>

#include "afusion/trial.hpp"

namespace afusion {

// Deterministic synthetic corpus. Labels are smooth functions of signals
// planted in the media themselves, so a working model can recover them:
// valence tracks a slow luminance oscillation of the frames, arousal tracks
// the amplitude envelope of a tone, and the first two linguistic feature
// dimensions carry the label values at each word's midpoint. Files use the
// production formats (PPM frames, 16 kHz PCM wav, word/feature/annotation
// files, JSONL manifest).
struct SynthSpec {
  int subjects = 4;
  int trials = 4;
  Index frames = 400;          // per-trial length when `lengths` is empty
  std::vector<Index> lengths;  // optional explicit per-trial lengths
  double fps = 25.0;
  double missing_rate = 0.0;   // probability a frame file is absent
  double sentinel_rate = 0.0;  // probability an annotation row carries -5
  int val_subjects = -1;       // -1: ceil(subjects / 6)
  std::uint64_t seed = 1;
};

std::vector<ManifestEntry> synth_corpus(const SynthSpec& spec,
                                        const std::filesystem::path& out_dir);

}  // namespace afusion
