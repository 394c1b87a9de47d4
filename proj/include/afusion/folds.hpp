#pragma once

#include <filesystem>

#include "afusion/trial.hpp"

namespace afusion {

struct FoldSpec {
  int fold_index = 0;
  std::vector<std::string> train_trials;
  std::vector<std::string> val_trials;
  std::uint64_t seed = 0;
};

// Six folds: fold 0 is the manifest's own train/val partition. Training-split
// subjects are shuffled by seed and greedily packed into 5 bins balancing
// trial counts; fold k>=1 validates on bin k and trains on the other bins plus
// the original validation trials. Subject sets of train and val are disjoint
// in every fold.
std::vector<FoldSpec> build_folds(const std::vector<ManifestEntry>& manifest,
                                  std::uint64_t seed);

// Verifies every FoldSpec invariant; returns human-readable violations
// (empty when the folds are sound).
std::vector<std::string> audit_folds(const std::vector<FoldSpec>& folds,
                                     const std::vector<ManifestEntry>& manifest);

void write_folds_json(const std::filesystem::path& path,
                      const std::vector<FoldSpec>& folds);
std::vector<FoldSpec> load_folds_json(const std::filesystem::path& path);

}  // namespace afusion
