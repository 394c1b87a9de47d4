#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "afusion/tensor.hpp"

namespace afusion {

struct ManifestEntry {
  std::string trial_id;
  std::string subject_id;
  std::string split;  // train | val | test
  double fps = 0.0;
  std::filesystem::path frames_dir;
  std::filesystem::path wav;
  std::filesystem::path words_csv;       // may be empty
  std::filesystem::path linguistic_bin;  // may be empty
  std::filesystem::path annotation_csv;  // may be empty (test split)
};

// One JSON object per line; relative paths resolve against the manifest's
// directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries);

struct WordSpan {
  std::string word;
  double start_sec = 0.0;
  double end_sec = 0.0;
};

struct AnnotationData {
  Tensor<float> labels;             // [N,2], sentinel rows kept as-is
  std::vector<std::uint8_t> valid;  // false exactly where either column is -5
};

// Header `valence,arousal`, one row per frame. N is the total row count; rows
// containing the -5 sentinel in either column are masked out, not dropped.
AnnotationData parse_annotations(const std::filesystem::path& path);

std::vector<WordSpan> parse_words_csv(const std::filesystem::path& path);

// "LFEA" container: u32 rows, u32 cols (= 768), row-major f32 payload.
Tensor<float> read_linguistic_bin(const std::filesystem::path& path);
void write_linguistic_bin(const std::filesystem::path& path, const Tensor<float>& rows);

// Frame i covers [i/fps, (i+1)/fps); it takes a span's feature when the frame
// start time lies inside [start_sec, end_sec). Uncovered frames stay zero.
Tensor<float> align_words_to_frames(const std::vector<WordSpan>& spans,
                                    const Tensor<float>& word_features, Index n,
                                    double fps);

// Pad by repeating the last row / trim from the rear to exactly n rows.
Tensor<float> fit_length(const Tensor<float>& m, Index n);

constexpr Index kImageSize = 48;
constexpr Index kMelBands = 64;
constexpr Index kLinguisticDim = 768;

struct TrialRecord {
  std::string trial_id;
  std::string subject_id;
  std::string split;
  double fps = 0.0;
  Index n = 0;
  std::vector<std::uint8_t> visual;  // [N,3,48,48], zero rows where frames are missing
  Tensor<float> logmel;              // [N,64]
  Tensor<float> linguistic;          // [N,768] when present
  Tensor<float> labels;              // [N,2] when present
  std::vector<std::uint8_t> valid;   // [N]
  bool has_labels = false;
  bool has_linguistic = false;

  const std::uint8_t* frame(Index i) const {
    return visual.data() + static_cast<std::size_t>(i) * 3 * kImageSize * kImageSize;
  }
};

// Runs the full synchronization pipeline for one manifest entry.
TrialRecord preprocess_trial(const ManifestEntry& entry);

void save_record(const std::filesystem::path& path, const TrialRecord& rec);
TrialRecord load_record(const std::filesystem::path& path);

}  // namespace afusion
