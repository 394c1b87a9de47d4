#include "afusion/synth.hpp"

#include <cmath>
#include <sstream>

#include "afusion/io_util.hpp"
#include "afusion/ppm.hpp"
#include "afusion/wav.hpp"

namespace afusion {

namespace {

struct PlantedSignals {
  double f_val, phase_val;  // valence oscillation
  double f_aro, phase_aro;  // arousal oscillation

  double valence(double t) const {
    return 0.8 * std::sin(2.0 * M_PI * f_val * t + phase_val);
  }
  double arousal(double t) const {
    return 0.8 * std::sin(2.0 * M_PI * f_aro * t + phase_aro);
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::vector<ManifestEntry> synth_corpus(const SynthSpec& spec,
                                        const std::filesystem::path& out_dir) {
  if (spec.trials < 1 || spec.subjects < 1)
    throw ValidationError("synth: need at least one trial and one subject");
  if (!spec.lengths.empty() && static_cast<int>(spec.lengths.size()) != spec.trials)
    throw ValidationError("synth: lengths list must match the trial count");
  if (!(spec.fps > 0)) throw ValidationError("synth: fps must be positive");

  std::filesystem::create_directories(out_dir);
  const int n_val_subjects =
      spec.val_subjects >= 0 ? spec.val_subjects : (spec.subjects + 5) / 6;
  if (n_val_subjects >= spec.subjects)
    throw ValidationError("synth: validation subjects must leave at least one training subject");

  std::vector<ManifestEntry> manifest;
  for (int trial = 0; trial < spec.trials; ++trial) {
    const int subject = trial % spec.subjects;
    const bool is_val = subject >= spec.subjects - n_val_subjects;
    const Index n = spec.lengths.empty() ? spec.frames
                                         : spec.lengths[static_cast<std::size_t>(trial)];
    if (n < 2) throw ValidationError("synth: trials need at least 2 frames");

    Rng rng(seed_stream(spec.seed, "synth-trial", static_cast<std::uint64_t>(trial)));
    PlantedSignals sig;
    sig.f_val = rng.uniform(0.04, 0.08);
    sig.phase_val = rng.uniform(0.0, 2.0 * M_PI);
    sig.f_aro = rng.uniform(0.06, 0.12);
    sig.phase_aro = rng.uniform(0.0, 2.0 * M_PI);

    char tid[64];
    std::snprintf(tid, sizeof(tid), "subj%02d_t%03d", subject, trial);
    const std::filesystem::path trial_dir = out_dir / tid;
    const std::filesystem::path frames_dir = trial_dir / "frames";
    std::filesystem::create_directories(frames_dir);

    // frames: uniform luminance encoding valence, plus low pixel noise
    std::vector<std::uint8_t> chw(3 * 48 * 48);
    for (Index i = 0; i < n; ++i) {
      const bool missing = rng.bernoulli(spec.missing_rate);
      const double t = static_cast<double>(i) / spec.fps;
      const double lum = 0.5 + 0.45 * (sig.valence(t) / 0.8);
      for (std::size_t p = 0; p < chw.size(); ++p) {
        const double v = lum + rng.uniform(-0.02, 0.02);
        chw[p] = static_cast<std::uint8_t>(
            std::clamp(std::lround(v * 255.0), 0L, 255L));
      }
      if (missing) continue;  // rng draws above keep the stream position fixed
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%06lld.ppm", static_cast<long long>(i));
      write_ppm(frames_dir / name, 48, 48, chw.data());
    }

    // audio: fixed tone whose amplitude envelope encodes arousal
    const Index samples =
        static_cast<Index>(std::llround(16000.0 * static_cast<double>(n + 2) / spec.fps));
    std::vector<float> wav(static_cast<std::size_t>(samples));
    for (Index i = 0; i < samples; ++i) {
      const double t = static_cast<double>(i) / 16000.0;
      const double amp = 0.5 + 0.45 * (sig.arousal(t) / 0.8);
      wav[static_cast<std::size_t>(i)] = static_cast<float>(
          amp * 0.6 * std::sin(2.0 * M_PI * 440.0 * t));
    }
    write_wav(trial_dir / "audio.wav", 16000, wav);

    // annotations with optional sentinel rows (both / first / second column)
    std::ostringstream ann;
    ann << "valence,arousal\n";
    for (Index i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / spec.fps;
      const bool sentinel = rng.bernoulli(spec.sentinel_rate);
      const int pattern = static_cast<int>(i % 3);
      std::string v = fmt(sig.valence(t));
      std::string a = fmt(sig.arousal(t));
      if (sentinel) {
        if (pattern == 0) {
          v = "-5";
          a = "-5";
        } else if (pattern == 1) {
          v = "-5";
        } else {
          a = "-5";
        }
      }
      ann << v << "," << a << "\n";
    }
    atomic_write_text(trial_dir / "annotations.csv", ann.str());

    // words every 0.4 s; features carry the labels at the span midpoint
    const double duration = static_cast<double>(n) / spec.fps;
    std::ostringstream words;
    words << "word,start_sec,end_sec\n";
    std::vector<float> feat_rows;
    int word_count = 0;
    for (double t0 = 0.05; t0 + 0.35 < duration; t0 += 0.4) {
      char w[16];
      std::snprintf(w, sizeof(w), "w%03d", word_count++);
      words << w << "," << fmt(t0) << "," << fmt(t0 + 0.35) << "\n";
      const double mid = t0 + 0.175;
      std::vector<float> row(static_cast<std::size_t>(kLinguisticDim), 0.0f);
      row[0] = static_cast<float>(sig.valence(mid));
      row[1] = static_cast<float>(sig.arousal(mid));
      for (std::size_t j = 2; j < row.size(); ++j)
        row[j] = static_cast<float>(rng.normal() * 0.02);
      feat_rows.insert(feat_rows.end(), row.begin(), row.end());
    }
    atomic_write_text(trial_dir / "words.csv", words.str());
    Tensor<float> feats;
    if (word_count > 0)
      feats = Tensor<float>({static_cast<Index>(word_count), kLinguisticDim},
                            std::move(feat_rows));
    write_linguistic_bin(trial_dir / "linguistic.bin", feats);

    ManifestEntry e;
    e.trial_id = tid;
    char sid[32];
    std::snprintf(sid, sizeof(sid), "subj%02d", subject);
    e.subject_id = sid;
    e.split = is_val ? "val" : "train";
    e.fps = spec.fps;
    e.frames_dir = frames_dir;
    e.wav = trial_dir / "audio.wav";
    e.words_csv = trial_dir / "words.csv";
    e.linguistic_bin = trial_dir / "linguistic.bin";
    e.annotation_csv = trial_dir / "annotations.csv";
    manifest.push_back(std::move(e));
  }

  write_manifest(out_dir / "manifest.jsonl", manifest);
  return manifest;
}

}  // namespace afusion
