#include "afusion/windows.hpp"

namespace afusion {

std::vector<Index> window_starts(Index n, Index window, Index hop, bool eval_mode) {
  if (window <= 0 || hop <= 0 || hop > window)
    throw ValidationError("windows: need 0 < hop <= window, got hop=" +
                          std::to_string(hop) + " window=" + std::to_string(window));
  if (n <= 0) throw ValidationError("windows: empty trial");
  if (n <= window) return {0};
  std::vector<Index> starts;
  for (Index s = 0; s + window <= n; s += hop) starts.push_back(s);
  if (eval_mode && (n - window) % hop != 0) starts.push_back(n - window);
  return starts;
}

std::vector<WindowRef> make_windows(const TrialView& trials, Index window, Index hop,
                                    bool eval_mode) {
  std::vector<WindowRef> out;
  for (std::size_t ti = 0; ti < trials.size(); ++ti) {
    for (Index s : window_starts(trials[ti]->n, window, hop, eval_mode)) {
      WindowRef r;
      r.trial_index = static_cast<int>(ti);
      r.start = s;
      r.valid_len = std::min(window, trials[ti]->n - s);
      out.push_back(r);
    }
  }
  return out;
}

Tensor<float> stitch_predictions(const std::vector<WindowRef>& windows,
                                 const std::vector<Tensor<float>>& outputs, Index n,
                                 Index window) {
  if (windows.size() != outputs.size())
    throw ValidationError("stitch: window/output count mismatch");
  Tensor<float> acc({n, 2});
  std::vector<int> cover(static_cast<std::size_t>(n), 0);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const WindowRef& ref = windows[w];
    const Tensor<float>& out = outputs[w];
    if (out.rank() != 2 || out.extent(0) != window || out.extent(1) != 2)
      throw ValidationError("stitch: window output must be [" + std::to_string(window) +
                            "x2], got " + out.shape_string());
    for (Index t = 0; t < ref.valid_len; ++t) {
      acc(ref.start + t, 0) += out(t, 0);
      acc(ref.start + t, 1) += out(t, 1);
      ++cover[static_cast<std::size_t>(ref.start + t)];
    }
  }
  for (Index i = 0; i < n; ++i) {
    const int c = cover[static_cast<std::size_t>(i)];
    if (c == 0)
      throw ValidationError("stitch: coverage gap at frame " + std::to_string(i));
    acc(i, 0) /= static_cast<float>(c);
    acc(i, 1) /= static_cast<float>(c);
  }
  return acc;
}

LingStats compute_ling_stats(const TrialView& trials) {
  LingStats s;
  s.mean = Tensor<float>({kLinguisticDim});
  s.stdev = Tensor<float>({kLinguisticDim});
  std::vector<double> sum(static_cast<std::size_t>(kLinguisticDim), 0.0);
  std::vector<double> sum2(static_cast<std::size_t>(kLinguisticDim), 0.0);
  std::int64_t rows = 0;
  for (const TrialRecord* t : trials) {
    if (!t->has_linguistic)
      throw ValidationError("linguistic stats: trial " + t->trial_id +
                            " has no linguistic features");
    const float* d = t->linguistic.data();
    for (Index i = 0; i < t->n; ++i, d += kLinguisticDim)
      for (Index j = 0; j < kLinguisticDim; ++j) {
        sum[static_cast<std::size_t>(j)] += d[j];
        sum2[static_cast<std::size_t>(j)] += static_cast<double>(d[j]) * d[j];
      }
    rows += t->n;
  }
  if (rows == 0) throw ValidationError("linguistic stats: no rows");
  for (Index j = 0; j < kLinguisticDim; ++j) {
    const double m = sum[static_cast<std::size_t>(j)] / static_cast<double>(rows);
    const double var =
        std::max(0.0, sum2[static_cast<std::size_t>(j)] / static_cast<double>(rows) - m * m);
    s.mean.data()[j] = static_cast<float>(m);
    s.stdev.data()[j] = static_cast<float>(std::sqrt(var));
  }
  return s;
}

BatchData assemble_batch(const TrialView& trials,
                         std::span<const WindowRef> refs, const AssemblyConfig& cfg,
                         const LingStats* ling, bool training, Rng* aug_rng) {
  if (refs.empty()) throw ValidationError("assemble: empty batch");
  if (training && aug_rng == nullptr)
    throw ValidationError("assemble: training mode needs an augmentation stream");
  const Index B = static_cast<Index>(refs.size());
  const Index T = cfg.window;
  const Index crop = cfg.crop;
  const Index margin = kImageSize - crop;

  BatchData batch;
  batch.refs.assign(refs.begin(), refs.end());
  batch.labels = Tensor<float>({B, T, 2});
  if (cfg.visual) batch.input.visual = Tensor<float>({B * T, 3, crop, crop});
  if (cfg.audio) batch.input.audio = Tensor<float>({B * T, 1, kMelBands, cfg.n_patch});
  if (cfg.linguistic) batch.input.linguistic = Tensor<float>({B, T, kLinguisticDim});
  batch.input.batch = B;
  batch.input.steps = T;

  for (Index b = 0; b < B; ++b) {
    const WindowRef& ref = refs[static_cast<std::size_t>(b)];
    const TrialRecord& trial = *trials[static_cast<std::size_t>(ref.trial_index)];
    bool flip = false;
    Index dx = margin / 2, dy = margin / 2;
    if (training) {
      flip = aug_rng->bernoulli(0.5);
      dx = static_cast<Index>(aug_rng->below(static_cast<std::uint64_t>(margin + 1)));
      dy = static_cast<Index>(aug_rng->below(static_cast<std::uint64_t>(margin + 1)));
    }
    for (Index t = 0; t < T; ++t) {
      const Index row = b * T + t;
      const bool padded = t >= ref.valid_len;
      const Index src = ref.start + t;
      if (cfg.visual && !padded) {
        const std::uint8_t* img = trial.frame(src);
        float* dst = batch.input.visual.data() + row * 3 * crop * crop;
        for (Index c = 0; c < 3; ++c)
          for (Index y = 0; y < crop; ++y)
            for (Index x = 0; x < crop; ++x) {
              const Index sx = flip ? dx + (crop - 1 - x) : dx + x;
              const float p =
                  static_cast<float>(img[(c * kImageSize + dy + y) * kImageSize + sx]) /
                  255.0f;
              dst[(c * crop + y) * crop + x] = (p - 0.5f) / 0.5f;
            }
      }
      if (cfg.audio && !padded) {
        float* dst = batch.input.audio.data() + row * kMelBands * cfg.n_patch;
        for (Index j = 0; j < cfg.n_patch; ++j) {
          const Index mel_row = src - (cfg.n_patch - 1) + j;
          if (mel_row < 0 || mel_row >= trial.n) continue;  // stays zero
          const float* mr = trial.logmel.data() + mel_row * kMelBands;
          // fixed affine rescale of log-mel values into O(1) range
          for (Index m = 0; m < kMelBands; ++m)
            dst[m * cfg.n_patch + j] = (mr[m] + 5.0f) / 5.0f;
        }
      }
      if (cfg.linguistic && !padded) {
        if (!trial.has_linguistic)
          throw ValidationError("assemble: trial " + trial.trial_id +
                                " has no linguistic features");
        const float* srcp = trial.linguistic.data() + src * kLinguisticDim;
        float* dst = batch.input.linguistic.data() + row * kLinguisticDim;
        for (Index j = 0; j < kLinguisticDim; ++j) {
          float v = srcp[j];
          if (ling != nullptr) {
            const float sd = ling->stdev.data()[j];
            v = (v - ling->mean.data()[j]) / (sd > 0 ? sd : 1.0f);
          }
          dst[j] = v;
        }
      }
      if (!padded) {
        batch.labels(b, t, 0) = trial.labels(src, 0);
        batch.labels(b, t, 1) = trial.labels(src, 1);
        if (trial.valid[static_cast<std::size_t>(src)]) batch.valid_rows.push_back(row);
      }
    }
  }
  return batch;
}

}  // namespace afusion
