#pragma once

#include <limits>
#include <string>

#include "afusion/common.hpp"
#include "afusion/tensor.hpp"

namespace afusion {

struct SchedulerConfig {
  double lr = 1e-5;       // target rate, reached at the end of each warmup epoch
  double min_lr = 1e-8;   // decade-ladder floor
  double factor = 0.1;
  int patience = 5;
  int warmup_epochs = 5;  // epochs 0..4 each ramp min_lr -> lr per batch
  int max_group = 3;
  int early_stop = 20;
};

struct SchedulerTick {
  bool improved = false;
  bool decayed = false;
  int unfroze_group = 0;  // 0 = none
  bool exhausted_now = false;
  bool stop = false;
};

// The warmup / reduce-on-plateau / progressive-unfreezing state machine.
// tick() is called once per epoch end with that epoch's validation CCC.
//
// Committed semantics, in tick order for plateau epochs:
//   - strict improvement resets both staleness counters and snapshots best;
//   - staleness beyond `patience` decays lr by `factor` down to min_lr;
//   - at min_lr with staleness >= patience, the next layer group is unfrozen,
//     lr resets to the target and exactly one warmup epoch follows;
//   - once no groups remain, every further stale epoch advances the early
//     stopping counter; reaching `early_stop` stops the run.
// Warmup epochs track improvement but freeze the plateau counters.
class PlateauScheduler {
 public:
  struct State {
    int epoch = 0;  // epochs completed so far
    int warmup_left = 0;
    int current_group = 1;
    double lr = 0.0;
    double best_val = -std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;
    int early_stop_counter = 0;
    bool groups_exhausted = false;
    bool stopped = false;
  };

  explicit PlateauScheduler(SchedulerConfig cfg) : cfg_(cfg) {
    st_.lr = cfg.lr;
    st_.warmup_left = cfg.warmup_epochs;
  }

  const SchedulerConfig& config() const { return cfg_; }
  State& state() { return st_; }
  const State& state() const { return st_; }

  bool next_epoch_is_warmup() const { return st_.warmup_left > 0; }
  std::string phase() const { return next_epoch_is_warmup() ? "warmup" : "plateau"; }
  double lr() const { return st_.lr; }
  int current_group() const { return st_.current_group; }
  bool stopped() const { return st_.stopped; }

  // Learning rate for one batch of the epoch about to run. Warmup epochs ramp
  // linearly from min_lr, hitting the target exactly on the last batch.
  double batch_lr(Index batch_index, Index n_batches) const {
    if (!next_epoch_is_warmup()) return st_.lr;
    const double frac =
        static_cast<double>(batch_index + 1) / static_cast<double>(n_batches);
    return cfg_.min_lr + (st_.lr - cfg_.min_lr) * frac;
  }

  SchedulerTick tick(double val_ccc) {
    if (st_.stopped) throw ValidationError("scheduler: tick() after stop");
    SchedulerTick r;
    const bool was_warmup = st_.warmup_left > 0;
    if (val_ccc > st_.best_val) {
      st_.best_val = val_ccc;
      st_.epochs_since_best = 0;
      st_.early_stop_counter = 0;
      r.improved = true;
    }
    if (was_warmup) {
      --st_.warmup_left;
    } else if (!r.improved) {
      ++st_.epochs_since_best;
      if (st_.groups_exhausted) {
        ++st_.early_stop_counter;
        if (st_.early_stop_counter >= cfg_.early_stop) {
          st_.stopped = true;
          r.stop = true;
        }
      }
      if (!st_.stopped) {
        if (st_.epochs_since_best > cfg_.patience && !at_min_lr()) {
          const double next = st_.lr * cfg_.factor;
          st_.lr = next <= cfg_.min_lr * (1.0 + 1e-9) ? cfg_.min_lr : next;
          st_.epochs_since_best = 0;
          r.decayed = true;
        } else if (at_min_lr() && st_.epochs_since_best >= cfg_.patience &&
                   !st_.groups_exhausted) {
          if (st_.current_group < cfg_.max_group) {
            ++st_.current_group;
            st_.lr = cfg_.lr;
            st_.warmup_left = 1;
            st_.epochs_since_best = 0;
            r.unfroze_group = st_.current_group;
          } else {
            st_.groups_exhausted = true;
            r.exhausted_now = true;
          }
        }
      }
    }
    ++st_.epoch;
    return r;
  }

 private:
  bool at_min_lr() const { return st_.lr <= cfg_.min_lr * (1.0 + 1e-9); }

  SchedulerConfig cfg_;
  State st_;
};

}  // namespace afusion
