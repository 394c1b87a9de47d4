#include "afusion/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "afusion/io_util.hpp"

namespace afusion {

namespace {

AssemblyConfig make_assembly_config(const RunConfig& cfg, const ModelConfig& mc) {
  AssemblyConfig a;
  a.window = cfg.window;
  a.crop = mc.visual_backbone.in_h;
  a.n_patch = cfg.n_patch;
  a.visual = a.audio = a.linguistic = false;
  for (Modality m : mc.modalities) {
    if (m == Modality::visual) a.visual = true;
    if (m == Modality::audio) a.audio = true;
    if (m == Modality::linguistic) a.linguistic = true;
  }
  return a;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string groups_string(int current_group) {
  std::string s;
  for (int g = 1; g <= current_group; ++g) s += static_cast<char>('0' + g);
  return s;
}

// Eval-mode forward over a window chunk; returns per-window [T,2] raw heads.
std::vector<Tensor<float>> forward_eval_windows(const AffectModel<float>& model,
                                                const TrialView& trials,
                                                std::span<const WindowRef> refs,
                                                const AssemblyConfig& acfg,
                                                const LingStats* ling, Index window,
                                                std::vector<Tensor<float>>* attention) {
  BatchData batch = assemble_batch(trials, refs, acfg, ling, false, nullptr);
  Rng no_drop(0);  // dropout is identity outside training
  ModelOutput<float> out = model.forward(batch.input, false, no_drop);
  std::vector<Tensor<float>> result;
  const Index B = static_cast<Index>(refs.size());
  for (Index b = 0; b < B; ++b) {
    Tensor<float> o({window, 2});
    for (Index t = 0; t < window; ++t) {
      o(t, 0) = out.pred.value()(b, t, 0);
      o(t, 1) = out.pred.value()(b, t, 1);
    }
    result.push_back(std::move(o));
    if (attention != nullptr && out.attention.defined()) {
      const Index cols = out.attention.extent(2);
      Tensor<float> a({window, cols});
      for (Index t = 0; t < window; ++t)
        for (Index c = 0; c < cols; ++c) a(t, c) = out.attention(b, t, c);
      attention->push_back(std::move(a));
    }
  }
  return result;
}

struct StitchedTrial {
  const TrialRecord* trial;
  Tensor<float> pred;  // [N,2] clamped
};

std::vector<StitchedTrial> stitch_partition(const AffectModel<float>& model,
                                            const TrialView& trials, const RunConfig& cfg,
                                            const AssemblyConfig& acfg,
                                            const LingStats* ling) {
  auto refs = make_windows(trials, cfg.window, cfg.hop, /*eval_mode=*/true);
  std::vector<Tensor<float>> outputs;
  for (std::size_t at = 0; at < refs.size(); at += static_cast<std::size_t>(cfg.batch)) {
    const std::size_t end = std::min(refs.size(), at + static_cast<std::size_t>(cfg.batch));
    auto chunk = forward_eval_windows(
        model, trials, std::span<const WindowRef>(refs.data() + at, end - at), acfg, ling,
        cfg.window, nullptr);
    for (auto& o : chunk) outputs.push_back(std::move(o));
  }
  std::vector<StitchedTrial> stitched;
  for (std::size_t ti = 0; ti < trials.size(); ++ti) {
    std::vector<WindowRef> trefs;
    std::vector<Tensor<float>> touts;
    for (std::size_t w = 0; w < refs.size(); ++w) {
      if (refs[w].trial_index != static_cast<int>(ti)) continue;
      trefs.push_back(refs[w]);
      touts.push_back(outputs[w]);
    }
    Tensor<float> pred = stitch_predictions(trefs, touts, trials[ti]->n, cfg.window);
    clamp_unit(pred);
    stitched.push_back({trials[ti], std::move(pred)});
  }
  return stitched;
}

}  // namespace

const TrialRecord* RecordStore::find(const std::string& trial_id) const {
  for (const auto& r : records)
    if (r.trial_id == trial_id) return &r;
  return nullptr;
}

RecordStore RecordStore::load_dir(const std::filesystem::path& store_dir) {
  if (!std::filesystem::is_directory(store_dir))
    throw ValidationError("store: " + store_dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& de : std::filesystem::directory_iterator(store_dir))
    if (de.path().extension() == ".aftr") files.push_back(de.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw ValidationError("store: no .aftr records under " + store_dir.string());
  RecordStore store;
  store.records.resize(files.size());
  parallel_for(static_cast<std::int64_t>(files.size()), [&](std::int64_t i) {
    store.records[static_cast<std::size_t>(i)] = load_record(files[static_cast<std::size_t>(i)]);
  });
  return store;
}

CccReport evaluate_partition(const AffectModel<float>& model, const TrialView& trials,
                             const RunConfig& cfg, const LingStats* ling) {
  const AssemblyConfig acfg = make_assembly_config(cfg, model.config());
  PartitionEval eval;
  for (auto& st : stitch_partition(model, trials, cfg, acfg, ling))
    eval.add(st.pred, st.trial->labels, st.trial->valid);
  return eval.report();
}

TrialPrediction predict_trial(const AffectModel<float>& model, const TrialRecord& trial,
                              const RunConfig& cfg, const LingStats* ling,
                              bool want_attention) {
  const AssemblyConfig acfg = make_assembly_config(cfg, model.config());
  TrialView one{&trial};
  auto refs = make_windows(one, cfg.window, cfg.hop, /*eval_mode=*/true);
  std::vector<Tensor<float>> outputs;
  std::vector<Tensor<float>> attention;
  for (std::size_t at = 0; at < refs.size(); at += static_cast<std::size_t>(cfg.batch)) {
    const std::size_t end = std::min(refs.size(), at + static_cast<std::size_t>(cfg.batch));
    auto chunk = forward_eval_windows(
        model, one, std::span<const WindowRef>(refs.data() + at, end - at), acfg, ling,
        cfg.window, want_attention ? &attention : nullptr);
    for (auto& o : chunk) outputs.push_back(std::move(o));
  }
  TrialPrediction p;
  p.stitched = stitch_predictions(refs, outputs, trial.n, cfg.window);
  clamp_unit(p.stitched);
  if (want_attention)
    for (std::size_t w = 0; w < attention.size(); ++w)
      p.window_attention.emplace_back(refs[w].start, std::move(attention[w]));
  return p;
}

std::string epoch_log_header() {
  return "epoch,phase,lr,groups,train_valence,train_arousal,train_mean,"
         "val_valence,val_arousal,val_mean,best_val,since_best,early_stop";
}

std::string format_epoch_row(const EpochRow& r) {
  std::ostringstream os;
  os << r.epoch << ',' << r.phase << ',' << fmt_g(r.lr) << ',' << r.groups << ','
     << fmt_g(r.train.valence) << ',' << fmt_g(r.train.arousal) << ','
     << fmt_g(r.train.mean) << ',' << fmt_g(r.val.valence) << ',' << fmt_g(r.val.arousal)
     << ',' << fmt_g(r.val.mean) << ',' << fmt_g(r.best_val) << ',' << r.since_best << ','
     << r.early_stop;
  return os.str();
}

RunResult run_fold(const RecordStore& store, const FoldSpec& fold, const RunConfig& cfg,
                   std::uint64_t seed, const std::filesystem::path& run_dir, bool resume) {
  if (fold.train_trials.empty() || fold.val_trials.empty())
    throw ValidationError("run: fold " + std::to_string(fold.fold_index) +
                          " has an empty partition");
  auto resolve = [&](const std::vector<std::string>& ids) {
    TrialView v;
    for (const auto& id : ids) {
      const TrialRecord* r = store.find(id);
      if (r == nullptr)
        throw ValidationError("run: trial '" + id + "' is not in the record store");
      v.push_back(r);
    }
    return v;
  };
  TrialView train_trials = resolve(fold.train_trials);
  TrialView val_trials = resolve(fold.val_trials);
  if (cfg.overfit) {
    // degenerate smoke mode: train and validate on every fold trial
    TrialView all = train_trials;
    for (const TrialRecord* r : val_trials)
      if (std::find(all.begin(), all.end(), r) == all.end()) all.push_back(r);
    train_trials = all;
    val_trials = all;
  }
  const bool same_partition = train_trials == val_trials;

  std::filesystem::create_directories(run_dir);
  const ModelConfig mc = make_model_config(cfg);
  const AssemblyConfig acfg = make_assembly_config(cfg, mc);

  LingStats ling_stats;
  const LingStats* ling = nullptr;
  if (acfg.linguistic) {
    ling_stats = compute_ling_stats(train_trials);
    ling = &ling_stats;
  }

  RunConfig effective = cfg;
  effective.fold = std::to_string(fold.fold_index);
  const std::string config_text = serialize_config(effective);
  atomic_write_text(run_dir / "config.txt", config_text);

  AffectModel<float> model(mc, seed);
  Adam<float> adam(make_adam_config(cfg));
  PlateauScheduler sched(make_scheduler_config(cfg));

  RunResult result;
  result.run_dir = run_dir;
  result.checkpoint_path = run_dir / "checkpoint.ackp";
  result.log_path = run_dir / "epochs.csv";

  std::vector<TensorF> best_snapshot = model.params().snapshot_values();
  CccReport best_report;
  bool has_best = false;
  int best_epoch = -1;

  auto normalized = [](std::string text) {
    RunConfig c = parse_config_text(text);
    c.max_epoch = 0;
    c.store.clear();
    c.out_dir.clear();
    return serialize_config(c);
  };

  if (resume && std::filesystem::exists(result.checkpoint_path)) {
    CheckpointData ckpt = load_checkpoint(result.checkpoint_path);
    if (normalized(ckpt.config_text) != normalized(config_text))
      throw ValidationError("resume: checkpoint configuration does not match this run");
    if (ckpt.run_seed != seed)
      throw ValidationError("resume: checkpoint seed " + std::to_string(ckpt.run_seed) +
                            " does not match run seed " + std::to_string(seed));
    auto& entries = model.params().entries();
    if (ckpt.param_names.size() != entries.size())
      throw ValidationError("resume: parameter count mismatch");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (ckpt.param_names[i] != entries[i].name)
        throw ValidationError("resume: parameter '" + ckpt.param_names[i] +
                              "' does not match model parameter '" + entries[i].name + "'");
      entries[i].var.mutable_value() = ckpt.param_values[i].clone();
    }
    auto& slots = adam.slots();
    slots.resize(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      slots[i].t = ckpt.adam_t[i];
      if (slots[i].t > 0) {
        slots[i].m = ckpt.adam_m[i].clone();
        slots[i].v = ckpt.adam_v[i].clone();
      }
    }
    sched.state() = ckpt.sched;
    model.set_trainable_groups(sched.current_group());
    best_snapshot = model.params().snapshot_values();
    if (ckpt.has_report) {
      best_report = ckpt.best;
      has_best = true;
    }
    best_epoch = ckpt.best_epoch;
  }

  // fresh runs start a new log; resumed runs append to the existing one
  if (!resume || !std::filesystem::exists(result.log_path))
    atomic_write_text(result.log_path, epoch_log_header() + "\n");

  auto train_windows = make_windows(train_trials, cfg.window, cfg.hop, /*eval=*/false);
  if (train_windows.empty()) throw ValidationError("run: no training windows");

  auto save_state = [&]() {
    CheckpointData ckpt;
    ckpt.config_text = config_text;
    for (const auto& e : model.params().entries()) {
      ckpt.param_names.push_back(e.name);
      ckpt.param_groups.push_back(e.group);
    }
    for (const auto& v : best_snapshot) ckpt.param_values.push_back(v.clone());
    auto& slots = adam.slots();
    slots.resize(model.params().entries().size());
    for (const auto& s : slots) {
      ckpt.adam_t.push_back(s.t);
      ckpt.adam_m.push_back(s.t > 0 ? s.m.clone() : TensorF());
      ckpt.adam_v.push_back(s.t > 0 ? s.v.clone() : TensorF());
    }
    ckpt.sched = sched.state();
    ckpt.run_seed = seed;
    ckpt.fold = fold.fold_index;
    ckpt.best_epoch = best_epoch;
    ckpt.has_report = has_best;
    ckpt.best = best_report;
    ckpt.has_ling_norm = ling != nullptr;
    if (ling != nullptr) {
      ckpt.ling_mean = ling_stats.mean.clone();
      ckpt.ling_std = ling_stats.stdev.clone();
    }
    save_checkpoint(result.checkpoint_path, ckpt);
  };

  std::ofstream log(result.log_path, std::ios::app);
  if (!log) throw ValidationError("run: cannot open log " + result.log_path.string());

  while (sched.state().epoch < cfg.max_epoch && !sched.stopped()) {
    const int epoch = sched.state().epoch;
    const bool warm = sched.next_epoch_is_warmup();

    std::vector<std::size_t> order(train_windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(seed_stream(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    Rng aug_rng(seed_stream(seed, "augment", static_cast<std::uint64_t>(epoch)));
    Rng drop_rng(seed_stream(seed, "dropout", static_cast<std::uint64_t>(epoch)));

    const Index n_batches =
        (static_cast<Index>(order.size()) + cfg.batch - 1) / cfg.batch;
    for (Index b = 0; b < n_batches; ++b) {
      std::vector<WindowRef> refs;
      for (Index i = b * cfg.batch;
           i < std::min<Index>((b + 1) * cfg.batch, static_cast<Index>(order.size())); ++i)
        refs.push_back(train_windows[order[static_cast<std::size_t>(i)]]);
      BatchData batch = assemble_batch(train_trials, refs, acfg, ling, true, &aug_rng);
      if (batch.valid_rows.size() < 2)
        throw ValidationError("run: batch with fewer than 2 labeled frames");
      ModelOutput<float> out = model.forward(batch.input, true, drop_rng);
      auto loss = ccc_loss_masked(out.pred, Var<float>::constant(batch.labels),
                                  batch.valid_rows);
      model.params().zero_grads();
      loss.backward();
      adam.step(model.params(), sched.batch_lr(b, n_batches));
    }

    const CccReport val_report = evaluate_partition(model, val_trials, cfg, ling);
    const CccReport train_report =
        same_partition ? val_report : evaluate_partition(model, train_trials, cfg, ling);

    SchedulerTick tick = sched.tick(val_report.mean);
    if (tick.improved) {
      best_snapshot = model.params().snapshot_values();
      best_report = val_report;
      has_best = true;
      best_epoch = epoch;
    }
    if (tick.unfroze_group) model.set_trainable_groups(sched.current_group());
    model.params().restore_values(best_snapshot);  // best state reloaded every epoch

    EpochRow row;
    row.epoch = epoch;
    row.phase = warm ? "warmup" : "plateau";
    row.lr = sched.lr();
    row.groups = groups_string(sched.current_group());
    row.train = train_report;
    row.val = val_report;
    row.best_val = sched.state().best_val;
    row.since_best = sched.state().epochs_since_best;
    row.early_stop = sched.state().early_stop_counter;
    log << format_epoch_row(row) << "\n";
    log.flush();
    result.rows.push_back(row);

    save_state();
    if (tick.stop) break;
  }

  result.best_val = best_report;
  result.best_epoch = best_epoch;
  return result;
}

}  // namespace afusion
