#include "afusion/commands.hpp"

#include <algorithm>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "afusion/io_util.hpp"

namespace afusion {

namespace {

using nlohmann::json;

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void cmd_synth(const SynthSpec& spec, const std::filesystem::path& out_dir,
               std::ostream& out) {
  auto manifest = synth_corpus(spec, out_dir);
  Index frames = 0;
  for (const auto& e : manifest) (void)e;
  std::map<std::string, int> split_counts;
  for (const auto& e : manifest) ++split_counts[e.split];
  out << "synth: wrote " << manifest.size() << " trials to " << out_dir.string() << " (";
  bool first = true;
  for (const auto& [split, count] : split_counts) {
    if (!first) out << ", ";
    out << count << " " << split;
    first = false;
  }
  out << "), manifest at " << (out_dir / "manifest.jsonl").string() << "\n";
  (void)frames;
}

PreprocessSummary cmd_preprocess(const std::filesystem::path& manifest_path,
                                 const std::filesystem::path& out_dir, std::ostream& out) {
  const auto manifest = load_manifest(manifest_path);
  std::filesystem::create_directories(out_dir);
  PreprocessSummary summary;
  std::vector<std::string> errors(manifest.size());
  std::vector<Index> frames(manifest.size(), 0), masked(manifest.size(), 0);
  std::vector<char> ok(manifest.size(), 0);
  parallel_for(static_cast<std::int64_t>(manifest.size()), [&](std::int64_t i) {
    const auto& entry = manifest[static_cast<std::size_t>(i)];
    try {
      TrialRecord rec = preprocess_trial(entry);
      save_record(out_dir / (entry.trial_id + ".aftr"), rec);
      frames[static_cast<std::size_t>(i)] = rec.n;
      for (auto v : rec.valid)
        if (!v) ++masked[static_cast<std::size_t>(i)];
      ok[static_cast<std::size_t>(i)] = 1;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  });
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (ok[i]) {
      ++summary.trials_ok;
      summary.total_frames += frames[i];
      summary.masked_frames += masked[i];
    } else {
      summary.failures.emplace_back(manifest[i].trial_id, errors[i]);
      out << "preprocess: trial " << manifest[i].trial_id << " FAILED: " << errors[i]
          << "\n";
    }
  }
  out << "preprocess: " << summary.trials_ok << "/" << manifest.size() << " trials, "
      << summary.total_frames << " frames (" << summary.masked_frames
      << " with masked labels) -> " << out_dir.string() << "\n";
  return summary;
}

TrainOutcome cmd_train(const RunConfig& cfg, const std::filesystem::path& folds_file,
                       bool resume, std::ostream& out) {
  if (cfg.store.empty()) throw ValidationError("train: config field 'store' is required");
  if (cfg.out_dir.empty()) throw ValidationError("train: config field 'out_dir' is required");
  (void)make_model_config(cfg);  // validate model fields before any work
  const auto seeds = config_seeds(cfg);

  RecordStore store = RecordStore::load_dir(cfg.store);
  std::vector<ManifestEntry> entries;
  for (const auto& r : store.records) {
    ManifestEntry e;
    e.trial_id = r.trial_id;
    e.subject_id = r.subject_id;
    e.split = r.split;
    e.fps = r.fps;
    entries.push_back(std::move(e));
  }

  TrainOutcome outcome;
  if (!folds_file.empty())
    outcome.folds = load_folds_json(folds_file);
  else
    outcome.folds = build_folds(entries, cfg.fold_seed);
  std::filesystem::create_directories(cfg.out_dir);
  write_folds_json(std::filesystem::path(cfg.out_dir) / "folds.json", outcome.folds);

  std::vector<int> fold_indices;
  if (cfg.fold == "all") {
    for (const auto& f : outcome.folds) fold_indices.push_back(f.fold_index);
  } else {
    int k = -1;
    try {
      k = std::stoi(cfg.fold);
    } catch (...) {
      throw ValidationError("train: fold must be an index or 'all', got '" + cfg.fold + "'");
    }
    if (k < 0 || k >= static_cast<int>(outcome.folds.size()))
      throw ValidationError("train: fold index " + cfg.fold + " out of range");
    fold_indices.push_back(k);
  }

  struct RunJob {
    int fold;
    std::uint64_t seed;
  };
  std::vector<RunJob> jobs;
  for (int k : fold_indices)
    for (auto s : seeds) jobs.push_back({k, s});

  std::vector<RunSummary> summaries(jobs.size());
  parallel_for(static_cast<std::int64_t>(jobs.size()), [&](std::int64_t i) {
    const RunJob& job = jobs[static_cast<std::size_t>(i)];
    const FoldSpec& fold = outcome.folds[static_cast<std::size_t>(job.fold)];
    std::ostringstream dir_name;
    dir_name << cfg.model << "_fold" << job.fold << "_seed" << job.seed;
    const std::filesystem::path run_dir = std::filesystem::path(cfg.out_dir) / dir_name.str();
    RunResult res = run_fold(store, fold, cfg, job.seed, run_dir, resume);

    json report;
    report["model"] = cfg.model;
    report["fold"] = job.fold;
    report["seed"] = job.seed;
    report["best_epoch"] = res.best_epoch;
    report["epochs"] = res.rows.empty() ? 0 : res.rows.back().epoch + 1;
    report["val"] = {{"valence", res.best_val.valence},
                     {"arousal", res.best_val.arousal},
                     {"mean", res.best_val.mean}};
    atomic_write_text(run_dir / "report.json", report.dump(2) + "\n");

    RunSummary& s = summaries[static_cast<std::size_t>(i)];
    s.model = cfg.model;
    s.fold = job.fold;
    s.seed = job.seed;
    s.best_epoch = res.best_epoch;
    s.epochs = res.rows.empty() ? 0 : res.rows.back().epoch + 1;
    s.val = res.best_val;
    s.run_dir = run_dir;
  });

  for (const auto& s : summaries) {
    out << "train: " << s.model << " fold " << s.fold << " seed " << s.seed << ": val CCC "
        << fmt6(s.val.valence) << "/" << fmt6(s.val.arousal) << " (mean "
        << fmt6(s.val.mean) << ") at epoch " << s.best_epoch << " of " << s.epochs << "\n";
    outcome.runs.push_back(s);
  }

  // best-seed selection per trained fold
  for (int k : fold_indices) {
    const RunSummary* best = nullptr;
    json all = json::array();
    for (const auto& s : summaries) {
      if (s.fold != k) continue;
      all.push_back({{"seed", s.seed}, {"mean", s.val.mean}});
      if (best == nullptr || s.val.mean > best->val.mean) best = &s;
    }
    if (best == nullptr) continue;
    json sel;
    sel["model"] = cfg.model;
    sel["fold"] = k;
    sel["best_seed"] = best->seed;
    sel["val"] = {{"valence", best->val.valence},
                  {"arousal", best->val.arousal},
                  {"mean", best->val.mean}};
    sel["runs"] = all;
    std::ostringstream name;
    name << cfg.model << "_fold" << k << "_selection.json";
    atomic_write_text(std::filesystem::path(cfg.out_dir) / name.str(), sel.dump(2) + "\n");
    out << "train: fold " << k << " best seed " << best->seed << " (mean "
        << fmt6(best->val.mean) << ")\n";
  }
  return outcome;
}

void restore_model_params(AffectModel<float>& model, const CheckpointData& ckpt) {
  auto& entries = model.params().entries();
  if (ckpt.param_names.size() != entries.size())
    throw ValidationError("checkpoint: parameter count mismatch with the model");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (ckpt.param_names[i] != entries[i].name)
      throw ValidationError("checkpoint: parameter '" + ckpt.param_names[i] +
                            "' does not match model parameter '" + entries[i].name + "'");
    if (!ckpt.param_values[i].same_shape(entries[i].var.value()))
      throw ValidationError("checkpoint: shape mismatch for '" + entries[i].name + "'");
    entries[i].var.mutable_value() = ckpt.param_values[i].clone();
  }
}

PredictOutcome cmd_predict(const std::filesystem::path& checkpoint_path,
                           const std::filesystem::path& store_dir,
                           const std::filesystem::path& out_dir,
                           const std::filesystem::path& attention_dir,
                           const std::string& split_filter, std::ostream& out) {
  CheckpointData ckpt = load_checkpoint(checkpoint_path);
  RunConfig cfg = parse_config_text(ckpt.config_text);
  AffectModel<float> model(make_model_config(cfg), 0);
  restore_model_params(model, ckpt);

  LingStats ling_stats;
  const LingStats* ling = nullptr;
  bool needs_linguistic = false;
  for (Modality m : model.config().modalities)
    if (m == Modality::linguistic) needs_linguistic = true;
  if (needs_linguistic) {
    if (!ckpt.has_ling_norm)
      throw ValidationError("predict: checkpoint lacks linguistic normalization statistics");
    ling_stats.mean = ckpt.ling_mean;
    ling_stats.stdev = ckpt.ling_std;
    ling = &ling_stats;
  }

  RecordStore store = RecordStore::load_dir(store_dir);
  std::vector<const TrialRecord*> selected;
  for (const auto& r : store.records) {
    if (!split_filter.empty() && r.split != split_filter) continue;
    if (needs_linguistic && !r.has_linguistic)
      throw ValidationError("predict: trial '" + r.trial_id +
                            "' lacks the linguistic features this checkpoint requires");
    selected.push_back(&r);
  }
  if (selected.empty()) throw ValidationError("predict: no trials selected");

  std::filesystem::create_directories(out_dir);
  if (!attention_dir.empty()) std::filesystem::create_directories(attention_dir);
  PredictOutcome outcome;
  for (const TrialRecord* trial : selected) {
    TrialPrediction pred =
        predict_trial(model, *trial, cfg, ling, !attention_dir.empty());
    std::ostringstream csv;
    csv << "frame,valence,arousal\n";
    for (Index i = 0; i < trial->n; ++i)
      csv << i << ',' << fmt6(pred.stitched(i, 0)) << ',' << fmt6(pred.stitched(i, 1))
          << "\n";
    atomic_write_text(out_dir / (trial->trial_id + ".csv"), csv.str());
    outcome.rows_per_trial.emplace_back(trial->trial_id, trial->n);

    if (!attention_dir.empty() && !pred.window_attention.empty()) {
      std::ostringstream acsv;
      const Index cols = pred.window_attention.front().second.extent(1);
      acsv << "window_start,step";
      for (Index c = 0; c < cols; ++c) acsv << ",w" << c;
      acsv << "\n";
      for (const auto& [start, att] : pred.window_attention)
        for (Index t = 0; t < att.extent(0); ++t) {
          acsv << start << ',' << t;
          for (Index c = 0; c < cols; ++c) acsv << ',' << fmt6(att(t, c));
          acsv << "\n";
        }
      atomic_write_text(attention_dir / (trial->trial_id + "_attention.csv"), acsv.str());
    }
  }
  out << "predict: wrote " << outcome.rows_per_trial.size() << " trial CSVs to "
      << out_dir.string() << "\n";
  return outcome;
}

void cmd_report(const std::vector<std::filesystem::path>& run_roots,
                const std::filesystem::path& out_dir, std::ostream& out) {
  struct Cell {
    bool present = false;
    double valence = 0, arousal = 0, mean = -2;
  };
  std::map<std::string, std::array<Cell, 6>> grid;  // model -> fold cells
  int reports_found = 0;
  for (const auto& root : run_roots) {
    if (!std::filesystem::exists(root)) continue;
    for (const auto& de : std::filesystem::recursive_directory_iterator(root)) {
      if (de.path().filename() != "report.json") continue;
      json j;
      try {
        j = json::parse(read_file_text(de.path()));
      } catch (const json::exception& e) {
        throw ValidationError("report: cannot parse " + de.path().string() + ": " + e.what());
      }
      const std::string model = j.at("model").get<std::string>();
      const int fold = j.at("fold").get<int>();
      if (fold < 0 || fold > 5) continue;
      const double v = j.at("val").at("valence").get<double>();
      const double a = j.at("val").at("arousal").get<double>();
      const double m = j.at("val").at("mean").get<double>();
      Cell& cell = grid[model][static_cast<std::size_t>(fold)];
      if (!cell.present || m > cell.mean) cell = {true, v, a, m};
      ++reports_found;
    }
  }
  if (reports_found == 0) throw ValidationError("report: no report.json found");

  auto upper = [](std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
  };
  auto cell_text = [](const Cell& c, bool valence) {
    if (!c.present) return std::string("-");
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.3f", valence ? c.valence : c.arousal);
    return std::string(buf);
  };

  std::ostringstream csv, txt;
  csv << "emotion,method,fold0,fold1,fold2,fold3,fold4,fold5,mean\n";
  txt << std::left << std::setw(9) << "Emotion" << std::setw(8) << "Method";
  for (int k = 0; k < 6; ++k) txt << std::setw(8) << ("Fold " + std::to_string(k));
  txt << std::setw(8) << "Mean" << "\n";
  for (const bool valence : {true, false}) {
    for (const auto& [model, cells] : grid) {
      csv << (valence ? "valence" : "arousal") << ',' << model;
      txt << std::setw(9) << (valence ? "Valence" : "Arousal") << std::setw(8)
          << upper(model);
      double acc = 0;
      int present = 0;
      for (int k = 0; k < 6; ++k) {
        const Cell& c = cells[static_cast<std::size_t>(k)];
        const std::string cell = cell_text(c, valence);
        csv << ',' << cell;
        txt << std::setw(8) << cell;
        if (c.present) {
          acc += valence ? c.valence : c.arousal;
          ++present;
        }
      }
      const std::string mean_cell =
          present > 0 ? cell_text(Cell{true, acc / present, acc / present, 0}, valence)
                      : std::string("-");
      csv << ',' << mean_cell << "\n";
      txt << std::setw(8) << mean_cell << "\n";
    }
  }
  std::filesystem::create_directories(out_dir);
  atomic_write_text(out_dir / "results.csv", csv.str());
  atomic_write_text(out_dir / "results.txt", txt.str());
  out << txt.str();
}

}  // namespace afusion
