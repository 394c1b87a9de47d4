#include "afusion/cli.hpp"

#include <CLI11.hpp>
#include <iostream>

#include "afusion/commands.hpp"
#include "afusion/io_util.hpp"

namespace afusion {

namespace {

std::vector<Index> parse_lengths(const std::string& csv) {
  std::vector<Index> out;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoll(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return out;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"afusion: multimodal continuous valence-arousal recognition toolkit"};
  app.require_subcommand(1);

  // synth ---------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a deterministic synthetic corpus");
  SynthSpec synth_spec;
  std::string synth_out, synth_lengths;
  synth->add_option("--out", synth_out, "corpus output directory")->required();
  synth->add_option("--trials", synth_spec.trials, "number of trials");
  synth->add_option("--subjects", synth_spec.subjects, "number of subjects");
  synth->add_option("--frames", synth_spec.frames, "frames per trial");
  synth->add_option("--lengths", synth_lengths, "explicit per-trial frame counts (comma list)");
  synth->add_option("--fps", synth_spec.fps, "video frame rate");
  synth->add_option("--missing-rate", synth_spec.missing_rate, "probability of a missing frame");
  synth->add_option("--sentinel-rate", synth_spec.sentinel_rate,
                    "probability of a -5 annotation row");
  synth->add_option("--val-subjects", synth_spec.val_subjects,
                    "subjects assigned to the val split (-1 = auto)");
  synth->add_option("--seed", synth_spec.seed, "corpus seed");

  // preprocess ----------------------------------------------------------
  auto* prep = app.add_subcommand("preprocess", "synchronize manifest trials into records");
  std::string prep_manifest, prep_out;
  prep->add_option("--manifest", prep_manifest, "manifest.jsonl path")->required();
  prep->add_option("--out", prep_out, "record store directory")->required();

  // train ----------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train folds and seeds");
  std::string train_config, train_folds_file;
  std::vector<std::string> train_sets;
  bool train_resume = false;
  RunConfig cfg;
  train->add_option("--config", train_config, "flat key=value config file");
  train->add_option("--set", train_sets, "config override key=value (repeatable)");
  train->add_option("--store", cfg.store, "preprocessed record store");
  train->add_option("--out", cfg.out_dir, "run output directory");
  train->add_option("--model", cfg.model, "lfan | can");
  train->add_option("--modalities", cfg.modalities, "comma list: visual,audio,linguistic");
  train->add_option("--fold", cfg.fold, "fold index or 'all'");
  train->add_option("--seeds", cfg.seeds, "comma list of run seeds");
  train->add_option("--lr", cfg.lr, "target learning rate");
  train->add_option("--batch", cfg.batch, "windows per training step");
  train->add_option("--max-epoch", cfg.max_epoch, "epoch cap");
  train->add_option("--dropout", cfg.dropout, "TCN dropout probability");
  train->add_flag("--overfit", cfg.overfit, "degenerate fold: train = val = all fold trials");
  train->add_flag("--resume", train_resume, "continue runs from their checkpoints");
  train->add_option("--folds-file", train_folds_file, "use an existing folds.json");

  // predict ---------------------------------------------------------------
  auto* predict = app.add_subcommand("predict", "write per-trial prediction CSVs");
  std::string pr_ckpt, pr_store, pr_out, pr_attention, pr_split;
  predict->add_option("--checkpoint", pr_ckpt, "checkpoint path")->required();
  predict->add_option("--store", pr_store, "preprocessed record store")->required();
  predict->add_option("--out", pr_out, "prediction output directory")->required();
  predict->add_option("--attention-dir", pr_attention,
                      "also export fusion attention weights per trial");
  predict->add_option("--split", pr_split, "restrict to one split (train|val|test)");

  // report -----------------------------------------------------------------
  auto* report = app.add_subcommand("report", "aggregate run reports into a results grid");
  std::vector<std::string> rp_runs;
  std::string rp_out;
  report->add_option("--runs", rp_runs, "run directories to scan")->required();
  report->add_option("--out", rp_out, "report output directory")->required();

  // gradcheck ---------------------------------------------------------------
  auto* gradcheck =
      app.add_subcommand("gradcheck", "run the gradient verification suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      if (!synth_lengths.empty()) synth_spec.lengths = parse_lengths(synth_lengths);
      cmd_synth(synth_spec, synth_out, std::cout);
      return 0;
    }
    if (*prep) {
      auto summary = cmd_preprocess(prep_manifest, prep_out, std::cout);
      return summary.failures.empty() ? 0 : 1;
    }
    if (*train) {
      RunConfig base;
      if (!train_config.empty()) base = parse_config_text(read_file_text(train_config));
      for (const auto& kv : train_sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw ValidationError("--set wants key=value, got '" + kv + "'");
        apply_config_kv(base, kv.substr(0, eq), kv.substr(eq + 1));
      }
      // explicit flags win over config file and --set
      for (const auto* opt : train->get_options()) {
        if (opt->count() == 0) continue;
        const std::string name = opt->get_name();
        if (name == "--store") base.store = cfg.store;
        if (name == "--out") base.out_dir = cfg.out_dir;
        if (name == "--model") apply_config_kv(base, "model", cfg.model);
        if (name == "--modalities") base.modalities = cfg.modalities;
        if (name == "--fold") base.fold = cfg.fold;
        if (name == "--seeds") base.seeds = cfg.seeds;
        if (name == "--lr") base.lr = cfg.lr;
        if (name == "--batch") base.batch = cfg.batch;
        if (name == "--max-epoch") base.max_epoch = cfg.max_epoch;
        if (name == "--dropout") base.dropout = cfg.dropout;
        if (name == "--overfit") base.overfit = cfg.overfit;
      }
      cmd_train(base, train_folds_file, train_resume, std::cout);
      return 0;
    }
    if (*predict) {
      cmd_predict(pr_ckpt, pr_store, pr_out, pr_attention, pr_split, std::cout);
      return 0;
    }
    if (*report) {
      std::vector<std::filesystem::path> roots(rp_runs.begin(), rp_runs.end());
      cmd_report(roots, rp_out, std::cout);
      return 0;
    }
    if (*gradcheck) {
      GradcheckOutcome r = run_gradcheck_suite(std::cout);
      return r.pass ? 0 : 2;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace afusion
