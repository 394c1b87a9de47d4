#include "afusion/folds.hpp"

#include <algorithm>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "afusion/io_util.hpp"

namespace afusion {

namespace {

using nlohmann::json;

std::map<std::string, std::vector<std::string>> subjects_of(
    const std::vector<ManifestEntry>& manifest, const std::string& split) {
  std::map<std::string, std::vector<std::string>> by_subject;
  for (const auto& e : manifest)
    if (e.split == split) by_subject[e.subject_id].push_back(e.trial_id);
  return by_subject;
}

}  // namespace

std::vector<FoldSpec> build_folds(const std::vector<ManifestEntry>& manifest,
                                  std::uint64_t seed) {
  auto train_subjects = subjects_of(manifest, "train");
  auto val_subjects = subjects_of(manifest, "val");
  if (train_subjects.empty() || val_subjects.empty())
    throw ValidationError("folds: manifest needs non-empty train and val splits");
  for (const auto& [subject, trials] : train_subjects)
    if (val_subjects.count(subject))
      throw ValidationError("folds: subject '" + subject +
                            "' appears in both train and val splits");

  std::vector<std::string> train_trials, val_trials;
  for (const auto& e : manifest) {
    if (e.split == "train") train_trials.push_back(e.trial_id);
    if (e.split == "val") val_trials.push_back(e.trial_id);
  }

  std::vector<FoldSpec> folds(6);
  folds[0].fold_index = 0;
  folds[0].seed = seed;
  folds[0].train_trials = train_trials;
  folds[0].val_trials = val_trials;

  // shuffle subjects, then greedily fill the lightest bin (by trial count)
  std::vector<std::string> order;
  for (const auto& [subject, trials] : train_subjects) order.push_back(subject);
  Rng rng(seed_stream(seed, "fold-split"));
  rng.shuffle(order);
  constexpr int kBins = 5;
  std::vector<std::set<std::string>> bin_subjects(kBins);
  std::vector<Index> bin_load(kBins, 0);
  for (const auto& subject : order) {
    int best = 0;
    for (int b = 1; b < kBins; ++b)
      if (bin_load[static_cast<std::size_t>(b)] < bin_load[static_cast<std::size_t>(best)])
        best = b;
    bin_subjects[static_cast<std::size_t>(best)].insert(subject);
    bin_load[static_cast<std::size_t>(best)] +=
        static_cast<Index>(train_subjects[subject].size());
  }

  for (int k = 1; k <= kBins; ++k) {
    FoldSpec& f = folds[static_cast<std::size_t>(k)];
    f.fold_index = k;
    f.seed = seed;
    const auto& held_out = bin_subjects[static_cast<std::size_t>(k - 1)];
    for (const auto& e : manifest) {
      if (e.split == "train") {
        if (held_out.count(e.subject_id))
          f.val_trials.push_back(e.trial_id);
        else
          f.train_trials.push_back(e.trial_id);
      } else if (e.split == "val") {
        f.train_trials.push_back(e.trial_id);
      }
    }
  }
  return folds;
}

std::vector<std::string> audit_folds(const std::vector<FoldSpec>& folds,
                                     const std::vector<ManifestEntry>& manifest) {
  std::vector<std::string> violations;
  std::map<std::string, std::string> subject_of;
  std::set<std::string> original_train, original_val;
  std::map<std::string, Index> trials_per_subject;
  for (const auto& e : manifest) {
    subject_of[e.trial_id] = e.subject_id;
    if (e.split == "train") {
      original_train.insert(e.trial_id);
      ++trials_per_subject[e.subject_id];
    }
    if (e.split == "val") original_val.insert(e.trial_id);
  }

  if (folds.size() != 6) {
    violations.push_back("expected 6 folds, found " + std::to_string(folds.size()));
    return violations;
  }

  // fold 0 must be exactly the manifest partition
  std::set<std::string> f0_val(folds[0].val_trials.begin(), folds[0].val_trials.end());
  if (f0_val != original_val)
    violations.push_back("fold 0 validation set differs from the manifest val split");

  for (const auto& f : folds) {
    std::set<std::string> train_subj, val_subj;
    for (const auto& t : f.train_trials) {
      auto it = subject_of.find(t);
      if (it == subject_of.end()) {
        violations.push_back("fold " + std::to_string(f.fold_index) + ": unknown trial '" +
                             t + "'");
        continue;
      }
      train_subj.insert(it->second);
    }
    for (const auto& t : f.val_trials) {
      auto it = subject_of.find(t);
      if (it == subject_of.end()) {
        violations.push_back("fold " + std::to_string(f.fold_index) + ": unknown trial '" +
                             t + "'");
        continue;
      }
      val_subj.insert(it->second);
    }
    for (const auto& s : val_subj)
      if (train_subj.count(s))
        violations.push_back("fold " + std::to_string(f.fold_index) + ": subject '" + s +
                             "' appears in both train and val");
  }

  // folds 1..5 validation bins must partition the original training trials
  std::map<std::string, int> seen;
  std::vector<Index> bin_sizes;
  for (std::size_t k = 1; k < folds.size(); ++k) {
    bin_sizes.push_back(static_cast<Index>(folds[k].val_trials.size()));
    for (const auto& t : folds[k].val_trials) {
      if (!original_train.count(t))
        violations.push_back("fold " + std::to_string(folds[k].fold_index) +
                             ": validation trial '" + t + "' is not an original training trial");
      if (++seen[t] > 1)
        violations.push_back("trial '" + t + "' validates in more than one generated fold");
    }
  }
  for (const auto& t : original_train)
    if (!seen.count(t))
      violations.push_back("trial '" + t + "' never validates in folds 1..5");

  Index max_per_subject = 0;
  for (const auto& [s, c] : trials_per_subject) max_per_subject = std::max(max_per_subject, c);
  if (!bin_sizes.empty()) {
    const Index lo = *std::min_element(bin_sizes.begin(), bin_sizes.end());
    const Index hi = *std::max_element(bin_sizes.begin(), bin_sizes.end());
    if (hi - lo > max_per_subject)
      violations.push_back("validation bin sizes differ by " + std::to_string(hi - lo) +
                           ", more than the max trials-per-subject " +
                           std::to_string(max_per_subject));
  }
  return violations;
}

void write_folds_json(const std::filesystem::path& path,
                      const std::vector<FoldSpec>& folds) {
  json out = json::array();
  for (const auto& f : folds) {
    json j;
    j["fold_index"] = f.fold_index;
    j["seed"] = f.seed;
    j["train_trials"] = f.train_trials;
    j["val_trials"] = f.val_trials;
    out.push_back(std::move(j));
  }
  atomic_write_text(path, out.dump(2) + "\n");
}

std::vector<FoldSpec> load_folds_json(const std::filesystem::path& path) {
  json in;
  try {
    in = json::parse(read_file_text(path));
  } catch (const json::exception& e) {
    throw ValidationError("folds " + path.string() + ": " + e.what());
  }
  std::vector<FoldSpec> folds;
  try {
    for (const auto& j : in) {
      FoldSpec f;
      f.fold_index = j.at("fold_index").get<int>();
      f.seed = j.at("seed").get<std::uint64_t>();
      f.train_trials = j.at("train_trials").get<std::vector<std::string>>();
      f.val_trials = j.at("val_trials").get<std::vector<std::string>>();
      folds.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw ValidationError("folds " + path.string() + ": " + e.what());
  }
  return folds;
}

}  // namespace afusion
