#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "afusion/folds.hpp"

using namespace afusion;

namespace {

std::vector<ManifestEntry> toy_manifest(int train_subjects, int trials_per_subject,
                                        int val_subjects) {
  std::vector<ManifestEntry> m;
  auto mk = [](const std::string& subject, int t, const std::string& split) {
    ManifestEntry e;
    e.subject_id = subject;
    e.trial_id = subject + "_t" + std::to_string(t);
    e.split = split;
    e.fps = 25.0;
    e.frames_dir = "frames";
    e.wav = "a.wav";
    return e;
  };
  for (int s = 0; s < train_subjects; ++s)
    for (int t = 0; t < trials_per_subject; ++t)
      m.push_back(mk("train_s" + std::to_string(s), t, "train"));
  for (int s = 0; s < val_subjects; ++s)
    m.push_back(mk("val_s" + std::to_string(s), 0, "val"));
  return m;
}

}  // namespace

TEST_CASE("build_folds: 10 single-trial subjects pack into 5 bins of 2") {
  auto manifest = toy_manifest(10, 1, 2);
  auto folds = build_folds(manifest, 42);
  REQUIRE(folds.size() == 6);

  CHECK(folds[0].val_trials.size() == 2);
  CHECK(folds[0].train_trials.size() == 10);

  std::map<std::string, int> validated;
  for (std::size_t k = 1; k < folds.size(); ++k) {
    CHECK(folds[k].val_trials.size() == 2);
    CHECK(folds[k].train_trials.size() == 10);  // 8 remaining + 2 original val
    for (const auto& t : folds[k].val_trials) ++validated[t];
  }
  // every original training trial validates exactly once across folds 1..5
  CHECK(validated.size() == 10);
  for (const auto& [t, c] : validated) CHECK(c == 1);

  CHECK(audit_folds(folds, manifest).empty());
}

TEST_CASE("build_folds: fold 0 equals the manifest partition") {
  auto manifest = toy_manifest(7, 2, 3);
  auto folds = build_folds(manifest, 7);
  std::set<std::string> expect_val, got_val;
  for (const auto& e : manifest)
    if (e.split == "val") expect_val.insert(e.trial_id);
  for (const auto& t : folds[0].val_trials) got_val.insert(t);
  CHECK(expect_val == got_val);
}

TEST_CASE("build_folds: deterministic for a seed, sensitive to the seed") {
  auto manifest = toy_manifest(12, 2, 2);
  auto a = build_folds(manifest, 5);
  auto b = build_folds(manifest, 5);
  for (int k = 0; k < 6; ++k) {
    CHECK(a[static_cast<std::size_t>(k)].train_trials ==
          b[static_cast<std::size_t>(k)].train_trials);
    CHECK(a[static_cast<std::size_t>(k)].val_trials ==
          b[static_cast<std::size_t>(k)].val_trials);
  }
  auto c = build_folds(manifest, 6);
  bool any_diff = false;
  for (int k = 1; k < 6; ++k)
    if (a[static_cast<std::size_t>(k)].val_trials !=
        c[static_cast<std::size_t>(k)].val_trials)
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("build_folds: rejects a subject present in both original splits") {
  auto manifest = toy_manifest(4, 1, 1);
  ManifestEntry dup = manifest[0];
  dup.trial_id = "dup_trial";
  dup.split = "val";
  manifest.push_back(dup);  // same subject_id now in train and val
  CHECK_THROWS_AS(build_folds(manifest, 1), ValidationError);
}

TEST_CASE("build_folds: bin sizes stay within max trials-per-subject") {
  // uneven subjects: some with 4 trials, some with 1
  std::vector<ManifestEntry> manifest;
  for (int s = 0; s < 9; ++s) {
    const int trials = s % 3 == 0 ? 4 : 1;
    for (int t = 0; t < trials; ++t) {
      ManifestEntry e;
      e.subject_id = "s" + std::to_string(s);
      e.trial_id = e.subject_id + "_t" + std::to_string(t);
      e.split = "train";
      e.fps = 25.0;
      manifest.push_back(e);
    }
  }
  ManifestEntry v;
  v.subject_id = "vs";
  v.trial_id = "vs_t0";
  v.split = "val";
  v.fps = 25.0;
  manifest.push_back(v);

  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    auto folds = build_folds(manifest, seed);
    CHECK(audit_folds(folds, manifest).empty());
  }
}

TEST_CASE("audit_folds: detects injected violations") {
  auto manifest = toy_manifest(10, 1, 2);
  auto folds = build_folds(manifest, 3);

  // subject overlap: copy a validation trial of fold 1 into its training list
  auto broken = folds;
  broken[1].train_trials.push_back(broken[1].val_trials[0]);
  auto v1 = audit_folds(broken, manifest);
  REQUIRE(!v1.empty());
  bool names_subject = false;
  for (const auto& msg : v1)
    if (msg.find("appears in both") != std::string::npos) names_subject = true;
  CHECK(names_subject);

  // coverage: drop a trial from a validation bin
  auto missing = folds;
  missing[2].val_trials.pop_back();
  auto v2 = audit_folds(missing, manifest);
  bool reports_missing = false;
  for (const auto& msg : v2)
    if (msg.find("never validates") != std::string::npos) reports_missing = true;
  CHECK(reports_missing);

  // duplication across bins
  auto dup = folds;
  dup[3].val_trials.push_back(dup[4].val_trials[0]);
  auto v3 = audit_folds(dup, manifest);
  bool reports_dup = false;
  for (const auto& msg : v3)
    if (msg.find("more than one") != std::string::npos) reports_dup = true;
  CHECK(reports_dup);
}

TEST_CASE("folds json round-trip") {
  auto manifest = toy_manifest(6, 1, 1);
  auto folds = build_folds(manifest, 11);
  const auto path = std::filesystem::temp_directory_path() / "afusion_folds_test.json";
  write_folds_json(path, folds);
  auto back = load_folds_json(path);
  REQUIRE(back.size() == folds.size());
  for (std::size_t k = 0; k < folds.size(); ++k) {
    CHECK(back[k].fold_index == folds[k].fold_index);
    CHECK(back[k].train_trials == folds[k].train_trials);
    CHECK(back[k].val_trials == folds[k].val_trials);
  }
  std::filesystem::remove(path);
}
