#pragma once

// Leave-one-person-out folds.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "xrfmamba/data/dataset.hpp"

namespace xrf::eval {

struct Fold {
  std::string subject;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

/// One fold per subject in `subjects`; a subject without sequences is skipped
/// with a warning on stderr.
inline std::vector<Fold> build_lopo_splits(const data::DatasetManifest& m, const std::vector<std::string>& subjects) {
  std::vector<Fold> folds;
  for (const auto& subject : subjects) {
    Fold f{subject, {}, {}};
    for (const auto& s : m.sequences) (s.subject == subject ? f.test_ids : f.train_ids).push_back(s.id);
    if (f.test_ids.empty()) {
      std::cerr << "warning: subject " << subject << " has no sequences; fold omitted\n";
      continue;
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

/// Folds for every subject present in the manifest, in sorted subject order.
inline std::vector<Fold> build_lopo_splits(const data::DatasetManifest& m) {
  std::map<std::string, int> seen;
  for (const auto& s : m.sequences) seen[s.subject] = 1;
  std::vector<std::string> subjects;
  for (const auto& [k, _] : seen) subjects.push_back(k);
  return build_lopo_splits(m, subjects);
}

}  // namespace xrf::eval
