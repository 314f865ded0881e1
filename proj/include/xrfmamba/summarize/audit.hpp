#pragma once

// Interactive consistency judgments. Each pair is shown as Response A/B in an
// order derived from a recorded seed; the order is stored with the verdict.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "xrfmamba/summarize/responses.hpp"

namespace xrf::summarize {

struct JudgmentRecord {
  std::string question_id;
  std::string auditor_id;
  std::string model;
  bool consistent = false;
  std::string timestamp;
  std::uint64_t blind_seed = 0;
  bool gt_shown_first = true;  // Response A was the ground-truth answer
};

inline json to_json(const JudgmentRecord& r) {
  return json{{"question_id", r.question_id}, {"auditor_id", r.auditor_id}, {"model", r.model},
              {"consistent", r.consistent},   {"timestamp", r.timestamp},   {"blind_seed", r.blind_seed},
              {"response_a", r.gt_shown_first ? "gt" : "pred"}};
}

inline JudgmentRecord judgment_from_json(const json& j, const std::string& at) {
  using data::detail::field;
  JudgmentRecord r;
  r.question_id = field<std::string>(j, "question_id", at);
  r.auditor_id = field<std::string>(j, "auditor_id", at);
  r.model = field<std::string>(j, "model", at);
  r.consistent = field<bool>(j, "consistent", at);
  r.timestamp = j.value("timestamp", std::string());
  r.blind_seed = j.value("blind_seed", std::uint64_t{0});
  r.gt_shown_first = j.value("response_a", std::string("gt")) == "gt";
  return r;
}

using JudgmentKey = std::tuple<std::string, std::string, std::string>;  // question, auditor, model

inline JudgmentKey key_of(const JudgmentRecord& r) { return {r.question_id, r.auditor_id, r.model}; }

/// Reads judgments and rejects repeated (question, auditor, model) keys.
inline std::vector<JudgmentRecord> read_judgments(const std::filesystem::path& path) {
  std::vector<JudgmentRecord> out;
  std::set<JudgmentKey> seen;
  std::size_t i = 0;
  for (const auto& j : read_jsonl(path)) {
    auto r = judgment_from_json(j, path.filename().string() + "[" + std::to_string(i++) + "]");
    if (!seen.insert(key_of(r)).second) {
      throw SchemaError(path.string() + ": duplicate judgment for " + r.question_id + " by " + r.auditor_id + " on " +
                        r.model);
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Appends one verdict, refusing a key that is already on file.
inline void append_judgment(const std::filesystem::path& path, const JudgmentRecord& r) {
  for (const auto& existing : read_judgments(path)) {
    if (key_of(existing) == key_of(r)) {
      throw ContractError("judgment for " + r.question_id + " by " + r.auditor_id + " on " + r.model +
                          " already recorded");
    }
  }
  JsonlAppender(path).append(to_json(r));
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Whether Response A is the ground-truth answer for this pair and auditor.
/// A pure function of its arguments, so a session can be replayed.
inline bool gt_shown_first(std::uint64_t seed, const std::string& auditor, const ResponsePair& p) {
  return (splitmix64(seed ^ fnv1a(auditor + '\x1f' + p.model + '\x1f' + p.question_id)) >> 63) == 0;
}

struct AuditSummary {
  std::size_t presented = 0;
  std::size_t recorded = 0;
  std::size_t skipped = 0;
  std::size_t already_judged = 0;
  bool quit = false;
};

/// Presents each pair this auditor has not judged yet, in (question, model)
/// order, and appends one record per verdict. Answers: c = consistent,
/// i = inconsistent, s = skip, q = quit. End of input stops like quit, so an
/// interrupted session resumes where it left off.
inline AuditSummary audit_pairs(std::vector<ResponsePair> pairs, const std::filesystem::path& judgments_path,
                                const std::string& auditor_id, std::uint64_t seed, std::istream& in,
                                std::ostream& out) {
  if (auditor_id.empty()) throw ConfigError("audit: auditor id is required");
  std::set<JudgmentKey> judged;
  for (const auto& r : read_judgments(judgments_path)) judged.insert(key_of(r));
  std::sort(pairs.begin(), pairs.end(), [](const ResponsePair& a, const ResponsePair& b) {
    return std::tie(a.question_id, a.model) < std::tie(b.question_id, b.model);
  });
  AuditSummary s;
  std::size_t remaining = 0;
  for (const auto& p : pairs) remaining += !judged.count({p.question_id, auditor_id, p.model});
  s.already_judged = pairs.size() - remaining;
  std::size_t index = 0;
  for (const auto& p : pairs) {
    if (judged.count({p.question_id, auditor_id, p.model})) continue;
    ++index;
    const bool gt_first = gt_shown_first(seed, auditor_id, p);
    out << "\n[" << index << "/" << remaining << "] " << p.question_id << "\n";
    out << "Question: " << p.question << "\n\n";
    out << "Response A:\n" << (gt_first ? p.gt_response : p.pred_response) << "\n\n";
    out << "Response B:\n" << (gt_first ? p.pred_response : p.gt_response) << "\n\n";
    ++s.presented;
    for (;;) {
      out << "Same meaning? [c]onsistent / [i]nconsistent / [s]kip / [q]uit: " << std::flush;
      std::string answer;
      if (!std::getline(in, answer)) {
        s.quit = true;
        return s;
      }
      answer = normalize_ws(answer);
      if (answer == "q") {
        s.quit = true;
        return s;
      }
      if (answer == "s") {
        ++s.skipped;
        break;
      }
      if (answer == "c" || answer == "i") {
        JudgmentRecord r{p.question_id, auditor_id, p.model, answer == "c", utc_timestamp(), seed, gt_first};
        append_judgment(judgments_path, r);
        judged.insert(key_of(r));
        ++s.recorded;
        break;
      }
      out << "unrecognized answer '" << answer << "'\n";
    }
  }
  return s;
}

}  // namespace xrf::summarize
