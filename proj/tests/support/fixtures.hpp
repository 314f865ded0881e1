#pragma once

// Reference fixtures shared by the unit suite and the acceptance runner.

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "xrfmamba/summarize/audit.hpp"

namespace xrf::fixture {

/// Consistent-verdict counts out of 342 slots: five auditors by three models.
inline constexpr std::size_t kSlots = 342;
inline constexpr std::array<std::array<std::size_t, 3>, 5> kAuditGridCounts = {{
    {278, 276, 278},
    {276, 275, 276},
    {279, 279, 276},
    {278, 275, 277},
    {262, 263, 266},
}};
inline const std::array<std::string, 3> kAuditGridModels = {"chatgpt-4o", "deepseek-v3", "qwen2.5-plus"};

inline std::vector<std::string> slot_ids(std::size_t n = kSlots) {
  std::vector<std::string> ids;
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "seq_%04zu/q%02zu", i / 2, 1 + i % 27);
    ids.push_back(buf);
  }
  return ids;
}

/// One auditor's verdicts on one model: the first `consistent` slots agree.
inline std::vector<summarize::JudgmentRecord> judgments(const std::string& auditor, const std::string& model,
                                                        std::size_t consistent, std::size_t n = kSlots) {
  std::vector<summarize::JudgmentRecord> out;
  const auto ids = slot_ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({ids[i], auditor, model, i < consistent, "2025-01-01T00:00:00Z", 7, i % 2 == 0});
  }
  return out;
}

inline std::vector<summarize::JudgmentRecord> audit_grid_judgments() {
  std::vector<summarize::JudgmentRecord> all;
  for (std::size_t a = 0; a < kAuditGridCounts.size(); ++a) {
    for (std::size_t m = 0; m < kAuditGridModels.size(); ++m) {
      const auto part = judgments("a" + std::to_string(a + 1), kAuditGridModels[m], kAuditGridCounts[a][m]);
      all.insert(all.end(), part.begin(), part.end());
    }
  }
  return all;
}

// Bedroom example: action timeline and the prompt text in its reference form.
inline const std::vector<data::AnnotationTuple> kBedroomTimeline = {
    {0, 0.0, 5.0},   {1, 5.0, 13.0},  {18, 13.0, 22.0}, {3, 22.0, 27.0},
    {5, 27.0, 40.0}, {23, 40.0, 46.0}, {24, 46.0, 60.0}, {22, 60.0, 68.0},
};
inline const std::string kBedroomQuestion =
    "Please answer whether the user read a book before lying down during this period?";
inline const std::string kBedroomPrompt =
    "#### You are an intelligent action summarization agent. #### This is an action sequence that occurred in the "
    "bedroom: the user did the action of walking, with a start time of 0.0 and an end time of 5.0; the user did the "
    "action of sitting down, with a start time of 5.0 and an end time of 13.0; the user did the action of reading a "
    "book, with a start time of 13.0 and an end time of 22.0; the user did the action of pouring water into the cup, "
    "with a start time of 22.0 and an end time of 27.0;  the user did the action of taking medicine, with a start "
    "time of 27.0 and an end time of 40.0; the user did the action of lying, with a start time of 40.0 and an end "
    "time of 46.0; the user did the action of using the phone, with a start time of 46.0 and an end time of 60.0; "
    "the user did the action of getting up, with a start time of 60.0 and an end time of 68.0.  #### Please answer "
    "whether the user read a book before lying down during this period?";

}  // namespace xrf::fixture
