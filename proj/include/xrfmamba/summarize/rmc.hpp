#pragma once

// Response meaning consistency: consistent verdicts over question slots for
// one auditor and one model, and its mean over the auditor x model grid.

#include <map>
#include <set>
#include <sstream>
#include <iomanip>
#include <string>
#include <vector>

#include "xrfmamba/summarize/audit.hpp"

namespace xrf::summarize {

struct RmcResult {
  std::size_t consistent = 0;
  std::size_t n_q = 0;
  double rmc = 0.0;
};

/// `judgments` must all belong to one auditor and one model and cover every
/// id in `question_ids` exactly once.
inline RmcResult compute_rmc(const std::vector<JudgmentRecord>& judgments, const std::vector<std::string>& question_ids) {
  if (question_ids.empty()) throw ContractError("rmc: no question slots");
  const std::set<std::string> expected(question_ids.begin(), question_ids.end());
  if (expected.size() != question_ids.size()) throw ContractError("rmc: duplicate question slot ids");
  std::map<std::string, bool> verdict;
  for (const auto& j : judgments) {
    if (j.auditor_id != judgments.front().auditor_id || j.model != judgments.front().model) {
      throw ContractError("rmc: judgments mix auditors or models");
    }
    if (!expected.count(j.question_id)) throw ContractError("rmc: judgment for unknown slot " + j.question_id);
    if (!verdict.emplace(j.question_id, j.consistent).second) {
      throw ContractError("rmc: duplicate judgment for " + j.question_id);
    }
  }
  if (verdict.size() != expected.size()) {
    std::ostringstream os;
    os << "rmc: incomplete judgments, " << expected.size() - verdict.size() << " missing:";
    for (const auto& id : question_ids) {
      if (!verdict.count(id)) os << ' ' << id;
    }
    throw ContractError(os.str());
  }
  RmcResult r;
  r.n_q = expected.size();
  for (const auto& [_, ok] : verdict) r.consistent += ok;
  r.rmc = static_cast<double>(r.consistent) / static_cast<double>(r.n_q);
  return r;
}

struct MrmcReport {
  std::vector<std::string> auditors;  // sorted
  std::vector<std::string> models;    // sorted
  std::vector<std::vector<RmcResult>> cells;  // [auditor][model]
  std::vector<double> model_mean;    // over auditors
  std::vector<double> auditor_mean;  // over models
  double mrmc = 0.0;                 // over all cells
};

inline MrmcReport compute_mrmc(const std::vector<JudgmentRecord>& judgments,
                               const std::vector<std::string>& question_ids) {
  std::map<std::string, std::map<std::string, std::vector<JudgmentRecord>>> grid;
  std::set<std::string> models;
  for (const auto& j : judgments) {
    grid[j.auditor_id][j.model].push_back(j);
    models.insert(j.model);
  }
  if (grid.empty()) throw ContractError("mrmc: no judgments");
  MrmcReport r;
  r.models.assign(models.begin(), models.end());
  for (const auto& [auditor, by_model] : grid) {
    if (by_model.size() != models.size()) {
      std::string missing;
      for (const auto& m : models) {
        if (!by_model.count(m)) missing += " " + m;
      }
      throw ContractError("mrmc: ragged coverage, auditor " + auditor + " has no judgments for" + missing);
    }
    r.auditors.push_back(auditor);
    std::vector<RmcResult> row;
    for (const auto& m : r.models) row.push_back(compute_rmc(by_model.at(m), question_ids));
    r.cells.push_back(std::move(row));
  }
  const double na = static_cast<double>(r.auditors.size()), nm = static_cast<double>(r.models.size());
  r.model_mean.assign(r.models.size(), 0.0);
  r.auditor_mean.assign(r.auditors.size(), 0.0);
  for (std::size_t a = 0; a < r.auditors.size(); ++a) {
    for (std::size_t m = 0; m < r.models.size(); ++m) {
      r.model_mean[m] += r.cells[a][m].rmc / na;
      r.auditor_mean[a] += r.cells[a][m].rmc / nm;
      r.mrmc += r.cells[a][m].rmc / (na * nm);
    }
  }
  return r;
}

inline json to_json(const MrmcReport& r) {
  json cells = json::array();
  for (std::size_t a = 0; a < r.auditors.size(); ++a) {
    for (std::size_t m = 0; m < r.models.size(); ++m) {
      const auto& c = r.cells[a][m];
      cells.push_back({{"auditor", r.auditors[a]}, {"model", r.models[m]}, {"consistent", c.consistent},
                       {"n_q", c.n_q}, {"rmc", c.rmc}});
    }
  }
  return json{{"auditors", r.auditors}, {"models", r.models},         {"cells", cells},
              {"model_mean", r.model_mean}, {"auditor_mean", r.auditor_mean}, {"mrmc", r.mrmc}};
}

/// Auditor rows, model columns, "[k/N]0.813" cells, row means and the mRMC row.
inline std::string format_mrmc_table(const MrmcReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << std::left << std::setw(10) << "";
  for (const auto& m : r.models) os << "  " << std::setw(16) << m;
  os << "  mean\n";
  for (std::size_t a = 0; a < r.auditors.size(); ++a) {
    os << std::setw(10) << ("RMC@" + r.auditors[a]);
    for (const auto& c : r.cells[a]) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(3) << '[' << c.consistent << '/' << c.n_q << ']' << c.rmc;
      os << "  " << std::setw(16) << cell.str();
    }
    os << "  " << r.auditor_mean[a] << '\n';
  }
  os << std::setw(10) << "mRMC";
  for (double v : r.model_mean) os << "  " << std::setw(16) << v;
  os << "  " << r.mrmc << '\n';
  return os.str();
}

}  // namespace xrf::summarize
