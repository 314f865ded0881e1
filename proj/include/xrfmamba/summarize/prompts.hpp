#pragma once

// Action-summarization prompts: the narrated action list, the question bank
// and the seeded per-sequence question assignment.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "xrfmamba/data/dataset.hpp"
#include "xrfmamba/util/json_strict.hpp"

namespace xrf::summarize {

using json = nlohmann::json;

inline constexpr const char* kAgentPreamble = "You are an intelligent action summarization agent.";

struct PromptTemplate {
  std::string id;
  std::vector<data::Scene> scenes;  // rooms where the question makes sense
  std::string question;
};

/// The 27 questions, each tagged with the scenes whose action set contains
/// every action the question asks about.
inline std::vector<PromptTemplate> question_bank() {
  using S = data::Scene;
  const std::vector<S> all{S::dining, S::study, S::bedroom};
  const std::vector<S> dining{S::dining}, study{S::study}, bedroom{S::bedroom};
  const std::vector<S> reading{S::study, S::bedroom};
  const std::vector<std::pair<std::vector<S>, std::string>> qs = {
      {all, "Please answer the number of times the user has consumed water during this period?"},
      {all, "Please answer whether the user has been drinking water during this period?"},
      {all, "Please answer whether the user has taken medication during this period?"},
      {all, "Please answer the number of times the user has taken medication during this period?"},
      {reading, "Please answer whether the user has been reading during this period?"},
      {bedroom, "Please answer whether the user read a book before lying down during this period?"},
      {bedroom, "Please answer the number of times the user watered the plants during this period?"},
      {bedroom, "Please answer whether the user watered the plants during this period?"},
      {bedroom, "Please answer whether the user has opened windows for ventilation during this period?"},
      {bedroom, "Please answer whether the user was playing with their phone while lying in bed during this period?"},
      {all, "Please answer whether the user has been walking during this period?"},
      {all, "Please answer the number of times the user has stretched during this period?"},
      {dining, "Please answer whether the user has eaten fruits during this period?"},
      {dining, "Please answer the number of times the user has eaten fruits during this period?"},
      {dining, "Please answer whether the user has wiped the table during this period?"},
      {dining, "Please answer whether the user has thrown away garbage during this period?"},
      {dining, "Please answer whether the user washed their hands before eating fruits during this period?"},
      {dining, "Please answer whether the user washed their hands after eating fruits during this period?"},
      {dining, "Please answer whether the user has washed their hands after littering during this period?"},
      {dining, "Please answer whether the user has washed their hands after wiping the table during this period?"},
      {dining, "Please answer how many times the user washed their hands during this period?"},
      {study, "Please answer whether the user operated the mouse during this period?"},
      {study, "Please answer whether the user operated the keyboard during this period?"},
      {study, "Please answer whether the user has opened the envelope during this period?"},
      {study, "Please answer whether the user has turned on the desk lamp during this period?"},
      {study, "Please answer whether the user answered the phone during this period?"},
      {study, "Please answer the number of times the user answered the phone during this period?"},
  };
  std::vector<PromptTemplate> out;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    char id[24];
    std::snprintf(id, sizeof(id), "q%02zu", i + 1);
    out.push_back({id, qs[i].first, qs[i].second});
  }
  return out;
}

inline std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

/// "#### <preamble> #### This is an action sequence that occurred in the
/// <room>: <clause>; <clause>. #### <question>". Segments must be sorted by
/// start.
template <typename Seg>
std::string render_prompt(data::Scene scene, const std::vector<Seg>& segments, const std::string& question) {
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].start_s < segments[i - 1].start_s) throw ContractError("render_prompt: segments not sorted by start");
  }
  std::ostringstream os;
  os << "#### " << kAgentPreamble << " #### ";
  if (segments.empty()) {
    os << "No actions were observed in the " << data::scene_room(scene) << " during this period.";
  } else {
    os << "This is an action sequence that occurred in the " << data::scene_room(scene) << ": ";
    for (std::size_t i = 0; i < segments.size(); ++i) {
      if (!data::valid_label(segments[i].label)) throw ContractError("render_prompt: label out of vocabulary");
      if (i > 0) os << "; ";
      os << "the user did the action of " << data::kActionPhrases[static_cast<std::size_t>(segments[i].label)]
         << ", with a start time of " << fmt1(segments[i].start_s) << " and an end time of "
         << fmt1(segments[i].end_s);
    }
    os << '.';
  }
  os << " #### " << question;
  return os.str();
}

/// Collapses whitespace runs to one space and trims both ends.
inline std::string normalize_ws(const std::string& s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

// ------------------------------------------------------------------ prompts.json

inline json prompt_bank_json(const std::vector<PromptTemplate>& bank) {
  json qs = json::array();
  for (const auto& t : bank) {
    json scenes = json::array();
    for (auto s : t.scenes) scenes.push_back(std::string(data::scene_name(s)));
    qs.push_back({{"id", t.id}, {"scenes", scenes}, {"question", t.question}});
  }
  return json{{"preamble", kAgentPreamble}, {"questions", qs}};
}

inline std::vector<PromptTemplate> read_prompt_bank(const std::filesystem::path& path) {
  const json j = data::parse_json_file(path);
  const std::string where = path.filename().string();
  util::reject_unknown_keys(j, {"preamble", "questions"}, where);
  if (j.value("preamble", std::string(kAgentPreamble)) != kAgentPreamble) {
    throw SchemaError(where + ": preamble must be \"" + std::string(kAgentPreamble) + "\"");
  }
  const json qs = data::detail::field<json>(j, "questions", where);
  if (!qs.is_array() || qs.empty()) throw SchemaError(where + ".questions: expected a non-empty list");
  std::vector<PromptTemplate> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const std::string at = where + ".questions[" + std::to_string(i) + "]";
    util::reject_unknown_keys(qs[i], {"id", "scenes", "question"}, at);
    PromptTemplate t;
    t.id = data::detail::field<std::string>(qs[i], "id", at);
    t.question = data::detail::field<std::string>(qs[i], "question", at);
    for (const auto& s : data::detail::field<std::vector<std::string>>(qs[i], "scenes", at)) {
      const auto scene = data::parse_scene(s);
      if (!scene) throw SchemaError(at + ": unknown scene " + s);
      t.scenes.push_back(*scene);
    }
    if (!ids.insert(t.id).second) throw SchemaError(at + ": duplicate id " + t.id);
    out.push_back(std::move(t));
  }
  return out;
}

// ------------------------------------------------------------------ assignment

struct PromptSlot {
  std::string slot_id;  // "<sequence>/<question>"
  std::string sequence_id;
  std::string question_id;
};

inline std::string slot_id(const std::string& sequence_id, const std::string& question_id) {
  return sequence_id + "/" + question_id;
}

/// Picks `per_sequence` distinct scene-compatible questions for each sequence.
/// Sequences are visited in id order and draw from one generator seeded with
/// `seed`, so the assignment only depends on the sequence list and the seed.
inline std::vector<PromptSlot> assign_prompts(std::vector<std::pair<std::string, data::Scene>> sequences,
                                              const std::vector<PromptTemplate>& bank, std::uint64_t seed,
                                              std::size_t per_sequence = 2) {
  std::sort(sequences.begin(), sequences.end());
  std::mt19937_64 rng(seed);
  std::vector<PromptSlot> out;
  for (const auto& [id, scene] : sequences) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      if (std::find(bank[i].scenes.begin(), bank[i].scenes.end(), scene) != bank[i].scenes.end()) pool.push_back(i);
    }
    if (pool.size() < per_sequence) {
      throw ConfigError("assign_prompts: scene " + std::string(data::scene_name(scene)) + " has only " +
                        std::to_string(pool.size()) + " compatible questions");
    }
    // Partial Fisher-Yates with plain modulo so the draw is library-independent.
    for (std::size_t k = 0; k < per_sequence; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng() % (pool.size() - k));
      std::swap(pool[k], pool[j]);
    }
    std::vector<std::size_t> picked(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_sequence));
    std::sort(picked.begin(), picked.end());
    for (std::size_t i : picked) out.push_back({slot_id(id, bank[i].id), id, bank[i].id});
  }
  return out;
}

inline json assignment_json(const std::vector<PromptSlot>& slots, std::uint64_t seed) {
  json arr = json::array();
  for (const auto& s : slots) arr.push_back({{"slot_id", s.slot_id}, {"sequence_id", s.sequence_id}, {"question_id", s.question_id}});
  return json{{"seed", seed}, {"slots", arr}};
}

inline std::vector<PromptSlot> read_assignment(const std::filesystem::path& path) {
  const json j = data::parse_json_file(path);
  const std::string where = path.filename().string();
  std::vector<PromptSlot> out;
  for (const auto& s : data::detail::field<json>(j, "slots", where)) {
    out.push_back({data::detail::field<std::string>(s, "slot_id", where),
                   data::detail::field<std::string>(s, "sequence_id", where),
                   data::detail::field<std::string>(s, "question_id", where)});
  }
  return out;
}

}  // namespace xrf::summarize
