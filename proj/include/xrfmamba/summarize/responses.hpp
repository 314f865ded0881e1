#pragma once

// Ground-truth and predicted response pairs, one per (slot, model).

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "xrfmamba/summarize/llm.hpp"
#include "xrfmamba/summarize/prompts.hpp"

namespace xrf::summarize {

struct ResponsePair {
  std::string question_id;  // slot id
  std::string model;        // endpoint name
  std::string question;
  std::string gt_prompt;
  std::string pred_prompt;
  std::string gt_response;
  std::string pred_response;
};

inline json to_json(const ResponsePair& p) {
  return json{{"question_id", p.question_id}, {"model", p.model},           {"question", p.question},
              {"gt_prompt", p.gt_prompt},     {"pred_prompt", p.pred_prompt}, {"gt_response", p.gt_response},
              {"pred_response", p.pred_response}};
}

inline ResponsePair response_pair_from_json(const json& j, const std::string& at) {
  using data::detail::field;
  ResponsePair p{field<std::string>(j, "question_id", at), field<std::string>(j, "model", at),
                 field<std::string>(j, "question", at),    field<std::string>(j, "gt_prompt", at),
                 field<std::string>(j, "pred_prompt", at), field<std::string>(j, "gt_response", at),
                 field<std::string>(j, "pred_response", at)};
  if (p.gt_response.empty() || p.pred_response.empty()) throw SchemaError(at + ": both responses must be present");
  return p;
}

/// Reads a JSON-lines file; blank lines are ignored. A missing file is empty.
inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw SchemaError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<ResponsePair> read_responses(const std::filesystem::path& path) {
  std::vector<ResponsePair> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t i = 0;
  for (const auto& j : read_jsonl(path)) {
    auto p = response_pair_from_json(j, path.filename().string() + "[" + std::to_string(i++) + "]");
    if (!seen.insert({p.question_id, p.model}).second) {
      throw SchemaError(path.string() + ": duplicate pair " + p.question_id + " / " + p.model);
    }
    out.push_back(std::move(p));
  }
  return out;
}

/// What the summarizer needs about one sequence.
struct SequenceTimeline {
  data::Scene scene = data::Scene::dining;
  std::vector<data::AnnotationTuple> gt;
  std::vector<data::Segment> pred;
};

/// Queries both timelines of every slot not already present in
/// `responses_path` for this endpoint and appends the finished pairs.
/// Returns the number of pairs appended.
inline std::size_t summarize_slots(const std::vector<PromptSlot>& slots, const std::vector<PromptTemplate>& bank,
                                   const std::map<std::string, SequenceTimeline>& timelines, LlmClient& client,
                                   const std::filesystem::path& responses_path) {
  std::map<std::string, const PromptTemplate*> by_id;
  for (const auto& t : bank) by_id[t.id] = &t;
  std::set<std::string> done;
  for (const auto& p : read_responses(responses_path)) {
    if (p.model == client.config().name) done.insert(p.question_id);
  }
  std::vector<const PromptSlot*> todo;
  for (const auto& s : slots) {
    if (!by_id.count(s.question_id)) throw ConfigError("summarize: unknown question " + s.question_id);
    if (!timelines.count(s.sequence_id)) throw ConfigError("summarize: no timeline for " + s.sequence_id);
    if (!done.count(s.slot_id)) todo.push_back(&s);
  }
  JsonlAppender out(responses_path);
  run_bounded(client.config().max_concurrent, todo.size(), [&](std::size_t i) {
    const auto& s = *todo[i];
    const auto& tl = timelines.at(s.sequence_id);
    const auto& q = by_id.at(s.question_id)->question;
    auto pred = tl.pred;
    std::stable_sort(pred.begin(), pred.end(),
                     [](const data::Segment& a, const data::Segment& b) { return a.start_s < b.start_s; });
    ResponsePair p;
    p.question_id = s.slot_id;
    p.model = client.config().name;
    p.question = q;
    p.gt_prompt = render_prompt(tl.scene, tl.gt, q);
    p.pred_prompt = render_prompt(tl.scene, pred, q);
    p.gt_response = client.query(p.gt_prompt, s.slot_id + "#gt");
    p.pred_response = client.query(p.pred_prompt, s.slot_id + "#pred");
    out.append(to_json(p));
  });
  return todo.size();
}

}  // namespace xrf::summarize
