#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xrf::data {

inline constexpr std::size_t kNumClasses = 30;

/// The 30-action vocabulary: the per-scene proposal lists merged with shared
/// actions appearing once, ordered like the per-action result table.
/// "Stretching" covers both the sitting and standing variants.
inline constexpr std::array<std::string_view, kNumClasses> kLabelNames = {
    "Walk",
    "Sit down",
    "Stand up",
    "Pour water into the cup",
    "Drink water",
    "Take medicine",
    "Pick up things",
    "Take the fruits from the cabinet",
    "Cut fruits",
    "Eat fruits",
    "Wash hands",
    "Throw waste",
    "Wipe the table",
    "Stretching",
    "Turn on and off the desk lamp",
    "Operate the mouse",
    "Write",
    "Operate the keyboard",
    "Read a book",
    "Open an envelope",
    "Answer the phone",
    "Write on the blackboard",
    "Get up",
    "Lie down",
    "Use phone",
    "Open and close windows",
    "Open and close curtains",
    "Water plants",
    "Stand still",
    "Lying still",
};

/// Clause phrase used when narrating an action ("the user did the action of
/// <phrase>"). Distinct per label so narrations stay unambiguous.
inline constexpr std::array<std::string_view, kNumClasses> kActionPhrases = {
    "walking",
    "sitting down",
    "standing up",
    "pouring water into the cup",
    "drinking water",
    "taking medicine",
    "picking up things",
    "taking the fruits from the cabinet",
    "cutting fruits",
    "eating fruits",
    "washing hands",
    "throwing waste",
    "wiping the table",
    "stretching",
    "turning on and off the desk lamp",
    "operating the mouse",
    "writing",
    "operating the keyboard",
    "reading a book",
    "opening an envelope",
    "answering the phone",
    "writing on the blackboard",
    "getting up",
    "lying",
    "using the phone",
    "opening and closing windows",
    "opening and closing curtains",
    "watering plants",
    "standing still",
    "lying still",
};

inline std::vector<std::string> canonical_labels() {
  return {kLabelNames.begin(), kLabelNames.end()};
}

inline std::optional<int> label_id(std::string_view name) {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i) {
    if (kLabelNames[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

inline bool valid_label(int label) { return label >= 0 && label < static_cast<int>(kNumClasses); }

enum class Scene { dining, study, bedroom };

inline std::string_view scene_name(Scene s) {
  switch (s) {
    case Scene::dining: return "dining";
    case Scene::study: return "study";
    case Scene::bedroom: return "bedroom";
  }
  return "";
}

/// Room name as narrated in prompts.
inline std::string_view scene_room(Scene s) {
  switch (s) {
    case Scene::dining: return "dining room";
    case Scene::study: return "study room";
    case Scene::bedroom: return "bedroom";
  }
  return "";
}

inline std::optional<Scene> parse_scene(std::string_view name) {
  if (name == "dining") return Scene::dining;
  if (name == "study") return Scene::study;
  if (name == "bedroom") return Scene::bedroom;
  return std::nullopt;
}

/// Per-scene action sets (label ids into kLabelNames).
inline std::vector<int> scene_actions(Scene s) {
  switch (s) {
    case Scene::dining: return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13};
    case Scene::study: return {0, 1, 2, 3, 4, 5, 14, 15, 16, 17, 18, 19, 20, 13, 21};
    case Scene::bedroom: return {0, 22, 1, 23, 2, 18, 3, 4, 5, 13, 24, 25, 26, 27, 28, 29};
  }
  return {};
}

}  // namespace xrf::data
