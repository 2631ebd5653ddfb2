#pragma once

// Local/global captions, prompt templates and the word-count quality filter.

#include "gesturegen/captioning/segments.hpp"

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturegen::captioning {

inline constexpr const char* kDefaultSeparator = "<SEP>";
inline constexpr const char* kMotionPlaceholder = "[motion]";

struct LocalCaption {
  Segment segment;
  std::string text;
  int template_id = -1;
};

struct GlobalCaption {
  std::string text;
  std::vector<LocalCaption> parts;
};

struct PromptTemplate {
  int id = 0;
  std::string input_pattern;
  std::string task = "Gesture-to-Text";

  void validate() const {
    const auto first = input_pattern.find(kMotionPlaceholder);
    if (first == std::string::npos || input_pattern.find(kMotionPlaceholder, first + 1) != std::string::npos) {
      throw std::invalid_argument("prompt template must contain exactly one [motion] placeholder");
    }
  }

  /// Pattern with the placeholder replaced by `motion_token`.
  [[nodiscard]] std::string render(const std::string& motion_token = "<motion>") const {
    validate();
    std::string out = input_pattern;
    out.replace(out.find(kMotionPlaceholder), std::string(kMotionPlaceholder).size(), motion_token);
    return out;
  }
};

inline std::vector<PromptTemplate> default_templates() {
  const std::vector<std::string> patterns = {
      "Give me a summary of the motion being displayed in [motion] using words.",
      "Explain the motion illustrated in [motion] using language.",
      "Describe the action being represented by [motion] using text.",
      "What kind of action is being demonstrated in [motion]?",
      "Describe the movement demonstrated in [motion] in words.",
      "Generate a sentence that explains the action in [motion].",
      "Please describe the movement depicted in [motion] using natural language.",
      "Provide a description of the motion being displayed in [motion] using language.",
      "Give me a brief summary of the movement depicted in [motion].",
      "Describe the movement demonstrated in [motion] using natural language.",
  };
  std::vector<PromptTemplate> out;
  for (std::size_t i = 0; i < patterns.size(); ++i) out.push_back({static_cast<int>(i), patterns[i]});
  return out;
}

inline int word_count(const std::string& text) {
  std::istringstream in(text);
  int n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

/// True when the caption is kept.
inline bool quality_filter(const LocalCaption& caption, int min_words = 5) {
  return word_count(caption.text) >= min_words;
}

/// Joins local captions as "a <SEP> b <SEP> c".
inline GlobalCaption assemble_global(const std::vector<LocalCaption>& locals,
                                     const std::string& separator = kDefaultSeparator) {
  if (locals.empty()) throw std::invalid_argument("assemble_global: no local captions");
  GlobalCaption g;
  for (std::size_t i = 0; i < locals.size(); ++i) {
    if (i > 0 && locals[i].segment.start < locals[i - 1].segment.start) {
      throw std::invalid_argument("assemble_global: local captions are not ordered by segment start");
    }
    if (locals[i].text.find(separator) != std::string::npos) {
      throw std::invalid_argument("assemble_global: local caption contains the separator");
    }
    if (i > 0) g.text += " " + separator + " ";
    g.text += locals[i].text;
  }
  g.parts = locals;
  return g;
}

/// Inverse of assemble_global on the text level.
inline std::vector<std::string> split_global(const std::string& text, const std::string& separator = kDefaultSeparator) {
  const std::string delim = " " + separator + " ";
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (auto hit = text.find(delim); hit != std::string::npos; hit = text.find(delim, pos)) {
    out.push_back(text.substr(pos, hit - pos));
    pos = hit + delim.size();
  }
  out.push_back(text.substr(pos));
  return out;
}

}  // namespace gesturegen::captioning
