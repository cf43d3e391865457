#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cycleground::model {

/// Token inventory. Ids 0..2 are PAD, BOS, EOS. Object words map to exactly
/// one object class; "groundable" marks the synthetic nouns and adjectives
/// (object and attribute words) used by the word-filter ablations.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;

  std::vector<std::string> tokens;
  std::vector<int> class_of_word;  ///< -1 for words that are not object words
  std::vector<bool> groundable;

  int size() const { return static_cast<int>(tokens.size()); }
  int id(std::string_view token) const;
  const std::string& token(int id) const;

  bool is_object(int id) const { return class_of_word.at(static_cast<std::size_t>(id)) >= 0; }
  bool is_groundable(int id) const { return groundable.at(static_cast<std::size_t>(id)); }
  int num_classes() const;
  std::vector<int> object_word_ids() const;
  int word_of_class(int cls) const;

  /// Appends a token and returns its id.
  int add(std::string token, int cls = -1, bool is_groundable = false);

  /// Throws ValidationError if the special tokens or maps are inconsistent.
  void validate() const;

  static Vocabulary with_specials();
};

}  // namespace cycleground::model
