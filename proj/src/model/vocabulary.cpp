#include "cycleground/model/vocabulary.hpp"

#include <algorithm>
#include <set>

#include "cycleground/errors.hpp"

namespace cycleground::model {

Vocabulary Vocabulary::with_specials() {
  Vocabulary v;
  v.add("<pad>");
  v.add("<bos>");
  v.add("<eos>");
  return v;
}

int Vocabulary::add(std::string token, int cls, bool is_groundable) {
  tokens.push_back(std::move(token));
  class_of_word.push_back(cls);
  groundable.push_back(is_groundable || cls >= 0);
  return size() - 1;
}

int Vocabulary::id(std::string_view token) const {
  const auto it = std::find(tokens.begin(), tokens.end(), token);
  if (it == tokens.end()) {
    throw ValidationError("unknown token '" + std::string(token) + "'");
  }
  return static_cast<int>(it - tokens.begin());
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(size()));
  }
  return tokens[static_cast<std::size_t>(id)];
}

int Vocabulary::num_classes() const {
  int n = 0;
  for (int c : class_of_word) n = std::max(n, c + 1);
  return n;
}

std::vector<int> Vocabulary::object_word_ids() const {
  std::vector<int> ids;
  for (int i = 0; i < size(); ++i) {
    if (is_object(i)) ids.push_back(i);
  }
  return ids;
}

int Vocabulary::word_of_class(int cls) const {
  for (int i = 0; i < size(); ++i) {
    if (class_of_word[static_cast<std::size_t>(i)] == cls) return i;
  }
  throw ValidationError("no object word for class " + std::to_string(cls));
}

void Vocabulary::validate() const {
  if (size() < 3 || tokens[kPad] != "<pad>" || tokens[kBos] != "<bos>" || tokens[kEos] != "<eos>") {
    throw ValidationError("vocabulary must start with <pad>, <bos>, <eos>");
  }
  if (class_of_word.size() != tokens.size() || groundable.size() != tokens.size()) {
    throw ValidationError("vocabulary maps do not cover every token");
  }
  std::set<std::string> seen(tokens.begin(), tokens.end());
  if (seen.size() != tokens.size()) {
    throw ValidationError("vocabulary contains duplicate tokens");
  }
  std::set<int> classes;
  for (int i = 0; i < size(); ++i) {
    const int c = class_of_word[static_cast<std::size_t>(i)];
    if (c < -1) throw ValidationError("invalid class id for token '" + tokens[static_cast<std::size_t>(i)] + "'");
    if (c >= 0 && !classes.insert(c).second) {
      throw ValidationError("class " + std::to_string(c) + " has more than one object word");
    }
  }
  for (int special : {kPad, kBos, kEos}) {
    if (class_of_word[static_cast<std::size_t>(special)] >= 0) {
      throw ValidationError("special tokens cannot be object words");
    }
  }
}

}  // namespace cycleground::model
