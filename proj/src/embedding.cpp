#include "goalgen/embedding.hpp"

#include <cctype>
#include <cmath>

namespace goalgen {

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

Eigen::RowVectorXd Vocabulary::word_vector(const std::string& word) const {
  Rng rng(substream(seed, hash_string(word), static_cast<std::uint64_t>(dim)));
  Eigen::RowVectorXd row(dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int i = 0; i < dim; ++i) row[i] = rng.normal() * scale;
  return row;
}

Eigen::RowVectorXd Vocabulary::embed(const std::string& text) const {
  const std::vector<std::string> words = tokenize_words(text);
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dim);
  if (words.empty()) return acc;
  for (const std::string& w : words) acc += word_vector(w);
  return acc / static_cast<double>(words.size());
}

}  // namespace goalgen
