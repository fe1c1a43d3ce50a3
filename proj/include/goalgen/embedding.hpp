#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "goalgen/rng.hpp"

namespace goalgen {

// Frozen random text codes standing in for a learned text encoder. Every word
// maps to a fixed pseudo-random row (seeded by the word itself, so the table
// never has to be stored), and a text embeds as the mean of its word rows.
// Distinct words land on near-orthogonal codes at the default width, which is
// all the conditioning pathway needs from them.
struct Vocabulary {
  int dim = 32;
  std::uint64_t seed = 0x70c4b5ULL;

  // N(0, 1/dim) entries; deterministic in (seed, dim, word).
  Eigen::RowVectorXd word_vector(const std::string& word) const;

  // Mean of word vectors over the tokenized text; zero vector for empty text.
  Eigen::RowVectorXd embed(const std::string& text) const;
};

// Lower-cased maximal alphanumeric runs, in order.
std::vector<std::string> tokenize_words(const std::string& text);

}  // namespace goalgen
