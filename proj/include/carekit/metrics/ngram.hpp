#pragma once

#include <map>
#include <span>
#include <vector>

#include "carekit/types.hpp"

namespace carekit {

using Ngram = std::vector<TokenId>;

/// Multiset of the n-grams of one sequence or a pooled corpus.
struct NgramProfile {
  int n = 1;
  std::map<Ngram, long> counts;
  long total = 0;

  long distinct() const { return static_cast<long>(counts.size()); }
  long count(const Ngram& g) const {
    auto it = counts.find(g);
    return it == counts.end() ? 0 : it->second;
  }
};

/// Number of n-grams in a sequence of length `len`.
inline long ngram_total(std::size_t len, int n) {
  return len >= static_cast<std::size_t>(n) ? static_cast<long>(len) - n + 1 : 0;
}

NgramProfile ngram_profile(std::span<const TokenId> seq, int n);
NgramProfile ngram_profile(std::span<const TokenSequence> corpus, int n);

}  // namespace carekit
