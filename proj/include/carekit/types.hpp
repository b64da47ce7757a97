#pragma once

#include <cstdint>
#include <vector>

namespace carekit {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;
using Corpus = std::vector<TokenSequence>;

}  // namespace carekit
