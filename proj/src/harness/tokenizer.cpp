#include "carekit/harness/tokenizer.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "carekit/numkit/errors.hpp"

namespace carekit {

namespace {

constexpr int kByteCount = 256;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Merges every occurrence of (left, right) in `symbols`, scanning left to right.
void merge_pair(std::vector<TokenId>& symbols, TokenId left, TokenId right, TokenId merged) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      symbols[out++] = merged;
      ++i;
    } else {
      symbols[out++] = symbols[i];
    }
  }
  symbols.resize(out);
}

}  // namespace

Tokenizer::Tokenizer(std::vector<std::string> specials) : specials_(std::move(specials)) {
  pieces_.reserve(kByteCount + specials_.size());
  for (int b = 0; b < kByteCount; ++b) pieces_.emplace_back(1, static_cast<char>(b));
  for (const auto& s : specials_) {
    if (s.empty()) throw ConfigError("special tokens must be non-empty");
    pieces_.push_back(s);
  }
}

TokenId Tokenizer::special_id(std::string_view name) const {
  for (std::size_t i = 0; i < specials_.size(); ++i) {
    if (specials_[i] == name) return static_cast<TokenId>(kByteCount + i);
  }
  throw VocabError("tokenizer has no special token '" + std::string(name) + "'");
}

const std::string& Tokenizer::piece(TokenId id) const {
  if (id < 0 || id >= size()) throw VocabError("token id " + std::to_string(id) + " outside vocabulary");
  return pieces_[static_cast<std::size_t>(id)];
}

void Tokenizer::add_merge(TokenId left, TokenId right) {
  merges_.emplace_back(left, right);
  merge_rank_[{left, right}] = static_cast<int>(merges_.size()) - 1;
  pieces_.push_back(piece(left) + piece(right));
}

std::vector<std::string_view> Tokenizer::pre_split(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t start = 0;
  for (std::size_t i = 1; i < text.size(); ++i) {
    if (is_space(text[i]) && !is_space(text[i - 1])) {
      chunks.push_back(text.substr(start, i - start));
      start = i;
    }
  }
  if (start < text.size()) chunks.push_back(text.substr(start));
  return chunks;
}

TokenSequence Tokenizer::encode_chunk(std::string_view chunk) const {
  TokenSequence symbols;
  symbols.reserve(chunk.size());
  for (unsigned char c : chunk) symbols.push_back(static_cast<TokenId>(c));
  while (symbols.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    std::pair<TokenId, TokenId> best{};
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rank_.find({symbols[i], symbols[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = it->first;
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    merge_pair(symbols, best.first, best.second,
               static_cast<TokenId>(kByteCount + specials_.size() + best_rank));
  }
  return symbols;
}

TokenSequence Tokenizer::encode(std::string_view text) const {
  TokenSequence out;
  for (auto chunk : pre_split(text)) {
    auto ids = encode_chunk(chunk);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += piece(id);
  return out;
}

std::string Tokenizer::serialize() const {
  std::ostringstream os;
  os << "specials " << specials_.size() << '\n';
  for (const auto& s : specials_) os << s << '\n';
  os << "merges " << merges_.size() << '\n';
  for (const auto& [l, r] : merges_) os << l << ' ' << r << '\n';
  return os.str();
}

Tokenizer Tokenizer::deserialize(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string word;
  std::size_t n = 0;
  if (!(is >> word >> n) || word != "specials") throw FormatError("tokenizer: expected 'specials'");
  is.ignore(1);
  std::vector<std::string> specials(n);
  for (auto& s : specials) {
    if (!std::getline(is, s)) throw FormatError("tokenizer: truncated special list");
  }
  Tokenizer tok(std::move(specials));
  if (!(is >> word >> n) || word != "merges") throw FormatError("tokenizer: expected 'merges'");
  for (std::size_t i = 0; i < n; ++i) {
    TokenId l = 0, r = 0;
    if (!(is >> l >> r)) throw FormatError("tokenizer: truncated merge table");
    if (l < 0 || r < 0 || l >= tok.size() || r >= tok.size()) throw FormatError("tokenizer: bad merge ids");
    tok.add_merge(l, r);
  }
  return tok;
}

Tokenizer Tokenizer::train_bpe(std::span<const std::string> corpus, int vocab_size,
                               std::vector<std::string> specials) {
  if (corpus.empty()) throw ContractError("train_bpe: empty corpus");
  Tokenizer tok(std::move(specials));
  if (vocab_size <= tok.size()) {
    throw ConfigError("vocab_size " + std::to_string(vocab_size) +
                      " leaves no room for merges beyond the " + std::to_string(tok.size()) +
                      " byte and special ids");
  }
  std::map<std::string, long> chunk_counts;
  for (const auto& line : corpus) {
    for (auto chunk : pre_split(line)) ++chunk_counts[std::string(chunk)];
  }
  std::vector<std::pair<TokenSequence, long>> words;
  words.reserve(chunk_counts.size());
  for (const auto& [chunk, count] : chunk_counts) {
    TokenSequence symbols;
    for (unsigned char c : chunk) symbols.push_back(static_cast<TokenId>(c));
    words.emplace_back(std::move(symbols), count);
  }

  while (tok.size() < vocab_size) {
    std::map<std::pair<TokenId, TokenId>, long> pair_counts;
    for (const auto& [symbols, count] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pair_counts[{symbols[i], symbols[i + 1]}] += count;
    }
    if (pair_counts.empty()) break;
    const std::pair<TokenId, TokenId>* best = nullptr;
    long best_count = 0;
    for (const auto& [pair, count] : pair_counts) {
      if (count > best_count) {
        best = &pair;
        best_count = count;
      } else if (count == best_count) {
        const auto key = std::make_pair(tok.piece(pair.first), tok.piece(pair.second));
        const auto cur = std::make_pair(tok.piece(best->first), tok.piece(best->second));
        if (key < cur) best = &pair;
      }
    }
    const auto chosen = *best;
    tok.add_merge(chosen.first, chosen.second);
    const TokenId merged = tok.size() - 1;
    for (auto& [symbols, count] : words) merge_pair(symbols, chosen.first, chosen.second, merged);
  }
  return tok;
}

}  // namespace carekit
