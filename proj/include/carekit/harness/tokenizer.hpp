#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "carekit/types.hpp"

namespace carekit {

inline constexpr std::string_view kEndOfText = "<|endoftext|>";

/// Byte-level BPE. Ids 0..255 are raw bytes, then the special tokens, then one
/// id per learned merge in training order.
class Tokenizer {
 public:
  /// Plain byte tokenizer (no merges) with the given specials.
  explicit Tokenizer(std::vector<std::string> specials = {std::string(kEndOfText)});

  int size() const { return static_cast<int>(pieces_.size()); }
  const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }
  const std::vector<std::string>& specials() const { return specials_; }
  TokenId special_id(std::string_view name) const;
  TokenId eot() const { return special_id(kEndOfText); }

  TokenSequence encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;
  /// Bytes (or special text) a token stands for.
  const std::string& piece(TokenId id) const;

  /// Line-oriented text form used inside checkpoints.
  std::string serialize() const;
  static Tokenizer deserialize(std::string_view text);

  /// Greedy merges of the most frequent adjacent pair until `vocab_size` ids
  /// exist or no pair remains. Ties go to the lexicographically smallest
  /// (left bytes, right bytes).
  static Tokenizer train_bpe(std::span<const std::string> corpus, int vocab_size,
                             std::vector<std::string> specials = {std::string(kEndOfText)});

  /// Splits text so that whitespace attaches to the word that follows it.
  static std::vector<std::string_view> pre_split(std::string_view text);

  friend bool operator==(const Tokenizer& a, const Tokenizer& b) {
    return a.specials_ == b.specials_ && a.merges_ == b.merges_;
  }

 private:
  void add_merge(TokenId left, TokenId right);
  TokenSequence encode_chunk(std::string_view chunk) const;

  std::vector<std::string> specials_;
  std::vector<std::string> pieces_;
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::map<std::pair<TokenId, TokenId>, int> merge_rank_;
};

}  // namespace carekit
