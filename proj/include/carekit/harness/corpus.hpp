#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "carekit/harness/tokenizer.hpp"
#include "carekit/types.hpp"

namespace carekit {

/// Condition + continuation + end token, with the loss restricted to the
/// continuation and the end token.
struct TokenSample {
  TokenSequence tokens;
  std::vector<std::uint8_t> mask;  // one flag per token
  std::size_t condition_length = 0;

  /// Model input: the end token followed by tokens[:-1].
  TokenSequence input(TokenId eot) const;
};

/// Builds a sample and truncates it to `max_len` tokens.
TokenSample make_sample(const TokenSequence& condition, const TokenSequence& continuation,
                        TokenId eot, std::size_t max_len);

enum class CorpusMode { conditional, unconditional };

CorpusMode parse_corpus_mode(std::string_view text);
std::string_view to_string(CorpusMode mode);

struct CorpusLoad {
  std::vector<TokenSample> samples;
  long lines = 0;
  long blank = 0;
  long malformed = 0;
  std::vector<std::string> problems;  // first few malformed-line reports
};

bool valid_utf8(std::string_view text);

/// Reads one sample per line. Conditional lines are `condition TAB
/// continuation`. Lines with invalid UTF-8, a missing or extra TAB, or no
/// trainable token after truncation are skipped and counted; more than 10%
/// malformed lines abort with a FormatError.
CorpusLoad load_corpus(const std::string& path, CorpusMode mode, const Tokenizer& tokenizer,
                       std::size_t max_len);

/// Same parsing applied to in-memory lines.
CorpusLoad parse_corpus(const std::vector<std::string>& lines, CorpusMode mode,
                        const Tokenizer& tokenizer, std::size_t max_len);

std::vector<std::string> read_lines(const std::string& path);

/// Whitespace-separated token ids, one sequence per line.
std::vector<TokenSequence> read_token_file(const std::string& path);

}  // namespace carekit
