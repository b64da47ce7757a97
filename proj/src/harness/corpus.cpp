#include "carekit/harness/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "carekit/numkit/errors.hpp"

namespace carekit {

TokenSequence TokenSample::input(TokenId eot) const {
  TokenSequence in;
  in.reserve(tokens.size());
  in.push_back(eot);
  if (!tokens.empty()) in.insert(in.end(), tokens.begin(), tokens.end() - 1);
  return in;
}

TokenSample make_sample(const TokenSequence& condition, const TokenSequence& continuation,
                        TokenId eot, std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be positive");
  TokenSample s;
  s.tokens = condition;
  s.tokens.insert(s.tokens.end(), continuation.begin(), continuation.end());
  s.tokens.push_back(eot);
  s.mask.assign(s.tokens.size(), 1);
  std::fill(s.mask.begin(), s.mask.begin() + static_cast<long>(condition.size()), 0);
  s.condition_length = condition.size();
  if (s.tokens.size() > max_len) {
    s.tokens.resize(max_len);
    s.mask.resize(max_len);
  }
  return s;
}

CorpusMode parse_corpus_mode(std::string_view text) {
  if (text == "conditional") return CorpusMode::conditional;
  if (text == "unconditional") return CorpusMode::unconditional;
  throw ConfigError("unknown corpus mode '" + std::string(text) + "'");
}

std::string_view to_string(CorpusMode mode) {
  return mode == CorpusMode::conditional ? "conditional" : "unconditional";
}

bool valid_utf8(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    int extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + static_cast<std::size_t>(extra) >= text.size()) return false;
    for (int k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += static_cast<std::size_t>(extra) + 1;
  }
  return true;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (in.bad()) throw IoError("read error on '" + path + "'");
  return lines;
}

std::vector<TokenSequence> read_token_file(const std::string& path) {
  std::vector<TokenSequence> out;
  long lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    std::istringstream is(line);
    TokenSequence seq;
    std::string word;
    while (is >> word) {
      try {
        std::size_t used = 0;
        const long v = std::stol(word, &used);
        if (used != word.size() || v < 0) throw std::invalid_argument(word);
        seq.push_back(static_cast<TokenId>(v));
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": bad token id '" + word + "'");
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

CorpusLoad parse_corpus(const std::vector<std::string>& lines, CorpusMode mode,
                        const Tokenizer& tokenizer, std::size_t max_len) {
  CorpusLoad out;
  const TokenId eot = tokenizer.eot();
  auto reject = [&](long lineno, const std::string& why) {
    ++out.malformed;
    if (out.problems.size() < 10) out.problems.push_back("line " + std::to_string(lineno) + ": " + why);
  };
  for (const auto& line : lines) {
    ++out.lines;
    if (line.find_first_not_of(" \t") == std::string::npos) {
      ++out.blank;
      continue;
    }
    if (!valid_utf8(line)) {
      reject(out.lines, "invalid UTF-8");
      continue;
    }
    TokenSample sample;
    if (mode == CorpusMode::conditional) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
        reject(out.lines, "expected exactly one TAB");
        continue;
      }
      sample = make_sample(tokenizer.encode(std::string_view(line).substr(0, tab)),
                           tokenizer.encode(std::string_view(line).substr(tab + 1)), eot, max_len);
      if (std::none_of(sample.mask.begin(), sample.mask.end(), [](auto m) { return m != 0; })) {
        reject(out.lines, "condition fills the whole context; nothing to train on");
        continue;
      }
    } else {
      sample = make_sample({}, tokenizer.encode(line), eot, max_len);
    }
    out.samples.push_back(std::move(sample));
  }
  const long counted = out.lines - out.blank;
  if (counted > 0 && out.malformed * 10 > counted) {
    std::string report = std::to_string(out.malformed) + " of " + std::to_string(counted) +
                         " lines are malformed (limit 10%)";
    for (const auto& p : out.problems) report += "\n  " + p;
    throw FormatError(report);
  }
  if (out.malformed > 0) spdlog::warn("skipped {} malformed line(s)", out.malformed);
  return out;
}

CorpusLoad load_corpus(const std::string& path, CorpusMode mode, const Tokenizer& tokenizer,
                       std::size_t max_len) {
  return parse_corpus(read_lines(path), mode, tokenizer, max_len);
}

}  // namespace carekit
