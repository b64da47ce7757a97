#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carekit/harness/tokenizer.hpp"
#include "carekit/metrics/metrics.hpp"

namespace carekit {

/// Metric names accepted by evaluate: dist, self_bleu, js, rep, cnd, bleu.
const std::vector<std::string>& known_metrics();

struct EvaluateInput {
  std::string generated_path;
  std::optional<std::string> reference_path;
  /// Text files are tokenized with this; without one, files hold token ids.
  std::optional<Tokenizer> tokenizer;
  std::vector<std::string> metrics;
};

/// Reads a corpus file as text lines (tokenized) or as token-id lines.
Corpus read_corpus_file(const std::string& path, const std::optional<Tokenizer>& tokenizer);

/// Runs the requested metrics in order. Metrics needing a reference (cnd,
/// bleu) report a missing value when none is given.
std::vector<MetricReport> evaluate(const EvaluateInput& input);

std::vector<MetricReport> evaluate_corpora(const Corpus& generated, const Corpus* reference,
                                           const std::vector<std::string>& metrics,
                                           std::string_view generated_name,
                                           std::string_view reference_name);

}  // namespace carekit
