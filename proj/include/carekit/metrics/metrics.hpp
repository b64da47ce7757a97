#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carekit/metrics/ngram.hpp"
#include "carekit/types.hpp"

namespace carekit {

/// Pooled distinct n-grams over total n-grams.
double distinct_n(std::span<const TokenSequence> corpus, int n);

/// Mean over sequences of 1 - distinct/total; sequences shorter than n are
/// skipped.
double rep_n(std::span<const TokenSequence> corpus, int n);

/// Mean pairwise Jaccard similarity of n-gram sets. A pair whose sets are
/// both empty counts as 1.
double jaccard_js(std::span<const TokenSequence> corpus, int n);

/// Total-variation distance between the pooled n-gram distributions.
double cnd(std::span<const TokenSequence> generated, std::span<const TokenSequence> reference,
           int n);

struct BleuOptions {
  int max_n = 4;
  /// Add-one smoothing of the precisions for orders >= 2.
  bool smoothing = false;
};

/// Corpus BLEU x 100 with one reference per candidate.
double bleu_n(std::span<const TokenSequence> candidates, std::span<const TokenSequence> references,
              const BleuOptions& options = {});

/// Sentence BLEU x 100 of `candidate` against several references (clipping by
/// the maximum reference count, closest reference length, shorter on ties).
double sentence_bleu(std::span<const TokenId> candidate, std::span<const TokenSequence> references,
                     const BleuOptions& options = {});

/// Mean BLEU of each sequence against all others, x 100. No smoothing.
double self_bleu(std::span<const TokenSequence> corpus, int max_n = 4);

/// (prod v)^(1/k); 0 when any value is 0.
double geometric_mean(std::span<const double> values);

/// One metric evaluated at n = 1..4.
struct MetricReport {
  std::string metric;
  std::array<std::optional<double>, 4> values;
  std::optional<double> geometric_mean;
  std::string corpus;
  std::string reference;
  bool token_level = true;
  std::string error;  // why some orders are missing
};

/// Evaluates fn(n) for n = 1..4. Undefined-metric and contract errors become
/// missing values.
MetricReport make_report(std::string metric, const std::function<double(int)>& fn);

std::string reports_to_csv(std::span<const MetricReport> reports);
std::string reports_to_json(std::span<const MetricReport> reports, const std::string& config_hash);

}  // namespace carekit
