#pragma once

#include <optional>
#include <span>
#include <vector>

#include "carekit/numkit/tensor.hpp"
#include "carekit/types.hpp"

namespace carekit {

/// Per-token training-corpus statistics.
///
/// Rank 0 is the most frequent token (ties broken by smaller id). Deciles
/// split the ranks into ten near-equal groups, 1 holding the most frequent.
struct FrequencyTable {
  std::vector<long> counts;
  std::vector<double> log_freq;  // log(count); -inf for unseen tokens
  std::vector<int> rank;
  std::vector<int> decile;
  std::vector<bool> high;  // top `high_fraction` of ranks
  std::vector<bool> low;   // bottom `low_fraction` of ranks

  int vocab_size() const { return static_cast<int>(counts.size()); }
};

FrequencyTable build_frequency_table(std::span<const TokenSequence> corpus, int vocab_size,
                                     double high_fraction = 0.1, double low_fraction = 0.5);

/// Table from raw counts (same conventions as build_frequency_table).
FrequencyTable frequency_table_from_counts(std::vector<long> counts, double high_fraction = 0.1,
                                           double low_fraction = 0.5);

struct RegressionResult {
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
  long n_points = 0;
  std::vector<int> tokens;  // ids that entered the fit
  std::vector<double> x;    // log count
  std::vector<double> y;    // 1 / |w|
};

/// OLS of 1/|w_i| on log(count_i) over tokens seen at least once.
RegressionResult norm_frequency_regression(const Matrix<double>& embeddings,
                                           const FrequencyTable& freq);

/// 10 x 10 matrix: entry (i, j) is the mean, over tokens of decile i, of the
/// mean l2 distance to their nearest neighbours inside decile j (itself
/// excluded when i == j). The neighbour count is min(k_nearest, |j| - [i==j]).
Matrix<double> interval_distance_matrix(const Matrix<double>& embeddings,
                                        const FrequencyTable& freq, int k_nearest = 50);

struct ContextFrequencyCurves {
  /// Indexed by 0-based position t; entry is the mean share of high-frequency
  /// tokens among positions < t over events of that class, or empty.
  std::vector<std::optional<double>> high;
  std::vector<std::optional<double>> low;
  std::vector<std::optional<double>> gap;  // high - low where both exist
};

ContextFrequencyCurves context_frequency_proportion(std::span<const TokenSequence> corpus,
                                                    const FrequencyTable& freq,
                                                    std::size_t max_position = 0);

struct CosineGap {
  double high = 0;
  double low = 0;
  double gap = 0;
  long excluded = 0;  // zero-norm vectors skipped
};

/// Mean cosine between hidden states and the high / low frequency embeddings.
CosineGap cosine_gap(const Matrix<double>& hidden, const Matrix<double>& embeddings,
                     const FrequencyTable& freq);

/// Distinct generated token types in the high and low classes.
std::pair<long, long> novelty_count(std::span<const TokenSequence> corpus,
                                    const FrequencyTable& freq);

}  // namespace carekit
