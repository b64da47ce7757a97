#include "carekit/diagnostics/frequency.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "carekit/numkit/errors.hpp"

namespace carekit {

FrequencyTable frequency_table_from_counts(std::vector<long> counts, double high_fraction,
                                           double low_fraction) {
  const int v = static_cast<int>(counts.size());
  if (v < 1) throw ContractError("frequency table needs a non-empty vocabulary");
  if (!(high_fraction > 0 && high_fraction <= 1) || !(low_fraction > 0 && low_fraction <= 1)) {
    throw ConfigError("frequency class fractions must lie in (0,1]");
  }
  FrequencyTable f;
  f.counts = std::move(counts);
  std::vector<int> order(v);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return f.counts[a] > f.counts[b]; });
  f.rank.assign(v, 0);
  for (int r = 0; r < v; ++r) f.rank[order[r]] = r;

  const long n_high = std::max(1L, std::lround(high_fraction * v));
  const long n_low = std::max(1L, std::lround(low_fraction * v));
  f.log_freq.resize(v);
  f.decile.resize(v);
  f.high.resize(v);
  f.low.resize(v);
  for (int i = 0; i < v; ++i) {
    f.log_freq[i] = f.counts[i] > 0 ? std::log(double(f.counts[i]))
                                    : -std::numeric_limits<double>::infinity();
    f.decile[i] = static_cast<int>(static_cast<long>(f.rank[i]) * 10 / v) + 1;
    f.high[i] = f.rank[i] < n_high;
    f.low[i] = f.rank[i] >= v - n_low;
  }
  return f;
}

FrequencyTable build_frequency_table(std::span<const TokenSequence> corpus, int vocab_size,
                                     double high_fraction, double low_fraction) {
  std::vector<long> counts(static_cast<std::size_t>(std::max(vocab_size, 0)), 0);
  for (const auto& seq : corpus) {
    for (TokenId t : seq) {
      if (t < 0 || t >= vocab_size) throw VocabError("token id outside vocabulary");
      ++counts[t];
    }
  }
  return frequency_table_from_counts(std::move(counts), high_fraction, low_fraction);
}

RegressionResult norm_frequency_regression(const Matrix<double>& embeddings,
                                           const FrequencyTable& freq) {
  if (embeddings.rows() != freq.vocab_size()) {
    throw DimensionError("embedding rows do not match the frequency table");
  }
  if (embeddings.rows() < 2) throw ContractError("regression needs at least two tokens");
  RegressionResult out;
  for (int i = 0; i < freq.vocab_size(); ++i) {
    if (freq.counts[i] < 1) continue;
    const double norm = embeddings.row(i).norm();
    if (norm == 0) continue;
    out.tokens.push_back(i);
    out.x.push_back(freq.log_freq[i]);
    out.y.push_back(1.0 / norm);
  }
  out.n_points = static_cast<long>(out.x.size());
  if (out.n_points < 2) throw DegenerateError("regression needs at least two observed tokens");
  const double n = double(out.n_points);
  const double mx = std::accumulate(out.x.begin(), out.x.end(), 0.0) / n;
  const double my = std::accumulate(out.y.begin(), out.y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (long i = 0; i < out.n_points; ++i) {
    const double dx = out.x[i] - mx, dy = out.y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  // compare raw values: the centred sums pick up rounding noise
  const auto all_equal = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (all_equal(out.x) || sxx <= 0) throw DegenerateError("all token frequencies are equal; regression is undefined");
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  if (all_equal(out.y) || syy <= 0) {
    out.slope = 0;
    out.intercept = my;
    out.r_squared = 0;
    return out;
  }
  double ss_res = 0;
  for (long i = 0; i < out.n_points; ++i) {
    const double e = out.y[i] - (out.intercept + out.slope * out.x[i]);
    ss_res += e * e;
  }
  out.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  return out;
}

Matrix<double> interval_distance_matrix(const Matrix<double>& embeddings,
                                        const FrequencyTable& freq, int k_nearest) {
  if (embeddings.rows() != freq.vocab_size()) {
    throw DimensionError("embedding rows do not match the frequency table");
  }
  if (k_nearest < 1) throw ConfigError("k_nearest must be >= 1");
  std::vector<std::vector<int>> members(10);
  for (int i = 0; i < freq.vocab_size(); ++i) members[freq.decile[i] - 1].push_back(i);
  for (int d = 0; d < 10; ++d) {
    if (members[d].size() < 2) {
      throw DegenerateError("frequency interval " + std::to_string(d + 1) + " has " +
                            std::to_string(members[d].size()) + " member(s); need >= 2");
    }
  }
  Matrix<double> out = Matrix<double>::Zero(10, 10);
  std::vector<double> dist;
  for (int di = 0; di < 10; ++di) {
    for (int dj = 0; dj < 10; ++dj) {
      const auto& src = members[di];
      const auto& dst = members[dj];
      const std::size_t k =
          std::min<std::size_t>(k_nearest, dst.size() - (di == dj ? 1 : 0));
      double total = 0;
      for (int a : src) {
        dist.clear();
        for (int b : dst) {
          if (a == b) continue;
          dist.push_back((embeddings.row(a) - embeddings.row(b)).norm());
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
        total += std::accumulate(dist.begin(), dist.begin() + static_cast<long>(k), 0.0) / double(k);
      }
      out(di, dj) = total / double(src.size());
    }
  }
  return out;
}

ContextFrequencyCurves context_frequency_proportion(std::span<const TokenSequence> corpus,
                                                    const FrequencyTable& freq,
                                                    std::size_t max_position) {
  if (max_position == 0) {
    for (const auto& seq : corpus) max_position = std::max(max_position, seq.size());
  }
  std::vector<double> sum_high(max_position, 0), sum_low(max_position, 0);
  std::vector<long> n_high(max_position, 0), n_low(max_position, 0);
  for (const auto& seq : corpus) {
    long high_before = 0;
    for (std::size_t t = 0; t < seq.size() && t < max_position; ++t) {
      const TokenId tok = seq[t];
      if (tok < 0 || tok >= freq.vocab_size()) throw VocabError("token id outside vocabulary");
      if (t > 0) {
        const double share = double(high_before) / double(t);
        if (freq.high[tok]) {
          sum_high[t] += share;
          ++n_high[t];
        } else if (freq.low[tok]) {
          sum_low[t] += share;
          ++n_low[t];
        }
      }
      if (freq.high[tok]) ++high_before;
    }
  }
  ContextFrequencyCurves out;
  out.high.resize(max_position);
  out.low.resize(max_position);
  out.gap.resize(max_position);
  for (std::size_t t = 0; t < max_position; ++t) {
    if (n_high[t] > 0) out.high[t] = sum_high[t] / double(n_high[t]);
    if (n_low[t] > 0) out.low[t] = sum_low[t] / double(n_low[t]);
    if (out.high[t] && out.low[t]) out.gap[t] = *out.high[t] - *out.low[t];
  }
  return out;
}

CosineGap cosine_gap(const Matrix<double>& hidden, const Matrix<double>& embeddings,
                     const FrequencyTable& freq) {
  if (embeddings.rows() != freq.vocab_size()) {
    throw DimensionError("embedding rows do not match the frequency table");
  }
  if (hidden.cols() != embeddings.cols()) throw DimensionError("hidden/embedding width mismatch");
  CosineGap out;
  std::vector<Index> keep_h;
  for (Index r = 0; r < hidden.rows(); ++r) {
    if (hidden.row(r).norm() > 0) {
      keep_h.push_back(r);
    } else {
      ++out.excluded;
    }
  }
  double sum_high = 0, sum_low = 0;
  long n_high = 0, n_low = 0;
  for (int i = 0; i < freq.vocab_size(); ++i) {
    if (!freq.high[i] && !freq.low[i]) continue;
    const double wn = embeddings.row(i).norm();
    if (wn == 0) {
      ++out.excluded;
      continue;
    }
    for (Index r : keep_h) {
      const double c = hidden.row(r).dot(embeddings.row(i)) / (hidden.row(r).norm() * wn);
      if (freq.high[i]) {
        sum_high += c;
        ++n_high;
      } else {
        sum_low += c;
        ++n_low;
      }
    }
  }
  if (out.excluded > 0) spdlog::warn("cosine_gap: excluded {} zero-norm vector(s)", out.excluded);
  if (n_high > 0) out.high = sum_high / double(n_high);
  if (n_low > 0) out.low = sum_low / double(n_low);
  out.gap = out.high - out.low;
  return out;
}

std::pair<long, long> novelty_count(std::span<const TokenSequence> corpus,
                                    const FrequencyTable& freq) {
  std::set<TokenId> types;
  for (const auto& seq : corpus) types.insert(seq.begin(), seq.end());
  long high = 0, low = 0;
  for (TokenId t : types) {
    if (t < 0 || t >= freq.vocab_size()) throw VocabError("token id outside vocabulary");
    if (freq.high[t]) ++high;
    if (freq.low[t]) ++low;
  }
  return {high, low};
}

}  // namespace carekit
