#include "carekit/model/dropout.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "carekit/numkit/errors.hpp"

namespace carekit {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_rate(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("dropout rate must lie in (0,1)");
}

}  // namespace

std::vector<char> bernoulli_drop_row(std::size_t n, double p, CounterRng& rng) {
  std::vector<char> drop(n, 0);
  if (n == 0) return drop;
  for (int attempt = 0; attempt < 2; ++attempt) {
    bool all = true;
    for (auto& d : drop) {
      d = rng.bernoulli(p) ? 1 : 0;
      all = all && d;
    }
    if (!all) return drop;
  }
  std::fill(drop.begin(), drop.end(), 0);
  return drop;
}

DroppedLogits apply_bernoulli_logit_dropout(std::span<const double> logits, double p,
                                            double mask_constant, CounterRng& rng) {
  check_rate(p);
  if (!(mask_constant <= -1e3)) throw ConfigError("mask constant must be <= -1e3");
  const auto drop = bernoulli_drop_row(logits.size(), p, rng);
  DroppedLogits out{{logits.begin(), logits.end()}, std::vector<double>(logits.size(), 1.0)};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (drop[i]) {
      out.logits[i] += mask_constant;
      out.keep[i] = 0.0;
    }
  }
  return out;
}

double logistic_noise(double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("logistic noise needs u in (0,1)");
  return std::log(u) - std::log1p(-u);
}

double concrete_relaxation(double p, double u, double tau) {
  check_rate(p);
  if (!(tau > 0.0)) throw ConfigError("concrete temperature must be positive");
  return stable_sigmoid((std::log(p) - std::log1p(-p) + logistic_noise(u)) / tau);
}

DroppedLogits apply_concrete_dropout(std::span<const double> logits, double p, double tau,
                                     double mask_constant, CounterRng& rng) {
  check_rate(p);
  DroppedLogits out{{logits.begin(), logits.end()}, std::vector<double>(logits.size(), 1.0)};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = concrete_relaxation(p, rng.uniform_open(), tau);
    out.logits[i] += z * mask_constant;
    out.keep[i] = 1.0 - z;
  }
  return out;
}

std::vector<int> local_window_mask(int t, int window) {
  if (window < 1) throw ConfigError("attention window must be >= 1");
  if (t < 1) throw ContractError("query step is 1-based");
  std::vector<int> keys;
  for (int j = std::max(1, t - window + 1); j <= t; ++j) keys.push_back(j);
  return keys;
}

MaskMatrix attention_mask(Index n, int window) {
  MaskMatrix visible = MaskMatrix::Constant(n, n, false);
  for (Index t = 0; t < n; ++t) {
    const Index first = window > 0 ? std::max<Index>(0, t - window + 1) : 0;
    for (Index j = first; j <= t; ++j) visible(t, j) = true;
  }
  return visible;
}

}  // namespace carekit
