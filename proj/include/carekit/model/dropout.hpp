#pragma once

#include <span>
#include <vector>

#include "carekit/numkit/rng.hpp"
#include "carekit/numkit/tensor.hpp"

namespace carekit {

/// Logits after dropout together with the keep mask that produced them.
struct DroppedLogits {
  std::vector<double> logits;
  /// 1 = kept, 0 = dropped (soft values in between for Concrete).
  std::vector<double> keep;
};

/// Bernoulli dropout on unnormalized logits: each cell independently gets
/// `mask_constant` added with probability `p`. A draw that drops every cell is
/// resampled once; if the second draw drops everything too, nothing is dropped.
DroppedLogits apply_bernoulli_logit_dropout(std::span<const double> logits, double p,
                                            double mask_constant, CounterRng& rng);

/// Bernoulli drop indicators (1 = drop) for one attention row with the
/// never-drop-all guard. Shared by the model and the value-level API.
std::vector<char> bernoulli_drop_row(std::size_t n, double p, CounterRng& rng);

/// Concrete relaxation of a Bernoulli(p) drop indicator:
/// sigmoid((log p - log(1-p) + log u - log(1-u)) / tau).
double concrete_relaxation(double p, double u, double tau);

/// log u - log(1-u) for u in (0, 1).
double logistic_noise(double u);

/// Concrete dropout on unnormalized logits: logit + z * mask_constant with z
/// the relaxed drop indicator. `keep` holds 1 - z.
DroppedLogits apply_concrete_dropout(std::span<const double> logits, double p, double tau,
                                     double mask_constant, CounterRng& rng);

/// 1-based key positions visible from query step `t` under a local window.
std::vector<int> local_window_mask(int t, int window);

/// Causal visibility matrix for a sequence of length n, optionally restricted
/// to a local window: entry (i, j) is true when query i may attend to key j.
MaskMatrix attention_mask(Index n, int window = 0);

}  // namespace carekit
