#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carekit/model/config.hpp"
#include "carekit/model/trace.hpp"
#include "carekit/numkit/graph.hpp"

namespace carekit {

enum class Variant { mle, care, care_a, care_o, la_tuning, pattern };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);

/// Regularization settings for every training variant.
struct CareConfig {
  double alpha = 2.0;
  double gamma = 1e-3;
  double delta = 1e-4;
  long freeze_steps = 0;
  long warmup_steps = 0;
  Variant variant = Variant::mle;

  /// Hard errors only (alpha <= 1, negative weights or step counts).
  void validate() const;
  /// Human-readable notes for values outside the published tuning ranges.
  std::vector<std::string> range_warnings() const;
};

/// Throws ConfigError when `variant` cannot be trained with `mode`.
void check_variant_dropout(Variant variant, DropoutMode mode);

/// alpha (t + 1) / (t (alpha - 1)).
double beta_weight(long t, double alpha);

/// 0 while frozen, then a linear ramp to gamma over `warmup_steps`.
double schedule_gamma(long step, double gamma, long freeze_steps, long warmup_steps);

/// Renyi entropy of order alpha (alpha > 0, alpha != 1) of a probability vector.
double renyi_entropy(std::span<const double> a, double alpha);

/// Shannon entropy with 0 log 0 = 0.
double shannon_entropy(std::span<const double> a);

/// Sum over query steps of beta(t, alpha) * |pre-dropout logits|_1, averaged
/// over every (layer, batch element, head) record. Only visible cells count.
template <typename Scalar>
Var<Scalar> care_regularizer(std::span<const AttentionTrace<Scalar>> traces, double alpha);

/// weight * mean Shannon entropy of the attention rows over every
/// (layer, batch element, head, query step).
template <typename Scalar>
Var<Scalar> shannon_entropy_regularizer(std::span<const AttentionTrace<Scalar>> traces,
                                        double weight = 1.0);

struct LossBreakdown {
  double total = 0;
  double mle = 0;
  double reg = 0;      // before the schedule weight
  double entropy = 0;  // before delta
  double effective_gamma = 0;
  std::vector<double> drop_rates;  // per layer, CARE-A only
};

template <typename Scalar>
struct Loss {
  Var<Scalar> total;
  LossBreakdown breakdown;
};

/// Loss inputs shared by every variant. `targets` and `mask` are aligned with
/// the rows of `logits`.
template <typename Scalar>
struct LossInputs {
  Var<Scalar> logits;
  std::span<const std::int32_t> targets;
  std::span<const std::uint8_t> mask;
  std::span<const AttentionTrace<Scalar>> traces;
};

template <typename Scalar>
Loss<Scalar> loss_mle(const LossInputs<Scalar>& in);

/// MLE + schedule_gamma(step) * L_R. Accepts the care and care_o variants.
template <typename Scalar>
Loss<Scalar> loss_care(const LossInputs<Scalar>& in, const CareConfig& cfg, long step);

/// loss_care plus delta * sum of binary entropies of the per-layer rates.
template <typename Scalar>
Loss<Scalar> loss_care_a(const LossInputs<Scalar>& in, std::span<const Var<Scalar>> drop_rates,
                         const CareConfig& cfg, long step);

/// MLE + schedule_gamma(step) * mean attention Shannon entropy.
template <typename Scalar>
Loss<Scalar> loss_la_tuning(const LossInputs<Scalar>& in, const CareConfig& cfg, long step);

/// Dispatches on cfg.variant.
template <typename Scalar>
Loss<Scalar> variant_loss(const LossInputs<Scalar>& in, std::span<const Var<Scalar>> drop_rates,
                          const CareConfig& cfg, long step);

struct AttentionEntropy {
  double shannon = 0;
  double renyi = 0;
  long rows = 0;
};

/// Mean Shannon and Renyi(alpha) entropy of the attention rows in `traces`.
template <typename Scalar>
AttentionEntropy attention_entropy(std::span<const AttentionTrace<Scalar>> traces, double alpha);

}  // namespace carekit
