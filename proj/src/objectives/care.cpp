#include "carekit/objectives/care.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <map>
#include <numeric>

#include "carekit/numkit/ops.hpp"

namespace carekit {

namespace {

constexpr double kSimplexTol = 1e-9;

// Renyi entropy without the simplex check, for logging over float weights.
double renyi_unchecked(const double* a, std::size_t n, double alpha) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] > 0) peak = std::max(peak, alpha * std::log(a[i]));
  }
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] > 0) s += std::exp(alpha * std::log(a[i]) - peak);
  }
  return (std::log(s) + peak) / (1.0 - alpha);
}

double shannon_unchecked(const double* a, std::size_t n) {
  double h = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] > 0) h -= a[i] * std::log(a[i]);
  }
  return h;
}

void require_traces(std::size_t n, const char* who) {
  if (n == 0) throw ContractError(std::string(who) + ": no attention traces");
}

template <typename Scalar>
Var<Scalar> accumulate(Var<Scalar> acc, const Var<Scalar>& term) {
  return acc.valid() ? add(acc, term) : term;
}

template <typename Scalar>
Loss<Scalar> compose(const LossInputs<Scalar>& in, const Var<Scalar>& reg, double eff_gamma,
                     const Var<Scalar>* entropy, double delta) {
  Loss<Scalar> out;
  Var<Scalar> mle = cross_entropy_masked(in.logits, in.targets, in.mask);
  Var<Scalar> total = mle;
  // A zero weight keeps the regularizer out of the graph entirely, so the
  // result is bit-identical to plain MLE.
  if (reg.valid() && eff_gamma != 0.0) total = add(total, scale(reg, Scalar(eff_gamma)));
  if (entropy) total = add(total, scale(*entropy, Scalar(delta)));
  out.total = total;
  out.breakdown.total = static_cast<double>(total.item());
  out.breakdown.mle = static_cast<double>(mle.item());
  out.breakdown.reg = reg.valid() ? static_cast<double>(reg.item()) : 0.0;
  out.breakdown.entropy = entropy ? static_cast<double>(entropy->item()) : 0.0;
  out.breakdown.effective_gamma = eff_gamma;
  return out;
}

}  // namespace

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::mle: return "mle";
    case Variant::care: return "care";
    case Variant::care_a: return "care_a";
    case Variant::care_o: return "care_o";
    case Variant::la_tuning: return "la_tuning";
    case Variant::pattern: return "pattern";
  }
  return "mle";
}

Variant parse_variant(std::string_view text) {
  for (Variant v : {Variant::mle, Variant::care, Variant::care_a, Variant::care_o,
                    Variant::la_tuning, Variant::pattern}) {
    if (to_string(v) == text) return v;
  }
  throw ConfigError("unknown variant '" + std::string(text) + "'");
}

void CareConfig::validate() const {
  if (!(alpha > 1.0)) throw ConfigError("alpha must exceed 1; the Renyi bound is undefined otherwise");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (!(delta >= 0.0)) throw ConfigError("delta must be >= 0");
  if (freeze_steps < 0 || warmup_steps < 0) throw ConfigError("schedule steps must be >= 0");
}

std::vector<std::string> CareConfig::range_warnings() const {
  std::vector<std::string> notes;
  auto check = [&](const char* name, double v, double lo, double hi) {
    if (v < lo || v > hi) {
      notes.push_back(std::string(name) + "=" + std::to_string(v) + " outside tuned range [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  };
  check("alpha", alpha, 1.5, 6.0);
  if (variant != Variant::mle && variant != Variant::pattern && gamma != 0.0) {
    check("gamma", gamma, 1e-6, 1e-2);
  }
  if (variant == Variant::care_a) check("delta", delta, 1e-5, 1e-3);
  check("freeze_steps", double(freeze_steps), 0, 20000);
  check("warmup_steps", double(warmup_steps), 0, 20000);
  return notes;
}

void check_variant_dropout(Variant variant, DropoutMode mode) {
  auto need = [&](DropoutMode expected) {
    if (mode != expected) {
      throw ConfigError("variant " + std::string(to_string(variant)) + " requires dropout mode " +
                        std::string(to_string(expected)) + ", got " +
                        std::string(to_string(mode)));
    }
  };
  switch (variant) {
    case Variant::care: need(DropoutMode::bernoulli); break;
    case Variant::care_a: need(DropoutMode::concrete); break;
    case Variant::care_o: need(DropoutMode::post_softmax_original); break;
    case Variant::mle:
    case Variant::la_tuning:
    case Variant::pattern: break;
  }
}

double beta_weight(long t, double alpha) {
  if (!(alpha > 1.0)) throw ConfigError("alpha must exceed 1; the Renyi bound is undefined otherwise");
  if (t < 1) throw ContractError("beta_weight: t must be >= 1");
  const double td = static_cast<double>(t);
  return alpha * (td + 1.0) / (td * (alpha - 1.0));
}

double schedule_gamma(long step, double gamma, long freeze_steps, long warmup_steps) {
  if (step < 0) throw ContractError("schedule_gamma: negative step");
  if (step < freeze_steps) return 0.0;
  const long into = step - freeze_steps;
  if (into >= warmup_steps) return gamma;
  return gamma * static_cast<double>(into) / static_cast<double>(warmup_steps);
}

double renyi_entropy(std::span<const double> a, double alpha) {
  if (!(alpha > 0.0) || alpha == 1.0) throw ConfigError("Renyi order must be positive and != 1");
  if (a.empty()) throw DomainError("renyi_entropy: empty distribution");
  double total = 0;
  for (double v : a) {
    if (!(v >= 0.0)) throw DomainError("renyi_entropy: negative or NaN probability");
    total += v;
  }
  if (std::abs(total - 1.0) > kSimplexTol) {
    throw DomainError("renyi_entropy: probabilities sum to " + std::to_string(total));
  }
  return std::max(0.0, renyi_unchecked(a.data(), a.size(), alpha));
}

double shannon_entropy(std::span<const double> a) {
  for (double v : a) {
    if (!(v >= 0.0)) throw DomainError("shannon_entropy: negative or NaN probability");
  }
  return shannon_unchecked(a.data(), a.size());
}

template <typename Scalar>
Var<Scalar> care_regularizer(std::span<const AttentionTrace<Scalar>> traces, double alpha) {
  require_traces(traces.size(), "care_regularizer");
  if (!(alpha > 1.0)) throw ConfigError("alpha must exceed 1; the Renyi bound is undefined otherwise");
  std::map<const MaskMatrix*, Matrix<Scalar>> weights;
  Var<Scalar> acc;
  long count = 0;
  for (const auto& layer : traces) {
    for (const auto& head : layer.heads) {
      const MaskMatrix& visible = *head.visible;
      auto [it, fresh] = weights.try_emplace(&visible);
      if (fresh) {
        it->second = Matrix<Scalar>::Zero(visible.rows(), visible.cols());
        for (Index t = 0; t < visible.rows(); ++t) {
          const Scalar beta = Scalar(beta_weight(visible.row(t).count(), alpha));
          for (Index j = 0; j < visible.cols(); ++j) {
            if (visible(t, j)) it->second(t, j) = beta;
          }
        }
      }
      Graph<Scalar>& g = head.pre_logits.graph();
      acc = accumulate(acc, l1_norm(mul(head.pre_logits, g.constant(it->second))));
      ++count;
    }
  }
  require_traces(static_cast<std::size_t>(count), "care_regularizer");
  return scale(acc, Scalar(1) / Scalar(count));
}

template <typename Scalar>
Var<Scalar> shannon_entropy_regularizer(std::span<const AttentionTrace<Scalar>> traces,
                                        double weight) {
  require_traces(traces.size(), "shannon_entropy_regularizer");
  Var<Scalar> acc;
  long rows = 0;
  for (const auto& layer : traces) {
    for (const auto& head : layer.heads) {
      acc = accumulate(acc, shannon_entropy_sum(head.weights));
      rows += head.steps();
    }
  }
  require_traces(static_cast<std::size_t>(rows), "shannon_entropy_regularizer");
  return scale(acc, Scalar(weight / static_cast<double>(rows)));
}

template <typename Scalar>
Loss<Scalar> loss_mle(const LossInputs<Scalar>& in) {
  return compose<Scalar>(in, Var<Scalar>{}, 0.0, nullptr, 0.0);
}

template <typename Scalar>
Loss<Scalar> loss_care(const LossInputs<Scalar>& in, const CareConfig& cfg, long step) {
  if (cfg.variant != Variant::care && cfg.variant != Variant::care_o) {
    throw ConfigError("loss_care called for variant " + std::string(to_string(cfg.variant)));
  }
  cfg.validate();
  const double eff = schedule_gamma(step, cfg.gamma, cfg.freeze_steps, cfg.warmup_steps);
  return compose<Scalar>(in, care_regularizer(in.traces, cfg.alpha), eff, nullptr, 0.0);
}

template <typename Scalar>
Loss<Scalar> loss_care_a(const LossInputs<Scalar>& in, std::span<const Var<Scalar>> drop_rates,
                         const CareConfig& cfg, long step) {
  if (cfg.variant != Variant::care_a) {
    throw ConfigError("loss_care_a called for variant " + std::string(to_string(cfg.variant)));
  }
  cfg.validate();
  if (drop_rates.empty()) throw ContractError("loss_care_a: no learnable dropout rates");
  Var<Scalar> entropy;
  std::vector<double> rates;
  for (std::size_t l = 0; l < drop_rates.size(); ++l) {
    const double p = static_cast<double>(drop_rates[l].item());
    if (p < kMinDropRate || p > kMaxDropRate) {
      spdlog::warn("layer {} dropout rate {} outside [{}, {}]", l, p, kMinDropRate, kMaxDropRate);
    }
    rates.push_back(p);
    entropy = accumulate(entropy, binary_entropy(drop_rates[l]));
  }
  const double eff = schedule_gamma(step, cfg.gamma, cfg.freeze_steps, cfg.warmup_steps);
  auto out = compose<Scalar>(in, care_regularizer(in.traces, cfg.alpha), eff, &entropy, cfg.delta);
  out.breakdown.drop_rates = std::move(rates);
  return out;
}

template <typename Scalar>
Loss<Scalar> loss_la_tuning(const LossInputs<Scalar>& in, const CareConfig& cfg, long step) {
  if (cfg.variant != Variant::la_tuning) {
    throw ConfigError("loss_la_tuning called for variant " + std::string(to_string(cfg.variant)));
  }
  const double eff = schedule_gamma(step, cfg.gamma, cfg.freeze_steps, cfg.warmup_steps);
  return compose<Scalar>(in, shannon_entropy_regularizer(in.traces), eff, nullptr, 0.0);
}

template <typename Scalar>
Loss<Scalar> variant_loss(const LossInputs<Scalar>& in, std::span<const Var<Scalar>> drop_rates,
                          const CareConfig& cfg, long step) {
  switch (cfg.variant) {
    case Variant::care:
    case Variant::care_o: return loss_care(in, cfg, step);
    case Variant::care_a: return loss_care_a(in, drop_rates, cfg, step);
    case Variant::la_tuning: return loss_la_tuning(in, cfg, step);
    case Variant::mle:
    case Variant::pattern: return loss_mle(in);
  }
  return loss_mle(in);
}

template <typename Scalar>
AttentionEntropy attention_entropy(std::span<const AttentionTrace<Scalar>> traces, double alpha) {
  AttentionEntropy out;
  std::vector<double> row;
  for (const auto& layer : traces) {
    for (const auto& head : layer.heads) {
      const auto& w = head.weights.value();
      for (Index t = 0; t < w.rows(); ++t) {
        row.assign(w.row(t).data(), w.row(t).data() + w.cols());
        out.shannon += shannon_unchecked(row.data(), row.size());
        out.renyi += renyi_unchecked(row.data(), row.size(), alpha);
        ++out.rows;
      }
    }
  }
  if (out.rows > 0) {
    out.shannon /= static_cast<double>(out.rows);
    out.renyi /= static_cast<double>(out.rows);
  }
  return out;
}

#define CAREKIT_INSTANTIATE(S)                                                                   \
  template Var<S> care_regularizer(std::span<const AttentionTrace<S>>, double);                  \
  template Var<S> shannon_entropy_regularizer(std::span<const AttentionTrace<S>>, double);       \
  template Loss<S> loss_mle(const LossInputs<S>&);                                              \
  template Loss<S> loss_care(const LossInputs<S>&, const CareConfig&, long);                    \
  template Loss<S> loss_care_a(const LossInputs<S>&, std::span<const Var<S>>, const CareConfig&, \
                               long);                                                            \
  template Loss<S> loss_la_tuning(const LossInputs<S>&, const CareConfig&, long);               \
  template Loss<S> variant_loss(const LossInputs<S>&, std::span<const Var<S>>,                  \
                                const CareConfig&, long);                                        \
  template AttentionEntropy attention_entropy(std::span<const AttentionTrace<S>>, double);

CAREKIT_INSTANTIATE(double)
CAREKIT_INSTANTIATE(float)

#undef CAREKIT_INSTANTIATE

}  // namespace carekit
