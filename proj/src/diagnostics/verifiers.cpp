#include "carekit/diagnostics/verifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "carekit/model/dropout.hpp"
#include "carekit/numkit/ops.hpp"

namespace carekit {

namespace {

double log_sum_exp(std::span<const double> x, double factor = 1.0) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : x) peak = std::max(peak, factor * v);
  double s = 0;
  for (double v : x) s += std::exp(factor * v - peak);
  return peak + std::log(s);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double binary_entropy_value(double p) {
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

double log_uniform(CounterRng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

class SlackTracker {
 public:
  explicit SlackTracker(VerifierReport& report) : report_(report) {
    report_.min_slack = std::numeric_limits<double>::infinity();
  }

  void check(const char* name, double slack, double alpha, const std::vector<double>& values) {
    ++report_.checks;
    if (slack < -report_.tolerance) ++report_.violations;
    if (slack < report_.min_slack) {
      report_.min_slack = slack;
      report_.worst = Witness{name, slack, alpha, values};
    }
  }

 private:
  VerifierReport& report_;
};

std::vector<double> sample_logits(CounterRng& rng, int t) {
  std::vector<double> a(static_cast<std::size_t>(t), 0.0);
  const double kind = rng.uniform();
  if (kind < 0.05) return a;  // all zero
  if (kind < 0.10) {
    std::fill(a.begin(), a.end(), rng.uniform(-20.0, 20.0));
    return a;
  }
  if (kind < 0.20) {
    a[rng.below(static_cast<std::uint64_t>(t))] = rng.uniform(-1.0, 1.0) > 0 ? 10.0 : -10.0;
    return a;
  }
  const double scale = log_uniform(rng, 1e-3, 1e2);
  const double shift = rng.uniform() < 0.3 ? rng.uniform(-10.0, 10.0) : 0.0;
  for (auto& v : a) v = shift + scale * rng.normal();
  return a;
}

}  // namespace

EtaStatistics eta_statistics(std::span<const double> p) {
  const std::size_t m = p.size();
  if (m == 0) throw ContractError("eta_statistics: no steps");
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("eta_statistics: probability outside [0,1]");
  }
  EtaStatistics out;
  const double inv_m = 1.0 / double(m);
  double tail = 0;
  out.appendix_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = m; i-- > 0;) {
    tail += p[i] / double(i + 1);
    out.appendix_min = std::min(out.appendix_min, inv_m - tail);
  }
  out.main = inv_m * tail;
  return out;
}

GradientOracleResult subclaim4_gradient_oracle(const Matrix<double>& hhat,
                                               const Matrix<double>& embeddings,
                                               std::span<const TokenId> targets) {
  const Index m = hhat.rows();
  if (m < 1) throw ContractError("gradient oracle: empty sequence");
  if (static_cast<Index>(targets.size()) != m) throw DimensionError("one target per position required");
  if (hhat.cols() != embeddings.cols()) throw DimensionError("hidden/embedding width mismatch");
  const TokenId k = targets.back();
  if (k < 0 || k >= embeddings.rows()) throw VocabError("target word outside the embedding table");
  for (Index i = 0; i + 1 < m; ++i) {
    if (targets[i] == k) {
      throw ContractError("gradient oracle: word " + std::to_string(k) +
                          " must occur only at the last position");
    }
  }

  Graph<double> g;
  Matrix<double> mix = Matrix<double>::Zero(m, m);
  for (Index i = 0; i < m; ++i) mix.row(i).head(i + 1).setConstant(1.0 / double(i + 1));
  auto w = std::make_shared<Tensor<double>>(Tensor<double>::from_matrix(embeddings, true));
  Var<double> hidden = matmul(g.constant(mix), g.constant(hhat));
  Var<double> logits = matmul_nt(hidden, g.input(w));
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(m), 1);
  Var<double> loss = scale(cross_entropy_masked(logits, tgt, mask), double(m));
  g.backward(loss);

  GradientOracleResult out;
  out.autodiff = -w->grad().row(k);
  const auto& z = logits.value();
  for (Index j = 0; j < m; ++j) {
    const double peak = z.row(j).maxCoeff();
    const double norm = (z.row(j).array() - peak).exp().sum();
    out.probs.push_back(std::exp(z(j, k) - peak) / norm);
  }
  out.closed_form = Matrix<double>::Zero(1, hhat.cols());
  double tail = 0;
  for (Index i = m; i-- > 0;) {
    tail += out.probs[static_cast<std::size_t>(i)] / double(i + 1);
    out.closed_form += (1.0 / double(m) - tail) * hhat.row(i);
  }
  out.max_deviation = (out.autodiff - out.closed_form).cwiseAbs().maxCoeff();
  return out;
}

double relative_slack(double lhs, double rhs) {
  return (rhs - lhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)});
}

RenyiChain renyi_chain(std::span<const double> logits, double alpha) {
  if (logits.empty()) throw ContractError("renyi_chain: empty logits");
  if (!(alpha > 1.0)) throw ConfigError("alpha must exceed 1");
  const double t = double(logits.size());
  const double log_t = std::log(t);
  const double log_z = log_sum_exp(logits);
  const double mean = std::accumulate(logits.begin(), logits.end(), 0.0) / t;
  double mx = -std::numeric_limits<double>::infinity(), inf_norm = 0, l1 = 0;
  for (double v : logits) {
    mx = std::max(mx, v);
    inf_norm = std::max(inf_norm, std::abs(v));
    l1 += std::abs(v);
  }
  RenyiChain c;
  double power_sum = 0;
  for (double v : logits) power_sum += std::pow(std::exp(v - log_z), alpha);
  c.renyi = std::log(power_sum) / (1.0 - alpha);
  c.identity = (alpha * log_z - log_sum_exp(logits, alpha)) / (alpha - 1.0);
  c.jensen = (alpha * log_z - alpha * mean - log_t) / (alpha - 1.0);
  c.drop_log_t = (alpha * log_z - alpha * mean) / (alpha - 1.0);
  const double ratio = alpha / (alpha - 1.0);
  c.max_form = ratio * (mx - mean) + log_t;
  c.inf_form = ratio * (inf_norm - mean) + log_t;
  c.l1_mean_form = ratio * (l1 - mean) + log_t;
  c.bound = alpha * (t + 1.0) / (t * (alpha - 1.0)) * l1 + log_t;
  return c;
}

VerifierReport theorem1_verifier(const Theorem1Options& options, CounterRng& rng) {
  if (options.t_min < 1 || options.t_max < options.t_min) throw ConfigError("invalid t range");
  if (options.alphas.empty()) throw ConfigError("no alpha values");
  for (double a : options.alphas) {
    if (!(a > 1.0)) throw ConfigError("alpha must exceed 1; the Renyi bound is undefined otherwise");
  }
  VerifierReport report;
  report.name = "renyi_l1_bound";
  SlackTracker track(report);
  const double c_abs = std::abs(options.mask_constant);
  for (long trial = 0; trial < options.trials; ++trial) {
    const int t = options.t_min +
                  static_cast<int>(rng.below(static_cast<std::uint64_t>(options.t_max - options.t_min + 1)));
    const double alpha = options.alphas[rng.below(options.alphas.size())];
    const auto a = sample_logits(rng, t);
    const auto c = renyi_chain(a, alpha);
    const double log_z = log_sum_exp(a);
    const double mx = *std::max_element(a.begin(), a.end());

    track.check("identity", -std::abs(c.renyi - c.identity) / std::max(1.0, std::abs(c.identity)),
                alpha, a);
    track.check("jensen", relative_slack(c.renyi, c.jensen), alpha, a);
    track.check("drop_log_t", relative_slack(c.jensen, c.drop_log_t), alpha, a);
    track.check("log_partition", relative_slack(log_z, mx + std::log(double(t))), alpha, a);
    track.check("max_form", relative_slack(c.jensen, c.max_form), alpha, a);
    track.check("inf_form", relative_slack(c.max_form, c.inf_form), alpha, a);
    track.check("l1_mean_form", relative_slack(c.inf_form, c.l1_mean_form), alpha, a);
    track.check("beta_l1_bound", relative_slack(c.l1_mean_form, c.bound), alpha, a);
    track.check("entropy_bound", relative_slack(c.renyi, c.bound), alpha, a);

    // Additive dropout: the bound on the dropped logits is covered by the
    // bound on the clean logits plus a |C| term.
    const auto drops = bernoulli_drop_row(a.size(), options.drop_rate, rng);
    std::vector<double> dropped = a;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (drops[i]) dropped[i] += options.mask_constant;
    }
    const auto cd = renyi_chain(dropped, alpha);
    const double slack_term = alpha * (double(t) + 1.0) / (alpha - 1.0) * c_abs;
    track.check("dropout_bound", relative_slack(cd.bound, c.bound + slack_term), alpha, dropped);
    track.check("dropout_entropy", relative_slack(cd.renyi, c.bound + slack_term), alpha, dropped);
    ++report.trials;
  }
  return report;
}

VerifierReport theorem2_verifier(const Theorem2Options& options, CounterRng& rng) {
  if (!(options.x_hi > options.x_lo)) throw ConfigError("invalid x range");
  VerifierReport report;
  report.name = "dropout_prior_bound";
  SlackTracker track(report);
  const double log2 = std::log(2.0);
  for (long s = 0; s < options.samples; ++s) {
    const double x = s == 0 ? 0.0 : rng.uniform(options.x_lo, options.x_hi);
    track.check("softplus_jensen", relative_slack(log2 + x / 2.0, softplus(x)), 0.0, {x});

    const double p = rng.uniform_open();
    const double gamma = log_uniform(rng, 1e-6, 1e2);
    const double norm = rng.uniform() < 0.05 ? 0.0 : log_uniform(rng, 1e-3, 1e4);
    const double y = gamma * norm;
    const std::vector<double> witness{p, gamma, norm};
    const double neg_h = -binary_entropy_value(p);
    const double drop_term = p * softplus(-gamma * std::abs(options.mask_constant));

    // KL between the two-atom dropout posterior (mass p at C, 1-p at the
    // clean logits) and the unnormalized prior 1 + exp(-gamma |a|), up to the
    // prior's log normalizer. The atom at C contributes only -drop_term.
    const double kl_direct = p * std::log(p) - drop_term +
                             (1.0 - p) * (std::log1p(-p) - softplus(-y));
    const double kl = neg_h - (1.0 - p) * softplus(-y);
    track.check("kl_identity", relative_slack(std::abs(kl_direct - kl), drop_term), 0.0, witness);
    track.check("kl_upper_bound", relative_slack(kl, neg_h + (1.0 - p) * (y / 2.0 - log2)), 0.0,
                witness);
    track.check("discard_constants",
                relative_slack(neg_h + (1.0 - p) * softplus(-y) - (1.0 - p) * log2,
                               neg_h + gamma * (1.0 - p) / 2.0 * norm),
                0.0, witness);
    ++report.trials;
  }
  return report;
}

}  // namespace carekit
