#pragma once

#include <span>
#include <string>
#include <vector>

#include "carekit/numkit/rng.hpp"
#include "carekit/numkit/tensor.hpp"
#include "carekit/types.hpp"

namespace carekit {

struct EtaStatistics {
  double main = 0;          // (1/m) sum_j p_j / j
  double appendix_min = 0;  // min_i (1/m - sum_{j>=i} p_j / j)
};

/// p holds the target probabilities p_1..p_m in step order.
EtaStatistics eta_statistics(std::span<const double> p);

struct GradientOracleResult {
  double max_deviation = 0;
  Matrix<double> autodiff;     // [1 x d], negated gradient of the summed NLL wrt w_k
  Matrix<double> closed_form;  // [1 x d]
  std::vector<double> probs;   // p_j = P(k | h_j)
};

/// Linearized one-layer model h_i = (1/i) sum_{j<=i} hhat_j, logits = H W^T,
/// summed NLL of `targets`. The word k = targets.back() must not occur
/// earlier. Compares the autodiff gradient with
/// sum_i (1/m - sum_{j>=i} p_j / j) hhat_i.
GradientOracleResult subclaim4_gradient_oracle(const Matrix<double>& hhat,
                                               const Matrix<double>& embeddings,
                                               std::span<const TokenId> targets);

/// Worst case found by a verifier.
struct Witness {
  std::string check;
  double slack = 0;
  double alpha = 0;
  std::vector<double> values;  // logits, or (x) / (p, gamma, norm)
};

struct VerifierReport {
  std::string name;
  long trials = 0;
  long checks = 0;
  long violations = 0;
  double min_slack = 0;
  double tolerance = 1e-10;
  Witness worst;

  bool passed() const { return violations == 0; }
};

/// Slack of one inequality lhs <= rhs, scaled by max(1, |lhs|, |rhs|).
double relative_slack(double lhs, double rhs);

struct Theorem1Options {
  long trials = 10000;
  int t_min = 1;
  int t_max = 64;
  std::vector<double> alphas{1.5, 2.0, 4.0, 6.0};
  double mask_constant = -1e4;
  double drop_rate = 0.3;
};

/// Samples logit vectors and checks every step of the chain bounding the
/// Renyi entropy of softmax(logits) by the beta-weighted l1 norm, including
/// the variant with additive dropout.
VerifierReport theorem1_verifier(const Theorem1Options& options, CounterRng& rng);

struct Theorem2Options {
  long samples = 10000;
  double x_lo = -50;
  double x_hi = 50;
  double mask_constant = -1e4;
};

/// Checks softplus(x) >= log 2 + x/2, the dropout-prior KL identity, its
/// Jensen lower bound and the discarded-constants upper bound over sampled
/// (p, gamma, |a|).
VerifierReport theorem2_verifier(const Theorem2Options& options, CounterRng& rng);

/// Rényi-chain quantities for one logit vector (exposed for tests).
struct RenyiChain {
  double renyi = 0;         // H_alpha(softmax(a))
  double identity = 0;      // (alpha log Z - log sum e^{alpha a}) / (alpha - 1)
  double jensen = 0;        // (alpha log Z - (alpha/t) sum a - log t) / (alpha - 1)
  double drop_log_t = 0;    // jensen without the -log t
  double max_form = 0;      // alpha/(alpha-1) (max a - mean) + log t
  double inf_form = 0;      // alpha/(alpha-1) (|a|_inf - mean) + log t
  double l1_mean_form = 0;  // alpha/(alpha-1) (|a|_1 - mean) + log t
  double bound = 0;         // alpha (t+1) / (t (alpha-1)) |a|_1 + log t
};

RenyiChain renyi_chain(std::span<const double> logits, double alpha);

}  // namespace carekit
