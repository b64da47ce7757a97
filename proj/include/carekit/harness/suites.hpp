#pragma once

#include <optional>
#include <string>
#include <vector>

#include "carekit/diagnostics/frequency.hpp"
#include "carekit/diagnostics/verifiers.hpp"
#include "carekit/harness/corpus.hpp"
#include "carekit/model/transformer.hpp"

namespace carekit {

/// Random linearized instances (m <= max_m) of the embedding-gradient
/// closed form; a violation is a deviation above `tolerance`.
VerifierReport gradient_identity_suite(int instances, int max_m, double tolerance, CounterRng& rng);

struct DropoutRateCheck {
  std::string mode;
  double p = 0;
  double observed = 0;
};

/// Empirical drop fraction of both logit-dropout modes at p in {0.1, 0.3,
/// 0.5} (Concrete: z > 0.5 at temperature tau). Violation: |observed - p| >
/// tolerance.
VerifierReport dropout_rate_suite(long draws, double tau, double tolerance, CounterRng& rng,
                                  std::vector<DropoutRateCheck>* details = nullptr);

/// Every theorem and oracle check at full size.
std::vector<VerifierReport> run_verify_suite(std::uint64_t seed);

std::string verifier_reports_json(const std::vector<VerifierReport>& reports);

struct AnalysisResult {
  FrequencyTable freq;
  std::optional<RegressionResult> regression;
  std::optional<Matrix<double>> intervals;
  ContextFrequencyCurves context;
  std::optional<CosineGap> gap;
  std::vector<std::string> notes;  // why a part is missing
};

/// Frequency diagnostics of a model against a corpus. Hidden states come from
/// inference passes over up to `max_hidden_samples` samples.
template <typename Scalar>
AnalysisResult analyze_model(const Transformer<Scalar>& model, std::span<const TokenSample> samples,
                             TokenId eot, std::size_t max_hidden_samples = 64);

/// Writes scatter.csv, intervals.csv, context.csv and summary.json under
/// `dir`.
void write_analysis(const AnalysisResult& result, const std::string& dir);

}  // namespace carekit
