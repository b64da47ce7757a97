#include "carekit/harness/suites.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>

#include "carekit/harness/config.hpp"
#include "carekit/model/dropout.hpp"
#include "json.hpp"

namespace carekit {

namespace {

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void record(VerifierReport& report, const std::string& check, double slack,
            std::vector<double> values) {
  ++report.checks;
  if (slack < 0) ++report.violations;
  if (report.checks == 1 || slack < report.min_slack) {
    report.min_slack = slack;
    report.worst = {check, slack, 0.0, std::move(values)};
  }
}

}  // namespace

VerifierReport gradient_identity_suite(int instances, int max_m, double tolerance, CounterRng& rng) {
  VerifierReport report;
  report.name = "gradient_identity";
  report.tolerance = tolerance;
  for (int trial = 0; trial < instances; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_m)));
    const int d = 2 + static_cast<int>(rng.below(7));
    const int vocab = m + 1 + static_cast<int>(rng.below(8));
    Matrix<double> hhat(m, d), emb(vocab, d);
    for (Index i = 0; i < hhat.size(); ++i) hhat.data()[i] = rng.normal();
    for (Index i = 0; i < emb.size(); ++i) emb.data()[i] = rng.normal();
    const auto k = static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(vocab)));
    TokenSequence targets;
    for (int i = 0; i + 1 < m; ++i) {
      TokenId t = static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(vocab - 1)));
      targets.push_back(t >= k ? t + 1 : t);
    }
    targets.push_back(k);
    const auto res = subclaim4_gradient_oracle(hhat, emb, targets);
    ++report.trials;
    record(report, "closed_form_vs_autodiff", tolerance - res.max_deviation,
           {double(m), double(d), res.max_deviation});
  }
  return report;
}

VerifierReport dropout_rate_suite(long draws, double tau, double tolerance, CounterRng& rng,
                                  std::vector<DropoutRateCheck>* details) {
  VerifierReport report;
  report.name = "dropout_rates";
  report.tolerance = tolerance;
  constexpr std::size_t kRow = 1000;
  const std::vector<double> zeros(kRow, 0.0);
  for (double p : {0.1, 0.3, 0.5}) {
    long concrete = 0, bernoulli = 0, seen = 0;
    while (seen < draws) {
      const auto c = apply_concrete_dropout(zeros, p, tau, -1e4, rng);
      const auto b = apply_bernoulli_logit_dropout(zeros, p, -1e4, rng);
      for (std::size_t i = 0; i < kRow && seen < draws; ++i, ++seen) {
        concrete += c.keep[i] < 0.5;
        bernoulli += b.keep[i] == 0.0;
      }
    }
    for (auto [mode, count] : {std::pair{"concrete", concrete}, std::pair{"bernoulli", bernoulli}}) {
      const double observed = double(count) / double(draws);
      ++report.trials;
      record(report, std::string(mode) + "_rate", tolerance - std::abs(observed - p), {p, observed});
      if (details) details->push_back({mode, p, observed});
    }
  }
  return report;
}

std::vector<VerifierReport> run_verify_suite(std::uint64_t seed) {
  std::vector<VerifierReport> out;
  CounterRng rng(seed);
  out.push_back(theorem1_verifier(Theorem1Options{}, rng));
  out.push_back(theorem2_verifier(Theorem2Options{}, rng));
  out.push_back(gradient_identity_suite(100, 16, 1e-8, rng));
  out.push_back(dropout_rate_suite(100000, 0.1, 0.01, rng));
  return out;
}

std::string verifier_reports_json(const std::vector<VerifierReport>& reports) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["name"] = r.name;
    j["passed"] = r.passed();
    j["trials"] = r.trials;
    j["checks"] = r.checks;
    j["violations"] = r.violations;
    j["min_slack"] = r.min_slack;
    j["tolerance"] = r.tolerance;
    j["worst"] = {{"check", r.worst.check},
                  {"slack", r.worst.slack},
                  {"alpha", r.worst.alpha},
                  {"values", r.worst.values}};
    doc.push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

template <typename Scalar>
AnalysisResult analyze_model(const Transformer<Scalar>& model, std::span<const TokenSample> samples,
                             TokenId eot, std::size_t max_hidden_samples) {
  AnalysisResult out;
  const int vocab = model.config().vocab_size;
  Corpus corpus;
  for (const auto& s : samples) corpus.push_back(s.tokens);
  out.freq = build_frequency_table(corpus, vocab);
  const Matrix<double> emb = model.output_embedding().data().template cast<double>();

  try {
    out.regression = norm_frequency_regression(emb, out.freq);
  } catch (const Error& e) {
    out.notes.push_back(std::string("regression: ") + e.what());
  }
  try {
    out.intervals = interval_distance_matrix(emb, out.freq);
  } catch (const Error& e) {
    out.notes.push_back(std::string("intervals: ") + e.what());
  }
  out.context = context_frequency_proportion(corpus, out.freq);

  std::vector<TokenSequence> inputs;
  for (std::size_t i = 0; i < samples.size() && i < max_hidden_samples; ++i) {
    inputs.push_back(samples[i].input(eot));
  }
  if (!inputs.empty()) {
    Graph<Scalar> graph;
    graph.set_grad_enabled(false);
    const auto fwd = model.forward(graph, std::span<const TokenSequence>(inputs), DropoutSpec{}, false);
    try {
      out.gap = cosine_gap(fwd.hidden.value().template cast<double>(), emb, out.freq);
    } catch (const Error& e) {
      out.notes.push_back(std::string("cosine gap: ") + e.what());
    }
  }
  return out;
}

template AnalysisResult analyze_model<float>(const Transformer<float>&, std::span<const TokenSample>,
                                             TokenId, std::size_t);
template AnalysisResult analyze_model<double>(const Transformer<double>&, std::span<const TokenSample>,
                                              TokenId, std::size_t);

void write_analysis(const AnalysisResult& r, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path out(dir);
  fs::create_directories(out);
  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };

  std::string scatter = "token,log_count,inverse_norm\n";
  nlohmann::ordered_json summary;
  if (r.regression) {
    for (std::size_t k = 0; k < r.regression->x.size(); ++k) {
      scatter += std::to_string(r.regression->tokens[k]) + "," + num(r.regression->x[k]) + "," +
                 num(r.regression->y[k]) + "\n";
    }
    summary["regression"] = {{"slope", r.regression->slope},
                             {"intercept", r.regression->intercept},
                             {"r_squared", r.regression->r_squared},
                             {"n_points", r.regression->n_points}};
  }
  write_file_atomic((out / "scatter.csv").string(), scatter);

  if (r.intervals) {
    std::string csv = "decile,d1,d2,d3,d4,d5,d6,d7,d8,d9,d10\n";
    for (Index i = 0; i < r.intervals->rows(); ++i) {
      csv += std::to_string(i + 1);
      for (Index j = 0; j < r.intervals->cols(); ++j) csv += "," + num((*r.intervals)(i, j));
      csv += "\n";
    }
    write_file_atomic((out / "intervals.csv").string(), csv);
  }

  std::string ctx = "position,high,low,gap\n";
  for (std::size_t t = 0; t < r.context.high.size(); ++t) {
    ctx += std::to_string(t) + "," + opt(r.context.high[t]) + "," + opt(r.context.low[t]) + "," +
           opt(r.context.gap[t]) + "\n";
  }
  write_file_atomic((out / "context.csv").string(), ctx);

  if (r.gap) {
    summary["cosine_gap"] = {{"high", r.gap->high}, {"low", r.gap->low}, {"gap", r.gap->gap},
                             {"excluded", r.gap->excluded}};
  }
  summary["notes"] = r.notes;
  write_file_atomic((out / "summary.json").string(), summary.dump(2) + "\n");
}

}  // namespace carekit
