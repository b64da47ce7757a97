#include "carekit/harness/evaluate.hpp"

#include <algorithm>
#include <filesystem>

#include "carekit/harness/corpus.hpp"
#include "carekit/numkit/errors.hpp"

namespace carekit {

const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> names{"dist", "self_bleu", "js", "rep", "cnd", "bleu"};
  return names;
}

Corpus read_corpus_file(const std::string& path, const std::optional<Tokenizer>& tokenizer) {
  if (!tokenizer) return read_token_file(path);
  Corpus out;
  for (const auto& line : read_lines(path)) out.push_back(tokenizer->encode(line));
  return out;
}

std::vector<MetricReport> evaluate_corpora(const Corpus& generated, const Corpus* reference,
                                           const std::vector<std::string>& metrics,
                                           std::string_view generated_name,
                                           std::string_view reference_name) {
  std::vector<MetricReport> reports;
  for (const auto& name : metrics) {
    MetricReport r;
    if (name == "dist") {
      r = make_report(name, [&](int n) { return distinct_n(generated, n); });
    } else if (name == "rep") {
      r = make_report(name, [&](int n) { return rep_n(generated, n); });
    } else if (name == "js") {
      r = make_report(name, [&](int n) { return jaccard_js(generated, n); });
    } else if (name == "self_bleu") {
      r = make_report(name, [&](int n) { return self_bleu(generated, n); });
    } else if (name == "cnd" || name == "bleu") {
      if (!reference) {
        r.metric = name;
        r.error = "no reference corpus given";
      } else if (name == "cnd") {
        r = make_report(name, [&](int n) { return cnd(generated, *reference, n); });
      } else {
        r = make_report(name, [&](int n) {
          return bleu_n(generated, *reference, BleuOptions{n, false});
        });
      }
    } else {
      throw ConfigError("unknown metric '" + name + "'");
    }
    r.corpus = std::string(generated_name);
    if (reference && (name == "cnd" || name == "bleu")) r.reference = std::string(reference_name);
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<MetricReport> evaluate(const EvaluateInput& input) {
  for (const auto& m : input.metrics) {
    const auto& k = known_metrics();
    if (std::find(k.begin(), k.end(), m) == k.end()) throw ConfigError("unknown metric '" + m + "'");
  }
  if (input.metrics.empty()) return {};
  const Corpus generated = read_corpus_file(input.generated_path, input.tokenizer);
  std::optional<Corpus> reference;
  if (input.reference_path) reference = read_corpus_file(*input.reference_path, input.tokenizer);
  namespace fs = std::filesystem;
  return evaluate_corpora(generated, reference ? &*reference : nullptr, input.metrics,
                          fs::path(input.generated_path).filename().string(),
                          input.reference_path ? fs::path(*input.reference_path).filename().string()
                                               : std::string());
}

}  // namespace carekit
