#include "carekit/metrics/metrics.hpp"

#include "json.hpp"
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iterator>
#include <set>

#include "carekit/numkit/errors.hpp"

namespace carekit {

namespace {

void require_order(int n) {
  if (n < 1) throw ContractError("n-gram order must be >= 1");
}

std::set<Ngram> ngram_set(std::span<const TokenId> seq, int n) {
  std::set<Ngram> out;
  for (long i = 0; i < ngram_total(seq.size(), n); ++i) out.emplace(seq.begin() + i, seq.begin() + i + n);
  return out;
}

// Reference length closest to `c`, the shorter one on ties.
std::size_t closest_length(std::size_t c, std::span<const std::size_t> lengths) {
  std::size_t best = lengths.front();
  for (std::size_t r : lengths) {
    const auto d = [c](std::size_t x) { return x > c ? x - c : c - x; };
    if (d(r) < d(best) || (d(r) == d(best) && r < best)) best = r;
  }
  return best;
}

double brevity_penalty(double c, double r) {
  if (c <= 0) return 0.0;
  return c > r ? 1.0 : std::exp(1.0 - r / c);
}

// Clipped matches and totals per order, combined into a BLEU score in [0,1].
double combine(std::span<const long> matches, std::span<const long> totals, double bp,
               bool smoothing) {
  double log_sum = 0;
  const std::size_t k = matches.size();
  for (std::size_t i = 0; i < k; ++i) {
    double m = double(matches[i]), t = double(totals[i]);
    if (smoothing && i >= 1) {
      m += 1;
      t += 1;
    }
    if (t <= 0 || m <= 0) return 0.0;
    log_sum += std::log(m / t);
  }
  return bp * std::exp(log_sum / double(k));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

NgramProfile ngram_profile(std::span<const TokenId> seq, int n) {
  require_order(n);
  NgramProfile p;
  p.n = n;
  const long total = ngram_total(seq.size(), n);
  for (long i = 0; i < total; ++i) ++p.counts[Ngram(seq.begin() + i, seq.begin() + i + n)];
  p.total = total;
  return p;
}

NgramProfile ngram_profile(std::span<const TokenSequence> corpus, int n) {
  require_order(n);
  NgramProfile p;
  p.n = n;
  for (const auto& seq : corpus) {
    const long total = ngram_total(seq.size(), n);
    for (long i = 0; i < total; ++i) ++p.counts[Ngram(seq.begin() + i, seq.begin() + i + n)];
    p.total += total;
  }
  return p;
}

double distinct_n(std::span<const TokenSequence> corpus, int n) {
  if (corpus.empty()) throw ContractError("distinct_n: empty corpus");
  const auto p = ngram_profile(corpus, n);
  if (p.total == 0) {
    throw UndefinedMetricError("distinct_n: every sequence is shorter than " + std::to_string(n));
  }
  return double(p.distinct()) / double(p.total);
}

double rep_n(std::span<const TokenSequence> corpus, int n) {
  if (corpus.empty()) throw ContractError("rep_n: empty corpus");
  double sum = 0;
  long used = 0, skipped = 0;
  for (const auto& seq : corpus) {
    const auto p = ngram_profile(seq, n);
    if (p.total == 0) {
      ++skipped;
      continue;
    }
    sum += 1.0 - double(p.distinct()) / double(p.total);
    ++used;
  }
  if (skipped > 0) spdlog::warn("rep_{}: skipped {} sequence(s) shorter than {}", n, skipped, n);
  if (used == 0) throw UndefinedMetricError("rep_n: every sequence is shorter than " + std::to_string(n));
  return sum / double(used);
}

double jaccard_js(std::span<const TokenSequence> corpus, int n) {
  require_order(n);
  if (corpus.size() < 2) throw ContractError("jaccard_js: needs at least two sequences");
  std::vector<std::set<Ngram>> sets;
  sets.reserve(corpus.size());
  for (const auto& seq : corpus) sets.push_back(ngram_set(seq, n));
  double sum = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j, ++pairs) {
      const auto& a = sets[i];
      const auto& b = sets[j];
      if (a.empty() && b.empty()) {
        sum += 1.0;
        continue;
      }
      std::size_t inter = 0;
      auto ia = a.begin();
      auto ib = b.begin();
      while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
          ++ia;
        } else if (*ib < *ia) {
          ++ib;
        } else {
          ++inter;
          ++ia;
          ++ib;
        }
      }
      sum += double(inter) / double(a.size() + b.size() - inter);
    }
  }
  return sum / double(pairs);
}

double cnd(std::span<const TokenSequence> generated, std::span<const TokenSequence> reference,
           int n) {
  if (generated.empty() || reference.empty()) throw ContractError("cnd: empty corpus");
  const auto pg = ngram_profile(generated, n);
  const auto pr = ngram_profile(reference, n);
  if (pg.total == 0 || pr.total == 0) {
    throw UndefinedMetricError("cnd: no " + std::to_string(n) + "-grams on one side");
  }
  double tv = 0;
  auto ig = pg.counts.begin();
  auto ir = pr.counts.begin();
  const double tg = double(pg.total), tr = double(pr.total);
  while (ig != pg.counts.end() || ir != pr.counts.end()) {
    if (ir == pr.counts.end() || (ig != pg.counts.end() && ig->first < ir->first)) {
      tv += double(ig->second) / tg;
      ++ig;
    } else if (ig == pg.counts.end() || ir->first < ig->first) {
      tv += double(ir->second) / tr;
      ++ir;
    } else {
      tv += std::abs(double(ig->second) / tg - double(ir->second) / tr);
      ++ig;
      ++ir;
    }
  }
  return 0.5 * tv;
}

double bleu_n(std::span<const TokenSequence> candidates, std::span<const TokenSequence> references,
              const BleuOptions& options) {
  require_order(options.max_n);
  if (candidates.size() != references.size()) {
    throw ContractError("bleu_n: " + std::to_string(candidates.size()) + " candidates vs " +
                        std::to_string(references.size()) + " references");
  }
  if (candidates.empty()) throw ContractError("bleu_n: empty candidate list");
  std::vector<long> matches(options.max_n, 0), totals(options.max_n, 0);
  double c = 0, r = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    c += double(candidates[s].size());
    r += double(references[s].size());
    for (int k = 1; k <= options.max_n; ++k) {
      const auto pc = ngram_profile(candidates[s], k);
      const auto pr = ngram_profile(references[s], k);
      for (const auto& [g, cnt] : pc.counts) matches[k - 1] += std::min(cnt, pr.count(g));
      totals[k - 1] += pc.total;
    }
  }
  return 100.0 * combine(matches, totals, brevity_penalty(c, r), options.smoothing);
}

double sentence_bleu(std::span<const TokenId> candidate, std::span<const TokenSequence> references,
                     const BleuOptions& options) {
  require_order(options.max_n);
  if (references.empty()) throw ContractError("sentence_bleu: no references");
  std::vector<long> matches(options.max_n, 0), totals(options.max_n, 0);
  for (int k = 1; k <= options.max_n; ++k) {
    const auto pc = ngram_profile(candidate, k);
    std::vector<NgramProfile> refs;
    for (const auto& ref : references) refs.push_back(ngram_profile(ref, k));
    for (const auto& [g, cnt] : pc.counts) {
      long best = 0;
      for (const auto& pr : refs) best = std::max(best, pr.count(g));
      matches[k - 1] += std::min(cnt, best);
    }
    totals[k - 1] = pc.total;
  }
  std::vector<std::size_t> lengths;
  for (const auto& ref : references) lengths.push_back(ref.size());
  const double r = double(closest_length(candidate.size(), lengths));
  return 100.0 * combine(matches, totals, brevity_penalty(double(candidate.size()), r),
                         options.smoothing);
}

double self_bleu(std::span<const TokenSequence> corpus, int max_n) {
  require_order(max_n);
  if (corpus.size() < 2) throw ContractError("self_bleu: needs at least two sequences");
  const std::size_t n_seq = corpus.size();

  // For every n-gram keep the two largest per-sequence counts, so the maximum
  // over "all references except i" is a constant-time lookup.
  struct Top2 {
    long c1 = 0, c2 = 0;
    std::size_t s1 = SIZE_MAX;
  };
  std::vector<std::vector<NgramProfile>> profiles(n_seq);
  std::vector<std::map<Ngram, Top2>> best(max_n);
  for (std::size_t s = 0; s < n_seq; ++s) {
    for (int k = 1; k <= max_n; ++k) {
      profiles[s].push_back(ngram_profile(corpus[s], k));
      for (const auto& [g, cnt] : profiles[s].back().counts) {
        Top2& t = best[k - 1][g];
        if (cnt > t.c1) {
          t.c2 = t.c1;
          t.c1 = cnt;
          t.s1 = s;
        } else if (cnt > t.c2) {
          t.c2 = cnt;
        }
      }
    }
  }
  std::multiset<std::size_t> lengths;
  for (const auto& seq : corpus) lengths.insert(seq.size());

  double sum = 0;
  std::vector<long> matches(max_n), totals(max_n);
  for (std::size_t s = 0; s < n_seq; ++s) {
    for (int k = 1; k <= max_n; ++k) {
      long m = 0;
      for (const auto& [g, cnt] : profiles[s][k - 1].counts) {
        const Top2& t = best[k - 1].at(g);
        m += std::min(cnt, t.s1 == s ? t.c2 : t.c1);
      }
      matches[k - 1] = m;
      totals[k - 1] = profiles[s][k - 1].total;
    }
    const std::size_t c = corpus[s].size();
    lengths.erase(lengths.find(c));
    std::size_t r = *lengths.begin();
    auto hi = lengths.lower_bound(c);
    if (hi != lengths.end()) r = *hi;
    if (hi != lengths.begin()) {
      const std::size_t lo = *std::prev(hi);
      if (hi == lengths.end() || c - lo <= *hi - c) r = lo;
    }
    lengths.insert(c);
    sum += combine(matches, totals, brevity_penalty(double(c), double(r)), false);
  }
  return 100.0 * sum / double(n_seq);
}

double geometric_mean(std::span<const double> values) {
  if (values.empty()) throw ContractError("geometric_mean: no values");
  double log_sum = 0;
  for (double v : values) {
    if (v < 0) throw DomainError("geometric_mean: negative value");
    if (v == 0) return 0.0;
    log_sum += std::log(v);
  }
  return std::exp(log_sum / double(values.size()));
}

MetricReport make_report(std::string metric, const std::function<double(int)>& fn) {
  MetricReport report;
  report.metric = std::move(metric);
  std::vector<double> present;
  for (int n = 1; n <= 4; ++n) {
    try {
      report.values[n - 1] = fn(n);
      present.push_back(*report.values[n - 1]);
    } catch (const UndefinedMetricError& e) {
      if (report.error.empty()) report.error = e.what();
    } catch (const ContractError& e) {
      if (report.error.empty()) report.error = e.what();
    }
  }
  if (present.size() == 4) report.geometric_mean = geometric_mean(present);
  return report;
}

std::string reports_to_csv(std::span<const MetricReport> reports) {
  std::string out = "metric,n1,n2,n3,n4,geometric_mean,corpus,reference,level\n";
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : reports) {
    out += r.metric;
    for (const auto& v : r.values) out += "," + cell(v);
    out += "," + cell(r.geometric_mean) + "," + r.corpus + "," + r.reference + "," +
           (r.token_level ? "token" : "word") + "\n";
  }
  return out;
}

std::string reports_to_json(std::span<const MetricReport> reports, const std::string& config_hash) {
  nlohmann::ordered_json doc;
  doc["config_hash"] = config_hash;
  doc["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["metric"] = r.metric;
    nlohmann::ordered_json values = nlohmann::ordered_json::object();
    for (int n = 1; n <= 4; ++n) {
      const auto& v = r.values[n - 1];
      values[std::to_string(n)] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    }
    j["values"] = values;
    j["geometric_mean"] =
        r.geometric_mean ? nlohmann::ordered_json(*r.geometric_mean) : nlohmann::ordered_json(nullptr);
    j["corpus"] = r.corpus;
    j["reference"] = r.reference;
    j["level"] = r.token_level ? "token" : "word";
    if (!r.error.empty()) j["note"] = r.error;
    doc["reports"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

}  // namespace carekit
