#include "carekit/harness/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace carekit {

template <typename Scalar>
std::vector<std::vector<double>> TransformerNextToken<Scalar>::next_log_probs(
    std::span<const TokenSequence> contexts) const {
  const auto max_len = static_cast<std::size_t>(model_.config().max_seq_len);
  std::vector<TokenSequence> batch;
  batch.reserve(contexts.size());
  for (const auto& ctx : contexts) {
    TokenSequence seq;
    seq.reserve(ctx.size() + 1);
    seq.push_back(eot_);
    seq.insert(seq.end(), ctx.begin(), ctx.end());
    if (seq.size() > max_len) seq.erase(seq.begin(), seq.end() - static_cast<long>(max_len));
    batch.push_back(std::move(seq));
  }
  Graph<Scalar> graph;
  graph.set_grad_enabled(false);
  const auto fwd = model_.forward(graph, std::span<const TokenSequence>(batch), DropoutSpec{}, false);
  const auto& logits = fwd.logits.value();
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto row = logits.row(fwd.offsets[b + 1] - 1).template cast<double>();
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    std::vector<double> lp(static_cast<std::size_t>(row.size()));
    for (Index v = 0; v < row.size(); ++v) lp[static_cast<std::size_t>(v)] = row(v) - lse;
    out.push_back(std::move(lp));
  }
  return out;
}

template class TransformerNextToken<float>;
template class TransformerNextToken<double>;

double Hypothesis::score() const {
  return tokens.empty() ? 0.0 : log_prob / static_cast<double>(tokens.size());
}

bool hypothesis_before(const Hypothesis& a, const Hypothesis& b) {
  // Equal lengths compare raw log-probs: same order, one rounding fewer.
  if (a.tokens.size() == b.tokens.size()) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  } else {
    const double sa = a.score(), sb = b.score();
    if (sa != sb) return sa > sb;
  }
  const TokenId la = a.tokens.empty() ? -1 : a.tokens.back();
  const TokenId lb = b.tokens.empty() ? -1 : b.tokens.back();
  if (la != lb) return la < lb;
  return a.tokens < b.tokens;
}

Hypothesis beam_search(const NextTokenModel& model, const TokenSequence& context, TokenId eot,
                       const BeamOptions& options) {
  if (options.beam_width < 1) throw ConfigError("beam_width must be >= 1");
  if (options.max_len < 0) throw ConfigError("max_len must be >= 0");
  const auto width = static_cast<std::size_t>(options.beam_width);
  std::vector<Hypothesis> beam(1);
  for (int step = 0; step < options.max_len; ++step) {
    std::vector<Hypothesis> pool;
    std::vector<const Hypothesis*> active;
    std::vector<TokenSequence> contexts;
    for (const auto& h : beam) {
      if (h.finished) {
        pool.push_back(h);
      } else {
        active.push_back(&h);
        TokenSequence ctx = context;
        ctx.insert(ctx.end(), h.tokens.begin(), h.tokens.end());
        contexts.push_back(std::move(ctx));
      }
    }
    if (active.empty()) break;
    const auto lp = model.next_log_probs(contexts);

    // Cheap candidates first; only the survivors get their token vectors built.
    struct Candidate {
      std::size_t parent;
      TokenId token;
      double log_prob;
    };
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t v = 0; v < lp[i].size(); ++v) {
        cands.push_back({i, static_cast<TokenId>(v), active[i]->log_prob + lp[i][v]});
      }
    }
    auto materialize = [&](const Candidate& c) {
      Hypothesis h;
      h.tokens = active[c.parent]->tokens;
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      h.finished = c.token == eot;
      return h;
    };
    // Every unfinished hypothesis has the same length, so ranking extensions
    // by log-prob, last token and parent order matches hypothesis_before.
    auto cand_before = [&](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.token != b.token) return a.token < b.token;
      return active[a.parent]->tokens < active[b.parent]->tokens;
    };
    const std::size_t keep = std::min(width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(), cand_before);
    for (std::size_t i = 0; i < keep; ++i) pool.push_back(materialize(cands[i]));

    std::sort(pool.begin(), pool.end(), hypothesis_before);
    if (pool.size() > width) pool.resize(width);
    beam = std::move(pool);
    if (options.on_step) options.on_step(step, beam);
  }
  Hypothesis best = beam.front();
  if (best.finished && !best.tokens.empty()) best.tokens.pop_back();
  return best;
}

TokenSequence generate_beam(const NextTokenModel& model, const TokenSequence& context, TokenId eot,
                            int beam_width, int max_len) {
  return beam_search(model, context, eot, {beam_width, max_len, {}}).tokens;
}

TokenSequence generate_greedy(const NextTokenModel& model, const TokenSequence& context, TokenId eot,
                              int max_len) {
  TokenSequence out;
  TokenSequence ctx = context;
  for (int step = 0; step < max_len; ++step) {
    const auto lp = model.next_log_probs(std::span<const TokenSequence>(&ctx, 1)).front();
    const auto best = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (best == eot) break;
    out.push_back(best);
    ctx.push_back(best);
  }
  return out;
}

namespace {

std::vector<std::size_t> by_probability(std::span<const double> p) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  return order;
}

void cut_top_k(std::vector<std::size_t>& kept, int k) {
  if (kept.size() > static_cast<std::size_t>(k)) kept.resize(static_cast<std::size_t>(k));
}

void cut_nucleus(std::vector<std::size_t>& kept, std::span<const double> p, double top_p) {
  double total = 0;
  for (auto i : kept) total += p[i];
  const double target = top_p * total;
  double cum = 0;
  std::size_t n = 0;
  while (n < kept.size()) {
    cum += p[kept[n++]];
    if (cum >= target * (1 - 1e-12)) break;
  }
  kept.resize(n);
}

}  // namespace

std::vector<double> filter_distribution(std::span<const double> log_probs,
                                        const SamplingOptions& options) {
  if (options.top_k < 1) throw ConfigError("top_k must be >= 1");
  if (!(options.top_p > 0.0 && options.top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
  if (!(options.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (log_probs.empty()) throw ContractError("empty distribution");
  std::vector<double> p(log_probs.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : log_probs) mx = std::max(mx, v / options.temperature);
  double z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(log_probs[i] / options.temperature - mx);
  for (auto& v : p) v /= z;

  auto kept = by_probability(p);
  if (options.nucleus_first) {
    cut_nucleus(kept, p, options.top_p);
    cut_top_k(kept, options.top_k);
  } else {
    cut_top_k(kept, options.top_k);
    cut_nucleus(kept, p, options.top_p);
  }
  double mass = 0;
  for (auto i : kept) mass += p[i];
  std::vector<double> out(p.size(), 0.0);
  for (auto i : kept) out[i] = p[i] / mass;
  return out;
}

TokenSequence generate_sample(const NextTokenModel& model, const TokenSequence& context, TokenId eot,
                              const SamplingOptions& options, CounterRng& rng) {
  TokenSequence out;
  TokenSequence ctx = context;
  for (int step = 0; step < options.max_len; ++step) {
    const auto lp = model.next_log_probs(std::span<const TokenSequence>(&ctx, 1)).front();
    const auto probs = filter_distribution(lp, options);
    const double u = rng.uniform();
    double cum = 0;
    TokenId pick = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0) continue;
      pick = static_cast<TokenId>(i);
      cum += probs[i];
      if (u < cum) break;
    }
    if (pick == eot) break;
    out.push_back(pick);
    ctx.push_back(pick);
  }
  return out;
}

double sequence_score(const NextTokenModel& model, const TokenSequence& context,
                      const TokenSequence& continuation) {
  if (continuation.empty()) return 0.0;
  double total = 0;
  TokenSequence ctx = context;
  for (TokenId t : continuation) {
    total += model.next_log_probs(std::span<const TokenSequence>(&ctx, 1)).front().at(static_cast<std::size_t>(t));
    ctx.push_back(t);
  }
  return total / static_cast<double>(continuation.size());
}

}  // namespace carekit
