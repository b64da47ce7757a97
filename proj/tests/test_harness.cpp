#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "carekit/harness/checkpoint.hpp"
#include "carekit/harness/config.hpp"
#include "carekit/harness/corpus.hpp"
#include "carekit/harness/decode.hpp"
#include "carekit/harness/evaluate.hpp"
#include "carekit/harness/tokenizer.hpp"
#include "carekit/harness/trainer.hpp"
#include "carekit/objectives/care.hpp"
#include "doctest.h"

using namespace carekit;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> synthetic_lines(std::uint64_t seed, int n) {
  static const std::vector<std::string> words{"the", "cat", "sat", "on", "a", "mat", "dog", "ran",
                                              "to", "red", "big", "sun", "and", "it", "was"};
  CounterRng rng(seed);
  std::vector<std::string> lines;
  for (int i = 0; i < n; ++i) {
    std::string line;
    const auto len = 3 + rng.below(5);
    for (std::uint64_t w = 0; w < len; ++w) {
      // skewed word choice
      const auto idx = std::min(rng.below(words.size()), rng.below(words.size()));
      line += (w ? " " : "") + words[idx];
    }
    lines.push_back(line + ".");
  }
  return lines;
}

RunConfig small_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.tokenizer = TokenizerKind::byte;
  c.model.n_layers = 2;
  c.model.n_heads = 2;
  c.model.d_model = 32;
  c.model.max_seq_len = 64;
  c.model.vocab_size = Tokenizer().size();
  c.train.batch_size = 4;
  c.train.lr = 3e-3;
  return c;
}

std::vector<TokenSample> samples_for(const RunConfig& c, const Tokenizer& tok,
                                     const std::vector<std::string>& lines) {
  return parse_corpus(lines, c.corpus_mode, tok, std::size_t(c.model.max_seq_len)).samples;
}

template <typename Scalar>
std::vector<double> loss_stream(Trainer<Scalar>& t, int steps) {
  std::vector<double> out;
  for (int i = 0; i < steps; ++i) out.push_back(t.step().loss.total);
  return out;
}

// Next-token distributions drawn from a hash of the context.
class TableModel : public NextTokenModel {
 public:
  TableModel(int vocab, std::uint64_t seed, double scale = 2.0) : vocab_(vocab), seed_(seed), scale_(scale) {}
  int vocab_size() const override { return vocab_; }
  std::vector<std::vector<double>> next_log_probs(std::span<const TokenSequence> contexts) const override {
    std::vector<std::vector<double>> out;
    for (const auto& ctx : contexts) {
      std::uint64_t h = seed_;
      for (TokenId t : ctx) h = fnv1a64(std::to_string(t) + ",", h);
      CounterRng rng(h);
      std::vector<double> logits(static_cast<std::size_t>(vocab_));
      for (auto& v : logits) v = scale_ * rng.normal();
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0;
      for (double v : logits) z += std::exp(v - mx);
      for (auto& v : logits) v = v - mx - std::log(z);
      out.push_back(std::move(logits));
    }
    return out;
  }

 private:
  int vocab_;
  std::uint64_t seed_;
  double scale_;
};

// Puts almost all mass on one token chosen by context length.
class ForcedModel : public NextTokenModel {
 public:
  explicit ForcedModel(TokenSequence path) : path_(std::move(path)) {}
  int vocab_size() const override { return 6; }
  std::vector<std::vector<double>> next_log_probs(std::span<const TokenSequence> contexts) const override {
    std::vector<std::vector<double>> out;
    for (const auto& ctx : contexts) {
      std::vector<double> lp(6, std::log(1e-6));
      const auto pos = std::min(ctx.size() - 1, path_.size() - 1);
      lp[std::size_t(path_[pos])] = std::log(1 - 5e-6);
      out.push_back(lp);
    }
    return out;
  }

 private:
  TokenSequence path_;
};

}  // namespace

TEST_CASE("bpe merges") {
  const std::vector<std::string> aaaa{"aaaa"};
  const auto one = Tokenizer::train_bpe(aaaa, Tokenizer().size() + 1);
  REQUIRE(one.merges().size() == 1);
  CHECK(one.merges()[0] == std::pair<TokenId, TokenId>{'a', 'a'});
  CHECK(one.encode("aaaa") == TokenSequence{257, 257});

  // by hand: an/na tie -> (a,n); then (an,a), (an,ana), (b,anana)
  const std::vector<std::string> banana{"banana"};
  const auto tok = Tokenizer::train_bpe(banana, 1000);
  const std::vector<std::pair<TokenId, TokenId>> expected{{'a', 'n'}, {257, 'a'}, {257, 258}, {'b', 259}};
  CHECK(tok.merges() == expected);
  CHECK(tok.piece(260) == "banana");
  CHECK(tok.encode("banana") == TokenSequence{260});

  CHECK_THROWS_AS(Tokenizer::train_bpe(aaaa, 257), ConfigError);
  CHECK_THROWS_AS(Tokenizer::train_bpe(std::vector<std::string>{}, 300), ContractError);
}

TEST_CASE("bpe round trip") {
  auto lines = synthetic_lines(1, 50);
  lines.push_back("caf\xc3\xa9 \xe2\x82\xac 5  spaces\ttab");
  const auto tok = Tokenizer::train_bpe(lines, 320);
  CHECK(tok.size() == 320);
  for (const auto& line : lines) CHECK(tok.decode(tok.encode(line)) == line);
  const auto back = Tokenizer::deserialize(tok.serialize());
  CHECK(back == tok);
  for (const auto& line : lines) CHECK(back.encode(line) == tok.encode(line));
  CHECK(tok.decode(TokenSequence{tok.eot()}) == std::string(kEndOfText));
}

TEST_CASE("corpus masks and truncation") {
  const Tokenizer tok;
  const auto cond = parse_corpus({"A.\tB C."}, CorpusMode::conditional, tok, 1024);
  REQUIRE(cond.samples.size() == 1);
  const auto& s = cond.samples[0];
  CHECK(s.tokens == TokenSequence{'A', '.', 'B', ' ', 'C', '.', tok.eot()});
  CHECK(s.mask == std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1, 1});
  CHECK(s.input(tok.eot()) == TokenSequence{tok.eot(), 'A', '.', 'B', ' ', 'C', '.'});

  const auto uncond = parse_corpus({"hello"}, CorpusMode::unconditional, tok, 1024);
  CHECK(std::all_of(uncond.samples[0].mask.begin(), uncond.samples[0].mask.end(), [](auto m) { return m == 1; }));

  const auto longer = parse_corpus({std::string(1100, 'x')}, CorpusMode::unconditional, tok, 1024);
  CHECK(longer.samples[0].tokens.size() == 1024);
  CHECK(longer.samples[0].mask.size() == 1024);

  std::vector<std::string> lines(20, "q\tr");
  lines[3] = "no tab";
  lines[5] = "";
  const auto some_bad = parse_corpus(lines, CorpusMode::conditional, tok, 64);
  CHECK(some_bad.malformed == 1);
  CHECK(some_bad.blank == 1);
  CHECK(some_bad.samples.size() == 18);
  lines[7] = "two\ttabs\there";
  lines[9] = "bad \xff utf8\tx";
  CHECK_THROWS_AS(parse_corpus(lines, CorpusMode::conditional, tok, 64), FormatError);

  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.txt", CorpusMode::unconditional, tok, 64), IoError);
}

TEST_CASE("loss ignores condition-region targets") {
  const Tokenizer tok;
  RunConfig c = small_config(3);
  CounterRng init(3);
  Transformer<double> model(c.model, init);
  const auto sample = make_sample(tok.encode("condition here"), tok.encode("then this"), tok.eot(), 64);
  const auto input = sample.input(tok.eot());
  auto loss_with = [&](const TokenSequence& targets) {
    Graph<double> g{CounterRng(0)};
    auto fwd = model.forward(g, input, DropoutSpec{}, false);
    LossInputs<double> in{fwd.logits, targets, sample.mask, fwd.traces};
    return loss_mle<double>(in).breakdown.total;
  };
  const double base = loss_with(sample.tokens);
  CounterRng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    TokenSequence perturbed = sample.tokens;
    for (std::size_t i = 0; i < sample.condition_length; ++i) perturbed[i] = TokenId(rng.below(256));
    CHECK(loss_with(perturbed) == base);
  }
  TokenSequence changed = sample.tokens;
  changed[sample.condition_length] = 'z';
  CHECK(loss_with(changed) != base);
}

TEST_CASE("config ini round trip") {
  RunConfig c = small_config(42);
  c.care.variant = Variant::care;
  c.care.gamma = 0.00125;
  c.dropout.mode = DropoutMode::bernoulli;
  c.dropout.p = 0.15;
  c.model.window = 7;
  c.decode.strategy = DecodeStrategy::sample;
  c.train.lr = 1.0 / 3;
  c.corpus_path = "data/x.txt";
  const auto text = c.to_ini();
  const auto back = RunConfig::from_ini(text);
  CHECK(back.to_ini() == text);
  CHECK(back.hash() == c.hash());
  CHECK(back.train.lr == 1.0 / 3);
  CHECK(back.model.window == 7);
  CHECK(*back.seed == 42);

  CHECK_THROWS_AS(RunConfig::from_ini("[model]\nlayers = 2\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_ini("[model]\nlayers = two\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig{}.require_seed(), ConfigError);
  RunConfig bad = c;
  bad.dropout.mode = DropoutMode::none;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip and errors") {
  RunConfig c = small_config(5);
  c.train.precision = Precision::f64;
  const auto lines = synthetic_lines(5, 16);
  const Tokenizer tok;
  Trainer<double> trainer(c, tok, samples_for(c, tok, lines));
  loss_stream(trainer, 3);
  const auto ckpt = trainer.checkpoint();
  const auto bytes = serialize_checkpoint(ckpt);
  const auto back = parse_checkpoint(bytes);
  CHECK(back.parameters == ckpt.parameters);
  CHECK(back.adam_m == ckpt.adam_m);
  CHECK(back.adam_v == ckpt.adam_v);
  CHECK(back.step == 3);
  CHECK(back.tokenizer == tok);
  CHECK(back.config.to_ini() == c.to_ini());
  CHECK(serialize_checkpoint(back) == bytes);

  const auto dir = fs::temp_directory_path() / "carekit_ckpt_test";
  fs::create_directories(dir);
  const auto path = (dir / "a.ckpt").string();
  checkpoint_save(ckpt, path);
  CHECK(checkpoint_load(path).parameters == ckpt.parameters);

  // logits from the reloaded model equal the in-memory ones
  const auto reloaded = model_from_checkpoint<double>(checkpoint_load(path));
  const TokenSequence probe{tok.eot(), 't', 'h', 'e'};
  Graph<double> g1{CounterRng(0)}, g2{CounterRng(0)};
  const auto a = trainer.model().forward(g1, probe, DropoutSpec{}, false).logits.value();
  const auto b = reloaded.forward(g2, probe, DropoutSpec{}, false).logits.value();
  CHECK(a == b);

  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 5)), TruncatedCheckpointError);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, 40)), TruncatedCheckpointError);
  CHECK_THROWS_AS(parse_checkpoint(bytes + "xyz"), TruncatedCheckpointError);
  std::string future = bytes;
  future.replace(future.find(" 1\n"), 3, " 9\n");
  CHECK_THROWS_AS(parse_checkpoint(future), CheckpointVersionError);
  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x40;
  CHECK_THROWS_AS(parse_checkpoint(flipped), CheckpointError);

  RunConfig wider = c;
  wider.model.d_model = 64;
  CounterRng rng(1);
  Transformer<double> other(wider.model, rng);
  const auto before = export_parameters(other);
  CHECK_THROWS_AS(import_parameters(other, ckpt.parameters), CheckpointShapeError);
  CHECK(export_parameters(other) == before);
  Checkpoint mismatched = ckpt;
  mismatched.config = wider;
  CHECK_THROWS_AS(model_from_checkpoint<double>(mismatched), CheckpointShapeError);
  fs::remove_all(dir);
}

TEST_CASE("care with zero gamma reproduces mle") {
  RunConfig mle = small_config(11);
  mle.dropout.mode = DropoutMode::bernoulli;
  RunConfig care = mle;
  care.care.variant = Variant::care;
  care.care.gamma = 0.0;
  const auto lines = synthetic_lines(11, 32);
  const Tokenizer tok;
  Trainer<float> a(mle, tok, samples_for(mle, tok, lines));
  Trainer<float> b(care, tok, samples_for(care, tok, lines));
  CHECK(loss_stream(a, 30) == loss_stream(b, 30));
}

TEST_CASE("training lowers nll and resumes bit-for-bit") {
  RunConfig c = small_config(21);
  c.model.d_model = 64;
  c.model.n_heads = 4;
  c.train.batch_size = 8;
  const auto lines = synthetic_lines(21, 64);
  const Tokenizer tok;
  const auto samples = samples_for(c, tok, lines);

  Trainer<float> full(c, tok, samples);
  std::vector<double> nll;
  for (int i = 0; i < 200; ++i) nll.push_back(full.step().loss.mle);
  const double head = (nll[0] + nll[1] + nll[2] + nll[3] + nll[4]) / 5;
  const double tail = (nll[195] + nll[196] + nll[197] + nll[198] + nll[199]) / 5;
  INFO("nll " << head << " -> " << tail);
  CHECK(tail < head);

  Trainer<float> first(c, tok, samples);
  loss_stream(first, 100);
  const auto ckpt = parse_checkpoint(serialize_checkpoint(first.checkpoint()));
  auto resumed = Trainer<float>::resume(ckpt, samples);
  CHECK(resumed.steps_done() == 100);
  std::vector<double> second;
  for (int i = 0; i < 100; ++i) second.push_back(resumed.step().loss.mle);
  CHECK(std::equal(second.begin(), second.end(), nll.begin() + 100));
  CHECK(export_parameters(resumed.model()) == export_parameters(full.model()));
}

TEST_CASE("beam width one is greedy") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const TableModel m(7, seed);
    const TokenSequence ctx{1, 2};
    CHECK(generate_beam(m, ctx, 0, 1, 12) == generate_greedy(m, ctx, 0, 12));
  }
}

TEST_CASE("beam follows a forced path") {
  const ForcedModel m({3, 1, 4, 1, 5, 2, 0});
  CHECK(generate_beam(m, TokenSequence{2}, 0, 3, 20) == TokenSequence{3, 1, 4, 1, 5, 2});
  CHECK(generate_greedy(m, TokenSequence{2}, 0, 20) == TokenSequence{3, 1, 4, 1, 5, 2});
  CHECK(generate_beam(m, TokenSequence{2}, 0, 3, 4) == TokenSequence{3, 1, 4, 1});
}

TEST_CASE("beam steps match brute-force enumeration") {
  // Each step's beam is the top two of every path whose proper prefixes
  // survived earlier steps, plus the finished survivors.
  const int vocab = 4, width = 2, steps = 3;
  const TokenId eot = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const TableModel m(vocab, 100 + seed, 1.5);
    const TokenSequence ctx{2};
    auto path_logprob = [&](const TokenSequence& path) {
      double lp = 0;
      TokenSequence c = ctx;
      for (TokenId t : path) {
        lp += m.next_log_probs(std::span<const TokenSequence>(&c, 1))[0][std::size_t(t)];
        c.push_back(t);
      }
      return lp;
    };
    auto better = [](const std::pair<double, TokenSequence>& a, const std::pair<double, TokenSequence>& b) {
      const double sa = a.first / double(a.second.size()), sb = b.first / double(b.second.size());
      if (sa != sb) return sa > sb;
      if (a.second.back() != b.second.back()) return a.second.back() < b.second.back();
      return a.second < b.second;
    };

    // all paths of length 1..steps, eot only at the end
    std::vector<TokenSequence> all{{}};
    std::vector<TokenSequence> paths;
    for (int len = 1; len <= steps; ++len) {
      std::vector<TokenSequence> next;
      for (const auto& p : all) {
        if (!p.empty() && p.back() == eot) continue;
        for (TokenId t = 0; t < vocab; ++t) {
          auto q = p;
          q.push_back(t);
          next.push_back(q);
          paths.push_back(q);
        }
      }
      all = std::move(next);
    }

    std::vector<std::vector<TokenSequence>> observed;
    BeamOptions opts{width, steps, [&](int, const std::vector<Hypothesis>& beam) {
                       std::vector<TokenSequence> s;
                       for (const auto& h : beam) s.push_back(h.tokens);
                       observed.push_back(s);
                     }};
    beam_search(m, ctx, eot, opts);

    std::vector<TokenSequence> survivors;
    for (int s = 0; s < steps; ++s) {
      std::vector<std::pair<double, TokenSequence>> pool;
      for (const auto& p : paths) {
        const bool kept_finished = std::find(survivors.begin(), survivors.end(), p) != survivors.end() &&
                                   p.back() == eot;
        bool extends = int(p.size()) == s + 1;
        if (extends && s > 0) {
          const TokenSequence parent(p.begin(), p.end() - 1);
          extends = parent.back() != eot &&
                    std::find(survivors.begin(), survivors.end(), parent) != survivors.end();
        }
        if (kept_finished || extends) pool.emplace_back(path_logprob(p), p);
      }
      std::sort(pool.begin(), pool.end(), better);
      survivors.clear();
      for (std::size_t i = 0; i < std::min<std::size_t>(width, pool.size()); ++i) survivors.push_back(pool[i].second);
      REQUIRE(std::size_t(s) < observed.size());
      CHECK(observed[std::size_t(s)] == survivors);
    }
  }
}

TEST_CASE("beam scores at least as well as greedy") {
  const TokenId eot = 0;
  int strictly_better = 0, worse = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const TableModel m(6, 1000 + seed, 2.0);
    const TokenSequence ctx{3};
    const int max_len = 6;
    auto with_end = [&](TokenSequence s) {
      if (int(s.size()) < max_len) s.push_back(eot);
      return s;
    };
    const double greedy = sequence_score(m, ctx, with_end(generate_greedy(m, ctx, eot, max_len)));
    for (int w : {2, 3, 5}) {
      const auto best = beam_search(m, ctx, eot, {w, max_len, {}});
      const double beam = best.score();
      if (beam < greedy - 1e-12) {
        ++worse;
        if (worse <= 3) MESSAGE("seed " << seed << " width " << w << ": beam " << beam << " < greedy " << greedy);
      }
      strictly_better += beam > greedy + 1e-12;
    }
  }
  INFO(worse << " of 600 beam searches scored below greedy");
  CHECK(worse == 0);
  CHECK(strictly_better > 0);
}

TEST_CASE("sampling filters") {
  const std::vector<double> lp{std::log(0.5), std::log(0.3), std::log(0.15), std::log(0.05)};
  const auto p = filter_distribution(lp, {50, 0.9, 1.0, 32, false});
  CHECK(p[0] == doctest::Approx(0.5 / 0.95).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.3 / 0.95).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(0.15 / 0.95).epsilon(1e-12));
  CHECK(p[3] == 0.0);
  CHECK(p[0] == doctest::Approx(0.5263).epsilon(1e-4));

  const auto all = filter_distribution(lp, {4, 1.0, 1.0, 32, false});
  for (std::size_t i = 0; i < 4; ++i) CHECK(all[i] == doctest::Approx(std::exp(lp[i])).epsilon(1e-12));
  const auto k2 = filter_distribution(lp, {2, 0.9, 1.0, 32, false});
  CHECK(k2[0] == doctest::Approx(0.5 / 0.8));
  CHECK(k2[2] == 0.0);

  CounterRng rng(9);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> logits(1 + rng.below(30));
    for (auto& v : logits) v = 3 * rng.normal();
    const auto argmax = std::max_element(logits.begin(), logits.end()) - logits.begin();
    const SamplingOptions o{1 + int(rng.below(10)), 0.01 + 0.99 * rng.uniform(), 0.2 + 2 * rng.uniform(), 32,
                            rng.bernoulli(0.5)};
    const auto q = filter_distribution(logits, o);
    CHECK(q[std::size_t(argmax)] > 0);
    double total = 0;
    for (double v : q) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TableModel m(9, seed);
    CounterRng r(seed);
    CHECK(generate_sample(m, TokenSequence{1}, 0, {1, 0.3, 1.0, 10, false}, r) ==
          generate_greedy(m, TokenSequence{1}, 0, 10));
  }
  const TableModel m(9, 77);
  CounterRng r1(5), r2(5);
  CHECK(generate_sample(m, TokenSequence{1}, 0, {}, r1) == generate_sample(m, TokenSequence{1}, 0, {}, r2));
}

TEST_CASE("evaluate reports") {
  const std::string data = CAREKIT_TEST_DATA;
  EvaluateInput same{data + "/eval_ref.txt", data + "/eval_ref.txt", std::nullopt, {"cnd", "bleu"}};
  const auto r = evaluate(same);
  REQUIRE(r.size() == 2);
  for (const auto& v : r[0].values) CHECK(*v == 0.0);
  for (const auto& v : r[1].values) CHECK(*v == doctest::Approx(100.0));

  EvaluateInput none{data + "/eval_gen.txt", std::nullopt, std::nullopt, {}};
  CHECK(evaluate(none).empty());

  EvaluateInput no_ref{data + "/eval_gen.txt", std::nullopt, std::nullopt, {"dist", "cnd"}};
  const auto partial = evaluate(no_ref);
  CHECK(partial[0].values[0].has_value());
  CHECK_FALSE(partial[1].values[0].has_value());

  EvaluateInput full{data + "/eval_gen.txt", data + "/eval_ref.txt", std::nullopt, known_metrics()};
  const auto json = reports_to_json(evaluate(full), "golden");
  CHECK(json == reports_to_json(evaluate(full), "golden"));
  CHECK(json == read_file(data + "/eval_golden.json"));
  CHECK(reports_to_csv(evaluate(full)) == read_file(data + "/eval_golden.csv"));
}
