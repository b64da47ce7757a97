#pragma once

#include <functional>
#include <span>
#include <vector>

#include "carekit/model/transformer.hpp"
#include "carekit/numkit/rng.hpp"
#include "carekit/types.hpp"

namespace carekit {

/// Anything that scores the next token of a batch of contexts.
class NextTokenModel {
 public:
  virtual ~NextTokenModel() = default;
  virtual int vocab_size() const = 0;
  /// Log-probabilities [contexts.size() x vocab] of the token after each context.
  virtual std::vector<std::vector<double>> next_log_probs(
      std::span<const TokenSequence> contexts) const = 0;
};

/// Inference adapter over a Transformer: no dropout, no gradient tape, and
/// contexts longer than max_seq_len keep only their most recent tokens. An
/// empty context is fed the end token alone.
template <typename Scalar>
class TransformerNextToken : public NextTokenModel {
 public:
  TransformerNextToken(const Transformer<Scalar>& model, TokenId eot) : model_(model), eot_(eot) {}
  int vocab_size() const override { return model_.config().vocab_size; }
  std::vector<std::vector<double>> next_log_probs(
      std::span<const TokenSequence> contexts) const override;

 private:
  const Transformer<Scalar>& model_;
  TokenId eot_;
};

extern template class TransformerNextToken<float>;
extern template class TransformerNextToken<double>;

struct Hypothesis {
  TokenSequence tokens;  // generated continuation, including a final end token if finished
  double log_prob = 0;
  bool finished = false;

  /// log_prob / length; 0 for the empty hypothesis.
  double score() const;
};

/// Ranking used everywhere in beam search: higher score first, then smaller
/// last token id, then lexicographically smaller token sequence.
bool hypothesis_before(const Hypothesis& a, const Hypothesis& b);

struct BeamOptions {
  int beam_width = 4;
  int max_len = 32;
  /// Called with the kept hypotheses after every expansion step.
  std::function<void(int step, const std::vector<Hypothesis>& beam)> on_step;
};

/// Length-normalized beam search. Finished hypotheses stay in the candidate
/// pool and compete with extensions of unfinished ones. Returns the best
/// hypothesis; its tokens exclude the end token.
Hypothesis beam_search(const NextTokenModel& model, const TokenSequence& context, TokenId eot,
                       const BeamOptions& options);

TokenSequence generate_beam(const NextTokenModel& model, const TokenSequence& context, TokenId eot,
                            int beam_width, int max_len);

/// Argmax decoding, ties to the smaller id.
TokenSequence generate_greedy(const NextTokenModel& model, const TokenSequence& context, TokenId eot,
                              int max_len);

struct SamplingOptions {
  int top_k = 50;
  double top_p = 0.9;
  double temperature = 1.0;
  int max_len = 32;
  /// Apply nucleus before top-k instead of after.
  bool nucleus_first = false;
};

/// Temperature, then top-k, then nucleus (or the reverse when
/// nucleus_first), then renormalization. Each cut keeps tokens in order of
/// decreasing probability with ties to the smaller id; the nucleus keeps the
/// shortest prefix whose mass (renormalized over what survived the previous
/// cut) reaches top_p. Returns a full-length probability vector.
std::vector<double> filter_distribution(std::span<const double> log_probs,
                                        const SamplingOptions& options);

TokenSequence generate_sample(const NextTokenModel& model, const TokenSequence& context, TokenId eot,
                              const SamplingOptions& options, CounterRng& rng);

/// Score of a fixed continuation under the beam normalization.
double sequence_score(const NextTokenModel& model, const TokenSequence& context,
                      const TokenSequence& continuation);

}  // namespace carekit
