#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "carekit/harness/checkpoint.hpp"
#include "carekit/harness/config.hpp"
#include "carekit/harness/corpus.hpp"
#include "carekit/model/transformer.hpp"
#include "carekit/objectives/care.hpp"

namespace carekit {

/// Non-finite loss or activation during training.
class TrainingAborted : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Everything logged for one optimizer step.
struct StepRecord {
  long step = 0;  // 1-based count of completed updates
  LossBreakdown loss;
  AttentionEntropy attention;
  double eta_main = 0;
  double eta_appendix_min = 0;
  std::vector<double> drop_rates;  // per layer
};

std::string metrics_csv_header(int n_layers);
std::string metrics_csv_row(const StepRecord& r);

/// Seeded single-threaded training loop. Batches are drawn with replacement
/// from the samples; the data stream and the dropout stream have separate
/// generators so both can be checkpointed.
template <typename Scalar>
class Trainer {
 public:
  Trainer(RunConfig config, Tokenizer tokenizer, std::vector<TokenSample> samples);

  /// Restores model, optimizer, counters and generators from `ckpt`.
  static Trainer resume(const Checkpoint& ckpt, std::vector<TokenSample> samples);

  /// One optimizer update. Throws TrainingAborted on non-finite values.
  StepRecord step();

  Checkpoint checkpoint() const;

  long steps_done() const { return step_; }
  const RunConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  const Transformer<Scalar>& model() const { return model_; }
  Transformer<Scalar>& model() { return model_; }

  /// Path reported when a later step aborts.
  void set_last_checkpoint(std::string path) { last_checkpoint_ = std::move(path); }

 private:
  Trainer(RunConfig config, Tokenizer tokenizer, std::vector<TokenSample> samples,
          CounterRng init_rng);

  RunConfig config_;
  Tokenizer tokenizer_;
  std::vector<TokenSample> samples_;
  Transformer<Scalar> model_;
  std::vector<std::shared_ptr<Tensor<Scalar>>> params_;
  AdamState<Scalar> adam_;
  CounterRng data_rng_;
  RngState dropout_rng_;
  long step_ = 0;
  std::string last_checkpoint_;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

/// Fits (or skips) the tokenizer the config asks for and sets
/// config.model.vocab_size to its size.
Tokenizer prepare_tokenizer(RunConfig& config, const std::vector<std::string>& lines);

struct TrainRunResult {
  std::vector<StepRecord> history;
  std::string final_checkpoint;
};

/// Full `train` command: loads the corpus, trains (or resumes), writes
/// metrics.csv, config.ini, periodic checkpoints and final.ckpt under
/// config.out_dir.
TrainRunResult run_training(RunConfig config, const std::optional<std::string>& resume_from = {});

}  // namespace carekit
