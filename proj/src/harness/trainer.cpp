#include "carekit/harness/trainer.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "carekit/diagnostics/verifiers.hpp"

namespace carekit {

namespace {

constexpr std::uint64_t kInitStream = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kDataStream = 0xD1B54A32D192ED03ULL;
constexpr std::uint64_t kDropoutStream = 0x8CB92BA72F3D8DD7ULL;

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Mean over batch elements of the eta statistics of the target probabilities
// at trainable positions.
template <typename Scalar>
EtaStatistics batch_eta(const Matrix<Scalar>& logits, std::span<const Index> offsets,
                        std::span<const TokenId> targets, std::span<const std::uint8_t> mask) {
  EtaStatistics mean;
  long count = 0;
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    std::vector<double> p;
    for (Index r = offsets[b]; r < offsets[b + 1]; ++r) {
      if (!mask[static_cast<std::size_t>(r)]) continue;
      const auto row = logits.row(r).template cast<double>();
      const double mx = row.maxCoeff();
      const double z = (row.array() - mx).exp().sum();
      p.push_back(std::exp(double(row(targets[static_cast<std::size_t>(r)])) - mx) / z);
    }
    if (p.empty()) continue;
    const auto eta = eta_statistics(p);
    mean.main += eta.main;
    mean.appendix_min += eta.appendix_min;
    ++count;
  }
  if (count > 0) {
    mean.main /= double(count);
    mean.appendix_min /= double(count);
  }
  return mean;
}

}  // namespace

std::string metrics_csv_header(int n_layers) {
  std::string h = "step,total,mle,reg,entropy,effective_gamma";
  for (int l = 0; l < n_layers; ++l) h += ",p_layer_" + std::to_string(l);
  h += ",attn_shannon,attn_renyi,eta_main,eta_appendix_min\n";
  return h;
}

std::string metrics_csv_row(const StepRecord& r) {
  std::string row = std::to_string(r.step) + "," + num(r.loss.total) + "," + num(r.loss.mle) + "," +
                    num(r.loss.reg) + "," + num(r.loss.entropy) + "," + num(r.loss.effective_gamma);
  for (double p : r.drop_rates) row += "," + num(p);
  row += "," + num(r.attention.shannon) + "," + num(r.attention.renyi) + "," + num(r.eta_main) + "," +
         num(r.eta_appendix_min) + "\n";
  return row;
}

template <typename Scalar>
Trainer<Scalar>::Trainer(RunConfig config, Tokenizer tokenizer, std::vector<TokenSample> samples,
                         CounterRng init_rng)
    : config_(std::move(config)),
      tokenizer_(std::move(tokenizer)),
      samples_(std::move(samples)),
      model_(config_.model, init_rng),
      params_(model_.parameter_tensors()),
      data_rng_(config_.require_seed() ^ kDataStream),
      dropout_rng_{config_.require_seed() ^ kDropoutStream, 0} {
  config_.validate();
  if (samples_.empty()) throw ContractError("training needs at least one sample");
  if (tokenizer_.size() > config_.model.vocab_size) {
    throw ConfigError("tokenizer has " + std::to_string(tokenizer_.size()) +
                      " ids but the model vocabulary is " + std::to_string(config_.model.vocab_size));
  }
  for (const auto& s : samples_) {
    if (s.tokens.size() > static_cast<std::size_t>(config_.model.max_seq_len)) {
      throw LengthError("sample longer than max_seq_len");
    }
  }
}

template <typename Scalar>
Trainer<Scalar>::Trainer(RunConfig config, Tokenizer tokenizer, std::vector<TokenSample> samples)
    : Trainer(config, std::move(tokenizer), std::move(samples),
              CounterRng(config.require_seed() ^ kInitStream)) {}

template <typename Scalar>
Trainer<Scalar> Trainer<Scalar>::resume(const Checkpoint& ckpt, std::vector<TokenSample> samples) {
  Trainer t(ckpt.config, ckpt.tokenizer, std::move(samples), CounterRng(0));
  import_parameters(t.model_, ckpt.parameters);
  t.adam_.m = import_adam(t.model_, ckpt.adam_m);
  t.adam_.v = import_adam(t.model_, ckpt.adam_v);
  t.adam_.step = ckpt.adam_step;
  t.data_rng_ = CounterRng(ckpt.data_rng);
  t.dropout_rng_ = ckpt.dropout_rng;
  t.step_ = ckpt.step;
  return t;
}

template <typename Scalar>
StepRecord Trainer<Scalar>::step() {
  const int batch = config_.train.batch_size;
  std::vector<TokenSequence> inputs;
  TokenSequence targets;
  std::vector<std::uint8_t> mask;
  const TokenId eot = tokenizer_.eot();
  for (int b = 0; b < batch; ++b) {
    const auto& s = samples_[data_rng_.below(samples_.size())];
    inputs.push_back(s.input(eot));
    targets.insert(targets.end(), s.tokens.begin(), s.tokens.end());
    mask.insert(mask.end(), s.mask.begin(), s.mask.end());
  }

  StepRecord rec;
  try {
    Graph<Scalar> graph{CounterRng(dropout_rng_)};
    model_.zero_grad();
    auto fwd = model_.forward(graph, std::span<const TokenSequence>(inputs), config_.dropout, true);
    LossInputs<Scalar> in{fwd.logits, targets, mask, fwd.traces};
    auto loss = variant_loss<Scalar>(in, fwd.drop_rates, config_.care, step_);
    if (!std::isfinite(loss.breakdown.total)) throw NumericError("loss is not finite");
    graph.backward(loss.total);
    for (const auto& p : params_) {
      if (p->has_grad() && !p->grad().allFinite()) throw NumericError("gradient is not finite");
    }
    adam_step<Scalar>(params_, adam_, config_.train.lr,
                      {config_.train.adam_beta1, config_.train.adam_beta2, config_.train.adam_eps});
    dropout_rng_ = graph.rng().state();

    rec.loss = loss.breakdown;
    rec.attention = attention_entropy<Scalar>(fwd.traces, config_.care.alpha);
    const auto eta = batch_eta(fwd.logits.value(), fwd.offsets, targets, mask);
    rec.eta_main = eta.main;
    rec.eta_appendix_min = eta.appendix_min;
  } catch (const NumericError& e) {
    throw TrainingAborted("training aborted at step " + std::to_string(step_ + 1) + ": " + e.what() +
                          "; last good checkpoint: " +
                          (last_checkpoint_.empty() ? std::string("none") : last_checkpoint_));
  }
  if (config_.dropout.mode == DropoutMode::concrete) {
    if (int n = model_.clamp_drop_rates()) spdlog::debug("clamped {} dropout rate(s)", n);
  }
  ++step_;
  rec.step = step_;
  for (int l = 0; l < config_.model.n_layers; ++l) {
    rec.drop_rates.push_back(config_.dropout.mode == DropoutMode::concrete ? model_.drop_rate(l)
                             : config_.dropout.mode == DropoutMode::none   ? 0.0
                                                                           : config_.dropout.p);
  }
  return rec;
}

template <typename Scalar>
Checkpoint Trainer<Scalar>::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.tokenizer = tokenizer_;
  c.step = step_;
  c.data_rng = data_rng_.state();
  c.dropout_rng = dropout_rng_;
  c.adam_step = adam_.step;
  c.parameters = export_parameters(model_);
  c.adam_m = export_adam(model_, adam_.m);
  c.adam_v = export_adam(model_, adam_.v);
  return c;
}

template class Trainer<float>;
template class Trainer<double>;

Tokenizer prepare_tokenizer(RunConfig& config, const std::vector<std::string>& lines) {
  Tokenizer tok;
  if (config.tokenizer == TokenizerKind::bpe) {
    std::vector<std::string> texts;
    for (const auto& line : lines) {
      if (config.corpus_mode == CorpusMode::conditional) {
        const auto tab = line.find('\t');
        texts.push_back(line.substr(0, tab));
        if (tab != std::string::npos) texts.push_back(line.substr(tab + 1));
      } else {
        texts.push_back(line);
      }
    }
    tok = Tokenizer::train_bpe(texts, config.model.vocab_size);
  }
  if (tok.size() != config.model.vocab_size) {
    spdlog::info("model vocab_size set to tokenizer size {}", tok.size());
    config.model.vocab_size = tok.size();
  }
  return tok;
}

namespace {

template <typename Scalar>
TrainRunResult run_typed(const RunConfig& requested, const std::optional<std::string>& resume_from,
                         const std::optional<Checkpoint>& resume) {
  namespace fs = std::filesystem;
  std::optional<Trainer<Scalar>> trainer;
  RunConfig config = requested;
  if (resume) {
    const Checkpoint& ckpt = *resume;
    config = ckpt.config;
    config.train.max_steps = requested.train.max_steps;
    config.out_dir = requested.out_dir;
    auto lines = read_lines(config.corpus_path);
    auto corpus = parse_corpus(lines, config.corpus_mode, ckpt.tokenizer,
                               static_cast<std::size_t>(config.model.max_seq_len));
    Checkpoint adjusted = ckpt;
    adjusted.config = config;
    trainer.emplace(Trainer<Scalar>::resume(adjusted, std::move(corpus.samples)));
    trainer->set_last_checkpoint(*resume_from);
    spdlog::info("resumed from {} at step {}", *resume_from, ckpt.step);
  } else {
    auto lines = read_lines(config.corpus_path);
    Tokenizer tok = prepare_tokenizer(config, lines);
    auto corpus = parse_corpus(lines, config.corpus_mode, tok,
                               static_cast<std::size_t>(config.model.max_seq_len));
    trainer.emplace(config, std::move(tok), std::move(corpus.samples));
  }
  config.validate();
  config.warn_ranges();

  const fs::path out(config.out_dir);
  fs::create_directories(out / "checkpoints");
  write_file_atomic((out / "config.ini").string(), config.to_ini());
  write_file_atomic((out / "tokenizer.txt").string(), trainer->tokenizer().serialize());

  const fs::path csv_path = out / "metrics.csv";
  const bool append = resume_from && fs::exists(csv_path);
  std::ofstream csv(csv_path, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw IoError("cannot write '" + csv_path.string() + "'");
  if (!append) csv << metrics_csv_header(config.model.n_layers);

  TrainRunResult result;
  const long log_every = config.train.log_interval;
  const long ckpt_every = config.train.checkpoint_interval;
  while (trainer->steps_done() < config.train.max_steps) {
    StepRecord rec = trainer->step();
    const bool last = rec.step == config.train.max_steps;
    if (rec.step % log_every == 0 || last) {
      csv << metrics_csv_row(rec) << std::flush;
      spdlog::info("step {:>6}  loss {:.5f}  mle {:.5f}  reg {:.4g}  attn_H {:.4f}", rec.step,
                   rec.loss.total, rec.loss.mle, rec.loss.reg, rec.attention.shannon);
    }
    if (ckpt_every > 0 && rec.step % ckpt_every == 0 && !last) {
      const auto path = (out / "checkpoints" / ("step_" + std::to_string(rec.step) + ".ckpt")).string();
      checkpoint_save(trainer->checkpoint(), path);
      trainer->set_last_checkpoint(path);
    }
    result.history.push_back(std::move(rec));
  }
  result.final_checkpoint = (out / "final.ckpt").string();
  checkpoint_save(trainer->checkpoint(), result.final_checkpoint);
  spdlog::info("wrote {}", result.final_checkpoint);
  return result;
}

}  // namespace

TrainRunResult run_training(RunConfig config, const std::optional<std::string>& resume_from) {
  std::optional<Checkpoint> resume;
  Precision precision = config.train.precision;
  if (resume_from) {
    resume = checkpoint_load(*resume_from);
    precision = resume->config.train.precision;
  } else {
    config.validate();
    if (config.corpus_path.empty()) throw ConfigError("[data] corpus is not set");
  }
  if (precision == Precision::f32) return run_typed<float>(config, resume_from, resume);
  return run_typed<double>(config, resume_from, resume);
}

}  // namespace carekit
