#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carekit/harness/corpus.hpp"
#include "carekit/model/config.hpp"
#include "carekit/objectives/care.hpp"

namespace carekit {

enum class DecodeStrategy { beam, sample };
enum class Precision { f32, f64 };
enum class TokenizerKind { bpe, byte };

std::string_view to_string(DecodeStrategy s);
std::string_view to_string(Precision p);
std::string_view to_string(TokenizerKind k);

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::beam;
  int beam_width = 4;
  int top_k = 50;
  double top_p = 0.9;
  double temperature = 1.0;
  int max_new_tokens = 32;

  void validate() const;
};

struct TrainConfig {
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 16;
  long max_steps = 1000;
  long log_interval = 10;
  long checkpoint_interval = 0;  // 0: final checkpoint only
  Precision precision = Precision::f32;
};

/// Every setting of a run. The INI form has one section per group:
///
///   [model]     layers heads d_model vocab_size max_seq_len window tie_embeddings
///   [care]      variant alpha gamma delta freeze_steps warmup_steps
///   [dropout]   mode p tau mask_constant
///   [train]     seed lr adam_beta1 adam_beta2 adam_eps batch_size max_steps
///               log_interval checkpoint_interval precision
///   [data]      corpus mode tokenizer
///   [decode]    strategy beam_width top_k top_p temperature max_new_tokens
///   [output]    dir
///
/// `seed` has no default. `window = none` keeps full causal attention.
struct RunConfig {
  ModelConfig model;
  CareConfig care;
  DropoutSpec dropout;
  TrainConfig train;
  DecodeConfig decode;
  std::optional<std::uint64_t> seed;
  std::string corpus_path;
  CorpusMode corpus_mode = CorpusMode::unconditional;
  TokenizerKind tokenizer = TokenizerKind::bpe;
  std::string out_dir = "run";

  std::uint64_t require_seed() const;

  /// Hard errors (ConfigError); also checks variant/dropout compatibility.
  void validate() const;
  /// Logs values outside the published tuning ranges.
  void warn_ranges() const;

  /// Canonical INI text: fixed key order, shortest round-trip numbers.
  std::string to_ini() const;
  static RunConfig from_ini(std::string_view text);
  static RunConfig load(const std::string& path);

  /// FNV-1a 64 of to_ini(), as 16 hex digits.
  std::string hash() const;
};

/// Reads a whole file; IoError when it cannot be opened.
std::string read_file(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::string& path, std::string_view contents);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace carekit
