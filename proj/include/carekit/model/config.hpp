#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace carekit {

/// Architecture of the decoder-only transformer.
struct ModelConfig {
  int n_layers = 4;
  int n_heads = 4;
  int d_model = 128;
  int vocab_size = 512;
  int max_seq_len = 256;
  /// Local attention width (Pattern baseline); unset means full causal prefix.
  std::optional<int> window;
  bool tie_embeddings = true;

  int d_head() const { return d_model / n_heads; }

  /// Throws ConfigError when the configuration is inconsistent.
  void validate() const;
};

enum class DropoutMode { none, bernoulli, concrete, post_softmax_original };

std::string_view to_string(DropoutMode mode);
DropoutMode parse_dropout_mode(std::string_view text);

/// Attention dropout. `bernoulli` and `concrete` act on pre-softmax logits by
/// adding `mask_constant` to dropped cells; `post_softmax_original` is the
/// standard dropout on normalized weights.
struct DropoutSpec {
  DropoutMode mode = DropoutMode::none;
  double p = 0.1;
  double tau = 0.1;
  double mask_constant = -1e4;

  void validate() const;
};

/// Bounds for a learned Concrete dropout rate.
inline constexpr double kMinDropRate = 1e-3;
inline constexpr double kMaxDropRate = 1.0 - 1e-3;

}  // namespace carekit
