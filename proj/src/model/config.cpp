#include "carekit/model/config.hpp"

#include <string>

#include "carekit/numkit/errors.hpp"

namespace carekit {

void ModelConfig::validate() const {
  if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (n_heads < 1) throw ConfigError("n_heads must be >= 1");
  if (d_model < 1) throw ConfigError("d_model must be >= 1");
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") not divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
  if (max_seq_len < 1) throw ConfigError("max_seq_len must be >= 1");
  if (window && (*window < 1 || *window > max_seq_len)) {
    throw ConfigError("window must lie in [1, max_seq_len]");
  }
}

std::string_view to_string(DropoutMode mode) {
  switch (mode) {
    case DropoutMode::none: return "none";
    case DropoutMode::bernoulli: return "bernoulli";
    case DropoutMode::concrete: return "concrete";
    case DropoutMode::post_softmax_original: return "post_softmax_original";
  }
  return "none";
}

DropoutMode parse_dropout_mode(std::string_view text) {
  if (text == "none") return DropoutMode::none;
  if (text == "bernoulli") return DropoutMode::bernoulli;
  if (text == "concrete") return DropoutMode::concrete;
  if (text == "post_softmax_original") return DropoutMode::post_softmax_original;
  throw ConfigError("unknown dropout mode '" + std::string(text) + "'");
}

void DropoutSpec::validate() const {
  if (mode == DropoutMode::none) return;
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("dropout p must lie in (0,1)");
  if (!(tau > 0.0)) throw ConfigError("concrete temperature must be positive");
  if (!(mask_constant <= -1e3)) throw ConfigError("mask constant must be <= -1e3");
}

}  // namespace carekit
