#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "carekit/harness/config.hpp"
#include "carekit/harness/tokenizer.hpp"
#include "carekit/model/transformer.hpp"
#include "carekit/numkit/adam.hpp"
#include "carekit/numkit/rng.hpp"

namespace carekit {

class CheckpointError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// File ends before the declared payload, or bytes follow it.
class TruncatedCheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Stored array does not match the shape the config implies.
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;  // row-major; exact for both storage dtypes

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

/// Complete training state.
///
/// On disk: a text header (magic + version, config INI, tokenizer, counters,
/// rng states, array table with name/dtype/shape/offset) terminated by
/// `end_header`, then the little-endian payload. The payload carries an
/// FNV-1a checksum in the header.
struct Checkpoint {
  static constexpr int kVersion = 1;

  int version = kVersion;
  RunConfig config;
  Tokenizer tokenizer;
  long step = 0;
  RngState data_rng;
  RngState dropout_rng;
  long adam_step = 0;
  std::vector<NamedArray> parameters;
  std::vector<NamedArray> adam_m;  // empty before the first update
  std::vector<NamedArray> adam_v;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void checkpoint_save(const Checkpoint& ckpt, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);

template <typename Scalar>
std::vector<NamedArray> export_parameters(const Transformer<Scalar>& model);

/// Copies stored values into the model after checking every name and shape.
/// Nothing is written unless all arrays match.
template <typename Scalar>
void import_parameters(Transformer<Scalar>& model, const std::vector<NamedArray>& arrays);

template <typename Scalar>
std::vector<NamedArray> export_adam(const Transformer<Scalar>& model,
                                    const std::vector<Matrix<Scalar>>& moments);

template <typename Scalar>
std::vector<Matrix<Scalar>> import_adam(const Transformer<Scalar>& model,
                                        const std::vector<NamedArray>& arrays);

/// Builds a model from the checkpoint's config and parameters (inference use).
template <typename Scalar>
Transformer<Scalar> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace carekit
