#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carekit/model/config.hpp"
#include "carekit/model/trace.hpp"
#include "carekit/numkit/graph.hpp"
#include "carekit/numkit/rng.hpp"
#include "carekit/types.hpp"

namespace carekit {

template <typename Scalar>
struct NamedTensor {
  std::string name;
  std::shared_ptr<Tensor<Scalar>> tensor;
};

/// Attention sub-block parameters bound to a graph.
template <typename Scalar>
struct AttentionWeights {
  Var<Scalar> qkv_weight;  // [d x 3d]
  Var<Scalar> qkv_bias;    // [1 x 3d]
  Var<Scalar> out_weight;  // [d x d]
  Var<Scalar> out_bias;    // [1 x d]
  Var<Scalar> drop_logit;  // [1 x 1], logit of the Concrete dropout rate
};

template <typename Scalar>
struct AttentionLayerResult {
  Var<Scalar> output;
  AttentionTrace<Scalar> trace;
};

/// Multi-head causal self-attention over packed sequences.
///
/// `hidden` stacks every batch element's rows; `offsets` holds the first row
/// of each element plus a final end offset. Attention never crosses element
/// boundaries. With `training` false no dropout is applied and the recorded
/// post-dropout logits equal the pre-dropout ones.
template <typename Scalar>
AttentionLayerResult<Scalar> attention_layer(const Var<Scalar>& hidden,
                                             const AttentionWeights<Scalar>& weights,
                                             std::span<const Index> offsets,
                                             const ModelConfig& config,
                                             const DropoutSpec& dropout, bool training,
                                             int layer);

template <typename Scalar>
struct ForwardResult {
  Var<Scalar> logits;  // [N x V]
  Var<Scalar> hidden;  // final layer-norm output, [N x d]
  std::vector<AttentionTrace<Scalar>> traces;
  std::vector<Index> offsets;          // batch element b occupies rows [offsets[b], offsets[b+1])
  std::vector<Var<Scalar>> drop_rates;  // per-layer p as graph nodes (Concrete mode only)
};

/// Pre-norm decoder-only transformer with learned positions and GELU MLPs.
template <typename Scalar>
class Transformer {
 public:
  /// Weights ~ N(0, 0.02), biases and layer-norm shifts 0, gains 1.
  Transformer(const ModelConfig& config, CounterRng& init_rng);

  const ModelConfig& config() const { return config_; }

  ForwardResult<Scalar> forward(Graph<Scalar>& graph, std::span<const TokenSequence> batch,
                                const DropoutSpec& dropout, bool training) const;

  ForwardResult<Scalar> forward(Graph<Scalar>& graph, std::span<const TokenId> tokens,
                                const DropoutSpec& dropout, bool training) const;

  const std::vector<NamedTensor<Scalar>>& parameters() const { return params_; }
  std::vector<std::shared_ptr<Tensor<Scalar>>> parameter_tensors() const;
  std::shared_ptr<Tensor<Scalar>> find(std::string_view name) const;

  /// Output embedding matrix [V x d] (the token embedding when tied).
  const Tensor<Scalar>& output_embedding() const;

  double drop_rate(int layer) const;
  void set_drop_rate(int layer, double p);
  /// Pulls every learned rate back into [kMinDropRate, kMaxDropRate];
  /// returns the number of layers that needed clamping.
  int clamp_drop_rates();

  void zero_grad();

 private:
  struct Layer {
    std::shared_ptr<Tensor<Scalar>> ln1_gain, ln1_bias, qkv_weight, qkv_bias, out_weight,
        out_bias, ln2_gain, ln2_bias, fc_weight, fc_bias, proj_weight, proj_bias, drop_logit;
  };

  std::shared_ptr<Tensor<Scalar>> add_param(std::string name, Shape shape, CounterRng* rng,
                                            Scalar fill = Scalar(0));

  ModelConfig config_;
  std::vector<NamedTensor<Scalar>> params_;
  std::shared_ptr<Tensor<Scalar>> token_embedding_, position_embedding_, lnf_gain_, lnf_bias_,
      lm_head_;
  std::vector<Layer> layers_;
};

extern template class Transformer<double>;
extern template class Transformer<float>;

}  // namespace carekit
