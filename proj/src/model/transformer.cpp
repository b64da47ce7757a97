#include "carekit/model/transformer.hpp"

#include <cmath>
#include <map>
#include <string>

#include "carekit/model/dropout.hpp"
#include "carekit/numkit/ops.hpp"

namespace carekit {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

template <typename Scalar>
Matrix<Scalar> drop_indicators(const MaskMatrix& visible, double p, CounterRng& rng) {
  Matrix<Scalar> drops = Matrix<Scalar>::Zero(visible.rows(), visible.cols());
  for (Index t = 0; t < visible.rows(); ++t) {
    const auto row = bernoulli_drop_row(static_cast<std::size_t>(visible.row(t).count()), p, rng);
    std::size_t k = 0;
    for (Index j = 0; j < visible.cols(); ++j) {
      if (visible(t, j)) drops(t, j) = row[k++] ? Scalar(1) : Scalar(0);
    }
  }
  return drops;
}

}  // namespace

template <typename Scalar>
AttentionLayerResult<Scalar> attention_layer(const Var<Scalar>& hidden,
                                             const AttentionWeights<Scalar>& weights,
                                             std::span<const Index> offsets,
                                             const ModelConfig& config,
                                             const DropoutSpec& dropout, bool training,
                                             int layer) {
  Graph<Scalar>& g = hidden.graph();
  const Index d = config.d_model;
  const Index dh = config.d_head();
  const int heads = config.n_heads;
  if (hidden.cols() != d) throw DimensionError("attention_layer: hidden width != d_model");
  if (offsets.size() < 2 || offsets.back() != hidden.rows()) {
    throw ContractError("attention_layer: offsets do not cover the hidden rows");
  }
  const bool drop = training && dropout.mode != DropoutMode::none;
  if (drop) dropout.validate();
  if (drop && dropout.mode == DropoutMode::concrete && !weights.drop_logit.valid()) {
    throw ContractError("attention_layer: concrete dropout needs a drop-rate parameter");
  }

  const Scalar inv_sqrt = Scalar(1) / std::sqrt(Scalar(dh));
  const Scalar mask_c = Scalar(dropout.mask_constant);
  Var<Scalar> qkv = add_row(matmul(hidden, weights.qkv_weight), weights.qkv_bias);

  std::map<Index, std::shared_ptr<const MaskMatrix>> masks;
  AttentionLayerResult<Scalar> result;
  result.trace.layer = layer;
  std::vector<Placement<Scalar>> parts;

  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    const Index r0 = offsets[b];
    const Index len = offsets[b + 1] - r0;
    if (len < 1) throw ContractError("attention_layer: empty batch element");
    if (len > config.max_seq_len) {
      throw LengthError("sequence of length " + std::to_string(len) + " exceeds max_seq_len " +
                        std::to_string(config.max_seq_len));
    }
    auto& visible = masks[len];
    if (!visible) {
      visible = std::make_shared<const MaskMatrix>(attention_mask(len, config.window.value_or(0)));
    }

    for (int h = 0; h < heads; ++h) {
      Var<Scalar> q = slice(qkv, r0, len, h * dh, dh);
      Var<Scalar> k = slice(qkv, r0, len, d + h * dh, dh);
      Var<Scalar> v = slice(qkv, r0, len, 2 * d + h * dh, dh);
      Var<Scalar> pre = scale(matmul_nt(q, k), inv_sqrt);
      Var<Scalar> post = pre;
      Matrix<Scalar> keep = Matrix<Scalar>::Ones(len, len);

      if (drop && dropout.mode == DropoutMode::bernoulli) {
        Matrix<Scalar> drops = drop_indicators<Scalar>(*visible, dropout.p, g.rng());
        keep -= drops;
        post = add(pre, g.constant(drops * mask_c));
      } else if (drop && dropout.mode == DropoutMode::concrete) {
        Matrix<Scalar> noise = Matrix<Scalar>::Zero(len, len);
        for (Index t = 0; t < len; ++t) {
          for (Index j = 0; j < len; ++j) {
            if ((*visible)(t, j)) noise(t, j) = Scalar(logistic_noise(g.rng().uniform_open()));
          }
        }
        Var<Scalar> relaxed = sigmoid(scale(add_scalar(g.constant(std::move(noise)),
                                                        weights.drop_logit),
                                            Scalar(1.0 / dropout.tau)));
        keep -= relaxed.value();
        post = add(pre, scale(relaxed, mask_c));
      }

      Var<Scalar> attn = masked_softmax_lastdim(post, *visible);
      Var<Scalar> mixed_weights = attn;
      if (drop && dropout.mode == DropoutMode::post_softmax_original) {
        const Scalar rescale = Scalar(1.0 / (1.0 - dropout.p));
        Matrix<Scalar> factor = Matrix<Scalar>::Zero(len, len);
        for (Index t = 0; t < len; ++t) {
          for (Index j = 0; j < len; ++j) {
            if (!(*visible)(t, j)) continue;
            const bool dropped = g.rng().bernoulli(dropout.p);
            keep(t, j) = dropped ? Scalar(0) : Scalar(1);
            factor(t, j) = dropped ? Scalar(0) : rescale;
          }
        }
        mixed_weights = mul(attn, g.constant(std::move(factor)));
      }

      parts.push_back({matmul(mixed_weights, v), r0, h * dh});
      HeadTrace<Scalar> entry;
      entry.segment = static_cast<Index>(b);
      entry.head = h;
      entry.pre_logits = pre;
      entry.post_logits = post;
      entry.weights = attn;
      entry.keep = std::move(keep);
      entry.visible = visible;
      result.trace.heads.push_back(std::move(entry));
    }
  }

  Var<Scalar> merged = assemble(g, hidden.rows(), d, parts);
  result.output = add_row(matmul(merged, weights.out_weight), weights.out_bias);
  return result;
}

template <typename Scalar>
std::shared_ptr<Tensor<Scalar>> Transformer<Scalar>::add_param(std::string name, Shape shape,
                                                               CounterRng* rng, Scalar fill) {
  auto t = std::make_shared<Tensor<Scalar>>(std::move(shape), true);
  if (rng) {
    for (Index i = 0; i < t->size(); ++i) t->data().data()[i] = Scalar(rng->normal(0.0, kInitStd));
  } else {
    t->data().setConstant(fill);
  }
  params_.push_back({std::move(name), t});
  return t;
}

template <typename Scalar>
Transformer<Scalar>::Transformer(const ModelConfig& config, CounterRng& rng) : config_(config) {
  config_.validate();
  const Index d = config_.d_model, v = config_.vocab_size, tmax = config_.max_seq_len;
  token_embedding_ = add_param("wte", {v, d}, &rng);
  position_embedding_ = add_param("wpe", {tmax, d}, &rng);
  const Scalar init_logit = Scalar(std::log(0.1 / 0.9));
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    Layer layer;
    layer.ln1_gain = add_param(p + "ln1.g", {1, d}, nullptr, Scalar(1));
    layer.ln1_bias = add_param(p + "ln1.b", {1, d}, nullptr);
    layer.qkv_weight = add_param(p + "attn.qkv.w", {d, 3 * d}, &rng);
    layer.qkv_bias = add_param(p + "attn.qkv.b", {1, 3 * d}, nullptr);
    layer.out_weight = add_param(p + "attn.out.w", {d, d}, &rng);
    layer.out_bias = add_param(p + "attn.out.b", {1, d}, nullptr);
    layer.ln2_gain = add_param(p + "ln2.g", {1, d}, nullptr, Scalar(1));
    layer.ln2_bias = add_param(p + "ln2.b", {1, d}, nullptr);
    layer.fc_weight = add_param(p + "mlp.fc.w", {d, 4 * d}, &rng);
    layer.fc_bias = add_param(p + "mlp.fc.b", {1, 4 * d}, nullptr);
    layer.proj_weight = add_param(p + "mlp.proj.w", {4 * d, d}, &rng);
    layer.proj_bias = add_param(p + "mlp.proj.b", {1, d}, nullptr);
    layer.drop_logit = add_param(p + "attn.drop_logit", {1, 1}, nullptr, init_logit);
    layers_.push_back(std::move(layer));
  }
  lnf_gain_ = add_param("lnf.g", {1, d}, nullptr, Scalar(1));
  lnf_bias_ = add_param("lnf.b", {1, d}, nullptr);
  if (!config_.tie_embeddings) lm_head_ = add_param("lm_head", {v, d}, &rng);
}

template <typename Scalar>
ForwardResult<Scalar> Transformer<Scalar>::forward(Graph<Scalar>& g,
                                                   std::span<const TokenSequence> batch,
                                                   const DropoutSpec& dropout,
                                                   bool training) const {
  if (batch.empty()) throw ContractError("forward: empty batch");
  ForwardResult<Scalar> out;
  std::vector<std::int32_t> ids, positions;
  out.offsets.push_back(0);
  for (const auto& seq : batch) {
    if (seq.empty()) throw ContractError("forward: empty sequence");
    if (static_cast<int>(seq.size()) > config_.max_seq_len) {
      throw LengthError("sequence of length " + std::to_string(seq.size()) +
                        " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
    }
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i] < 0 || seq[i] >= config_.vocab_size) {
        throw VocabError("token id " + std::to_string(seq[i]) + " outside vocabulary of " +
                         std::to_string(config_.vocab_size));
      }
      ids.push_back(seq[i]);
      positions.push_back(static_cast<std::int32_t>(i));
    }
    out.offsets.push_back(static_cast<Index>(ids.size()));
  }

  const Scalar eps = Scalar(kLayerNormEps);
  const bool concrete = training && dropout.mode == DropoutMode::concrete;
  Var<Scalar> wte = g.input(token_embedding_);
  Var<Scalar> x = add(embedding(wte, ids), embedding(g.input(position_embedding_), positions));

  for (int l = 0; l < config_.n_layers; ++l) {
    const Layer& layer = layers_[static_cast<std::size_t>(l)];
    Var<Scalar> h = layer_norm(x, g.input(layer.ln1_gain), g.input(layer.ln1_bias), eps);
    AttentionWeights<Scalar> w{g.input(layer.qkv_weight), g.input(layer.qkv_bias),
                               g.input(layer.out_weight), g.input(layer.out_bias), {}};
    if (concrete) {
      w.drop_logit = g.input(layer.drop_logit);
      out.drop_rates.push_back(sigmoid(w.drop_logit));
    }
    auto attn = attention_layer(h, w, out.offsets, config_, dropout, training, l);
    x = add(x, attn.output);
    out.traces.push_back(std::move(attn.trace));

    Var<Scalar> h2 = layer_norm(x, g.input(layer.ln2_gain), g.input(layer.ln2_bias), eps);
    Var<Scalar> fc = gelu(add_row(matmul(h2, g.input(layer.fc_weight)), g.input(layer.fc_bias)));
    x = add(x, add_row(matmul(fc, g.input(layer.proj_weight)), g.input(layer.proj_bias)));
  }

  out.hidden = layer_norm(x, g.input(lnf_gain_), g.input(lnf_bias_), eps);
  out.logits = matmul_nt(out.hidden, config_.tie_embeddings ? wte : g.input(lm_head_));
  return out;
}

template <typename Scalar>
ForwardResult<Scalar> Transformer<Scalar>::forward(Graph<Scalar>& graph,
                                                   std::span<const TokenId> tokens,
                                                   const DropoutSpec& dropout,
                                                   bool training) const {
  const TokenSequence seq(tokens.begin(), tokens.end());
  return forward(graph, std::span<const TokenSequence>(&seq, 1), dropout, training);
}

template <typename Scalar>
std::vector<std::shared_ptr<Tensor<Scalar>>> Transformer<Scalar>::parameter_tensors() const {
  std::vector<std::shared_ptr<Tensor<Scalar>>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

template <typename Scalar>
std::shared_ptr<Tensor<Scalar>> Transformer<Scalar>::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  return nullptr;
}

template <typename Scalar>
const Tensor<Scalar>& Transformer<Scalar>::output_embedding() const {
  return config_.tie_embeddings ? *token_embedding_ : *lm_head_;
}

template <typename Scalar>
double Transformer<Scalar>::drop_rate(int layer) const {
  const double logit = static_cast<double>(layers_.at(static_cast<std::size_t>(layer)).drop_logit->data()(0, 0));
  return 1.0 / (1.0 + std::exp(-logit));
}

template <typename Scalar>
void Transformer<Scalar>::set_drop_rate(int layer, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("drop rate must lie in (0,1)");
  layers_.at(static_cast<std::size_t>(layer)).drop_logit->data()(0, 0) =
      Scalar(std::log(p) - std::log1p(-p));
}

template <typename Scalar>
int Transformer<Scalar>::clamp_drop_rates() {
  int clamped = 0;
  for (int l = 0; l < config_.n_layers; ++l) {
    const double p = drop_rate(l);
    if (p < kMinDropRate) {
      set_drop_rate(l, kMinDropRate);
      ++clamped;
    } else if (p > kMaxDropRate) {
      set_drop_rate(l, kMaxDropRate);
      ++clamped;
    }
  }
  return clamped;
}

template <typename Scalar>
void Transformer<Scalar>::zero_grad() {
  for (auto& p : params_) p.tensor->clear_grad();
}

template AttentionLayerResult<double> attention_layer(const Var<double>&,
                                                      const AttentionWeights<double>&,
                                                      std::span<const Index>, const ModelConfig&,
                                                      const DropoutSpec&, bool, int);
template AttentionLayerResult<float> attention_layer(const Var<float>&,
                                                     const AttentionWeights<float>&,
                                                     std::span<const Index>, const ModelConfig&,
                                                     const DropoutSpec&, bool, int);
template class Transformer<double>;
template class Transformer<float>;

}  // namespace carekit
