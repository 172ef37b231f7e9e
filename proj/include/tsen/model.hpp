#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsen/graph.hpp"
#include "tsen/tensor.hpp"

namespace tsen {

/// Model families used in the ablation study. TSEN is the full model; the
/// others drop the snowball connection, the Transformer encoder, or one of
/// its two sub-blocks.
enum class Variant { TSEN, GCN, SBGCN, SBGCN_FFN, SBGCN_SA, GCN_Trans };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);
const std::vector<Variant>& all_variants();

struct ModelConfig {
  Variant variant = Variant::TSEN;
  int num_layers = 2;
  int hidden_dim = 64;
  int num_heads = 4;
  int ffn_dim = 0;  // 0 means 4 * hidden_dim
  double dropout_transformer = 0.1;
  double dropout_mlp = 0.5;
  int mlp_hidden = 64;
  Activation conv_activation = Activation::tanh;
  Activation ffn_activation = Activation::gelu;
  bool include_input_readout = true;

  int effective_ffn_dim() const { return ffn_dim > 0 ? ffn_dim : 4 * hidden_dim; }

  /// Whether this variant concatenates all previous layers' outputs before
  /// the graph convolution.
  bool uses_snowball() const {
    return variant != Variant::GCN && variant != Variant::GCN_Trans;
  }
  bool has_attention() const {
    return variant == Variant::TSEN || variant == Variant::GCN_Trans ||
           variant == Variant::SBGCN_SA;
  }
  bool has_ffn() const {
    return variant == Variant::TSEN || variant == Variant::GCN_Trans ||
           variant == Variant::SBGCN_FFN;
  }
  bool has_encoder() const { return has_attention() || has_ffn(); }

  /// Throws ConfigError on invalid field combinations.
  void validate() const;
};

struct LayerNormParams {
  Tensor gamma, beta;  // 1 x d
};

struct AttentionParams {
  Tensor wq, wk, wv, wo;  // all d x d, heads packed along columns
};

struct FfnParams {
  Tensor w1, b1, w2, b2;  // d x f, 1 x f, f x d, 1 x d
};

struct EncoderParams {
  std::optional<LayerNormParams> ln1;  // before attention
  std::optional<AttentionParams> attn;
  std::optional<LayerNormParams> ln2;  // before ffn
  std::optional<FfnParams> ffn;
};

struct GseLayerParams {
  Tensor conv_w;  // (input dim x hidden_dim); input grows with concatenation
  EncoderParams encoder;
};

/// Gate network of the global-attention readout: one tanh hidden layer of
/// width hidden_dim, scalar output. No output bias: the node softmax is
/// invariant to a shared score shift, so such a bias could never train.
struct GateParams {
  Tensor w1, b1, w2;
};

struct HeadParams {
  Tensor w1, b1, w2, b2;
};

/// All trainable weights of one model. Leaf iteration order (and the
/// `layer{i}.{block}.{tensor}` naming scheme used by checkpoints) is fixed:
/// layer blocks in depth order, then readout gates, then the head.
struct ModelParams {
  ModelConfig config;
  int feature_dim = 0;
  int class_count = 0;
  std::vector<GseLayerParams> layers;
  std::vector<GateParams> gates;  // one per readout, input readout first
  HeadParams head;

  int readout_count() const {
    return config.num_layers + (config.include_input_readout ? 1 : 0);
  }
  Index representation_dim() const {
    return (config.include_input_readout ? feature_dim : 0) +
           static_cast<Index>(config.num_layers) * config.hidden_dim;
  }

  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::size_t leaf_count() const;

  /// Deep copy (parameter values only).
  ModelParams clone() const;
};

/// Glorot-uniform weights, zero biases, unit/zero LayerNorm affine;
/// deterministic under `seed`.
ModelParams init_params(const ModelConfig& config, int feature_dim,
                        int class_count, std::uint64_t seed);

// --- building blocks ---------------------------------------------------------

/// H = act(L X W).
Tensor gcn_layer(const Tensor& laplacian, const Tensor& x, const Tensor& w,
                 Activation act);

/// S(i) = act(L [H(0), ..., H(i)] W(i)): the graph convolution applied to the
/// column-concatenation of all previous layers' outputs.
Tensor snowball_conv(const Tensor& laplacian, const std::vector<Tensor>& history,
                     const Tensor& w, Activation act);

/// Standard multi-head scaled dot-product self-attention over nodes.
/// Dropout (training mode) is applied to the per-head context after the
/// attention weights are applied, before the output projection.
Tensor mh_attention(const Tensor& x, const AttentionParams& p, int heads,
                    double dropout_rate, bool training, Rng* rng);

/// act(X W1 + b1) W2 + b2 with dropout after the hidden activation.
Tensor ffn(const Tensor& x, const FfnParams& p, Activation act,
           double dropout_rate, bool training, Rng* rng);

/// Pre-LN residual encoder: H' = attn(LN1(S)) + S; out = ffn(LN2(H')) + H'.
/// Sub-blocks absent from `p` are skipped (ablation variants).
Tensor transformer_encode(const Tensor& s, const EncoderParams& p,
                          const ModelConfig& config, bool training, Rng* rng);

/// Softmax-weighted node sum with learned gate scores; 1 x d output.
Tensor global_attention_readout(const Tensor& h, const GateParams& gate);

/// Concatenation of the per-layer readout vectors, in layer order.
Tensor assemble_representation(const std::vector<Tensor>& readouts);

// --- whole-model forward -----------------------------------------------------

struct ForwardResult {
  Tensor logits;                  // 1 x class_count
  std::vector<Tensor> readouts;   // per readout layer, 1 x dim
  Tensor representation;          // h_G
};

/// Full forward pass for the configured variant. Pass a tape to record for
/// backward (trainable leaves are watched internally); rng is required only
/// when training with nonzero dropout.
ForwardResult forward_full(const Graph& graph, const ModelParams& params,
                           bool training, Rng* rng = nullptr,
                           Tape* tape = nullptr);

Tensor forward(const Graph& graph, const ModelParams& params, bool training,
               Rng* rng = nullptr, Tape* tape = nullptr);

/// Argmax over a 1 x C logits row; ties break toward the lower class index.
int predict(const Tensor& logits);

}  // namespace tsen
