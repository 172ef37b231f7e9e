#include "tsen/model.hpp"

#include <cmath>
#include <stdexcept>

#include "tsen/errors.hpp"

namespace tsen {

Variant variant_from_string(const std::string& name) {
  if (name == "TSEN") return Variant::TSEN;
  if (name == "GCN") return Variant::GCN;
  if (name == "SBGCN") return Variant::SBGCN;
  if (name == "SBGCN_FFN") return Variant::SBGCN_FFN;
  if (name == "SBGCN_SA") return Variant::SBGCN_SA;
  if (name == "GCN_Trans") return Variant::GCN_Trans;
  throw ConfigError("unknown model variant '" + name +
                    "' (expected one of TSEN, GCN, SBGCN, SBGCN_FFN, SBGCN_SA, "
                    "GCN_Trans)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::TSEN: return "TSEN";
    case Variant::GCN: return "GCN";
    case Variant::SBGCN: return "SBGCN";
    case Variant::SBGCN_FFN: return "SBGCN_FFN";
    case Variant::SBGCN_SA: return "SBGCN_SA";
    case Variant::GCN_Trans: return "GCN_Trans";
  }
  throw std::logic_error("unreachable variant");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> order = {
      Variant::GCN,       Variant::SBGCN,    Variant::SBGCN_FFN,
      Variant::SBGCN_SA,  Variant::GCN_Trans, Variant::TSEN};
  return order;
}

void ModelConfig::validate() const {
  if (num_layers < 1)
    throw ConfigError("model.num_layers must be >= 1, got " +
                      std::to_string(num_layers));
  if (hidden_dim < 1)
    throw ConfigError("model.hidden_dim must be >= 1, got " +
                      std::to_string(hidden_dim));
  if (num_heads < 1)
    throw ConfigError("model.num_heads must be >= 1, got " +
                      std::to_string(num_heads));
  if (hidden_dim % num_heads != 0)
    throw ConfigError("model.hidden_dim (" + std::to_string(hidden_dim) +
                      ") must be divisible by model.num_heads (" +
                      std::to_string(num_heads) + ")");
  if (ffn_dim < 0)
    throw ConfigError("model.ffn_dim must be >= 0 (0 selects 4*hidden_dim)");
  if (mlp_hidden < 1)
    throw ConfigError("model.mlp_hidden must be >= 1, got " +
                      std::to_string(mlp_hidden));
  if (!(dropout_transformer >= 0.0 && dropout_transformer < 1.0))
    throw ConfigError("model.dropout_transformer must lie in [0, 1)");
  if (!(dropout_mlp >= 0.0 && dropout_mlp < 1.0))
    throw ConfigError("model.dropout_mlp must lie in [0, 1)");
}

// --- parameter bookkeeping ---------------------------------------------------

namespace {

// Visits every leaf tensor with its canonical checkpoint name, in the fixed
// order that both init_params and the optimizer rely on.
template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    auto& layer = p.layers[i];
    fn(prefix + "conv.w", layer.conv_w);
    if (layer.encoder.ln1) {
      fn(prefix + "ln1.gamma", layer.encoder.ln1->gamma);
      fn(prefix + "ln1.beta", layer.encoder.ln1->beta);
    }
    if (layer.encoder.attn) {
      fn(prefix + "attn.wq", layer.encoder.attn->wq);
      fn(prefix + "attn.wk", layer.encoder.attn->wk);
      fn(prefix + "attn.wv", layer.encoder.attn->wv);
      fn(prefix + "attn.wo", layer.encoder.attn->wo);
    }
    if (layer.encoder.ln2) {
      fn(prefix + "ln2.gamma", layer.encoder.ln2->gamma);
      fn(prefix + "ln2.beta", layer.encoder.ln2->beta);
    }
    if (layer.encoder.ffn) {
      fn(prefix + "ffn.w1", layer.encoder.ffn->w1);
      fn(prefix + "ffn.b1", layer.encoder.ffn->b1);
      fn(prefix + "ffn.w2", layer.encoder.ffn->w2);
      fn(prefix + "ffn.b2", layer.encoder.ffn->b2);
    }
  }
  for (std::size_t t = 0; t < p.gates.size(); ++t) {
    const std::string prefix = "readout" + std::to_string(t) + ".gate.";
    auto& gate = p.gates[t];
    fn(prefix + "w1", gate.w1);
    fn(prefix + "b1", gate.b1);
    fn(prefix + "w2", gate.w2);
  }
  fn("head.w1", p.head.w1);
  fn("head.b1", p.head.b1);
  fn("head.w2", p.head.w2);
  fn("head.b2", p.head.b2);
}

}  // namespace

void ModelParams::for_each(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_params(*this, fn);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_params(*this, fn);
}

std::size_t ModelParams::leaf_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor&) { ++n; });
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;  // shares tensor storage...
  copy.for_each([](const std::string&, Tensor& t) { t = t.clone(); });
  return copy;  // ...until every leaf is replaced by a deep copy
}

ModelParams init_params(const ModelConfig& config, int feature_dim,
                        int class_count, std::uint64_t seed) {
  config.validate();
  if (feature_dim < 1)
    throw ConfigError("feature_dim must be >= 1, got " +
                      std::to_string(feature_dim));
  if (class_count < 2)
    throw ConfigError("class_count must be >= 2, got " +
                      std::to_string(class_count));

  ModelParams p;
  p.config = config;
  p.feature_dim = feature_dim;
  p.class_count = class_count;

  const int d = config.hidden_dim;
  const int f = config.effective_ffn_dim();

  for (int i = 0; i < config.num_layers; ++i) {
    GseLayerParams layer;
    // Snowball layers see the concatenation of the input features and every
    // earlier layer's output, so the projection input grows with depth.
    const int conv_in =
        config.uses_snowball() ? feature_dim + i * d : (i == 0 ? feature_dim : d);
    layer.conv_w = Tensor::zeros(conv_in, d);
    if (config.has_attention()) {
      layer.encoder.ln1 = LayerNormParams{Tensor::zeros(1, d), Tensor::zeros(1, d)};
      layer.encoder.attn = AttentionParams{Tensor::zeros(d, d), Tensor::zeros(d, d),
                                           Tensor::zeros(d, d), Tensor::zeros(d, d)};
    }
    if (config.has_ffn()) {
      layer.encoder.ln2 = LayerNormParams{Tensor::zeros(1, d), Tensor::zeros(1, d)};
      layer.encoder.ffn = FfnParams{Tensor::zeros(d, f), Tensor::zeros(1, f),
                                    Tensor::zeros(f, d), Tensor::zeros(1, d)};
    }
    p.layers.push_back(std::move(layer));
  }

  if (config.include_input_readout) {
    p.gates.push_back(GateParams{Tensor::zeros(feature_dim, d),
                                 Tensor::zeros(1, d), Tensor::zeros(d, 1)});
  }
  for (int i = 0; i < config.num_layers; ++i) {
    p.gates.push_back(GateParams{Tensor::zeros(d, d), Tensor::zeros(1, d),
                                 Tensor::zeros(d, 1)});
  }

  const Index rep_dim = p.representation_dim();
  p.head = HeadParams{Tensor::zeros(rep_dim, config.mlp_hidden),
                      Tensor::zeros(1, config.mlp_hidden),
                      Tensor::zeros(config.mlp_hidden, class_count),
                      Tensor::zeros(1, class_count)};

  // One generator, fixed visit order: identical seeds give identical models.
  Rng rng(seed);
  p.for_each([&](const std::string& name, Tensor& t) {
    const auto dot = name.rfind('.');
    const std::string leaf = name.substr(dot + 1);
    Matrix& m = t.value();
    if (leaf == "gamma") {
      m.setOnes();
    } else if (!leaf.empty() && leaf[0] == 'b') {  // beta, b1, b2
      m.setZero();
    } else {
      const double limit =
          std::sqrt(6.0 / (static_cast<double>(m.rows()) + m.cols()));
      for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c)
          m(r, c) = rng.uniform(-limit, limit);
    }
  });
  return p;
}

// --- building blocks ---------------------------------------------------------

Tensor gcn_layer(const Tensor& laplacian, const Tensor& x, const Tensor& w,
                 Activation act) {
  return activation(matmul(laplacian, matmul(x, w)), act);
}

Tensor snowball_conv(const Tensor& laplacian, const std::vector<Tensor>& history,
                     const Tensor& w, Activation act) {
  if (history.empty())
    throw std::invalid_argument("snowball_conv: history must be non-empty");
  Tensor stacked = history.size() == 1 ? history[0] : concat_cols(history);
  return gcn_layer(laplacian, stacked, w, act);
}

Tensor mh_attention(const Tensor& x, const AttentionParams& p, int heads,
                    double dropout_rate, bool training, Rng* rng) {
  const Index d = x.cols();
  if (heads < 1 || d % heads != 0)
    throw std::invalid_argument("mh_attention: column count " +
                                std::to_string(d) +
                                " not divisible by heads " +
                                std::to_string(heads));
  const Index dk = d / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor q = matmul(x, p.wq);
  Tensor k = matmul(x, p.wk);
  Tensor v = matmul(x, p.wv);

  std::vector<Tensor> contexts;
  contexts.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dk, dk);
    Tensor kh = slice_cols(k, h * dk, dk);
    Tensor vh = slice_cols(v, h * dk, dk);
    Tensor weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_dk));
    contexts.push_back(matmul(weights, vh));
  }
  Tensor context = heads == 1 ? contexts[0] : concat_cols(contexts);
  if (training && dropout_rate > 0.0) {
    if (rng == nullptr)
      throw std::logic_error("mh_attention: dropout in training mode needs an rng");
    context = dropout(context, dropout_rate, true, *rng);
  }
  return matmul(context, p.wo);
}

Tensor ffn(const Tensor& x, const FfnParams& p, Activation act,
           double dropout_rate, bool training, Rng* rng) {
  Tensor hidden = activation(add_rowvec(matmul(x, p.w1), p.b1), act);
  if (training && dropout_rate > 0.0) {
    if (rng == nullptr)
      throw std::logic_error("ffn: dropout in training mode needs an rng");
    hidden = dropout(hidden, dropout_rate, true, *rng);
  }
  return add_rowvec(matmul(hidden, p.w2), p.b2);
}

Tensor transformer_encode(const Tensor& s, const EncoderParams& p,
                          const ModelConfig& config, bool training, Rng* rng) {
  Tensor h = s;
  if (p.attn) {
    if (!p.ln1)
      throw std::logic_error("transformer_encode: attention requires ln1");
    Tensor normed = layer_norm(s, p.ln1->gamma, p.ln1->beta);
    Tensor attended = mh_attention(normed, *p.attn, config.num_heads,
                                   config.dropout_transformer, training, rng);
    h = add(attended, s);
  }
  Tensor out = h;
  if (p.ffn) {
    if (!p.ln2)
      throw std::logic_error("transformer_encode: ffn requires ln2");
    Tensor normed = layer_norm(h, p.ln2->gamma, p.ln2->beta);
    Tensor transformed = ffn(normed, *p.ffn, config.ffn_activation,
                             config.dropout_transformer, training, rng);
    out = add(transformed, h);
  }
  return out;
}

Tensor global_attention_readout(const Tensor& h, const GateParams& gate) {
  if (h.rows() < 1)
    throw std::invalid_argument("global_attention_readout: empty node set");
  Tensor scores =
      matmul(activation(add_rowvec(matmul(h, gate.w1), gate.b1), Activation::tanh),
             gate.w2);                                   // n x 1
  Tensor weights = softmax_rows(transpose(scores));      // 1 x n
  return matmul(weights, h);                             // 1 x d
}

Tensor assemble_representation(const std::vector<Tensor>& readouts) {
  if (readouts.empty())
    throw std::invalid_argument("assemble_representation: no readouts");
  return readouts.size() == 1 ? readouts[0] : concat_cols(readouts);
}

// --- whole-model forward -----------------------------------------------------

ForwardResult forward_full(const Graph& graph, const ModelParams& params,
                           bool training, Rng* rng, Tape* tape) {
  const ModelConfig& cfg = params.config;
  if (graph.feature_dim() != params.feature_dim)
    throw DataError("forward: graph feature dimension " +
                    std::to_string(graph.feature_dim()) +
                    " does not match model feature dimension " +
                    std::to_string(params.feature_dim));

  // Constants of the pass; never watched, so they contribute no gradients.
  Tensor lap(graph.laplacian);
  Tensor x(graph.features);

  // Tape-bound views of the trainable leaves.
  auto wt = [&](const Tensor& t) { return tape ? tape->watch(t) : t; };
  auto wt_gate = [&](const GateParams& g) {
    return GateParams{wt(g.w1), wt(g.b1), wt(g.w2)};
  };
  auto wt_encoder = [&](const EncoderParams& e) {
    EncoderParams out;
    if (e.ln1) out.ln1 = LayerNormParams{wt(e.ln1->gamma), wt(e.ln1->beta)};
    if (e.attn)
      out.attn = AttentionParams{wt(e.attn->wq), wt(e.attn->wk), wt(e.attn->wv),
                                 wt(e.attn->wo)};
    if (e.ln2) out.ln2 = LayerNormParams{wt(e.ln2->gamma), wt(e.ln2->beta)};
    if (e.ffn)
      out.ffn = FfnParams{wt(e.ffn->w1), wt(e.ffn->b1), wt(e.ffn->w2),
                          wt(e.ffn->b2)};
    return out;
  };

  std::vector<Tensor> history{x};
  std::vector<Tensor> layer_outputs;
  layer_outputs.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    Tensor conv =
        cfg.uses_snowball()
            ? snowball_conv(lap, history, wt(layer.conv_w), cfg.conv_activation)
            : gcn_layer(lap, history.back(), wt(layer.conv_w),
                        cfg.conv_activation);
    Tensor out = cfg.has_encoder()
                     ? transformer_encode(conv, wt_encoder(layer.encoder), cfg,
                                          training, rng)
                     : conv;
    layer_outputs.push_back(out);
    history.push_back(out);
  }

  std::vector<Tensor> readouts;
  readouts.reserve(params.gates.size());
  std::size_t gate_index = 0;
  if (cfg.include_input_readout)
    readouts.push_back(global_attention_readout(x, wt_gate(params.gates[gate_index++])));
  for (const Tensor& out : layer_outputs)
    readouts.push_back(global_attention_readout(out, wt_gate(params.gates[gate_index++])));

  Tensor representation = assemble_representation(readouts);

  Tensor hidden = activation(
      add_rowvec(matmul(representation, wt(params.head.w1)), wt(params.head.b1)),
      Activation::gelu);
  if (training && cfg.dropout_mlp > 0.0) {
    if (rng == nullptr)
      throw std::logic_error("forward: dropout in training mode needs an rng");
    hidden = dropout(hidden, cfg.dropout_mlp, true, *rng);
  }
  Tensor logits = add_rowvec(matmul(hidden, wt(params.head.w2)), wt(params.head.b2));
  return ForwardResult{logits, std::move(readouts), std::move(representation)};
}

Tensor forward(const Graph& graph, const ModelParams& params, bool training,
               Rng* rng, Tape* tape) {
  return forward_full(graph, params, training, rng, tape).logits;
}

int predict(const Tensor& logits) {
  if (logits.rows() != 1 || logits.cols() < 1)
    throw std::invalid_argument("predict: expected a 1 x C logits row");
  const Matrix& m = logits.value();
  Index best = 0;
  for (Index c = 1; c < m.cols(); ++c)
    if (m(0, c) > m(0, best)) best = c;
  return static_cast<int>(best);
}

}  // namespace tsen
