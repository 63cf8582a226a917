// flowmel/model.h

// Copyright 2026  Flowmel Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef FLOWMEL_MODEL_H_
#define FLOWMEL_MODEL_H_

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowmel/autodiff.h"
#include "flowmel/rng.h"
#include "flowmel/types.h"

// The learnable vector-field estimator v(x_t, t, condition): a pre-norm
// transformer encoder over per-frame features. The noisy path point and the
// condition are concatenated along the feature axis and projected to d_model;
// an embedding of t is appended as one extra token; relative position enters
// through ALiBi attention biases and a grouped convolutional embedding.
// Layers are paired (i, n_layers-1-i): the hidden state entering layer i is
// concatenated onto the input of layer n_layers-1-i and projected back down.

namespace flowmel {

struct VectorFieldModelConfig {
  int n_layers = 4;
  int n_heads = 4;
  int d_model = 256;
  int d_ffn = 1024;
  int d_feat = kNumMels;  // input feature bins (also the output width)
  bool use_skip_connections = true;
  int conv_pos_kernel = 31;
  int conv_pos_groups = 16;
  bool alibi = true;
  int lora_rank = 0;          // 0 = none
  int symbol_vocab_size = 0;  // 0 = none
};

void validate_model_config(const VectorFieldModelConfig& cfg);

// Exact learnable-parameter count for a config, in closed form.
int64_t count_parameters(const VectorFieldModelConfig& cfg);

// Skip pairing map: the layer whose input feeds layer `layer`.
inline int skip_source_layer(int layer, int n_layers) {
  return n_layers - 1 - layer;
}

template <typename Scalar>
struct ConditionBundleT {
  MatX<Scalar> cond_frames;     // [L x d_feat]
  std::vector<int> symbol_ids;  // empty, or one id per frame
  bool cond_dropped = false;    // marks an unconditional pass
};

using ConditionBundle = ConditionBundleT<float>;

template <typename Scalar>
struct Param {
  std::string name;
  MatX<Scalar> value;
  MatX<Scalar> grad;
  bool trainable = true;
};

// Sinusoidal embedding of a timestep t in [0, 1], one row of width d.
template <typename Scalar>
MatX<Scalar> time_embedding(double t, int d) {
  MatX<Scalar> e(1, d);
  const int half = d / 2;
  const double pos = t * 1000.0;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e(0, 2 * i) = static_cast<Scalar>(std::sin(pos * freq));
    e(0, 2 * i + 1) = static_cast<Scalar>(std::cos(pos * freq));
  }
  return e;
}

// Geometric ALiBi slope schedule over heads.
inline std::vector<double> alibi_slopes(int n_heads) {
  std::vector<double> slopes(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h)
    slopes[static_cast<size_t>(h)] =
        std::pow(2.0, -8.0 * (h + 1) / n_heads);
  return slopes;
}

template <typename Scalar>
class VectorFieldModel {
 public:
  using Mat = MatX<Scalar>;
  using Tape = ad::Tape<Scalar>;
  using Var = typename Tape::Var;
  using Cond = ConditionBundleT<Scalar>;

  VectorFieldModel(const VectorFieldModelConfig& cfg, uint64_t seed)
      : cfg_(cfg) {
    validate_model_config(cfg);
    Rng rng(seed);
    const Scalar w_std = Scalar(0.02);
    const int d = cfg.d_model;

    input_proj_w_ = add("input_proj.weight", 2 * cfg.d_feat, d, rng, w_std);
    input_proj_b_ = add_zero("input_proj.bias", 1, d);
    const int dg = d / cfg.conv_pos_groups;
    conv_w_ = add("conv_pos.weight", cfg.conv_pos_kernel * dg, d, rng,
                  Scalar(1) / std::sqrt(Scalar(dg * cfg.conv_pos_kernel)));
    conv_b_ = add_zero("conv_pos.bias", 1, d);
    time_scale_ = add_const("time_embed.scale", 1, 1, Scalar(1));

    layers_.resize(static_cast<size_t>(cfg.n_layers));
    for (int l = 0; l < cfg.n_layers; ++l) {
      auto& lp = layers_[static_cast<size_t>(l)];
      const std::string p = "layers." + std::to_string(l) + ".";
      lp.ln1_g = add_const(p + "ln1.gamma", 1, d, Scalar(1));
      lp.ln1_b = add_zero(p + "ln1.beta", 1, d);
      lp.wq = add(p + "attn.q.weight", d, d, rng, w_std);
      lp.bq = add_zero(p + "attn.q.bias", 1, d);
      lp.wk = add(p + "attn.k.weight", d, d, rng, w_std);
      lp.bk = add_zero(p + "attn.k.bias", 1, d);
      lp.wv = add(p + "attn.v.weight", d, d, rng, w_std);
      lp.bv = add_zero(p + "attn.v.bias", 1, d);
      lp.wo = add(p + "attn.out.weight", d, d, rng, w_std);
      lp.bo = add_zero(p + "attn.out.bias", 1, d);
      lp.ln2_g = add_const(p + "ln2.gamma", 1, d, Scalar(1));
      lp.ln2_b = add_zero(p + "ln2.beta", 1, d);
      lp.w1 = add(p + "ffn.in.weight", d, cfg.d_ffn, rng, w_std);
      lp.b1 = add_zero(p + "ffn.in.bias", 1, cfg.d_ffn);
      lp.w2 = add(p + "ffn.out.weight", cfg.d_ffn, d, rng, w_std);
      lp.b2 = add_zero(p + "ffn.out.bias", 1, d);
      if (cfg.use_skip_connections && l >= cfg.n_layers / 2) {
        lp.skip_w = add(p + "skip.weight", 2 * d, d, rng, w_std);
        lp.skip_b = add_zero(p + "skip.bias", 1, d);
      }
    }

    final_ln_g_ = add_const("final_norm.gamma", 1, d, Scalar(1));
    final_ln_b_ = add_zero("final_norm.beta", 1, d);
    head_w_ = add("head.weight", d, cfg.d_feat, rng, w_std);
    head_b_ = add_zero("head.bias", 1, cfg.d_feat);

    if (cfg.symbol_vocab_size > 0) {
      sym_embed_ = add("symbols.embed", cfg.symbol_vocab_size, d, rng, w_std);
      sym_gate_ = add_zero("symbols.gate", 1, 1);  // zero-initialized gate
    }
    if (cfg.lora_rank > 0) attach_lora(cfg.lora_rank, rng);
  }

  const VectorFieldModelConfig& config() const { return cfg_; }

  std::vector<Param<Scalar>>& parameters() { return params_; }
  const std::vector<Param<Scalar>>& parameters() const { return params_; }

  Param<Scalar>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  void zero_grads() {
    for (auto& p : params_) p.grad.setZero();
  }

  int64_t trainable_parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += static_cast<int64_t>(p.value.size());
    return n;
  }

  // Attaches zero-delta low-rank adaptors to the q/k/v projections of every
  // layer and freezes all pre-existing weights.
  void apply_lora(int rank, uint64_t seed = 0x10ca) {
    if (cfg_.lora_rank > 0)
      throw ConfigError("apply_lora: adaptors already attached");
    if (rank < 1) throw ConfigError("apply_lora: rank must be >= 1");
    if (rank > cfg_.d_model)
      throw ConfigError("apply_lora: rank exceeds d_model");
    for (auto& p : params_) p.trainable = false;
    cfg_.lora_rank = rank;
    Rng rng(seed);
    attach_lora(rank, rng);
    // The phone-embedding path is new at fine-tuning time and stays live.
    if (sym_embed_ >= 0) params_[static_cast<size_t>(sym_embed_)].trainable = true;
    if (sym_gate_ >= 0) params_[static_cast<size_t>(sym_gate_)].trainable = true;
  }

  Mat forward(const Mat& x_t, double t, const Cond& cond) {
    Tape tape;
    return tape.value(build_forward(tape, x_t, t, cond));
  }

  Mat forward_unconditional(const Mat& x_t, double t) {
    return forward(x_t, t, unconditional_bundle(static_cast<int>(x_t.rows())));
  }

  Cond unconditional_bundle(int num_frames) const {
    Cond cond;
    cond.cond_frames = Mat::Zero(num_frames, cfg_.d_feat);
    cond.cond_dropped = true;
    return cond;
  }

  // One training example: runs forward, returns the selected-frame MSE
  // against u_target, and accumulates `weight` times its gradient.
  Scalar loss_and_gradients(const Mat& x_t, double t, const Cond& cond,
                            const Mat& u_target,
                            const std::vector<uint8_t>& loss_region,
                            Scalar weight) {
    Tape tape;
    const Var v = build_forward(tape, x_t, t, cond);
    const Var loss = tape.mse_selected_rows(v, u_target, loss_region);
    tape.backward(loss, weight);
    return tape.value(loss)(0, 0);
  }

  // Forward graph shared by inference and training.
  Var build_forward(Tape& tape, const Mat& x_t, double t, const Cond& cond) {
    if (!(t >= 0.0 && t <= 1.0))
      throw std::invalid_argument("forward: t must lie in [0, 1]");
    const int frames = static_cast<int>(x_t.rows());
    if (frames < 1) throw std::invalid_argument("forward: empty input");
    if (x_t.cols() != cfg_.d_feat)
      throw std::invalid_argument("forward: x_t width != d_feat");
    if (cond.cond_frames.rows() != frames ||
        cond.cond_frames.cols() != cfg_.d_feat)
      throw std::invalid_argument("forward: condition shape mismatch");
    if (!cond.symbol_ids.empty()) {
      if (cfg_.symbol_vocab_size <= 0)
        throw std::invalid_argument("forward: model has no symbol table");
      if (static_cast<int>(cond.symbol_ids.size()) != frames)
        throw std::invalid_argument("forward: symbol_ids length != frames");
      for (int id : cond.symbol_ids)
        if (id < 0 || id >= cfg_.symbol_vocab_size)
          throw std::invalid_argument("forward: unknown symbol id");
    }

    Mat input(frames, 2 * cfg_.d_feat);
    input.leftCols(cfg_.d_feat) = x_t;
    input.rightCols(cfg_.d_feat) = cond.cond_frames;

    Var h = tape.add_row(tape.matmul(tape.constant(input), leaf(tape, input_proj_w_)),
                         leaf(tape, input_proj_b_));
    if (!cond.symbol_ids.empty()) {
      const Var embedded =
          tape.gather_rows(leaf(tape, sym_embed_), cond.symbol_ids);
      h = tape.add(h, tape.scale(embedded, leaf(tape, sym_gate_)));
    }

    // Append the time token, then the convolutional positional embedding.
    const Var time_tok = tape.scale(
        tape.constant(time_embedding<Scalar>(t, cfg_.d_model)),
        leaf(tape, time_scale_));
    h = tape.concat_rows(h, time_tok);
    h = tape.add(h, tape.gelu(tape.grouped_conv1d(h, leaf(tape, conv_w_),
                                                  leaf(tape, conv_b_),
                                                  cfg_.conv_pos_groups)));

    const std::vector<MatX<Scalar>> bias = attention_bias(frames + 1);
    std::vector<Var> first_half_inputs;
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const auto& lp = layers_[static_cast<size_t>(l)];
      if (cfg_.use_skip_connections) {
        if (l < cfg_.n_layers / 2) {
          first_half_inputs.push_back(h);
        } else {
          const Var source = first_half_inputs[static_cast<size_t>(
              skip_source_layer(l, cfg_.n_layers))];
          h = tape.add_row(
              tape.matmul(tape.concat_cols(h, source), leaf(tape, lp.skip_w)),
              leaf(tape, lp.skip_b));
        }
      }
      h = block(tape, h, lp, bias);
    }

    h = tape.layer_norm(h, leaf(tape, final_ln_g_), leaf(tape, final_ln_b_),
                        ln_eps());
    const Var data_rows = tape.slice_rows(h, 0, frames);
    return tape.add_row(tape.matmul(data_rows, leaf(tape, head_w_)),
                        leaf(tape, head_b_));
  }

  static constexpr Scalar ln_eps() { return Scalar(1e-5); }

 private:
  struct LayerParams {
    int ln1_g, ln1_b;
    int wq, bq, wk, bk, wv, bv, wo, bo;
    int ln2_g, ln2_b;
    int w1, b1, w2, b2;
    int skip_w = -1, skip_b = -1;
    int lora_qa = -1, lora_qb = -1;
    int lora_ka = -1, lora_kb = -1;
    int lora_va = -1, lora_vb = -1;
  };

  int add(const std::string& name, int rows, int cols, Rng& rng, Scalar std) {
    Param<Scalar> p;
    p.name = name;
    p.value = rng.gaussian_matrix<Scalar>(rows, cols) * std;
    p.grad = Mat::Zero(rows, cols);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size()) - 1;
  }

  int add_const(const std::string& name, int rows, int cols, Scalar value) {
    Param<Scalar> p;
    p.name = name;
    p.value = Mat::Constant(rows, cols, value);
    p.grad = Mat::Zero(rows, cols);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size()) - 1;
  }

  int add_zero(const std::string& name, int rows, int cols) {
    return add_const(name, rows, cols, Scalar(0));
  }

  void attach_lora(int rank, Rng& rng) {
    for (int l = 0; l < cfg_.n_layers; ++l) {
      auto& lp = layers_[static_cast<size_t>(l)];
      const std::string p = "layers." + std::to_string(l) + ".attn.";
      // One random factor, one zero factor: the initial delta vanishes.
      lp.lora_qa = add(p + "q.lora_a", cfg_.d_model, rank, rng, Scalar(0.02));
      lp.lora_qb = add_zero(p + "q.lora_b", rank, cfg_.d_model);
      lp.lora_ka = add(p + "k.lora_a", cfg_.d_model, rank, rng, Scalar(0.02));
      lp.lora_kb = add_zero(p + "k.lora_b", rank, cfg_.d_model);
      lp.lora_va = add(p + "v.lora_a", cfg_.d_model, rank, rng, Scalar(0.02));
      lp.lora_vb = add_zero(p + "v.lora_b", rank, cfg_.d_model);
    }
  }

  Var leaf(Tape& tape, int param_id) {
    Param<Scalar>& p = params_[static_cast<size_t>(param_id)];
    return tape.leaf(p.value, &p.grad);
  }

  // Per-head additive attention bias for a sequence of `n` tokens. The time
  // token sits at position n-1 and takes part like any other position.
  std::vector<MatX<Scalar>> attention_bias(int n) const {
    std::vector<MatX<Scalar>> bias;
    const auto slopes = alibi_slopes(cfg_.n_heads);
    for (int h = 0; h < cfg_.n_heads; ++h) {
      MatX<Scalar> b = MatX<Scalar>::Zero(n, n);
      if (cfg_.alibi) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            b(i, j) = static_cast<Scalar>(-slopes[static_cast<size_t>(h)] *
                                          std::abs(i - j));
      }
      bias.push_back(std::move(b));
    }
    return bias;
  }

  Var projection(Tape& tape, Var x, int w, int b, int lora_a, int lora_b) {
    Var out = tape.add_row(tape.matmul(x, leaf(tape, w)), leaf(tape, b));
    if (lora_a >= 0)
      out = tape.add(out, tape.matmul(tape.matmul(x, leaf(tape, lora_a)),
                                      leaf(tape, lora_b)));
    return out;
  }

  Var block(Tape& tape, Var x, const LayerParams& lp,
            const std::vector<MatX<Scalar>>& bias) {
    const int dh = cfg_.d_model / cfg_.n_heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

    const Var a = tape.layer_norm(x, leaf(tape, lp.ln1_g), leaf(tape, lp.ln1_b),
                                  ln_eps());
    const Var q = projection(tape, a, lp.wq, lp.bq, lp.lora_qa, lp.lora_qb);
    const Var k = projection(tape, a, lp.wk, lp.bk, lp.lora_ka, lp.lora_kb);
    const Var v = projection(tape, a, lp.wv, lp.bv, lp.lora_va, lp.lora_vb);

    Var heads;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      const Var qh = tape.slice_cols(q, h * dh, dh);
      const Var kh = tape.slice_cols(k, h * dh, dh);
      const Var vh = tape.slice_cols(v, h * dh, dh);
      const Var scores =
          tape.scale_const(tape.matmul(qh, tape.transpose(kh)), scale);
      const Var attn =
          tape.softmax_rows(scores, bias[static_cast<size_t>(h)]);
      const Var oh = tape.matmul(attn, vh);
      heads = h == 0 ? oh : tape.concat_cols(heads, oh);
    }
    const Var attn_out = tape.add_row(tape.matmul(heads, leaf(tape, lp.wo)),
                                      leaf(tape, lp.bo));
    x = tape.add(x, attn_out);

    const Var f = tape.layer_norm(x, leaf(tape, lp.ln2_g), leaf(tape, lp.ln2_b),
                                  ln_eps());
    const Var f1 = tape.gelu(tape.add_row(tape.matmul(f, leaf(tape, lp.w1)),
                                          leaf(tape, lp.b1)));
    const Var f2 = tape.add_row(tape.matmul(f1, leaf(tape, lp.w2)),
                                leaf(tape, lp.b2));
    return tape.add(x, f2);
  }

  VectorFieldModelConfig cfg_;
  std::vector<Param<Scalar>> params_;
  std::map<std::string, size_t> index_;

  int input_proj_w_, input_proj_b_;
  int conv_w_, conv_b_;
  int time_scale_;
  std::vector<LayerParams> layers_;
  int final_ln_g_, final_ln_b_;
  int head_w_, head_b_;
  int sym_embed_ = -1, sym_gate_ = -1;
};

using VectorFieldModelF = VectorFieldModel<float>;

inline void validate_model_config(const VectorFieldModelConfig& cfg) {
  if (cfg.n_layers < 1 || cfg.n_heads < 1 || cfg.d_model < 1 || cfg.d_ffn < 1)
    throw ConfigError("model config: dimensions must be positive");
  if (cfg.d_model % cfg.n_heads != 0)
    throw ConfigError("model config: d_model must be divisible by n_heads");
  if (cfg.d_model % 2 != 0)
    throw ConfigError("model config: d_model must be even");
  if (cfg.use_skip_connections && cfg.n_layers % 2 != 0)
    throw ConfigError(
        "model config: skip connections require an even layer count");
  if (cfg.conv_pos_groups < 1 || cfg.d_model % cfg.conv_pos_groups != 0)
    throw ConfigError("model config: conv groups must divide d_model");
  if (cfg.conv_pos_kernel < 1 || cfg.conv_pos_kernel % 2 == 0)
    throw ConfigError("model config: conv kernel must be odd");
  if (cfg.d_feat < 1) throw ConfigError("model config: d_feat must be >= 1");
  if (cfg.lora_rank < 0 || cfg.lora_rank > cfg.d_model)
    throw ConfigError("model config: lora rank out of range");
  if (cfg.symbol_vocab_size < 0)
    throw ConfigError("model config: negative symbol vocabulary");
}

inline int64_t count_parameters(const VectorFieldModelConfig& cfg) {
  validate_model_config(cfg);
  const int64_t d = cfg.d_model;
  const int64_t ffn = cfg.d_ffn;
  const int64_t dg = d / cfg.conv_pos_groups;
  int64_t total = 0;
  total += 2 * cfg.d_feat * d + d;                // input projection
  total += cfg.conv_pos_kernel * dg * d + d;      // conv positional embedding
  total += 1;                                     // time embedding scale
  int64_t per_layer = 0;
  per_layer += 2 * d;                  // ln1
  per_layer += 4 * (d * d + d);        // q, k, v, out projections
  per_layer += 2 * d;                  // ln2
  per_layer += d * ffn + ffn + ffn * d + d;  // ffn
  total += cfg.n_layers * per_layer;
  if (cfg.use_skip_connections)
    total += (cfg.n_layers / 2) * (2 * d * d + d);
  total += 2 * d;                      // final norm
  total += d * cfg.d_feat + cfg.d_feat;  // output head
  if (cfg.symbol_vocab_size > 0) total += cfg.symbol_vocab_size * d + 1;
  if (cfg.lora_rank > 0) total += cfg.n_layers * 3 * (2 * d * cfg.lora_rank);
  return total;
}

}  // namespace flowmel

#endif  // FLOWMEL_MODEL_H_
