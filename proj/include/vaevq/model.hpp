#pragma once

// Patch-wise MLP encoder/decoder with explicit backprop, Adam and the
// cosine learning-rate schedule.
//
// Images are rows of an n x (H*W) matrix in row-major pixel order. Each
// image is cut into non-overlapping patch_height x patch_width tiles; every
// tile is one token, and all tokens share the encoder and decoder weights.
// Token t of image i sits at row i * tokens_per_image + (tile row-major).

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "vaevq/codebook.hpp"
#include "vaevq/error.hpp"
#include "vaevq/losses.hpp"
#include "vaevq/types.hpp"
#include "vaevq/vlq.hpp"

namespace vaevq {

struct ModelConfig {
  int image_height = 16;
  int image_width = 16;
  int patch_height = 8;
  int patch_width = 8;
  int hidden = 128;
  int latent_dim = 8;

  int tokens_per_image() const {
    return (image_height / patch_height) * (image_width / patch_width);
  }
  int patch_pixels() const { return patch_height * patch_width; }
  int image_pixels() const { return image_height * image_width; }
  /// Posterior head width over a whole image: (mu, log_var) per token.
  int head_width() const { return 2 * latent_dim * tokens_per_image(); }

  void validate() const {
    require(image_height > 0 && image_width > 0 && patch_height > 0 && patch_width > 0 &&
                hidden > 0 && latent_dim > 0,
            ErrorKind::InvalidArgument, "model sizes must be positive");
    require(image_height % patch_height == 0 && image_width % patch_width == 0,
            ErrorKind::InvalidArgument, "image size must be divisible by the patch size");
  }

  bool operator==(const ModelConfig&) const = default;
};

enum ParamId : int {
  kEncW1 = 0,  // hidden x patch_pixels
  kEncB1,      // hidden x 1
  kEncW2,      // 2d x hidden
  kEncB2,      // 2d x 1
  kDecW1,      // hidden x d
  kDecB1,      // hidden x 1
  kDecW2,      // patch_pixels x hidden
  kDecB2,      // patch_pixels x 1
  kParamCount
};

inline constexpr std::array<std::string_view, kParamCount> kParamNames = {
    "enc_w1", "enc_b1", "enc_w2", "enc_b2", "dec_w1", "dec_b1", "dec_w2", "dec_b2"};

/// Shapes of the parameter tensors, in ParamId order.
inline std::array<std::pair<int, int>, kParamCount> parameter_shapes(const ModelConfig& c) {
  const int p = c.patch_pixels();
  const int h = c.hidden;
  const int d = c.latent_dim;
  return {{{h, p}, {h, 1}, {2 * d, h}, {2 * d, 1}, {h, d}, {h, 1}, {p, h}, {p, 1}}};
}

template <typename Scalar>
using ParameterSet = std::array<Matrix<Scalar>, kParamCount>;

template <typename Scalar>
ParameterSet<Scalar> zeros_like(const ParameterSet<Scalar>& params) {
  ParameterSet<Scalar> out;
  for (int i = 0; i < kParamCount; ++i)
    out[i] = Matrix<Scalar>::Zero(params[i].rows(), params[i].cols());
  return out;
}

template <typename Scalar>
struct Model {
  ModelConfig config;
  ParameterSet<Scalar> params;

  const Matrix<Scalar>& operator[](ParamId id) const { return params[id]; }
  Matrix<Scalar>& operator[](ParamId id) { return params[id]; }

  template <typename Other>
  Model<Other> cast() const {
    Model<Other> out{config, {}};
    for (int i = 0; i < kParamCount; ++i) out.params[i] = params[i].template cast<Other>();
    return out;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }
};

/// Glorot-uniform weights, zero biases; deterministic per seed.
template <typename Scalar = float>
Model<Scalar> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model<Scalar> model{config, {}};
  std::mt19937_64 rng(seed);
  const auto shapes = parameter_shapes(config);
  for (int i = 0; i < kParamCount; ++i) {
    const auto [rows, cols] = shapes[std::size_t(i)];
    if (cols == 1) {
      model.params[i] = Matrix<Scalar>::Zero(rows, 1);
      continue;
    }
    const double limit = std::sqrt(6.0 / double(rows + cols));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    model.params[i].resize(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) model.params[i](r, c) = Scalar(uniform(rng));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Tokenization

/// n x (H*W) images -> (n * tokens) x patch_pixels
template <typename Scalar>
Matrix<Scalar> patchify(const ModelConfig& c, const Matrix<Scalar>& images) {
  require(images.cols() == c.image_pixels(), ErrorKind::DimensionMismatch,
          "patchify: image has " + std::to_string(images.cols()) + " pixels, model expects " +
              std::to_string(c.image_pixels()));
  const int tiles_x = c.image_width / c.patch_width;
  const int per_image = c.tokens_per_image();
  Matrix<Scalar> out(images.rows() * per_image, c.patch_pixels());
  for (Eigen::Index n = 0; n < images.rows(); ++n)
    for (int t = 0; t < per_image; ++t) {
      const int y0 = (t / tiles_x) * c.patch_height;
      const int x0 = (t % tiles_x) * c.patch_width;
      for (int r = 0; r < c.patch_height; ++r)
        for (int col = 0; col < c.patch_width; ++col)
          out(n * per_image + t, r * c.patch_width + col) =
              images(n, (y0 + r) * c.image_width + x0 + col);
    }
  return out;
}

template <typename Scalar>
Matrix<Scalar> unpatchify(const ModelConfig& c, const Matrix<Scalar>& patches) {
  const int per_image = c.tokens_per_image();
  require(patches.cols() == c.patch_pixels() && patches.rows() % per_image == 0,
          ErrorKind::DimensionMismatch, "unpatchify: patch matrix shape mismatch");
  const int tiles_x = c.image_width / c.patch_width;
  Matrix<Scalar> out(patches.rows() / per_image, c.image_pixels());
  for (Eigen::Index n = 0; n < out.rows(); ++n)
    for (int t = 0; t < per_image; ++t) {
      const int y0 = (t / tiles_x) * c.patch_height;
      const int x0 = (t % tiles_x) * c.patch_width;
      for (int r = 0; r < c.patch_height; ++r)
        for (int col = 0; col < c.patch_width; ++col)
          out(n, (y0 + r) * c.image_width + x0 + col) =
              patches(n * per_image + t, r * c.patch_width + col);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Forward passes

template <typename Scalar>
struct EncoderTrace {
  Matrix<Scalar> patches;      // T x P
  Matrix<Scalar> hidden;       // T x H, tanh activations
  Matrix<Scalar> raw_log_var;  // T x d, before clamping
  LatentGaussian<Scalar> posterior;
};

template <typename Scalar>
struct DecoderTrace {
  Matrix<Scalar> hidden;  // T x H, tanh activations
  Matrix<Scalar> output;  // T x P, sigmoid activations
};

template <typename Scalar>
EncoderTrace<Scalar> encoder_forward(const Model<Scalar>& m, const Matrix<Scalar>& images) {
  EncoderTrace<Scalar> trace;
  trace.patches = patchify(m.config, images);
  Matrix<Scalar> pre = trace.patches * m[kEncW1].transpose();
  pre.rowwise() += m[kEncB1].col(0).transpose();
  trace.hidden = pre.array().tanh().matrix();
  Matrix<Scalar> head = trace.hidden * m[kEncW2].transpose();
  head.rowwise() += m[kEncB2].col(0).transpose();
  const int d = m.config.latent_dim;
  trace.raw_log_var = head.rightCols(d);
  trace.posterior = make_latent<Scalar>(head.leftCols(d), trace.raw_log_var);
  return trace;
}

template <typename Scalar>
DecoderTrace<Scalar> decoder_forward(const Model<Scalar>& m, const Matrix<Scalar>& z) {
  require(z.cols() == m.config.latent_dim, ErrorKind::DimensionMismatch,
          "decode: latent dim " + std::to_string(z.cols()) + " does not match model dim " +
              std::to_string(m.config.latent_dim));
  DecoderTrace<Scalar> trace;
  Matrix<Scalar> pre = z * m[kDecW1].transpose();
  pre.rowwise() += m[kDecB1].col(0).transpose();
  trace.hidden = pre.array().tanh().matrix();
  Matrix<Scalar> out = trace.hidden * m[kDecW2].transpose();
  out.rowwise() += m[kDecB2].col(0).transpose();
  trace.output = (Scalar(1) / (Scalar(1) + (-out.array()).exp())).matrix();
  return trace;
}

template <typename Scalar>
LatentGaussian<Scalar> encode(const Model<Scalar>& m, const Matrix<Scalar>& images) {
  return encoder_forward(m, images).posterior;
}

/// Decodes (n * tokens_per_image) x d latents into n images.
template <typename Scalar>
Matrix<Scalar> decode(const Model<Scalar>& m, const Matrix<Scalar>& z) {
  require(z.rows() % m.config.tokens_per_image() == 0, ErrorKind::DimensionMismatch,
          "decode: token count is not a multiple of tokens per image");
  return unpatchify(m.config, decoder_forward(m, z).output);
}

// ---------------------------------------------------------------------------
// Backward passes. Both accumulate into `grads` and return the gradient
// with respect to their input.

template <typename Scalar>
Matrix<Scalar> decoder_backward(const Model<Scalar>& m, const Matrix<Scalar>& z,
                                const DecoderTrace<Scalar>& trace, const Matrix<Scalar>& d_output,
                                ParameterSet<Scalar>& grads) {
  const Matrix<Scalar> d_pre_out =
      (d_output.array() * trace.output.array() * (Scalar(1) - trace.output.array())).matrix();
  grads[kDecW2].noalias() += d_pre_out.transpose() * trace.hidden;
  grads[kDecB2] += d_pre_out.colwise().sum().transpose();
  const Matrix<Scalar> d_pre_hidden =
      ((d_pre_out * m[kDecW2]).array() * (Scalar(1) - trace.hidden.array().square())).matrix();
  grads[kDecW1].noalias() += d_pre_hidden.transpose() * z;
  grads[kDecB1] += d_pre_hidden.colwise().sum().transpose();
  return d_pre_hidden * m[kDecW1];
}

template <typename Scalar>
void encoder_backward(const Model<Scalar>& m, const EncoderTrace<Scalar>& trace,
                      const Matrix<Scalar>& d_mu, const Matrix<Scalar>& d_log_var,
                      ParameterSet<Scalar>& grads) {
  const int d = m.config.latent_dim;
  Matrix<Scalar> d_head(d_mu.rows(), 2 * d);
  d_head.leftCols(d) = d_mu;
  // clamp passes gradient only inside its bounds
  d_head.rightCols(d) =
      ((trace.raw_log_var.array() >= Scalar(kLogVarMin)) &&
       (trace.raw_log_var.array() <= Scalar(kLogVarMax)))
          .select(d_log_var.array(), Scalar(0))
          .matrix();
  grads[kEncW2].noalias() += d_head.transpose() * trace.hidden;
  grads[kEncB2] += d_head.colwise().sum().transpose();
  const Matrix<Scalar> d_pre_hidden =
      ((d_head * m[kEncW2]).array() * (Scalar(1) - trace.hidden.array().square())).matrix();
  grads[kEncW1].noalias() += d_pre_hidden.transpose() * trace.patches;
  grads[kEncB1] += d_pre_hidden.colwise().sum().transpose();
}

template <typename Scalar>
struct GradientResult {
  ParameterSet<Scalar> model_grads;
  Matrix<Scalar> codebook_grad;  // K x d
  LossBreakdown losses;
  QuantizationResult<Scalar> quantized;
};

/// Gradient of the weighted objective with respect to every model parameter
/// and every codeword. The reconstruction of z_q uses the straight-through
/// rule: its gradient reaches z_c unchanged and never touches the codebook.
/// RCS treats sigma as a constant. `eps` is ignored when VLQ is off.
template <typename Scalar>
GradientResult<Scalar> compute_gradients(const Model<Scalar>& m, const Codebook<Scalar>& cb,
                                         const Matrix<Scalar>& images, const ObjectiveConfig& cfg,
                                         const Matrix<Scalar>& eps) {
  const EncoderTrace<Scalar> enc = encoder_forward(m, images);
  const LatentGaussian<Scalar>& g = enc.posterior;
  require(g.dim() == cb.dim(), ErrorKind::DimensionMismatch,
          "compute_gradients: latent dim does not match codebook");
  const Matrix<Scalar> z_c = cfg.vlq ? reparameterize(g, eps) : g.mu;

  GradientResult<Scalar> out;
  out.quantized = quantize_batch(z_c, cb);
  const Matrix<Scalar>& z_q = out.quantized.z_q;
  const Matrix<Scalar>& target = enc.patches;

  LossTerms terms;
  const DecoderTrace<Scalar> dec_q = decoder_forward(m, out.quantized.z_st);
  terms.rec_q = mean_squared_error(target, dec_q.output);
  DecoderTrace<Scalar> dec_c;
  if (cfg.vlq) {
    dec_c = decoder_forward(m, z_c);
    terms.rec_c = mean_squared_error(target, dec_c.output);
    terms.kl = kl_loss(g);
  }
  if (cfg.rcs) terms.rcs = rcs_loss(z_q, g);
  if (cfg.dcr) terms.dcr = dcr_loss(cb);
  if (cfg.hard_align) terms.hard_align = hard_alignment_loss(z_c, z_q);
  out.losses = total_loss(terms, cfg);

  const auto& w = cfg.weights;
  out.model_grads = zeros_like(m.params);
  auto& grads = out.model_grads;

  // straight-through: d rec_q / d z_st is handed to z_c as is
  Matrix<Scalar> d_z_c =
      decoder_backward(m, out.quantized.z_st, dec_q, mean_squared_error_gradient(target, dec_q.output), grads);
  if (cfg.vlq)
    d_z_c += decoder_backward(m, z_c, dec_c, mean_squared_error_gradient(target, dec_c.output), grads);

  Matrix<Scalar> d_z_q = Matrix<Scalar>::Zero(z_q.rows(), z_q.cols());
  if (cfg.hard_align) {
    const auto hard = hard_alignment_gradient(z_c, z_q);
    d_z_c += Scalar(w.beta_commit) * hard.d_z_c;
    d_z_q += Scalar(w.beta_commit) * hard.d_z_q;
  }

  Matrix<Scalar> d_mu = d_z_c;
  Matrix<Scalar> d_log_var = Matrix<Scalar>::Zero(g.mu.rows(), g.mu.cols());
  if (cfg.vlq) {
    d_log_var = (d_z_c.array() * Scalar(0.5) * g.sigma().array() * eps.array()).matrix();
    const auto kl = kl_gradient(g);
    d_mu += Scalar(w.beta_kl) * kl.d_mu;
    d_log_var += Scalar(w.beta_kl) * kl.d_log_var;
  }
  if (cfg.rcs) {
    const auto rcs = rcs_gradient(z_q, g);
    if (cfg.rcs_route != RcsRoute::CodebookOnly) d_mu += Scalar(w.lambda_rcs) * rcs.d_mu;
    if (cfg.rcs_route != RcsRoute::EncoderOnly) d_z_q += Scalar(w.lambda_rcs) * rcs.d_z_q;
  }
  encoder_backward(m, enc, d_mu, d_log_var, grads);

  out.codebook_grad = Matrix<Scalar>::Zero(cb.size(), cb.dim());
  if (cfg.align_codebook) {
    for (Eigen::Index i = 0; i < z_q.rows(); ++i)
      out.codebook_grad.row(out.quantized.indices[std::size_t(i)]) += d_z_q.row(i);
  }
  if (cfg.dcr) out.codebook_grad += (w.lambda_dcr * dcr_gradient(cb)).template cast<Scalar>();
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

/// base_lr * (1 + cos(pi * step / total_steps)) / 2; steps past the end
/// clamp to the final value.
inline double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr) {
  if (total_steps == 0) return base_lr;
  const double progress = std::min(1.0, double(step) / double(total_steps));
  return std::max(0.0, base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

template <typename Scalar>
struct OptimizerState {
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;
  std::uint64_t step = 0;
  std::uint64_t total_steps = 0;
  double base_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Optional per-block learning-rate multipliers; empty means all 1.
  std::vector<double> block_lr_scale;

  double current_lr() const { return cosine_lr(step, total_steps, base_lr); }
};

template <typename Scalar>
using ParamRefs = std::vector<std::reference_wrapper<Matrix<Scalar>>>;
template <typename Scalar>
using GradRefs = std::vector<std::reference_wrapper<const Matrix<Scalar>>>;

template <typename Scalar>
OptimizerState<Scalar> make_optimizer(const GradRefs<Scalar>& params, double base_lr,
                                      std::uint64_t total_steps) {
  OptimizerState<Scalar> state;
  state.base_lr = base_lr;
  state.total_steps = total_steps;
  for (const auto& p : params) {
    state.first_moment.push_back(Matrix<Scalar>::Zero(p.get().rows(), p.get().cols()));
    state.second_moment.push_back(Matrix<Scalar>::Zero(p.get().rows(), p.get().cols()));
  }
  return state;
}

/// One bias-corrected Adam update at the scheduled learning rate.
template <typename Scalar>
void adam_step(OptimizerState<Scalar>& state, const ParamRefs<Scalar>& params,
               const GradRefs<Scalar>& grads) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size(),
          ErrorKind::DimensionMismatch, "adam_step: parameter block count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i].get();
    const auto& g = grads[i].get();
    require(p.rows() == g.rows() && p.cols() == g.cols() &&
                p.rows() == state.first_moment[i].rows() && p.cols() == state.first_moment[i].cols(),
            ErrorKind::DimensionMismatch, "adam_step: shape mismatch in block " + std::to_string(i));
  }
  const double lr = state.current_lr();
  const double t = double(state.step + 1);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const auto b1 = Scalar(state.beta1);
  const auto b2 = Scalar(state.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grads[i].get();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    const auto m_hat = m.array() / Scalar(correction1);
    const auto v_hat = v.array() / Scalar(correction2);
    const double scale = state.block_lr_scale.empty() ? 1.0 : state.block_lr_scale[i];
    params[i].get().array() -= Scalar(lr * scale) * m_hat / (v_hat.sqrt() + Scalar(state.epsilon));
  }
  ++state.step;
}

/// Model parameter blocks followed by the codebook entries; this order is
/// also the optimizer-state order in checkpoints.
template <typename Scalar>
ParamRefs<Scalar> trainable_blocks(Model<Scalar>& m, Codebook<Scalar>& cb) {
  ParamRefs<Scalar> refs;
  for (auto& p : m.params) refs.emplace_back(p);
  refs.emplace_back(cb.entries);
  return refs;
}

}  // namespace vaevq
