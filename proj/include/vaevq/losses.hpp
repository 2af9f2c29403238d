#pragma once

// Scalar training objectives and their analytic gradients.
//
// Normalization: reconstruction and hard alignment are means per element;
// KL and RCS sum over latent dimensions and average over tokens.

#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "vaevq/codebook.hpp"
#include "vaevq/error.hpp"
#include "vaevq/types.hpp"
#include "vaevq/vlq.hpp"

namespace vaevq {

/// Ridge added to the codebook covariance before Sigma^{-1/2} is formed.
inline constexpr double kDcrRidge = 1e-6;

enum class RcsMode { Simplified, FullNll };

/// Which side of the RCS alignment receives gradient.
enum class RcsRoute { Both, CodebookOnly, EncoderOnly };

struct LossWeights {
  double lambda_rcs = 1.0;
  double lambda_dcr = 0.1;
  double beta_kl = 1e-3;
  double beta_commit = 0.25;
};

struct ObjectiveConfig {
  bool vlq = true;
  bool rcs = true;
  bool dcr = true;
  bool hard_align = false;
  RcsRoute rcs_route = RcsRoute::Both;
  /// When false the alignment terms do not push gradient into the codebook
  /// (it is then moved by EMA updates instead).
  bool align_codebook = true;
  LossWeights weights;
};

/// Raw (unweighted) loss terms for one batch.
struct LossTerms {
  double rec_c = 0.0;
  double rec_q = 0.0;
  double kl = 0.0;
  double rcs = 0.0;
  double dcr = 0.0;
  double hard_align = 0.0;
};

struct LossBreakdown {
  double rec_c = 0.0;
  double rec_q = 0.0;
  double kl = 0.0;
  double rcs = 0.0;
  double dcr = 0.0;
  double hard_align = 0.0;
  double total = 0.0;
};

/// Number of times each optional term has been evaluated (value or gradient).
struct LossCallCounters {
  std::atomic<std::uint64_t> kl{0};
  std::atomic<std::uint64_t> rcs{0};
  std::atomic<std::uint64_t> dcr{0};
  std::atomic<std::uint64_t> hard_align{0};

  void reset() {
    kl = 0;
    rcs = 0;
    dcr = 0;
    hard_align = 0;
  }
};

LossCallCounters& loss_call_counters();

// ---------------------------------------------------------------------------
// Reconstruction

struct ReconstructionLoss {
  double rec_c = 0.0;
  double rec_q = 0.0;
};

template <typename Scalar>
double mean_squared_error(const Matrix<Scalar>& x, const Matrix<Scalar>& y) {
  require(x.rows() == y.rows() && x.cols() == y.cols(), ErrorKind::DimensionMismatch,
          "mean_squared_error: shape mismatch");
  require(x.size() > 0, ErrorKind::EmptyInput, "mean_squared_error: empty input");
  return (x.template cast<double>() - y.template cast<double>()).squaredNorm() / double(x.size());
}

template <typename Scalar>
ReconstructionLoss reconstruction_loss(const Matrix<Scalar>& x, const Matrix<Scalar>& recon_c,
                                       const Matrix<Scalar>& recon_q) {
  return {mean_squared_error(x, recon_c), mean_squared_error(x, recon_q)};
}

/// d/d recon of mean_squared_error(x, recon).
template <typename Scalar>
Matrix<Scalar> mean_squared_error_gradient(const Matrix<Scalar>& x, const Matrix<Scalar>& recon) {
  return (Scalar(2.0 / double(x.size())) * (recon - x));
}

// ---------------------------------------------------------------------------
// KL(q(z|x) || N(0, I)), summed over dims, averaged over tokens.

template <typename Scalar>
double kl_loss(const LatentGaussian<Scalar>& g) {
  ++loss_call_counters().kl;
  require(g.tokens() > 0, ErrorKind::EmptyInput, "kl_loss: no tokens");
  const Eigen::ArrayXXd mu = g.mu.template cast<double>().array();
  const Eigen::ArrayXXd lv = g.log_var.template cast<double>().array();
  return 0.5 * (mu.square() + lv.exp() - 1.0 - lv).sum() / double(g.tokens());
}

template <typename Scalar>
struct PosteriorGradient {
  Matrix<Scalar> d_mu;
  Matrix<Scalar> d_log_var;
};

template <typename Scalar>
PosteriorGradient<Scalar> kl_gradient(const LatentGaussian<Scalar>& g) {
  ++loss_call_counters().kl;
  const double inv_tokens = 1.0 / double(g.tokens());
  const MatrixXd lv = g.log_var.template cast<double>();
  return {(g.mu.template cast<double>() * inv_tokens).template cast<Scalar>(),
          (0.5 * inv_tokens * (lv.array().exp() - 1.0)).matrix().template cast<Scalar>()};
}

// ---------------------------------------------------------------------------
// Representation coherence: variance-weighted alignment of z_q to mu_c.

template <typename Scalar>
double rcs_loss(const Matrix<Scalar>& z_q, const LatentGaussian<Scalar>& g,
                RcsMode mode = RcsMode::Simplified) {
  ++loss_call_counters().rcs;
  require(z_q.rows() == g.mu.rows() && z_q.cols() == g.mu.cols(), ErrorKind::DimensionMismatch,
          "rcs_loss: shape mismatch");
  require(g.tokens() > 0, ErrorKind::EmptyInput, "rcs_loss: no tokens");
  const Eigen::ArrayXXd residual = (z_q.template cast<double>() - g.mu.template cast<double>()).array();
  const Eigen::ArrayXXd lv = g.log_var.template cast<double>().array();
  double total = 0.5 * (residual.square() * (-lv).exp()).sum();
  if (mode == RcsMode::FullNll)
    total += 0.5 * (std::log(2.0 * std::numbers::pi) + lv).sum();
  return total / double(g.tokens());
}

template <typename Scalar>
struct RcsGradient {
  Matrix<Scalar> d_z_q;
  Matrix<Scalar> d_mu;
  Matrix<Scalar> d_log_var;  // identically zero in simplified mode
};

/// Simplified mode treats sigma as a constant, so d_log_var is exactly zero.
template <typename Scalar>
RcsGradient<Scalar> rcs_gradient(const Matrix<Scalar>& z_q, const LatentGaussian<Scalar>& g,
                                 RcsMode mode = RcsMode::Simplified) {
  ++loss_call_counters().rcs;
  require(z_q.rows() == g.mu.rows() && z_q.cols() == g.mu.cols(), ErrorKind::DimensionMismatch,
          "rcs_gradient: shape mismatch");
  const double inv_tokens = 1.0 / double(g.tokens());
  const MatrixXd residual = z_q.template cast<double>() - g.mu.template cast<double>();
  const Eigen::ArrayXXd inv_var = (-g.log_var.template cast<double>().array()).exp();
  const MatrixXd scaled = (residual.array() * inv_var * inv_tokens).matrix();
  RcsGradient<Scalar> out;
  out.d_z_q = scaled.template cast<Scalar>();
  out.d_mu = (-scaled).template cast<Scalar>();
  if (mode == RcsMode::Simplified) {
    out.d_log_var = Matrix<Scalar>::Zero(z_q.rows(), z_q.cols());
  } else {
    out.d_log_var =
        (0.5 * inv_tokens * (1.0 - residual.array().square() * inv_var)).matrix().template cast<Scalar>();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hard alignment |z_q - z_c|^2, mean per element.

template <typename Scalar>
double hard_alignment_loss(const Matrix<Scalar>& z_c, const Matrix<Scalar>& z_q) {
  ++loss_call_counters().hard_align;
  return mean_squared_error(z_c, z_q);
}

template <typename Scalar>
struct AlignmentGradient {
  Matrix<Scalar> d_z_c;
  Matrix<Scalar> d_z_q;
};

template <typename Scalar>
AlignmentGradient<Scalar> hard_alignment_gradient(const Matrix<Scalar>& z_c, const Matrix<Scalar>& z_q) {
  ++loss_call_counters().hard_align;
  require(z_c.rows() == z_q.rows() && z_c.cols() == z_q.cols(), ErrorKind::DimensionMismatch,
          "hard_alignment_gradient: shape mismatch");
  const Matrix<Scalar> d = mean_squared_error_gradient(z_c, z_q);
  return {-d, d};
}

// ---------------------------------------------------------------------------
// Distribution consistency: |mu_q|^2 + Tr(Sigma_q) - 2 Tr(Sigma_q^{1/2}),
// i.e. W2^2(N(mu_q, Sigma_q), N(0, I)) - d.

double dcr_loss_from_entries(const MatrixXd& entries);
MatrixXd dcr_gradient_from_entries(const MatrixXd& entries, double ridge = kDcrRidge);

template <typename Scalar>
double dcr_loss(const Codebook<Scalar>& cb) {
  ++loss_call_counters().dcr;
  return dcr_loss_from_entries(cb.entries.template cast<double>());
}

/// d dcr / d e_k = 2 mu_q / K + 2 / (K - 1) (I - (Sigma_q + ridge I)^{-1/2}) (e_k - mu_q)
template <typename Scalar>
MatrixXd dcr_gradient(const Codebook<Scalar>& cb, double ridge = kDcrRidge) {
  ++loss_call_counters().dcr;
  return dcr_gradient_from_entries(cb.entries.template cast<double>(), ridge);
}

// ---------------------------------------------------------------------------

/// Weighted objective. With VLQ on:
///   total = rec_c + rec_q + lambda_rcs rcs + lambda_dcr dcr + beta_kl kl
/// With VLQ off the rec_c and kl terms are dropped. The hard alignment term
/// enters as beta_commit * hard_align when enabled. Disabled terms are
/// reported as zero.
LossBreakdown total_loss(const LossTerms& terms, const ObjectiveConfig& cfg);

}  // namespace vaevq
