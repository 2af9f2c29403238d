#pragma once

// Variational quantization forward path: reparameterized sampling,
// nearest-codeword quantization and the shared-decoder dual path.

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "vaevq/codebook.hpp"
#include "vaevq/error.hpp"
#include "vaevq/types.hpp"

namespace vaevq {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Per-token diagonal Gaussian posterior; rows are tokens.
template <typename Scalar>
struct LatentGaussian {
  Matrix<Scalar> mu;
  Matrix<Scalar> log_var;  // clamped to [kLogVarMin, kLogVarMax]

  Eigen::Index tokens() const { return mu.rows(); }
  Eigen::Index dim() const { return mu.cols(); }
  Matrix<Scalar> sigma() const { return (Scalar(0.5) * log_var.array()).exp().matrix(); }
};

template <typename Scalar>
LatentGaussian<Scalar> make_latent(Matrix<Scalar> mu, const Matrix<Scalar>& raw_log_var) {
  require(mu.rows() == raw_log_var.rows() && mu.cols() == raw_log_var.cols(),
          ErrorKind::DimensionMismatch, "latent mean and log-variance shapes differ");
  require(mu.allFinite() && raw_log_var.allFinite(), ErrorKind::NonFinite,
          "latent gaussian has non-finite values");
  return {std::move(mu),
          raw_log_var.cwiseMax(Scalar(kLogVarMin)).cwiseMin(Scalar(kLogVarMax))};
}

template <typename Scalar>
struct QuantizationResult {
  Matrix<Scalar> z_c;    // quantizer input
  std::vector<Eigen::Index> indices;
  std::vector<double> distances;
  Matrix<Scalar> z_q;    // selected codewords
  Matrix<Scalar> z_st;   // straight-through composite; forward value == z_q

  AssignmentBatch assignments() const { return {indices, distances}; }
};

/// z_c = mu + exp(log_var / 2) * eps
template <typename Scalar>
Matrix<Scalar> reparameterize(const LatentGaussian<Scalar>& g, const Matrix<Scalar>& eps) {
  require(eps.rows() == g.mu.rows() && eps.cols() == g.mu.cols(), ErrorKind::DimensionMismatch,
          "reparameterize: noise shape does not match posterior");
  return g.mu + g.sigma().cwiseProduct(eps);
}

/// Nearest-codeword quantization of every row of z_c. Backward semantics
/// of z_st = z_c + stop_gradient(z_q - z_c) live in compute_gradients.
template <typename Scalar>
QuantizationResult<Scalar> quantize_batch(const Matrix<Scalar>& z_c, const Codebook<Scalar>& cb) {
  AssignmentBatch batch = assign(z_c, cb);
  QuantizationResult<Scalar> out;
  out.z_c = z_c;
  out.z_q.resize(z_c.rows(), z_c.cols());
  for (Eigen::Index i = 0; i < z_c.rows(); ++i)
    out.z_q.row(i) = cb.entries.row(batch.indices[std::size_t(i)]);
  out.z_st = out.z_q;
  out.indices = std::move(batch.indices);
  out.distances = std::move(batch.distances);
  return out;
}

template <typename Scalar>
struct DualPathOutput {
  Matrix<Scalar> recon_c;  // D(z_c)
  Matrix<Scalar> recon_q;  // D(z_st)
  LatentGaussian<Scalar> posterior;
  QuantizationResult<Scalar> quantized;
};

/// Encodes `x`, samples z_c with the supplied noise (zero noise gives the
/// deterministic evaluation path), quantizes, and decodes both z_c and z_st
/// with the same decoder. `ModelT` must be usable as encode(model, x) and
/// decode(model, z).
template <typename ModelT, typename Scalar>
DualPathOutput<Scalar> dual_path_forward(const ModelT& model, const Matrix<Scalar>& x,
                                         const Codebook<Scalar>& cb, const Matrix<Scalar>& eps) {
  DualPathOutput<Scalar> out;
  out.posterior = encode(model, x);
  require(out.posterior.dim() == cb.dim(), ErrorKind::DimensionMismatch,
          "dual_path_forward: latent dim does not match codebook");
  out.quantized = quantize_batch(reparameterize(out.posterior, eps), cb);
  out.recon_c = decode(model, out.quantized.z_c);
  out.recon_q = decode(model, out.quantized.z_st);
  require(out.recon_c.allFinite() && out.recon_q.allFinite(), ErrorKind::NonFinite,
          "dual_path_forward: non-finite reconstruction");
  return out;
}

}  // namespace vaevq
