#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vaevq/error.hpp"
#include "vaevq/numerics.hpp"
#include "vaevq/types.hpp"

namespace vaevq {

/// Denominator floor for the EMA mean update.
inline constexpr double kEmaEpsilon = 1e-5;

/// K x d learnable codebook plus bookkeeping. `usage_counts` accumulates
/// assignments since the last reset; `ema_counts` holds the per-codeword
/// cluster-size accumulators of the EMA update.
template <typename Scalar>
struct Codebook {
  Matrix<Scalar> entries;
  std::vector<std::uint64_t> usage_counts;
  Vector<Scalar> ema_counts;
  std::uint64_t generation = 0;

  Eigen::Index size() const { return entries.rows(); }
  Eigen::Index dim() const { return entries.cols(); }

  template <typename Other>
  Codebook<Other> cast() const {
    Codebook<Other> out;
    out.entries = entries.template cast<Other>();
    out.usage_counts = usage_counts;
    out.ema_counts = ema_counts.template cast<Other>();
    out.generation = generation;
    return out;
  }
};

/// Wraps existing codewords into a codebook with zeroed counters.
template <typename Derived>
Codebook<typename Derived::Scalar> make_codebook(const Eigen::MatrixBase<Derived>& entries) {
  require(entries.rows() >= 1 && entries.cols() >= 1, ErrorKind::InvalidArgument,
          "codebook needs K >= 1 and d >= 1");
  require(entries.allFinite(), ErrorKind::NonFinite, "codebook entries must be finite");
  Codebook<typename Derived::Scalar> cb;
  cb.entries = entries;
  cb.usage_counts.assign(static_cast<std::size_t>(entries.rows()), 0);
  cb.ema_counts = Vector<typename Derived::Scalar>::Zero(entries.rows());
  return cb;
}

/// Codewords drawn i.i.d. from N(0, 1), deterministic per seed.
template <typename Scalar = float>
Codebook<Scalar> init_codebook(Eigen::Index size, Eigen::Index dim, std::uint64_t seed) {
  require(size >= 1 && dim >= 1, ErrorKind::InvalidArgument,
          "init_codebook: K and d must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<Scalar> entries(size, dim);
  for (Eigen::Index k = 0; k < size; ++k)
    for (Eigen::Index j = 0; j < dim; ++j) entries(k, j) = static_cast<Scalar>(normal(rng));
  return make_codebook(entries);
}

struct AssignmentBatch {
  std::vector<Eigen::Index> indices;
  std::vector<double> distances;  // squared l2 to the chosen codeword

  std::size_t size() const { return indices.size(); }
};

template <typename Scalar>
struct NearestCodeword {
  Eigen::Index index = 0;
  double distance = 0.0;
  RowVector<Scalar> codeword;
};

namespace detail {

// Index of the closest codeword; strict comparison keeps the lowest index on ties.
template <typename Scalar, typename Derived>
std::pair<Eigen::Index, double> argmin_codeword(const Eigen::MatrixBase<Derived>& z,
                                                const Matrix<Scalar>& entries) {
  Eigen::Index best = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  const Eigen::Index dim = entries.cols();
  for (Eigen::Index k = 0; k < entries.rows(); ++k) {
    double distance = 0.0;
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double diff = double(z(j)) - double(entries(k, j));
      distance += diff * diff;
    }
    if (distance < best_distance) {
      best_distance = distance;
      best = k;
    }
  }
  return {best, best_distance};
}

}  // namespace detail

/// Exact nearest neighbour under squared Euclidean distance; ties go to
/// the lowest index.
template <typename Scalar, typename Derived>
NearestCodeword<Scalar> nearest_codeword(const Eigen::MatrixBase<Derived>& z,
                                         const Codebook<Scalar>& cb) {
  require(z.size() == cb.dim(), ErrorKind::DimensionMismatch,
          "nearest_codeword: vector has dim " + std::to_string(z.size()) + ", codebook has " +
              std::to_string(cb.dim()));
  require(z.allFinite(), ErrorKind::NonFinite, "nearest_codeword: non-finite input");
  const auto [index, distance] = detail::argmin_codeword<Scalar>(z, cb.entries);
  return {index, distance, cb.entries.row(index)};
}

/// Nearest codeword for every row of `latents`.
template <typename Scalar, typename Derived>
AssignmentBatch assign(const Eigen::MatrixBase<Derived>& latents, const Codebook<Scalar>& cb) {
  require(latents.cols() == cb.dim(), ErrorKind::DimensionMismatch,
          "assign: latent dim does not match codebook");
  require(latents.allFinite(), ErrorKind::NonFinite, "assign: non-finite latent");
  AssignmentBatch out;
  out.indices.resize(static_cast<std::size_t>(latents.rows()));
  out.distances.resize(static_cast<std::size_t>(latents.rows()));
  for (Eigen::Index i = 0; i < latents.rows(); ++i) {
    const auto [index, distance] = detail::argmin_codeword<Scalar>(latents.row(i), cb.entries);
    out.indices[std::size_t(i)] = index;
    out.distances[std::size_t(i)] = distance;
  }
  return out;
}

template <typename Scalar>
Codebook<Scalar> record_usage(Codebook<Scalar> cb, const AssignmentBatch& batch) {
  for (const Eigen::Index index : batch.indices)
    require(index >= 0 && index < cb.size(), ErrorKind::OutOfRange,
            "record_usage: index " + std::to_string(index) + " out of range");
  for (const Eigen::Index index : batch.indices) ++cb.usage_counts[std::size_t(index)];
  return cb;
}

template <typename Scalar>
Codebook<Scalar> reset_usage(Codebook<Scalar> cb) {
  std::fill(cb.usage_counts.begin(), cb.usage_counts.end(), 0);
  return cb;
}

/// Fraction of codewords assigned at least once since the last reset.
template <typename Scalar>
double utilization(const Codebook<Scalar>& cb) {
  std::size_t used = 0;
  for (const auto count : cb.usage_counts) used += count > 0 ? 1 : 0;
  return double(used) / double(cb.size());
}

struct CodebookMoments {
  VectorXd mean;
  SymmetricMatrix covariance;
};

template <typename Scalar>
CodebookMoments codebook_moments(const Codebook<Scalar>& cb) {
  require(cb.size() >= 2, ErrorKind::InsufficientSamples,
          "codebook_moments: need K >= 2");
  return {mean_vector(cb.entries), sample_covariance(cb.entries)};
}

/// Cluster-EMA update:
///   N_k <- decay * N_k + (1 - decay) * count_k
///   m_k <- decay * m_k + (1 - decay) * sum of latents assigned to k
///   e_k <- m_k / max(N_k, eps)
/// with m_k kept implicitly as N_k * e_k. Codewords without assignments in
/// this batch do not move; an empty batch leaves the codebook untouched.
template <typename Scalar, typename Derived>
Codebook<Scalar> ema_update(Codebook<Scalar> cb, const Eigen::MatrixBase<Derived>& latents,
                            const AssignmentBatch& assignments, double decay) {
  require(decay > 0.0 && decay < 1.0, ErrorKind::OutOfRange,
          "ema_update: decay must lie in (0, 1)");
  require(latents.cols() == cb.dim(), ErrorKind::DimensionMismatch,
          "ema_update: latent dim does not match codebook");
  require(std::size_t(latents.rows()) == assignments.size(), ErrorKind::DimensionMismatch,
          "ema_update: one assignment per latent required");
  if (assignments.size() == 0) return cb;

  const Eigen::Index size = cb.size();
  Vector<double> counts = Vector<double>::Zero(size);
  MatrixXd sums = MatrixXd::Zero(size, cb.dim());
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const Eigen::Index k = assignments.indices[i];
    require(k >= 0 && k < size, ErrorKind::OutOfRange, "ema_update: index out of range");
    counts(k) += 1.0;
    sums.row(k) += latents.row(Eigen::Index(i)).template cast<double>();
  }

  for (Eigen::Index k = 0; k < size; ++k) {
    const double previous = double(cb.ema_counts(k));
    const double updated = decay * previous + (1.0 - decay) * counts(k);
    cb.ema_counts(k) = Scalar(updated);
    if (counts(k) == 0.0) continue;
    const RowVector<double> mass = decay * previous * cb.entries.row(k).template cast<double>() +
                                   (1.0 - decay) * sums.row(k);
    cb.entries.row(k) = (mass / std::max(updated, kEmaEpsilon)).template cast<Scalar>();
  }
  ++cb.generation;
  return cb;
}

}  // namespace vaevq
