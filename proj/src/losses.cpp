#include "vaevq/losses.hpp"

#include <cmath>
#include <string>

#include "vaevq/numerics.hpp"

namespace vaevq {

LossCallCounters& loss_call_counters() {
  static LossCallCounters counters;
  return counters;
}

double dcr_loss_from_entries(const MatrixXd& entries) {
  require(entries.rows() >= 2, ErrorKind::InsufficientSamples, "dcr_loss: need K >= 2");
  const VectorXd mu = mean_vector(entries);
  const SymmetricMatrix sigma = sample_covariance(entries);
  return mu.squaredNorm() + sigma.trace() - 2.0 * sym_sqrt(sigma).trace();
}

MatrixXd dcr_gradient_from_entries(const MatrixXd& entries, double ridge) {
  require(entries.rows() >= 2, ErrorKind::InsufficientSamples, "dcr_gradient: need K >= 2");
  const double size = double(entries.rows());
  const Eigen::Index dim = entries.cols();
  const RowVector<double> mu = entries.colwise().mean();
  const MatrixXd centered = entries.rowwise() - mu;
  const SymmetricMatrix sigma((centered.transpose() * centered) / (size - 1.0));

  // dL/dSigma = I - Sigma^{-1/2}; it is symmetric so the covariance chain
  // rule reduces to 2 / (K - 1) * (e_k - mu) * G.
  const MatrixXd g = MatrixXd::Identity(dim, dim) - sym_inv_sqrt(sigma, ridge).matrix();
  MatrixXd grad = (2.0 / (size - 1.0)) * centered * g;
  grad.rowwise() += (2.0 / size) * mu;
  return grad;
}

LossBreakdown total_loss(const LossTerms& terms, const ObjectiveConfig& cfg) {
  LossBreakdown out;
  const auto& w = cfg.weights;
  auto take = [](double value, const char* name) {
    require(std::isfinite(value), ErrorKind::NonFinite,
            std::string("non-finite loss term: ") + name);
    return value;
  };
  out.rec_q = take(terms.rec_q, "rec_q");
  out.total = out.rec_q;
  if (cfg.vlq) {
    out.rec_c = take(terms.rec_c, "rec_c");
    out.kl = take(terms.kl, "kl");
    out.total += out.rec_c + w.beta_kl * out.kl;
  }
  if (cfg.rcs) {
    out.rcs = take(terms.rcs, "rcs");
    out.total += w.lambda_rcs * out.rcs;
  }
  if (cfg.dcr) {
    out.dcr = take(terms.dcr, "dcr");
    out.total += w.lambda_dcr * out.dcr;
  }
  if (cfg.hard_align) {
    out.hard_align = take(terms.hard_align, "hard_align");
    out.total += w.beta_commit * out.hard_align;
  }
  return out;
}

}  // namespace vaevq
