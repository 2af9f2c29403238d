#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "../support/oracles.hpp"
#include "vaevq/losses.hpp"

using namespace vaevq;

namespace {

Eigen::Map<const VectorXd> flat(const MatrixXd& m) { return {m.data(), m.size()}; }

}  // namespace

TEST_CASE("reconstruction_loss") {
  const MatrixXd x = MatrixXd::Random(3, 5);
  const auto same = reconstruction_loss<double>(x, x, x);
  CHECK(same.rec_c == 0.0);
  CHECK(same.rec_q == 0.0);
  const auto half = reconstruction_loss<double>(MatrixXd::Zero(2, 4), MatrixXd::Constant(2, 4, 0.5),
                                                MatrixXd::Zero(2, 4));
  CHECK(half.rec_c == doctest::Approx(0.25));
  CHECK(half.rec_q == 0.0);

  std::mt19937_64 rng(3);
  const MatrixXd a = oracle::random_matrix(7, 9, rng);
  const MatrixXd b = oracle::random_matrix(7, 9, rng);
  double naive = 0.0;
  for (Eigen::Index i = 0; i < 7; ++i)
    for (Eigen::Index j = 0; j < 9; ++j) naive += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  CHECK(std::abs(mean_squared_error<double>(a, b) - naive / 63.0) < 1e-10);
  CHECK_THROWS_AS(mean_squared_error<double>(a, MatrixXd::Zero(7, 8)), Error);
}

TEST_CASE("kl_loss") {
  CHECK(kl_loss(make_latent<double>(MatrixXd::Zero(3, 2), MatrixXd::Zero(3, 2))) == 0.0);
  CHECK(kl_loss(make_latent<double>(MatrixXd::Ones(1, 1), MatrixXd::Zero(1, 1))) == doctest::Approx(0.5));
  const double ln4 = std::log(4.0);
  CHECK(kl_loss(make_latent<double>(MatrixXd::Zero(1, 1), MatrixXd::Constant(1, 1, ln4))) ==
        doctest::Approx(0.5 * (4.0 - 1.0 - ln4)));

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = make_latent(oracle::random_matrix(4, 3, rng), oracle::random_matrix(4, 3, rng));
    CHECK(kl_loss(g) > 0.0);
  }

  const MatrixXd mu = oracle::random_matrix(5, 3, rng);
  const MatrixXd lv = oracle::random_matrix(5, 3, rng);
  const auto grad = kl_gradient(make_latent(mu, lv));
  const auto f_mu = [&](const VectorXd& x) {
    return kl_loss(make_latent<double>(Eigen::Map<const MatrixXd>(x.data(), 5, 3), lv));
  };
  const auto f_lv = [&](const VectorXd& x) {
    return kl_loss(make_latent<double>(mu, Eigen::Map<const MatrixXd>(x.data(), 5, 3)));
  };
  CHECK(oracle::max_relative_error(flat(grad.d_mu), finite_difference_gradient(f_mu, flat(mu), 1e-6)) < 1e-4);
  CHECK(oracle::max_relative_error(flat(grad.d_log_var), finite_difference_gradient(f_lv, flat(lv), 1e-6)) <
        1e-4);
}

TEST_CASE("rcs_loss") {
  const auto unit = make_latent<double>(MatrixXd::Zero(1, 2), MatrixXd::Zero(1, 2));
  CHECK(rcs_loss<double>(MatrixXd::Zero(1, 2), unit) == 0.0);

  const MatrixXd residual = (MatrixXd(1, 2) << 1, 2).finished();
  const MatrixXd lv = (MatrixXd(1, 2) << 0, std::log(4.0)).finished();
  const auto g = make_latent<double>(MatrixXd::Zero(1, 2), lv);
  CHECK(rcs_loss<double>(residual, g) == doctest::Approx(1.0));

  const MatrixXd one_dim = (MatrixXd(1, 1) << 3).finished();
  const double base = rcs_loss<double>(one_dim, make_latent<double>(MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1)));
  const double doubled =
      rcs_loss<double>(one_dim, make_latent<double>(MatrixXd::Zero(1, 1), MatrixXd::Constant(1, 1, std::log(4.0))));
  CHECK(doubled == doctest::Approx(base / 4.0));

  SUBCASE("full negative log-likelihood adds the normalizer") {
    const double simplified = rcs_loss<double>(residual, g);
    const double nll = rcs_loss<double>(residual, g, RcsMode::FullNll);
    CHECK(nll == doctest::Approx(simplified + 0.5 * (2.0 * std::log(2.0 * std::numbers::pi) + std::log(4.0))));
  }

  SUBCASE("gradients") {
    std::mt19937_64 rng(7);
    const MatrixXd z_q = oracle::random_matrix(6, 3, rng);
    const MatrixXd mu = oracle::random_matrix(6, 3, rng);
    const MatrixXd log_var = oracle::random_matrix(6, 3, rng, 0.5);
    const auto post = make_latent(mu, log_var);
    const auto grad = rcs_gradient(z_q, post);
    const auto f_zq = [&](const VectorXd& x) {
      return rcs_loss<double>(Eigen::Map<const MatrixXd>(x.data(), 6, 3), post);
    };
    const auto f_mu = [&](const VectorXd& x) {
      return rcs_loss<double>(z_q, make_latent<double>(Eigen::Map<const MatrixXd>(x.data(), 6, 3), log_var));
    };
    CHECK(oracle::max_relative_error(flat(grad.d_z_q), finite_difference_gradient(f_zq, flat(z_q), 1e-6)) < 1e-4);
    CHECK(oracle::max_relative_error(flat(grad.d_mu), finite_difference_gradient(f_mu, flat(mu), 1e-6)) < 1e-4);
    CHECK(grad.d_log_var.isZero(0.0));

    const auto f_lv = [&](const VectorXd& x) {
      return rcs_loss<double>(z_q, make_latent<double>(mu, Eigen::Map<const MatrixXd>(x.data(), 6, 3)),
                              RcsMode::FullNll);
    };
    const auto full = rcs_gradient(z_q, post, RcsMode::FullNll);
    CHECK(oracle::max_relative_error(flat(full.d_log_var), finite_difference_gradient(f_lv, flat(log_var), 1e-6)) <
          1e-4);
  }
}

TEST_CASE("hard_alignment_loss") {
  const MatrixXd z_c = MatrixXd::Zero(1, 2);
  const MatrixXd z_q = (MatrixXd(1, 2) << 3, 4).finished();
  CHECK(hard_alignment_loss<double>(z_c, z_c) == 0.0);
  CHECK(hard_alignment_loss<double>(z_c, z_q) == doctest::Approx(12.5));

  SUBCASE("scaling identity with the coherence term") {
    std::mt19937_64 rng(2);
    const MatrixXd mu = oracle::random_matrix(5, 4, rng);
    const MatrixXd q = oracle::random_matrix(5, 4, rng);
    for (const double c : {1.0, 0.5, 3.0}) {
      const auto g = make_latent<double>(mu, MatrixXd::Constant(5, 4, 2.0 * std::log(c)));
      // per-token sum over d dims versus per-element mean
      CHECK(rcs_loss<double>(q, g) == doctest::Approx(0.5 * 4.0 * hard_alignment_loss<double>(mu, q) / (c * c)));
    }
  }

  const auto grad = hard_alignment_gradient<double>(z_c, z_q);
  CHECK(grad.d_z_q.isApprox((MatrixXd(1, 2) << 3, 4).finished()));
  CHECK(grad.d_z_c == -grad.d_z_q);
}

TEST_CASE("dcr_loss") {
  std::mt19937_64 rng(31);
  SUBCASE("stationary point at the prior") {
    for (const int d : {2, 5}) {
      const MatrixXd book = oracle::whitened_codebook(40, d, rng);
      const auto cb = make_codebook(book);
      CHECK(dcr_loss(cb) == doctest::Approx(-double(d)).epsilon(1e-10));
      CHECK(dcr_gradient(cb).norm() < 1e-6);
      for (int trial = 0; trial < 50; ++trial) {
        const MatrixXd bumped = book + 0.1 * oracle::random_matrix(40, d, rng);
        CHECK(dcr_loss_from_entries(bumped) > -double(d));
      }
    }
  }
  SUBCASE("two-point book in one dimension") {
    CHECK(dcr_loss(make_codebook((MatrixXd(2, 1) << 1, -1).finished())) ==
          doctest::Approx(2.0 - 2.0 * std::sqrt(2.0)));
  }
  SUBCASE("identity against the Gaussian distance and the loop oracle") {
    for (int trial = 0; trial < 10; ++trial) {
      const MatrixXd book = oracle::random_matrix(12, 3, rng, 1.5);
      const auto cb = make_codebook(book);
      const auto m = codebook_moments(cb);
      const double w2 = gaussian_w2_squared(m.mean, m.covariance, VectorXd::Zero(3), SymmetricMatrix::identity(3));
      CHECK(std::abs(dcr_loss(cb) + 3.0 - w2) < 1e-8);
      CHECK(std::abs(dcr_loss(cb) - oracle::dcr_value(book)) < 1e-8);
    }
  }
  SUBCASE("translation only changes the mean part of the gradient") {
    const MatrixXd book = oracle::random_matrix(8, 3, rng);
    const Eigen::RowVector3d t(0.3, -0.7, 1.1);
    const MatrixXd shifted = book.rowwise() + t;
    const MatrixXd diff = dcr_gradient_from_entries(shifted) - dcr_gradient_from_entries(book);
    for (Eigen::Index k = 0; k < 8; ++k) CHECK((diff.row(k) - 2.0 * t / 8.0).norm() < 1e-9);
  }
  SUBCASE("gradient matches finite differences") {
    const MatrixXd book = oracle::random_matrix(8, 3, rng);
    const auto f = [](const VectorXd& x) { return dcr_loss_from_entries(Eigen::Map<const MatrixXd>(x.data(), 8, 3)); };
    const MatrixXd g = dcr_gradient_from_entries(book, 0.0);
    CHECK(oracle::max_relative_error(flat(g), finite_difference_gradient(f, flat(book), 1e-5)) < 1e-4);
  }
  CHECK_THROWS_AS(dcr_loss(make_codebook(MatrixXd::Ones(1, 2))), Error);
}

TEST_CASE("total_loss") {
  ObjectiveConfig cfg;
  CHECK(total_loss(LossTerms{}, cfg).total == 0.0);

  LossTerms t;
  t.rec_c = 1;
  t.rec_q = 1;
  t.rcs = 2;
  t.dcr = -1;
  t.kl = 3;
  const auto full = total_loss(t, cfg);
  CHECK(full.total == doctest::Approx(3.903).epsilon(1e-12));

  ObjectiveConfig baseline;
  baseline.vlq = baseline.rcs = baseline.dcr = false;
  baseline.hard_align = true;
  t.hard_align = 0.4;
  const auto b = total_loss(t, baseline);
  CHECK(b.total == doctest::Approx(1.0 + 0.25 * 0.4));
  CHECK(b.kl == 0.0);
  CHECK(b.rec_c == 0.0);
  CHECK(b.rcs == 0.0);

  t.rcs = std::nan("");
  try {
    total_loss(t, cfg);
    FAIL("expected non-finite error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
    CHECK(std::string(e.what()).find("rcs") != std::string::npos);
  }
}
