// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "micro_model.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"
#include "vaevq/checkpoint.hpp"
#include "vaevq/codebook.hpp"
#include "vaevq/data.hpp"
#include "vaevq/losses.hpp"
#include "vaevq/metrics.hpp"
#include "vaevq/model.hpp"
#include "vaevq/numerics.hpp"
#include "vaevq/trainer.hpp"

namespace fs = std::filesystem;
using namespace vaevq;
using oracle::MatrixXd;
using oracle::VectorXd;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// Plain central differences, kept separate from the library helper.
VectorXd central_difference(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h) {
  VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd up = x, down = x;
    up(i) += h;
    down(i) -= h;
    g(i) = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

VectorXd flat(const MatrixXd& m) { return Eigen::Map<const VectorXd>(m.data(), m.size()); }

MatrixXd shaped(const VectorXd& x, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const MatrixXd>(x.data(), rows, cols);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// -------------------------------------------------------------------------

Outcome dcr_closed_form() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int cases = 0;
  for (const int k : {8, 64})
    for (const int d : {2, 8})
      for (int rep = 0; rep < 25; ++rep) {
        const auto cb = make_codebook(oracle::random_matrix(k, d, rng, 0.3 + 0.1 * rep));
        const auto moments = codebook_moments(cb);
        const double w2 = gaussian_w2_squared(moments.mean, moments.covariance, VectorXd::Zero(d),
                                              SymmetricMatrix::identity(d));
        worst = std::max(worst, std::abs(dcr_loss(cb) + d - w2));
        ++cases;
      }
  const double elapsed = seconds_since(start);
  return {cases == 100 && worst < 1e-8 && elapsed < 5.0,
          std::to_string(cases) + " codebooks, max |dcr + d - w2| = " + fmt(worst) + ", " + fmt(elapsed) + " s"};
}

Outcome dcr_stationary_point() {
  std::mt19937_64 rng(11);
  double worst_value = 0.0;
  double worst_grad = 0.0;
  for (const int k : {16, 64, 256})
    for (const int d : {2, 8}) {
      const auto cb = make_codebook(oracle::whitened_codebook(k, d, rng));
      worst_value = std::max(worst_value, std::abs(dcr_loss(cb) + d));
      worst_grad = std::max(worst_grad, dcr_gradient(cb).norm());
    }
  return {worst_value < 1e-9 && worst_grad < 1e-6,
          "max |loss + d| = " + fmt(worst_value) + ", max gradient norm = " + fmt(worst_grad)};
}

Outcome gradient_suite() {
  const auto start = Clock::now();
  std::mt19937_64 rng(5);
  double worst = 0.0;
  const auto track = [&](const VectorXd& analytic, const VectorXd& numeric) {
    worst = std::max(worst, oracle::max_relative_error(analytic, numeric));
  };
  bool exact_zeros = true;

  for (int rep = 0; rep < 5; ++rep) {
    const MatrixXd z_q = oracle::random_matrix(6, 2, rng);
    const MatrixXd mu = oracle::random_matrix(6, 2, rng);
    const MatrixXd lv = oracle::random_matrix(6, 2, rng, 0.5);
    const auto post = make_latent(mu, lv);

    const auto rg = rcs_gradient(z_q, post);
    track(flat(rg.d_z_q),
          central_difference([&](const VectorXd& x) { return rcs_loss<double>(shaped(x, 6, 2), post); }, flat(z_q),
                             1e-6));
    track(flat(rg.d_mu), central_difference(
                             [&](const VectorXd& x) {
                               return rcs_loss<double>(z_q, make_latent<double>(shaped(x, 6, 2), lv));
                             },
                             flat(mu), 1e-6));
    exact_zeros &= rg.d_log_var.isZero(0.0);

    const auto kg = kl_gradient(post);
    track(flat(kg.d_mu), central_difference(
                             [&](const VectorXd& x) { return kl_loss(make_latent<double>(shaped(x, 6, 2), lv)); },
                             flat(mu), 1e-6));
    track(flat(kg.d_log_var),
          central_difference([&](const VectorXd& x) { return kl_loss(make_latent<double>(mu, shaped(x, 6, 2))); },
                             flat(lv), 1e-6));

    const MatrixXd entries = oracle::random_matrix(4, 2, rng);
    track(flat(dcr_gradient(make_codebook(entries), 0.0)),
          central_difference([&](const VectorXd& x) { return oracle::dcr_value(shaped(x, 4, 2)); }, flat(entries),
                             1e-6));
  }

  // Full objective through the micro model: 4x4 images, 2 tokens, d = 2, K = 4.
  for (const bool vlq : {true, false})
    for (const bool hard : {false, true}) {
      const auto model = oracle::random_micro_model(19 + std::uint64_t(hard));
      const MatrixXd book = oracle::conditioned_codebook(4, 2, rng);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      MatrixXd images(3, 16);
      for (Eigen::Index i = 0; i < images.size(); ++i) images.data()[i] = u(rng);
      const MatrixXd eps = oracle::random_matrix(6, 2, rng);
      ObjectiveConfig cfg;
      cfg.vlq = vlq;
      cfg.rcs = vlq;
      cfg.hard_align = hard;

      const auto g = compute_gradients(model, make_codebook(book), images, cfg, eps);
      const auto frozen = oracle::freeze(model, book, images, eps, vlq);
      const auto f = [&](const VectorXd& x) {
        auto m = model;
        MatrixXd b = book;
        oracle::unpack(x, m, b);
        return oracle::surrogate_objective(m, b, images, eps, cfg, frozen);
      };
      const Model<double> grads{oracle::micro_config(), g.model_grads};
      track(oracle::pack(grads, g.codebook_grad), central_difference(f, oracle::pack(model, book), 1e-6));

      // Reconstruction alone sends nothing to the codebook.
      ObjectiveConfig rec_only = cfg;
      rec_only.rcs = rec_only.dcr = rec_only.hard_align = false;
      exact_zeros &= compute_gradients(model, make_codebook(book), images, rec_only, eps).codebook_grad.isZero(0.0);

      // Coherence leaves the log-variance head untouched.
      if (vlq) {
        ObjectiveConfig no_rcs = cfg;
        no_rcs.rcs = false;
        const auto without = compute_gradients(model, make_codebook(book), images, no_rcs, eps);
        exact_zeros &= without.model_grads[kEncW2].bottomRows(2) == g.model_grads[kEncW2].bottomRows(2);
        exact_zeros &= without.model_grads[kEncB2].bottomRows(2) == g.model_grads[kEncB2].bottomRows(2);
      }
    }

  const double elapsed = seconds_since(start);
  return {worst < 1e-4 && exact_zeros && elapsed < 30.0,
          "max relative error = " + fmt(worst) + ", exact zeros " + (exact_zeros ? "hold" : "violated") + ", " +
              fmt(elapsed) + " s"};
}

Outcome matrix_square_root() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> dim(1, 16);
  std::uniform_int_distribution<int> coin(0, 1);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int d = dim(rng);
    MatrixXd s;
    if (coin(rng)) {
      s = oracle::random_spd(d, rng, 0.0);
    } else {
      // rank deficient
      const MatrixXd a = oracle::random_matrix(d, std::max(1, d / 2), rng);
      s = a * a.transpose();
    }
    const SymmetricMatrix sym(s);
    const MatrixXd r = sym_sqrt(sym).matrix();
    worst = std::max(worst, (r * r - sym.matrix()).norm() / sym.matrix().norm());
  }
  return {worst < 1e-8, "100 matrices, max relative residual = " + fmt(worst)};
}

Outcome quantizer() {
  const auto cb = init_codebook<float>(256, 8, 3);
  const MatrixXd book = cb.entries.cast<double>();
  std::mt19937_64 rng(4);
  const MatrixXd queries = oracle::random_matrix(10000, 8, rng, 1.5);
  const Matrix<float> q = queries.cast<float>();
  const auto batch = assign(q, cb);
  int mismatches = 0;
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    mismatches += batch.indices[std::size_t(i)] != oracle::nearest(q.row(i).cast<double>().transpose(), book);
  int not_idempotent = 0;
  for (Eigen::Index k = 0; k < cb.size(); ++k) not_idempotent += nearest_codeword(cb.entries.row(k), cb).index != k;
  return {mismatches == 0 && not_idempotent == 0,
          "10000 lookups, " + std::to_string(mismatches) + " oracle mismatches, " + std::to_string(not_idempotent) +
              " non-idempotent codewords"};
}

// -------------------------------------------------------------------------

struct Ablation {
  std::vector<AblationRow> rows;
  double seconds = 0.0;

  const AblationRow& row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.config == name) return r;
    throw Error(ErrorKind::InvalidArgument, "no ablation row for " + name);
  }
};

Ablation run_desk_ablation(const fs::path& dir) {
  const auto start = Clock::now();
  Ablation a;
  a.rows = run_ablation({"full", "M2", "M1", "baseline"}, {1, 2, 3}, named_config("full"), dir);
  a.seconds = seconds_since(start);
  return a;
}

Outcome utilization_direction(const Ablation& a) {
  const double full = a.row("full").median.utilization;
  const double base = a.row("baseline").median.utilization;
  return {full - base >= 0.20 && full >= 0.90 && a.seconds < 15 * 60,
          "median utilization full " + fmt(100 * full) + "%, baseline " + fmt(100 * base) + "%, 12 runs in " +
              fmt(a.seconds) + " s"};
}

Outcome mse_direction(const Ablation& a) {
  const std::vector<std::string> order = {"full", "M2", "M1", "baseline"};
  std::vector<double> mse;
  for (const auto& name : order) mse.push_back(a.row(name).median.mse);
  bool ordered = true;
  for (std::size_t i = 0; i + 1 < mse.size(); ++i) ordered &= mse[i] <= mse[i + 1] * 1.05;
  const bool margin = mse[0] <= 0.9 * mse[3];
  std::string detail = "median mse";
  for (std::size_t i = 0; i < order.size(); ++i) detail += " " + order[i] + " " + fmt(mse[i]);
  return {ordered && margin, detail};
}

// Throws once `limit` progress lines have been written, which interrupts a
// run right after the checkpoint of that epoch is on disk.
struct Interrupted {};
class StopAfterLines : public std::streambuf {
public:
  explicit StopAfterLines(int limit) : left_(limit) {}

protected:
  int_type overflow(int_type ch) override {
    if (ch == '\n' && --left_ == 0) throw Interrupted{};
    return ch;
  }

private:
  int left_;
};

Outcome determinism(const fs::path& dir) {
  TrainConfig cfg = named_config("full");
  cfg.epochs = 3;
  std::vector<std::string> failures;
  const auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  train_run(cfg, dir / "a");
  train_run(cfg, dir / "b");
  for (const auto* name : {"metrics.csv", "losses.csv", "checkpoint.bin", "config.txt"})
    expect(slurp(dir / "a" / name) == slurp(dir / "b" / name), std::string(name) + " differs between runs");

  // interrupt at t = 2, resume, compare epoch 3
  StopAfterLines stop(3);
  std::ostream log(&stop);
  log.exceptions(std::ios::badbit);
  bool interrupted = false;
  try {
    train_run(cfg, dir / "c", TrainOptions{std::nullopt, &log});
  } catch (const Interrupted&) {
    interrupted = true;
  }
  expect(interrupted, "interruption did not happen");
  TrainOptions resume;
  resume.resume = load_checkpoint(dir / "c" / "checkpoint.bin");
  expect(resume.resume->epoch == 2, "interrupted checkpoint is not at epoch 2");
  train_run(cfg, dir / "c", resume);
  for (const auto* name : {"metrics.csv", "losses.csv", "checkpoint.bin"})
    expect(slurp(dir / "a" / name) == slurp(dir / "c" / name), std::string(name) + " differs after resume");

  // checkpoint: decode then encode gives the same bytes
  const std::string bytes = slurp(dir / "a" / "checkpoint.bin");
  expect(encode_checkpoint(decode_checkpoint(bytes)) == bytes, "checkpoint re-encode differs");
  save_checkpoint(dir / "copy.bin", load_checkpoint(dir / "a" / "checkpoint.bin"));
  expect(slurp(dir / "copy.bin") == bytes, "checkpoint save/load/save differs");

  // PGM: values written as bytes come back exactly and re-write identically
  const auto images = generate_synthetic(SyntheticKind::Mixed, 12, 16, 8);
  write_pgm(dir / "x.pgm", images);
  const ImageBatch back = read_pgm(dir / "x.pgm");
  bool bytes_exact = back.height == 16 && back.width == 16 && back.size() == 12;
  for (Eigen::Index i = 0; bytes_exact && i < images.pixels.size(); ++i)
    bytes_exact = back.pixels.data()[i] == double(to_byte(images.pixels.data()[i])) / 255.0;
  expect(bytes_exact, "PGM values differ from their byte quantization");
  write_pgm(dir / "y.pgm", back);
  expect(slurp(dir / "x.pgm") == slurp(dir / "y.pgm"), "PGM re-write differs");
  expect(read_pgm(dir / "y.pgm").pixels == back.pixels, "PGM second read differs");

  std::string detail = failures.empty() ? "CSVs, checkpoints, resume at epoch 2 and round trips exact" : "";
  for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
  return {failures.empty(), detail};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + VAEVQ_CLI_PATH + "\" " + args + " > /dev/null";
  return std::system(cmd.c_str());
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

Outcome cli_end_to_end(const fs::path& dir) {
  const fs::path run = dir / "run";
  if (run_cli("train --config full --seed 1 --out " + quoted(run)) != 0) return {false, "train failed"};

  const Checkpoint ckpt = load_checkpoint(run / "checkpoint.bin");
  const ImageBatch one = load_dataset(ckpt.config).test.slice(0, 1);
  write_pgm(dir / "input.pgm", one);
  if (run_cli("encode --checkpoint " + quoted(run / "checkpoint.bin") + " --image " + quoted(dir / "input.pgm") +
              " --out " + quoted(dir / "tokens.txt")) != 0)
    return {false, "encode failed"};
  if (run_cli("decode --checkpoint " + quoted(run / "checkpoint.bin") + " --tokens " + quoted(dir / "tokens.txt") +
              " --out " + quoted(dir / "output.pgm")) != 0)
    return {false, "decode failed"};

  const double image_psnr = psnr(read_pgm(dir / "input.pgm"), read_pgm(dir / "output.pgm"));
  const double eval_psnr = read_eval_csv(run / "metrics.csv").back().psnr;
  return {image_psnr >= eval_psnr - 3.0,
          "image PSNR " + fmt(image_psnr) + " dB vs evaluation mean " + fmt(eval_psnr) + " dB"};
}

}  // namespace

int main() {
  TempDir scratch("acceptance");
  int failures = 0;
  const auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " (" << o.detail << ")"
              << std::endl;
  };

  report(1, "closed-form DCR identity", dcr_closed_form);
  report(2, "DCR stationary point", dcr_stationary_point);
  report(3, "gradient oracle suite", gradient_suite);
  report(4, "matrix square root", matrix_square_root);
  report(5, "quantizer correctness", quantizer);

  Ablation ablation;
  std::string ablation_error;
  try {
    ablation = run_desk_ablation(scratch / "ablation");
  } catch (const std::exception& e) {
    ablation_error = e.what();
  }
  const auto needs_ablation = [&](Outcome (*check)(const Ablation&)) {
    return [&, check]() -> Outcome {
      if (!ablation_error.empty()) return {false, "ablation failed: " + ablation_error};
      return check(ablation);
    };
  };
  report(6, "desk-scale utilization direction", needs_ablation(utilization_direction));
  report(7, "desk-scale reconstruction ordering", needs_ablation(mse_direction));
  report(8, "determinism and persistence", [&] { return determinism(scratch / "determinism"); });
  report(9, "CLI end to end", [&] { return cli_end_to_end(scratch / "cli"); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
