#include <doctest.h>

#include <cmath>
#include <random>

#include <fstream>

#include "temp_dir.hpp"
#include "vaevq/error.hpp"
#include "vaevq/metrics.hpp"

using namespace vaevq;

namespace {

ImageBatch random_batch(int n, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageBatch b{size, size, PixelMatrix(n, size * size)};
  for (Eigen::Index i = 0; i < b.pixels.size(); ++i) b.pixels.data()[i] = u(rng);
  return b;
}

ImageBatch constant_batch(int size, double value) {
  return {size, size, PixelMatrix::Constant(1, size * size, value)};
}

}  // namespace

TEST_CASE("psnr") {
  const auto x = random_batch(3, 8, 1);
  CHECK(psnr(x, x) == kPsnrCap);
  ImageBatch shifted = x;
  shifted.pixels.array() += 0.1;
  CHECK(mean_squared_error(x, shifted) == doctest::Approx(0.01));
  CHECK(psnr(x, shifted) == doctest::Approx(20.0));

  const auto y = random_batch(3, 8, 2);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < x.pixels.rows(); ++i)
    for (Eigen::Index j = 0; j < x.pixels.cols(); ++j) {
      const double d = x.pixels(i, j) - y.pixels(i, j);
      sum += d * d;
    }
  const double mse = sum / double(x.pixels.size());
  CHECK(std::abs(psnr(x, y) - 10.0 * std::log10(1.0 / mse)) < 1e-9);
  CHECK(psnr(x, y) == psnr(y, x));
  CHECK_THROWS_AS(psnr(x, random_batch(2, 8, 1)), Error);
}

TEST_CASE("ssim") {
  const auto x = random_batch(2, 12, 3);
  CHECK(ssim(x, x) == doctest::Approx(1.0));
  const auto y = random_batch(2, 12, 4);
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
  CHECK(ssim(x, y) < 1.0);

  SUBCASE("inverted binary image has a negative structure term") {
    ImageBatch bin{8, 8, PixelMatrix::Zero(1, 64)};
    for (int i = 0; i < 64; ++i) bin.pixels(0, i) = ((i / 8 + i % 8) % 2) ? 1.0 : 0.0;
    ImageBatch inv = bin;
    inv.pixels.array() = 1.0 - bin.pixels.array();
    CHECK(ssim(bin, inv) < 0.0);
  }
  SUBCASE("constant windows reduce to the luminance term") {
    const double a = 0.2;
    const double b = a + 0.5;
    const double expected = (2 * a * b + kSsimC1) / (a * a + b * b + kSsimC1);
    CHECK(ssim(constant_batch(10, a), constant_batch(10, b)) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ssim(constant_batch(4, 0.1), constant_batch(4, 0.1)), Error);
}

TEST_CASE("perplexity") {
  CHECK(perplexity(std::vector<std::uint64_t>(16, 3)) == doctest::Approx(16.0));
  CHECK(perplexity({0, 9, 0}) == doctest::Approx(1.0));
  CHECK(perplexity({1, 1, 2}) == doctest::Approx(2.0 * std::sqrt(2.0)));
  const std::vector<std::uint64_t> h{4, 0, 1, 7, 0};
  CHECK(perplexity(h) <= 3.0);
  CHECK_THROWS_AS(perplexity({0, 0}), Error);
}

TEST_CASE("eval csv") {
  EvalReport r{"full_seed1", "full", 3, 21.5, 0.75, 0.0071, 0.93, 180.25, 512};
  CHECK(parse_eval_row(to_csv_row(r)) == r);
  TempDir dir("csv");
  {
    std::ofstream out(dir / "m.csv");
    out << eval_csv_header() << '\n' << to_csv_row(r) << '\n';
  }
  const auto rows = read_eval_csv(dir / "m.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0] == r);
  CHECK_THROWS_AS(parse_eval_row("a,b,c"), Error);
}
