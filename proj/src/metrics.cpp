#include "vaevq/metrics.hpp"

#include <cmath>
#include <fstream>

#include "vaevq/error.hpp"
#include "vaevq/text.hpp"

namespace vaevq {

namespace {

void require_same_shape(const ImageBatch& x, const ImageBatch& y) {
  require(x.height == y.height && x.width == y.width && x.size() == y.size(),
          ErrorKind::DimensionMismatch, "image batches differ in shape");
  require(x.size() > 0, ErrorKind::EmptyInput, "empty image batch");
}

}  // namespace

double mean_squared_error(const ImageBatch& x, const ImageBatch& y) {
  require_same_shape(x, y);
  return (x.pixels - y.pixels).squaredNorm() / double(x.pixels.size());
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const ImageBatch& x, const ImageBatch& y) { return psnr_from_mse(mean_squared_error(x, y)); }

double ssim_image(const ImageBatch& x, const ImageBatch& y, Eigen::Index image) {
  require_same_shape(x, y);
  require(x.height >= kSsimWindow && x.width >= kSsimWindow, ErrorKind::InvalidArgument,
          "image smaller than the SSIM window");
  const double n = double(kSsimWindow * kSsimWindow);
  double total = 0.0;
  int windows = 0;
  for (int r0 = 0; r0 + kSsimWindow <= x.height; ++r0)
    for (int c0 = 0; c0 + kSsimWindow <= x.width; ++c0) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int r = r0; r < r0 + kSsimWindow; ++r)
        for (int c = c0; c < c0 + kSsimWindow; ++c) {
          const double a = x.at(image, r, c);
          const double b = y.at(image, r, c);
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      const double mx = sx / n;
      const double my = sy / n;
      const double vx = sxx / n - mx * mx;
      const double vy = syy / n - my * my;
      const double cov = sxy / n - mx * my;
      total += ((2 * mx * my + kSsimC1) * (2 * cov + kSsimC2)) /
               ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
      ++windows;
    }
  return total / windows;
}

double ssim(const ImageBatch& x, const ImageBatch& y) {
  require_same_shape(x, y);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) total += ssim_image(x, y, i);
  return total / double(x.size());
}

double perplexity(const std::vector<std::uint64_t>& histogram) {
  std::uint64_t total = 0;
  for (const auto c : histogram) total += c;
  require(total > 0, ErrorKind::EmptyInput, "perplexity of an all-zero histogram");
  double entropy = 0.0;
  for (const auto c : histogram) {
    if (c == 0) continue;
    const double p = double(c) / double(total);
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

std::string eval_csv_header() {
  return "run_id,config,epoch,psnr,ssim,mse,utilization,perplexity,n_images";
}

std::string to_csv_row(const EvalReport& r) {
  return r.run_id + "," + r.config + "," + std::to_string(r.epoch) + "," + format_number(r.psnr) + "," +
         format_number(r.ssim) + "," + format_number(r.mse) + "," + format_number(r.utilization) + "," +
         format_number(r.perplexity) + "," + std::to_string(r.n_images);
}

EvalReport parse_eval_row(const std::string& line) {
  const auto f = split(line, ',');
  require(f.size() == 9, ErrorKind::Format, "metrics row must have 9 fields: '" + line + "'");
  EvalReport r;
  r.run_id = f[0];
  r.config = f[1];
  r.epoch = parse_integer<int>(f[2], "epoch");
  r.psnr = parse_double(f[3], "psnr");
  r.ssim = parse_double(f[4], "ssim");
  r.mse = parse_double(f[5], "mse");
  r.utilization = parse_double(f[6], "utilization");
  r.perplexity = parse_double(f[7], "perplexity");
  r.n_images = parse_integer<std::int64_t>(f[8], "n_images");
  return r;
}

std::vector<EvalReport> read_eval_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::string line;
  require(bool(std::getline(in, line)) && line == eval_csv_header(), ErrorKind::Format,
          "'" + path.string() + "' does not start with the metrics header");
  std::vector<EvalReport> rows;
  while (std::getline(in, line))
    if (!trim(line).empty()) rows.push_back(parse_eval_row(line));
  return rows;
}

}  // namespace vaevq
