#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vaevq/data.hpp"

namespace vaevq {

/// PSNR reported for an exact reconstruction.
inline constexpr double kPsnrCap = 100.0;
inline constexpr int kSsimWindow = 8;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

double mean_squared_error(const ImageBatch& x, const ImageBatch& y);

/// 10 log10(1 / mse) for unit peak value, capped at kPsnrCap.
double psnr_from_mse(double mse);
double psnr(const ImageBatch& x, const ImageBatch& y);

/// Mean local SSIM over all 8x8 uniform windows at stride 1, averaged over
/// the images of the batch.
double ssim(const ImageBatch& x, const ImageBatch& y);
double ssim_image(const ImageBatch& x, const ImageBatch& y, Eigen::Index image);

/// exp(entropy) of the assignment distribution.
double perplexity(const std::vector<std::uint64_t>& histogram);

struct EvalReport {
  std::string run_id;
  std::string config;
  int epoch = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double utilization = 0.0;
  double perplexity = 0.0;
  std::int64_t n_images = 0;

  bool operator==(const EvalReport&) const = default;
};

std::string eval_csv_header();
std::string to_csv_row(const EvalReport& report);
EvalReport parse_eval_row(const std::string& line);
std::vector<EvalReport> read_eval_csv(const std::filesystem::path& path);

}  // namespace vaevq
