#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "vaevq/types.hpp"

namespace vaevq {

using PixelMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n grayscale images in [0, 1]; row i holds image i in row-major order.
struct ImageBatch {
  int height = 0;
  int width = 0;
  PixelMatrix pixels;

  Eigen::Index size() const { return pixels.rows(); }

  double at(Eigen::Index image, int row, int col) const { return pixels(image, row * width + col); }

  template <typename Scalar>
  Matrix<Scalar> as_matrix() const {
    return pixels.template cast<Scalar>();
  }

  ImageBatch select(const std::vector<Eigen::Index>& rows) const;
  ImageBatch slice(Eigen::Index begin, Eigen::Index count) const;
};

template <typename Derived>
ImageBatch make_batch(int height, int width, const Eigen::MatrixBase<Derived>& values) {
  ImageBatch batch{height, width, values.template cast<double>()};
  return batch;
}

enum class SyntheticKind { Bars, Blobs, Checker, Mixed };

SyntheticKind parse_synthetic_kind(std::string_view name);
std::string_view to_string(SyntheticKind kind);

/// Blob centers (row, col) per image; empty for other kinds.
using BlobCenters = std::vector<std::vector<std::pair<int, int>>>;

/// Deterministic per (kind, n, size, seed). Mixed cycles bars, blobs and
/// checker so the three kinds appear in equal proportion.
ImageBatch generate_synthetic(SyntheticKind kind, Eigen::Index n, int size, std::uint64_t seed,
                              BlobCenters* centers = nullptr);

/// Deterministic shuffled split; the first round(n * train_fraction)
/// shuffled images go to the training set.
std::pair<ImageBatch, ImageBatch> split_dataset(const ImageBatch& batch, double train_fraction,
                                                std::uint64_t seed);

// Binary PGM (P5, maxval 255). A file may hold several concatenated images,
// which is how a multi-image batch is written.
void write_pgm(const std::filesystem::path& path, const ImageBatch& batch);
ImageBatch read_pgm(const std::filesystem::path& path);

std::uint8_t to_byte(double value);

/// Plain-text manifest: one image path per line, relative to the manifest.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);
ImageBatch load_manifest(const std::filesystem::path& manifest);
/// Writes one PGM per image plus `manifest.txt` into `dir`; returns the
/// manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir, const ImageBatch& batch);

}  // namespace vaevq
