#include "vaevq/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "vaevq/error.hpp"

namespace vaevq {

namespace fs = std::filesystem;

ImageBatch ImageBatch::select(const std::vector<Eigen::Index>& rows) const {
  ImageBatch out{height, width, PixelMatrix(Eigen::Index(rows.size()), pixels.cols())};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < size(), ErrorKind::OutOfRange, "image index out of range");
    out.pixels.row(Eigen::Index(i)) = pixels.row(rows[i]);
  }
  return out;
}

ImageBatch ImageBatch::slice(Eigen::Index begin, Eigen::Index count) const {
  require(begin >= 0 && count >= 0 && begin + count <= size(), ErrorKind::OutOfRange,
          "image slice out of range");
  return {height, width, pixels.middleRows(begin, count)};
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "bars") return SyntheticKind::Bars;
  if (name == "blobs") return SyntheticKind::Blobs;
  if (name == "checker") return SyntheticKind::Checker;
  if (name == "mixed") return SyntheticKind::Mixed;
  throw Error(ErrorKind::InvalidArgument, "unknown synthetic kind '" + std::string(name) + "'");
}

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::Bars: return "bars";
    case SyntheticKind::Blobs: return "blobs";
    case SyntheticKind::Checker: return "checker";
    case SyntheticKind::Mixed: return "mixed";
  }
  return "unknown";
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

void render_bars(Rng& rng, int size, Eigen::Ref<RowVector<double>> out) {
  const bool vertical = uniform_int(rng, 0, 1) == 1;
  const double period = uniform(rng, 3.0, 12.0);
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double amplitude = uniform(rng, 0.25, 0.5);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double pos = vertical ? c : r;
      out(r * size + c) = 0.5 + amplitude * std::sin(2.0 * std::numbers::pi * pos / period + phase);
    }
}

void render_blobs(Rng& rng, int size, Eigen::Ref<RowVector<double>> out,
                  std::vector<std::pair<int, int>>& centers) {
  const int count = uniform_int(rng, 1, 3);
  centers.clear();
  std::vector<double> widths;
  for (int b = 0; b < count; ++b) {
    centers.emplace_back(uniform_int(rng, 0, size - 1), uniform_int(rng, 0, size - 1));
    widths.push_back(uniform(rng, 1.0, 3.5));
  }
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      double value = 0.0;
      for (int b = 0; b < count; ++b) {
        const double dr = r - centers[std::size_t(b)].first;
        const double dc = c - centers[std::size_t(b)].second;
        const double s = widths[std::size_t(b)];
        value = std::max(value, std::exp(-(dr * dr + dc * dc) / (2.0 * s * s)));
      }
      out(r * size + c) = value;
    }
}

void render_checker(Rng& rng, int size, Eigen::Ref<RowVector<double>> out) {
  const int cell = uniform_int(rng, 2, 6);
  const int offset_r = uniform_int(rng, 0, cell - 1);
  const int offset_c = uniform_int(rng, 0, cell - 1);
  const double low = uniform(rng, 0.0, 0.4);
  const double high = uniform(rng, 0.6, 1.0);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const int parity = ((r + offset_r) / cell + (c + offset_c) / cell) % 2;
      out(r * size + c) = parity ? high : low;
    }
}

}  // namespace

ImageBatch generate_synthetic(SyntheticKind kind, Eigen::Index n, int size, std::uint64_t seed,
                              BlobCenters* centers) {
  require(size >= 8, ErrorKind::InvalidArgument, "synthetic images need size >= 8");
  require(n >= 1, ErrorKind::InvalidArgument, "synthetic batch needs n >= 1");
  Rng rng(seed);
  ImageBatch batch{size, size, PixelMatrix(n, size * size)};
  if (centers) centers->assign(std::size_t(n), {});
  std::vector<std::pair<int, int>> scratch;
  for (Eigen::Index i = 0; i < n; ++i) {
    SyntheticKind k = kind;
    if (kind == SyntheticKind::Mixed) k = static_cast<SyntheticKind>(i % 3);
    auto row = batch.pixels.row(i);
    switch (k) {
      case SyntheticKind::Bars: render_bars(rng, size, row); break;
      case SyntheticKind::Blobs:
        render_blobs(rng, size, row, scratch);
        if (centers) (*centers)[std::size_t(i)] = scratch;
        break;
      case SyntheticKind::Checker: render_checker(rng, size, row); break;
      case SyntheticKind::Mixed: break;
    }
  }
  batch.pixels = batch.pixels.cwiseMax(0.0).cwiseMin(1.0);
  return batch;
}

std::pair<ImageBatch, ImageBatch> split_dataset(const ImageBatch& batch, double train_fraction,
                                                std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::OutOfRange,
          "train fraction must lie in (0, 1)");
  std::vector<Eigen::Index> order(std::size_t(batch.size()));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::size_t(std::llround(train_fraction * double(batch.size())));
  std::vector<Eigen::Index> train(order.begin(), order.begin() + std::ptrdiff_t(n_train));
  std::vector<Eigen::Index> test(order.begin() + std::ptrdiff_t(n_train), order.end());
  return {batch.select(train), batch.select(test)};
}

std::uint8_t to_byte(double value) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 1.0) * 255.0));
}

void write_pgm(const fs::path& path, const ImageBatch& batch) {
  std::ofstream out(path, std::ios::binary);
  require(bool(out), ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  const std::string header =
      "P5\n" + std::to_string(batch.width) + " " + std::to_string(batch.height) + "\n255\n";
  std::string payload(std::size_t(batch.pixels.cols()), '\0');
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    for (Eigen::Index p = 0; p < batch.pixels.cols(); ++p)
      payload[std::size_t(p)] = char(to_byte(batch.pixels(i, p)));
    out << header;
    out.write(payload.data(), std::streamsize(payload.size()));
  }
  require(bool(out), ErrorKind::Io, "failed writing '" + path.string() + "'");
}

namespace {

struct ByteReader {
  const std::string& data;
  std::size_t pos = 0;
  const fs::path& path;

  bool at_end() const { return pos >= data.size(); }

  void skip_space_and_comments() {
    while (pos < data.size()) {
      const char c = data[pos];
      if (c == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  int read_int() {
    skip_space_and_comments();
    const std::size_t start = pos;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
    require(pos > start && pos - start < 10, ErrorKind::Format,
            "malformed PGM header in '" + path.string() + "'");
    return std::stoi(data.substr(start, pos - start));
  }
};

}  // namespace

ImageBatch read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorKind::Io, "cannot open '" + path.string() + "'");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  ByteReader reader{data, 0, path};
  ImageBatch batch;
  std::vector<std::vector<std::uint8_t>> images;
  while (true) {
    reader.skip_space_and_comments();
    if (reader.at_end() && !images.empty()) break;
    require(data.compare(reader.pos, 2, "P5") == 0, ErrorKind::Format,
            "'" + path.string() + "' is not a binary PGM (missing P5 magic)");
    reader.pos += 2;
    const int width = reader.read_int();
    const int height = reader.read_int();
    const int maxval = reader.read_int();
    require(width > 0 && height > 0, ErrorKind::Format, "PGM with empty dimensions");
    require(maxval == 255, ErrorKind::Format,
            "unsupported PGM maxval " + std::to_string(maxval) + " (expected 255)");
    require(reader.pos < data.size() && std::isspace(static_cast<unsigned char>(data[reader.pos])),
            ErrorKind::Format, "malformed PGM header in '" + path.string() + "'");
    ++reader.pos;
    if (images.empty()) {
      batch.width = width;
      batch.height = height;
    }
    require(width == batch.width && height == batch.height, ErrorKind::Format,
            "images in one PGM file must share dimensions");
    const std::size_t count = std::size_t(width) * std::size_t(height);
    require(data.size() - reader.pos >= count, ErrorKind::Format,
            "truncated PGM payload in '" + path.string() + "'");
    images.emplace_back(data.begin() + std::ptrdiff_t(reader.pos),
                        data.begin() + std::ptrdiff_t(reader.pos + count));
    reader.pos += count;
  }

  batch.pixels.resize(Eigen::Index(images.size()), batch.width * batch.height);
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t p = 0; p < images[i].size(); ++p)
      batch.pixels(Eigen::Index(i), Eigen::Index(p)) = images[i][p] / 255.0;
  return batch;
}

std::vector<fs::path> read_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  require(bool(in), ErrorKind::Io, "cannot open manifest '" + manifest.string() + "'");
  std::vector<fs::path> paths;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (line.empty()) continue;
    const fs::path p(line);
    paths.push_back(p.is_absolute() ? p : manifest.parent_path() / p);
  }
  require(!paths.empty(), ErrorKind::EmptyInput, "manifest '" + manifest.string() + "' is empty");
  return paths;
}

ImageBatch load_manifest(const fs::path& manifest) {
  const auto paths = read_manifest(manifest);
  std::vector<ImageBatch> parts;
  Eigen::Index total = 0;
  for (const auto& p : paths) {
    parts.push_back(read_pgm(p));
    require(parts.back().height == parts.front().height && parts.back().width == parts.front().width,
            ErrorKind::DimensionMismatch, "manifest images differ in size: '" + p.string() + "'");
    total += parts.back().size();
  }
  ImageBatch out{parts.front().height, parts.front().width,
                 PixelMatrix(total, parts.front().pixels.cols())};
  Eigen::Index row = 0;
  for (const auto& part : parts) {
    out.pixels.middleRows(row, part.size()) = part.pixels;
    row += part.size();
  }
  return out;
}

fs::path write_dataset(const fs::path& dir, const ImageBatch& batch) {
  fs::create_directories(dir);
  const fs::path manifest = dir / "manifest.txt";
  std::ofstream list(manifest);
  require(bool(list), ErrorKind::Io, "cannot write '" + manifest.string() + "'");
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05ld.pgm", long(i));
    write_pgm(dir / name, batch.slice(i, 1));
    list << name << '\n';
  }
  return manifest;
}

}  // namespace vaevq
