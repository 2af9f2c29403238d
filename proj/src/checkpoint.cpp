#include "vaevq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace vaevq {

namespace {

class Writer {
public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(char((v >> (8 * i)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    u32(std::uint32_t(v & 0xffffffffu));
    u32(std::uint32_t(v >> 32));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) {
    u32(std::uint32_t(s.size()));
    out_ += s;
  }
  void matrix(const Matrix<float>& m) {
    u32(std::uint32_t(m.rows()));
    u32(std::uint32_t(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) f32(m.data()[i]);
  }
  void raw(const char* data, std::size_t n) { out_.append(data, n); }
  std::string take() { return std::move(out_); }

private:
  std::string out_;
};

class Reader {
public:
  explicit Reader(const std::string& in) : in_(in) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in_[pos_ + std::size_t(i)])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes() {
    const std::size_t n = u32();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix<float> matrix() {
    const Eigen::Index rows = u32();
    const Eigen::Index cols = u32();
    need(std::size_t(rows) * std::size_t(cols) * 4);
    Matrix<float> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f32();
    return m;
  }
  void expect_magic() {
    need(sizeof kCheckpointMagic);
    require(std::memcmp(in_.data() + pos_, kCheckpointMagic, sizeof kCheckpointMagic) == 0,
            ErrorKind::Format, "bad checkpoint magic (expected VAEVQCK1)");
    pos_ += sizeof kCheckpointMagic;
  }
  bool done() const { return pos_ == in_.size(); }

private:
  void need(std::size_t n) const {
    require(in_.size() - pos_ >= n, ErrorKind::Format, "truncated checkpoint");
  }

  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.bytes(serialize_config(ckpt.config));
  w.u32(std::uint32_t(ckpt.epoch));
  w.bytes(ckpt.rng_state);
  w.u32(kParamCount);
  for (const auto& p : ckpt.model.params) w.matrix(p);
  w.matrix(ckpt.codebook.entries);
  w.u32(std::uint32_t(ckpt.codebook.ema_counts.size()));
  for (Eigen::Index k = 0; k < ckpt.codebook.ema_counts.size(); ++k) w.f32(ckpt.codebook.ema_counts(k));
  w.u64(ckpt.codebook.generation);
  const auto& opt = ckpt.optimizer;
  w.u64(opt.step);
  w.u64(opt.total_steps);
  w.u32(std::uint32_t(opt.first_moment.size()));
  for (std::size_t i = 0; i < opt.first_moment.size(); ++i) {
    w.matrix(opt.first_moment[i]);
    w.matrix(opt.second_moment[i]);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect_magic();
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorKind::Format,
          "unsupported checkpoint version " + std::to_string(version) + " (expected " +
              std::to_string(kCheckpointVersion) + ")");
  Checkpoint ckpt;
  ckpt.config = parse_config(r.bytes());
  ckpt.epoch = int(r.u32());
  ckpt.rng_state = r.bytes();

  const ModelConfig mc = ckpt.config.model_config();
  ckpt.model.config = mc;
  require(r.u32() == kParamCount, ErrorKind::Format, "checkpoint has wrong parameter block count");
  const auto shapes = parameter_shapes(mc);
  for (int i = 0; i < kParamCount; ++i) {
    ckpt.model.params[i] = r.matrix();
    require(ckpt.model.params[i].rows() == shapes[std::size_t(i)].first &&
                ckpt.model.params[i].cols() == shapes[std::size_t(i)].second,
            ErrorKind::Format, "checkpoint parameter '" + std::string(kParamNames[std::size_t(i)]) +
                                   "' does not match its config");
  }

  Matrix<float> entries = r.matrix();
  require(entries.rows() == ckpt.config.codebook_size && entries.cols() == ckpt.config.latent_dim,
          ErrorKind::Format, "checkpoint codebook does not match its config");
  ckpt.codebook = make_codebook(entries);
  const std::size_t ema_len = r.u32();
  require(ema_len == std::size_t(entries.rows()), ErrorKind::Format, "checkpoint EMA counts length mismatch");
  for (std::size_t k = 0; k < ema_len; ++k) ckpt.codebook.ema_counts(Eigen::Index(k)) = r.f32();
  ckpt.codebook.generation = r.u64();

  auto& opt = ckpt.optimizer;
  opt.step = r.u64();
  opt.total_steps = r.u64();
  opt.base_lr = ckpt.config.base_lr;
  const std::uint32_t blocks = r.u32();
  require(blocks == kParamCount + 1, ErrorKind::Format, "checkpoint has wrong optimizer block count");
  for (std::uint32_t i = 0; i < blocks; ++i) {
    opt.first_moment.push_back(r.matrix());
    opt.second_moment.push_back(r.matrix());
  }
  require(r.done(), ErrorKind::Format, "trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), ErrorKind::Io, "cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  require(bool(out), ErrorKind::Io, "failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorKind::Io, "cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace vaevq
