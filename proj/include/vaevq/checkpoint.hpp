#pragma once

// Binary checkpoint. All integers are little-endian uint32, all arrays are
// little-endian IEEE float32, matrices are stored column-major. Field order:
//
//   magic            8 bytes "VAEVQCK1"
//   version          u32 (kCheckpointVersion)
//   config           u32 length + bytes (canonical key = value text)
//   epoch            u32
//   rng_state        u32 length + bytes (text form of the mt19937_64 engine)
//   model            u32 block count, then per block: u32 rows, u32 cols, f32[rows*cols]
//   codebook         u32 rows, u32 cols, f32[rows*cols]
//   ema_counts       u32 length, f32[length]
//   generation       u32 low, u32 high
//   optimizer        u32 step low, u32 step high, u32 total low, u32 total high,
//                    u32 block count, then per block: first moment matrix,
//                    second moment matrix (each u32 rows, u32 cols, f32[])

#include <cstdint>
#include <filesystem>
#include <string>

#include "vaevq/codebook.hpp"
#include "vaevq/config.hpp"
#include "vaevq/model.hpp"

namespace vaevq {

inline constexpr char kCheckpointMagic[8] = {'V', 'A', 'E', 'V', 'Q', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  Model<float> model;
  Codebook<float> codebook;
  OptimizerState<float> optimizer;
  int epoch = 0;
  std::string rng_state;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vaevq
