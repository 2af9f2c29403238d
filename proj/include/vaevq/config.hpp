#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vaevq/losses.hpp"
#include "vaevq/model.hpp"

namespace vaevq {

/// Training run description. Named ablation configs fix the toggles:
///   baseline  deterministic encoder, hard alignment
///   M1        VLQ (hard alignment kept as the alignment term)
///   M2        VLQ + RCS
///   M3        VLQ + DCR (hard alignment kept)
///   full      VLQ + RCS + DCR
/// `custom` takes the toggles from the file.
struct TrainConfig {
  std::string config_name = "full";
  bool vlq_on = true;
  bool rcs_on = true;
  bool dcr_on = true;
  bool ema_on = false;
  bool hard_align_on = false;
  RcsRoute rcs_route = RcsRoute::Both;

  double lambda_rcs = 1.0;
  double lambda_dcr = 0.1;
  double beta_kl = 1e-3;
  double beta_commit = 0.25;
  double ema_decay = 0.99;
  int dcr_every_n_steps = 1;

  int codebook_size = 256;
  int latent_dim = 8;
  int image_size = 16;
  int patch_size = 8;
  int hidden = 128;

  int epochs = 20;
  int batch_size = 64;
  double base_lr = 1e-4;
  double codebook_lr_scale = 1.0;

  std::string data_kind = "mixed";
  int n_train = 4096;
  int n_test = 512;
  std::uint64_t data_seed = 0;
  std::string train_manifest;
  std::string test_manifest;

  std::uint64_t seed = 1;

  int n_tokens() const { return (image_size / patch_size) * (image_size / patch_size); }
  ModelConfig model_config() const;
  ObjectiveConfig objective() const;
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

inline const std::vector<std::string>& named_configs() {
  static const std::vector<std::string> names = {"baseline", "M1", "M2", "M3", "full"};
  return names;
}

bool is_named_config(std::string_view name);

/// Preset for one of the named ablation configs.
TrainConfig named_config(std::string_view name);

/// Parses flat `key = value` text. Unknown keys and malformed lines are
/// errors; `#` starts a comment.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

/// Canonical text form (fixed key order, round-trip exact numbers).
std::string serialize_config(const TrainConfig& cfg);

/// A named config, or else a path to a config file.
TrainConfig resolve_config(std::string_view name_or_path);

}  // namespace vaevq
