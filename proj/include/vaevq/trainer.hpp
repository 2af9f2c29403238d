#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vaevq/checkpoint.hpp"
#include "vaevq/config.hpp"
#include "vaevq/data.hpp"
#include "vaevq/losses.hpp"
#include "vaevq/metrics.hpp"

namespace vaevq {

struct Dataset {
  ImageBatch train;
  ImageBatch test;
};

/// Synthetic desk dataset from the config, or the configured manifests.
Dataset load_dataset(const TrainConfig& cfg);

/// Freshly initialized model, codebook, optimizer and RNG for `cfg`.
Checkpoint initial_checkpoint(const TrainConfig& cfg);

struct EpochRecord {
  EvalReport eval;
  LossBreakdown train_losses;  // batch-weighted means over the epoch
};

struct TrainOptions {
  /// Continue from this state instead of a fresh initialization.
  std::optional<Checkpoint> resume;
  /// Per-epoch progress lines; null for silence.
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  Checkpoint final_state;
};

/// Trains `cfg.epochs` epochs. `out_dir` receives config.txt, metrics.csv,
/// losses.csv and checkpoint.bin (rewritten after every epoch). Epoch 0 is
/// the evaluation of the initial state. With a resume checkpoint at epoch t,
/// rows up to t already in out_dir are kept and later rows are regenerated.
TrainResult train_run(const TrainConfig& cfg, const std::filesystem::path& out_dir,
                      const TrainOptions& options = {});

std::string run_id(const TrainConfig& cfg);

struct EvalDetails {
  EvalReport report;
  std::vector<Eigen::Index> assignments;  // one per token, in dataset order
  Codebook<float> codebook;               // with usage counts of this pass
  ImageBatch reconstruction;              // D(z_q)
};

/// Deterministic evaluation pass: zero noise, usage counters reset first,
/// metrics computed on the quantized-path reconstruction.
EvalDetails evaluate_detailed(const Model<float>& model, const Codebook<float>& codebook,
                              const ImageBatch& data, const std::string& run, const std::string& config,
                              int epoch);
EvalReport evaluate(const Checkpoint& ckpt, const ImageBatch& data);

/// Token indices for every image of `images` (n * tokens_per_image).
std::vector<Eigen::Index> encode_tokens(const Checkpoint& ckpt, const ImageBatch& images);
/// Images reconstructed from token indices (multiple of tokens_per_image).
ImageBatch decode_tokens(const Checkpoint& ckpt, const std::vector<Eigen::Index>& tokens);

struct AblationRow {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::vector<EvalReport> finals;  // final-epoch report per run, seed order
  EvalReport median;               // per-metric medians
};

/// One row per config (sorted by name) from completed run directories.
std::vector<AblationRow> collect_ablation(const std::vector<std::filesystem::path>& run_dirs);
std::string ablation_csv(const std::vector<AblationRow>& rows);
void report_ablation(const std::vector<std::filesystem::path>& run_dirs,
                     const std::filesystem::path& out_csv);

/// Trains every (config, seed) pair into out_dir/<config>_seed<seed> and
/// writes out_dir/ablation.csv. `base` supplies non-toggle settings.
std::vector<AblationRow> run_ablation(const std::vector<std::string>& configs,
                                      const std::vector<std::uint64_t>& seeds,
                                      const TrainConfig& base, const std::filesystem::path& out_dir,
                                      std::ostream* log = nullptr);

double median(std::vector<double> values);

}  // namespace vaevq
