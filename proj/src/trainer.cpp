#include "vaevq/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "vaevq/model.hpp"
#include "vaevq/text.hpp"

namespace vaevq {

namespace fs = std::filesystem;

namespace {

constexpr Eigen::Index kEvalChunk = 256;

std::uint64_t codebook_seed(std::uint64_t seed) { return seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull; }
std::uint64_t stream_seed(std::uint64_t seed) { return seed * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull; }

std::string engine_state(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 engine_from(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream in(state);
  in >> rng;
  require(!in.fail(), ErrorKind::Format, "corrupt RNG state in checkpoint");
  return rng;
}

std::string losses_header() { return "epoch,rec_c,rec_q,kl,rcs,dcr,hard_align,total"; }

std::string losses_row(int epoch, const LossBreakdown& l) {
  return std::to_string(epoch) + "," + format_number(l.rec_c) + "," + format_number(l.rec_q) + "," +
         format_number(l.kl) + "," + format_number(l.rcs) + "," + format_number(l.dcr) + "," +
         format_number(l.hard_align) + "," + format_number(l.total);
}

void write_lines(const fs::path& path, const std::string& header, const std::vector<std::string>& rows) {
  std::ofstream out(path, std::ios::trunc);
  require(bool(out), ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
  require(bool(out), ErrorKind::Io, "failed writing '" + path.string() + "'");
}

// Rows of an existing CSV whose leading epoch field is <= max_epoch.
std::vector<std::string> kept_rows(const fs::path& path, int max_epoch, std::size_t epoch_field) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() > epoch_field && parse_integer<int>(fields[epoch_field], "epoch") <= max_epoch)
      rows.push_back(line);
  }
  return rows;
}

void accumulate(LossBreakdown& sum, const LossBreakdown& l, double weight) {
  sum.rec_c += weight * l.rec_c;
  sum.rec_q += weight * l.rec_q;
  sum.kl += weight * l.kl;
  sum.rcs += weight * l.rcs;
  sum.dcr += weight * l.dcr;
  sum.hard_align += weight * l.hard_align;
  sum.total += weight * l.total;
}

bool all_finite(const Model<float>& m, const Codebook<float>& cb) {
  for (const auto& p : m.params)
    if (!p.allFinite()) return false;
  return cb.entries.allFinite();
}

}  // namespace

std::string run_id(const TrainConfig& cfg) { return cfg.config_name + "_seed" + std::to_string(cfg.seed); }

Dataset load_dataset(const TrainConfig& cfg) {
  Dataset data;
  if (!cfg.train_manifest.empty() || !cfg.test_manifest.empty()) {
    require(!cfg.train_manifest.empty() && !cfg.test_manifest.empty(), ErrorKind::Config,
            "train_manifest and test_manifest must be given together");
    data.train = load_manifest(cfg.train_manifest);
    data.test = load_manifest(cfg.test_manifest);
  } else {
    const Eigen::Index total = Eigen::Index(cfg.n_train) + cfg.n_test;
    const ImageBatch all =
        generate_synthetic(parse_synthetic_kind(cfg.data_kind), total, cfg.image_size, cfg.data_seed);
    std::tie(data.train, data.test) = split_dataset(all, double(cfg.n_train) / double(total), cfg.data_seed);
  }
  for (const ImageBatch* b : {&data.train, &data.test})
    require(b->height == cfg.image_size && b->width == cfg.image_size, ErrorKind::DimensionMismatch,
            "dataset images are " + std::to_string(b->height) + "x" + std::to_string(b->width) +
                ", config expects " + std::to_string(cfg.image_size));
  return data;
}

Checkpoint initial_checkpoint(const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.model = init_model<float>(cfg.model_config(), cfg.seed);
  ckpt.codebook = init_codebook<float>(cfg.codebook_size, cfg.latent_dim, codebook_seed(cfg.seed));
  ckpt.optimizer = make_optimizer<float>(
      [&] {
        GradRefs<float> refs;
        for (const auto& p : ckpt.model.params) refs.emplace_back(p);
        refs.emplace_back(ckpt.codebook.entries);
        return refs;
      }(),
      cfg.base_lr, 0);
  ckpt.epoch = 0;
  ckpt.rng_state = engine_state(std::mt19937_64(stream_seed(cfg.seed)));
  return ckpt;
}

EvalDetails evaluate_detailed(const Model<float>& model, const Codebook<float>& codebook,
                              const ImageBatch& data, const std::string& run, const std::string& config,
                              int epoch) {
  require(data.size() > 0, ErrorKind::EmptyInput, "evaluation set is empty");
  require(data.height == model.config.image_height && data.width == model.config.image_width,
          ErrorKind::DimensionMismatch, "evaluation images do not match the model's image size");
  EvalDetails out;
  out.codebook = reset_usage(codebook);
  out.reconstruction = {data.height, data.width, PixelMatrix(data.size(), data.pixels.cols())};
  for (Eigen::Index begin = 0; begin < data.size(); begin += kEvalChunk) {
    const Eigen::Index count = std::min(kEvalChunk, data.size() - begin);
    const Matrix<float> images = data.slice(begin, count).as_matrix<float>();
    const LatentGaussian<float> posterior = encode(model, images);
    const QuantizationResult<float> q = quantize_batch(posterior.mu, codebook);
    out.codebook = record_usage(std::move(out.codebook), q.assignments());
    out.assignments.insert(out.assignments.end(), q.indices.begin(), q.indices.end());
    out.reconstruction.pixels.middleRows(begin, count) = decode(model, q.z_q).cast<double>();
  }
  auto& r = out.report;
  r.run_id = run;
  r.config = config;
  r.epoch = epoch;
  r.mse = mean_squared_error(data, out.reconstruction);
  r.psnr = psnr_from_mse(r.mse);
  r.ssim = ssim(data, out.reconstruction);
  r.utilization = utilization(out.codebook);
  r.perplexity = perplexity(out.codebook.usage_counts);
  r.n_images = data.size();
  return out;
}

EvalReport evaluate(const Checkpoint& ckpt, const ImageBatch& data) {
  return evaluate_detailed(ckpt.model, ckpt.codebook, data, run_id(ckpt.config), ckpt.config.config_name,
                           ckpt.epoch)
      .report;
}

std::vector<Eigen::Index> encode_tokens(const Checkpoint& ckpt, const ImageBatch& images) {
  const LatentGaussian<float> posterior = encode(ckpt.model, images.as_matrix<float>());
  return assign(posterior.mu, ckpt.codebook).indices;
}

ImageBatch decode_tokens(const Checkpoint& ckpt, const std::vector<Eigen::Index>& tokens) {
  const auto& mc = ckpt.model.config;
  require(!tokens.empty() && tokens.size() % std::size_t(mc.tokens_per_image()) == 0,
          ErrorKind::DimensionMismatch,
          "token count must be a positive multiple of " + std::to_string(mc.tokens_per_image()));
  Matrix<float> z(Eigen::Index(tokens.size()), ckpt.codebook.dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    require(tokens[i] >= 0 && tokens[i] < ckpt.codebook.size(), ErrorKind::OutOfRange,
            "token index " + std::to_string(tokens[i]) + " out of range");
    z.row(Eigen::Index(i)) = ckpt.codebook.entries.row(tokens[i]);
  }
  const Matrix<float> images = decode(ckpt.model, z);
  return {mc.image_height, mc.image_width, images.cast<double>()};
}

TrainResult train_run(const TrainConfig& cfg, const fs::path& out_dir, const TrainOptions& options) {
  cfg.validate();
  const Dataset data = load_dataset(cfg);

  Checkpoint state = options.resume ? *options.resume : initial_checkpoint(cfg);
  if (options.resume) {
    require(state.model.config == cfg.model_config() && state.codebook.size() == cfg.codebook_size,
            ErrorKind::Config, "resume checkpoint does not match the model shape of the config");
    require(state.epoch <= cfg.epochs, ErrorKind::Config, "resume checkpoint is past the configured epochs");
  }
  state.config = cfg;

  const Eigen::Index n_train = data.train.size();
  const Eigen::Index batch_size = cfg.batch_size;
  const std::uint64_t steps_per_epoch = std::uint64_t((n_train + batch_size - 1) / batch_size);
  auto& opt = state.optimizer;
  opt.base_lr = cfg.base_lr;
  opt.total_steps = std::uint64_t(cfg.epochs) * steps_per_epoch;
  opt.block_lr_scale.assign(kParamCount, 1.0);
  opt.block_lr_scale.push_back(cfg.codebook_lr_scale);

  fs::create_directories(out_dir);
  {
    std::ofstream config_out(out_dir / "config.txt", std::ios::trunc);
    require(bool(config_out), ErrorKind::Io, "cannot write config.txt in '" + out_dir.string() + "'");
    config_out << serialize_config(cfg);
  }
  const fs::path metrics_path = out_dir / "metrics.csv";
  const fs::path losses_path = out_dir / "losses.csv";
  const fs::path ckpt_path = out_dir / "checkpoint.bin";
  std::vector<std::string> metric_rows;
  std::vector<std::string> loss_rows;
  if (options.resume) {
    metric_rows = kept_rows(metrics_path, state.epoch, 2);
    loss_rows = kept_rows(losses_path, state.epoch, 0);
  }

  const std::string id = run_id(cfg);
  TrainResult result;
  auto log_epoch = [&](const EpochRecord& rec) {
    if (!options.log) return;
    *options.log << id << " epoch " << rec.eval.epoch << ": total=" << format_number(rec.train_losses.total)
                 << " mse=" << format_number(rec.eval.mse) << " psnr=" << format_number(rec.eval.psnr)
                 << " util=" << format_number(rec.eval.utilization)
                 << " ppl=" << format_number(rec.eval.perplexity) << '\n';
  };

  if (!options.resume) {
    EpochRecord rec{evaluate_detailed(state.model, state.codebook, data.test, id, cfg.config_name, 0).report, {}};
    metric_rows.push_back(to_csv_row(rec.eval));
    write_lines(metrics_path, eval_csv_header(), metric_rows);
    write_lines(losses_path, losses_header(), loss_rows);
    save_checkpoint(ckpt_path, state);
    result.history.push_back(rec);
    log_epoch(rec);
  }

  const Matrix<float> train_pixels = data.train.as_matrix<float>();
  const Eigen::Index tokens_per_image = cfg.n_tokens();
  for (int epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng = engine_from(state.rng_state);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    std::shuffle(order.begin(), order.end(), rng);
    std::normal_distribution<float> normal(0.0f, 1.0f);

    LossBreakdown sums;
    for (Eigen::Index begin = 0; begin < n_train; begin += batch_size) {
      const Eigen::Index count = std::min(batch_size, n_train - begin);
      Matrix<float> images(count, train_pixels.cols());
      for (Eigen::Index i = 0; i < count; ++i) images.row(i) = train_pixels.row(order[std::size_t(begin + i)]);

      Matrix<float> eps = Matrix<float>::Zero(count * tokens_per_image, cfg.latent_dim);
      if (cfg.vlq_on)
        for (Eigen::Index j = 0; j < eps.cols(); ++j)
          for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, j) = normal(rng);

      ObjectiveConfig objective = cfg.objective();
      objective.dcr = cfg.dcr_on && opt.step % std::uint64_t(cfg.dcr_every_n_steps) == 0;
      objective.align_codebook = !cfg.ema_on;

      GradientResult<float> g;
      try {
        g = compute_gradients(state.model, state.codebook, images, objective, eps);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonFinite) throw;
        throw Error(ErrorKind::NonFinite, "training diverged at epoch " + std::to_string(epoch) + " step " +
                                              std::to_string(opt.step) + ": " + e.what() +
                                              "; last good checkpoint: " + ckpt_path.string());
      }

      GradRefs<float> grads(g.model_grads.begin(), g.model_grads.end());
      grads.emplace_back(g.codebook_grad);
      adam_step(opt, trainable_blocks(state.model, state.codebook), grads);
      if (cfg.ema_on)
        state.codebook = ema_update(std::move(state.codebook), g.quantized.z_c, g.quantized.assignments(),
                                    cfg.ema_decay);
      require(all_finite(state.model, state.codebook), ErrorKind::NonFinite,
              "training diverged at epoch " + std::to_string(epoch) +
                  ": non-finite parameters after optimizer step; last good checkpoint: " + ckpt_path.string());
      accumulate(sums, g.losses, double(count));
    }

    const double inv_n = 1.0 / double(n_train);
    LossBreakdown mean_losses;
    accumulate(mean_losses, sums, inv_n);

    state.epoch = epoch;
    state.rng_state = engine_state(rng);
    EpochRecord rec{evaluate_detailed(state.model, state.codebook, data.test, id, cfg.config_name, epoch).report,
                    mean_losses};
    metric_rows.push_back(to_csv_row(rec.eval));
    loss_rows.push_back(losses_row(epoch, mean_losses));
    write_lines(metrics_path, eval_csv_header(), metric_rows);
    write_lines(losses_path, losses_header(), loss_rows);
    save_checkpoint(ckpt_path, state);
    result.history.push_back(rec);
    log_epoch(rec);
  }

  result.final_state = std::move(state);
  return result;
}

double median(std::vector<double> values) {
  require(!values.empty(), ErrorKind::EmptyInput, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

std::vector<AblationRow> collect_ablation(const std::vector<fs::path>& run_dirs) {
  require(!run_dirs.empty(), ErrorKind::EmptyInput, "no run directories given");
  std::map<std::string, std::vector<std::pair<std::uint64_t, EvalReport>>> groups;
  for (const auto& dir : run_dirs) {
    const fs::path config_path = dir / "config.txt";
    const fs::path metrics_path = dir / "metrics.csv";
    require(fs::exists(config_path) && fs::exists(metrics_path), ErrorKind::Io,
            "missing run artifacts in '" + dir.string() + "' (need config.txt and metrics.csv)");
    const TrainConfig cfg = load_config(config_path);
    const auto rows = read_eval_csv(metrics_path);
    require(!rows.empty(), ErrorKind::Format, "no metrics rows in '" + metrics_path.string() + "'");
    const auto last = std::max_element(rows.begin(), rows.end(),
                                       [](const EvalReport& a, const EvalReport& b) { return a.epoch < b.epoch; });
    groups[cfg.config_name].emplace_back(cfg.seed, *last);
  }

  std::vector<AblationRow> out;
  for (auto& [name, runs] : groups) {
    std::stable_sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    AblationRow row;
    row.config = name;
    std::vector<double> mse, psnr_v, ssim_v, util, ppl;
    for (const auto& [seed, report] : runs) {
      row.seeds.push_back(seed);
      row.finals.push_back(report);
      mse.push_back(report.mse);
      psnr_v.push_back(report.psnr);
      ssim_v.push_back(report.ssim);
      util.push_back(report.utilization);
      ppl.push_back(report.perplexity);
    }
    row.median.run_id = "median";
    row.median.config = name;
    row.median.epoch = runs.front().second.epoch;
    row.median.mse = median(mse);
    row.median.psnr = median(psnr_v);
    row.median.ssim = median(ssim_v);
    row.median.utilization = median(util);
    row.median.perplexity = median(ppl);
    row.median.n_images = runs.front().second.n_images;
    out.push_back(std::move(row));
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out =
      "config,n_runs,seeds,epoch,mse_median,psnr_median,ssim_median,utilization_median,perplexity_median,"
      "mse_per_seed,psnr_per_seed,ssim_per_seed,utilization_per_seed,perplexity_per_seed\n";
  auto join = [](const std::vector<EvalReport>& finals, double EvalReport::*field) {
    std::string s;
    for (std::size_t i = 0; i < finals.size(); ++i) s += (i ? ";" : "") + format_number(finals[i].*field);
    return s;
  };
  for (const auto& r : rows) {
    std::string seeds;
    for (std::size_t i = 0; i < r.seeds.size(); ++i) seeds += (i ? ";" : "") + std::to_string(r.seeds[i]);
    out += r.config + "," + std::to_string(r.finals.size()) + "," + seeds + "," + std::to_string(r.median.epoch) +
           "," + format_number(r.median.mse) + "," + format_number(r.median.psnr) + "," +
           format_number(r.median.ssim) + "," + format_number(r.median.utilization) + "," +
           format_number(r.median.perplexity) + "," + join(r.finals, &EvalReport::mse) + "," +
           join(r.finals, &EvalReport::psnr) + "," + join(r.finals, &EvalReport::ssim) + "," +
           join(r.finals, &EvalReport::utilization) + "," + join(r.finals, &EvalReport::perplexity) + "\n";
  }
  return out;
}

void report_ablation(const std::vector<fs::path>& run_dirs, const fs::path& out_csv) {
  require(run_dirs.size() >= 2, ErrorKind::InvalidArgument, "report needs at least 2 run directories");
  const std::string text = ablation_csv(collect_ablation(run_dirs));
  std::ofstream out(out_csv, std::ios::trunc);
  require(bool(out), ErrorKind::Io, "cannot write '" + out_csv.string() + "'");
  out << text;
}

std::vector<AblationRow> run_ablation(const std::vector<std::string>& configs,
                                      const std::vector<std::uint64_t>& seeds, const TrainConfig& base,
                                      const fs::path& out_dir, std::ostream* log) {
  require(!configs.empty() && !seeds.empty(), ErrorKind::InvalidArgument, "ablation needs configs and seeds");
  std::vector<fs::path> dirs;
  for (const auto& name : configs) {
    const TrainConfig preset = named_config(name);
    for (const auto seed : seeds) {
      TrainConfig cfg = base;
      cfg.config_name = preset.config_name;
      cfg.vlq_on = preset.vlq_on;
      cfg.rcs_on = preset.rcs_on;
      cfg.dcr_on = preset.dcr_on;
      cfg.hard_align_on = preset.hard_align_on;
      cfg.seed = seed;
      const fs::path dir = out_dir / run_id(cfg);
      train_run(cfg, dir, TrainOptions{std::nullopt, log});
      dirs.push_back(dir);
    }
  }
  auto rows = collect_ablation(dirs);
  std::ofstream out(out_dir / "ablation.csv", std::ios::trunc);
  require(bool(out), ErrorKind::Io, "cannot write ablation.csv in '" + out_dir.string() + "'");
  out << ablation_csv(rows);
  return rows;
}

}  // namespace vaevq
