// Command-line front end: train, eval, encode, decode, ablate, report, generate.
//
// Failures print a single line "error: <kind>: <message>" to stderr and
// exit with status 1 (2 for usage errors).

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vaevq/checkpoint.hpp"
#include "vaevq/config.hpp"
#include "vaevq/data.hpp"
#include "vaevq/error.hpp"
#include "vaevq/metrics.hpp"
#include "vaevq/text.hpp"
#include "vaevq/trainer.hpp"

namespace fs = std::filesystem;
using namespace vaevq;

namespace {

std::vector<Eigen::Index> read_tokens(const fs::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::vector<Eigen::Index> tokens;
  std::string line;
  while (std::getline(in, line)) {
    const auto field = trim(line);
    if (field.empty()) continue;
    tokens.push_back(parse_integer<Eigen::Index>(field, "token"));
  }
  require(!tokens.empty(), ErrorKind::EmptyInput, "no tokens in '" + path.string() + "'");
  return tokens;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(bool(out), ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << text;
  require(bool(out), ErrorKind::Io, "failed writing '" + path.string() + "'");
}

std::vector<std::uint64_t> parse_seeds(const std::vector<std::string>& fields) {
  std::vector<std::uint64_t> seeds;
  for (const auto& f : fields) seeds.push_back(parse_integer<std::uint64_t>(f, "seed"));
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vaevq: variational vector quantization trainer"};
  app.require_subcommand(1);

  std::string config_arg;
  fs::path out_path;
  std::uint64_t seed = 1;
  std::optional<int> epochs;
  std::optional<int> codebook_size;
  std::optional<int> latent_dim;
  fs::path resume_path;
  auto* train = app.add_subcommand("train", "train one configuration");
  train->add_option("--config", config_arg, "named config or config file")->required();
  train->add_option("--out", out_path, "run directory")->required();
  train->add_option("--seed", seed, "run seed")->required();
  train->add_option("--epochs", epochs);
  train->add_option("--codebook-size", codebook_size);
  train->add_option("--latent-dim", latent_dim);
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  fs::path checkpoint_path;
  fs::path data_path;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  eval->add_option("--checkpoint", checkpoint_path)->required();
  eval->add_option("--data", data_path, "image manifest")->required();
  eval->add_option("--out", out_path, "metrics csv")->required();

  fs::path image_path;
  auto* encode_cmd = app.add_subcommand("encode", "image to token indices");
  encode_cmd->add_option("--checkpoint", checkpoint_path)->required();
  encode_cmd->add_option("--image", image_path, "PGM file")->required();
  encode_cmd->add_option("--out", out_path, "token file")->required();

  fs::path tokens_path;
  auto* decode_cmd = app.add_subcommand("decode", "token indices to image");
  decode_cmd->add_option("--checkpoint", checkpoint_path)->required();
  decode_cmd->add_option("--tokens", tokens_path)->required();
  decode_cmd->add_option("--out", out_path, "PGM file")->required();

  std::vector<std::string> configs;
  std::vector<std::string> seed_fields{"1", "2", "3"};
  std::string base_config = "full";
  auto* ablate = app.add_subcommand("ablate", "train several configs over several seeds");
  ablate->add_option("--configs", configs)->required()->delimiter(',');
  ablate->add_option("--out", out_path)->required();
  ablate->add_option("--seeds", seed_fields)->delimiter(',');
  ablate->add_option("--base", base_config, "config file supplying non-toggle settings");
  ablate->add_option("--epochs", epochs);

  std::vector<fs::path> runs;
  auto* report = app.add_subcommand("report", "ablation table from run directories");
  report->add_option("--runs", runs)->required();
  report->add_option("--out", out_path)->required();

  std::string kind = "mixed";
  long long count = 512;
  int size = 16;
  auto* generate = app.add_subcommand("generate", "write a synthetic dataset as PGM files and a manifest");
  generate->add_option("--kind", kind, "bars, blobs, checker or mixed");
  generate->add_option("--n", count);
  generate->add_option("--size", size);
  generate->add_option("--seed", seed);
  generate->add_option("--out", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (train->parsed()) {
      TrainConfig cfg = resolve_config(config_arg);
      cfg.seed = seed;
      if (epochs) cfg.epochs = *epochs;
      if (codebook_size) cfg.codebook_size = *codebook_size;
      if (latent_dim) cfg.latent_dim = *latent_dim;
      TrainOptions options;
      options.log = &std::cout;
      if (!resume_path.empty()) options.resume = load_checkpoint(resume_path);
      const auto result = train_run(cfg, out_path, options);
      std::cout << "wrote " << (out_path / "checkpoint.bin").string() << " at epoch "
                << result.final_state.epoch << '\n';
    } else if (eval->parsed()) {
      const Checkpoint ckpt = load_checkpoint(checkpoint_path);
      const EvalReport r = evaluate(ckpt, load_manifest(data_path));
      write_text(out_path, eval_csv_header() + "\n" + to_csv_row(r) + "\n");
      std::cout << to_csv_row(r) << '\n';
    } else if (encode_cmd->parsed()) {
      const Checkpoint ckpt = load_checkpoint(checkpoint_path);
      std::string text;
      for (const auto t : encode_tokens(ckpt, read_pgm(image_path))) text += std::to_string(t) + "\n";
      write_text(out_path, text);
    } else if (decode_cmd->parsed()) {
      const Checkpoint ckpt = load_checkpoint(checkpoint_path);
      write_pgm(out_path, decode_tokens(ckpt, read_tokens(tokens_path)));
    } else if (ablate->parsed()) {
      TrainConfig base = resolve_config(base_config);
      if (epochs) base.epochs = *epochs;
      const auto rows = run_ablation(configs, parse_seeds(seed_fields), base, out_path, &std::cout);
      std::cout << ablation_csv(rows);
    } else if (report->parsed()) {
      report_ablation(runs, out_path);
    } else if (generate->parsed()) {
      const ImageBatch batch = generate_synthetic(parse_synthetic_kind(kind), count, size, seed);
      std::cout << write_dataset(out_path, batch).string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
