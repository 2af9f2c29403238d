#include "vaevq/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vaevq/text.hpp"

namespace vaevq {

namespace {

struct Toggles {
  bool vlq, rcs, dcr, hard_align;
};

const std::map<std::string, Toggles, std::less<>>& presets() {
  static const std::map<std::string, Toggles, std::less<>> table = {
      {"baseline", {false, false, false, true}},
      {"M1", {true, false, false, true}},
      {"M2", {true, true, false, false}},
      {"M3", {true, false, true, true}},
      {"full", {true, true, true, false}},
  };
  return table;
}

bool parse_bool(std::string_view v, std::string_view key) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw Error(ErrorKind::Config, "invalid boolean '" + std::string(v) + "' for " + std::string(key));
}

std::string_view route_name(RcsRoute r) {
  switch (r) {
    case RcsRoute::Both: return "both";
    case RcsRoute::CodebookOnly: return "codebook";
    case RcsRoute::EncoderOnly: return "encoder";
  }
  return "both";
}

RcsRoute parse_route(std::string_view v) {
  if (v == "both") return RcsRoute::Both;
  if (v == "codebook") return RcsRoute::CodebookOnly;
  if (v == "encoder") return RcsRoute::EncoderOnly;
  throw Error(ErrorKind::Config, "invalid rcs_route '" + std::string(v) + "'");
}

std::string b(bool v) { return v ? "true" : "false"; }

// Field table shared by parsing and serialization.
struct Field {
  const char* key;
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
  bool toggle = false;
};

template <typename T>
Field int_field(const char* key, T TrainConfig::*member) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*member = parse_integer<T>(v, key); },
          [=](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(const char* key, double TrainConfig::*member) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*member = parse_double(v, key); },
          [=](const TrainConfig& c) { return format_number(c.*member); }};
}

Field bool_field(const char* key, bool TrainConfig::*member, bool toggle) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*member = parse_bool(v, key); },
          [=](const TrainConfig& c) { return b(c.*member); }, toggle};
}

Field string_field(const char* key, std::string TrainConfig::*member) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*member = std::string(v); },
          [=](const TrainConfig& c) { return c.*member; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      string_field("config_name", &TrainConfig::config_name),
      bool_field("vlq_on", &TrainConfig::vlq_on, true),
      bool_field("rcs_on", &TrainConfig::rcs_on, true),
      bool_field("dcr_on", &TrainConfig::dcr_on, true),
      bool_field("hard_align_on", &TrainConfig::hard_align_on, true),
      bool_field("ema_on", &TrainConfig::ema_on, false),
      {"rcs_route", [](TrainConfig& c, std::string_view v) { c.rcs_route = parse_route(v); },
       [](const TrainConfig& c) { return std::string(route_name(c.rcs_route)); }},
      real_field("lambda_rcs", &TrainConfig::lambda_rcs),
      real_field("lambda_dcr", &TrainConfig::lambda_dcr),
      real_field("beta_kl", &TrainConfig::beta_kl),
      real_field("beta_commit", &TrainConfig::beta_commit),
      real_field("ema_decay", &TrainConfig::ema_decay),
      int_field("dcr_every_n_steps", &TrainConfig::dcr_every_n_steps),
      int_field("codebook_size", &TrainConfig::codebook_size),
      int_field("latent_dim", &TrainConfig::latent_dim),
      int_field("image_size", &TrainConfig::image_size),
      int_field("patch_size", &TrainConfig::patch_size),
      int_field("hidden", &TrainConfig::hidden),
      int_field("epochs", &TrainConfig::epochs),
      int_field("batch_size", &TrainConfig::batch_size),
      real_field("base_lr", &TrainConfig::base_lr),
      real_field("codebook_lr_scale", &TrainConfig::codebook_lr_scale),
      string_field("data_kind", &TrainConfig::data_kind),
      int_field("n_train", &TrainConfig::n_train),
      int_field("n_test", &TrainConfig::n_test),
      int_field("data_seed", &TrainConfig::data_seed),
      string_field("train_manifest", &TrainConfig::train_manifest),
      string_field("test_manifest", &TrainConfig::test_manifest),
      int_field("seed", &TrainConfig::seed),
  };
  return table;
}

}  // namespace

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.image_height = image_size;
  m.image_width = image_size;
  m.patch_height = patch_size;
  m.patch_width = patch_size;
  m.hidden = hidden;
  m.latent_dim = latent_dim;
  return m;
}

ObjectiveConfig TrainConfig::objective() const {
  ObjectiveConfig o;
  o.vlq = vlq_on;
  o.rcs = rcs_on;
  o.dcr = dcr_on;
  o.hard_align = hard_align_on;
  o.rcs_route = rcs_route;
  o.weights = {lambda_rcs, lambda_dcr, beta_kl, beta_commit};
  return o;
}

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorKind::Config, what); };
  check(config_name == "custom" || is_named_config(config_name),
        "config_name must be one of baseline, M1, M2, M3, full, custom");
  if (is_named_config(config_name)) {
    const Toggles t = presets().find(config_name)->second;
    check(vlq_on == t.vlq && rcs_on == t.rcs && dcr_on == t.dcr && hard_align_on == t.hard_align,
          "toggles of named config '" + config_name + "' cannot be overridden; use config_name = custom");
  }
  check(!rcs_on || vlq_on, "rcs_on requires vlq_on (RCS weights by the posterior variance)");
  check(codebook_size >= 2, "codebook_size must be >= 2");
  check(latent_dim >= 1, "latent_dim must be >= 1");
  check(image_size >= 8 && patch_size >= 1 && image_size % patch_size == 0,
        "image_size must be >= 8 and divisible by patch_size");
  check(hidden >= 1, "hidden must be >= 1");
  check(epochs >= 0, "epochs must be >= 0");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(base_lr > 0.0 && codebook_lr_scale > 0.0, "learning rates must be positive");
  check(ema_decay > 0.0 && ema_decay < 1.0, "ema_decay must lie in (0, 1)");
  check(dcr_every_n_steps >= 1, "dcr_every_n_steps must be >= 1");
  check(lambda_rcs >= 0 && lambda_dcr >= 0 && beta_kl >= 0 && beta_commit >= 0,
        "loss weights must be non-negative");
  check(n_train >= 1 && n_test >= 1, "n_train and n_test must be positive");
  check(data_kind == "mixed" || data_kind == "bars" || data_kind == "blobs" || data_kind == "checker",
        "data_kind must be mixed, bars, blobs or checker");
}

bool is_named_config(std::string_view name) { return presets().count(name) > 0; }

TrainConfig named_config(std::string_view name) {
  const auto it = presets().find(name);
  require(it != presets().end(), ErrorKind::Config, "unknown config name '" + std::string(name) + "'");
  TrainConfig c;
  c.config_name = std::string(name);
  c.vlq_on = it->second.vlq;
  c.rcs_on = it->second.rcs;
  c.dcr_on = it->second.dcr;
  c.hard_align_on = it->second.hard_align;
  return c;
}

TrainConfig parse_config(std::string_view text) {
  std::map<std::string, std::string, std::less<>> values;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    require(eq != std::string_view::npos, ErrorKind::Config,
            "line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    bool known = false;
    for (const auto& f : fields()) known |= key == f.key;
    require(known, ErrorKind::Config, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    require(values.emplace(key, value).second, ErrorKind::Config,
            "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
  }

  TrainConfig cfg;
  if (const auto it = values.find("config_name"); it != values.end()) {
    if (is_named_config(it->second)) {
      cfg = named_config(it->second);
    } else {
      cfg.config_name = it->second;
    }
  }
  for (const auto& f : fields()) {
    const auto it = values.find(f.key);
    if (it == values.end() || std::string_view(f.key) == "config_name") continue;
    f.set(cfg, it->second);
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::Io, "cannot open config '" + path.string() + "'");
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

TrainConfig resolve_config(std::string_view name_or_path) {
  if (is_named_config(name_or_path)) return named_config(name_or_path);
  return load_config(std::filesystem::path(name_or_path));
}

}  // namespace vaevq
