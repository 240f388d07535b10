#pragma once

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "artist/cli/commands.hpp"

namespace artist::cli {

enum class FlagType { string, integer, number, boolean, layers, opt_integer, opt_number, string_list, int_list };

struct FlagSpec {
  const char* section;
  const char* key;
  FlagType type;
  const char* help;
};

/// Every config key that has a command-line mirror; the flag is the key in kebab case.
inline const std::vector<FlagSpec>& config_flags() {
  static const std::vector<FlagSpec> flags{
      {"run", "backend", FlagType::string, "Denoiser backend: toy or a registered adapter name"},
      {"run", "backend_seed", FlagType::integer, "Seed of the toy backend weights"},
      {"run", "weights_dir", FlagType::string, "Weights directory handed to an adapter backend"},
      {"run", "seed", FlagType::integer, "Run seed (style noise, record seed, sweep seeds)"},
      {"run", "steps", FlagType::integer, "Number of DDIM steps T"},
      {"run", "schedule", FlagType::string, "Schedule family: scaled-linear, constant-beta, geometric, cosine"},
      {"run", "guidance", FlagType::number, "Classifier-free guidance scale"},
      {"run", "style_guidance", FlagType::opt_number, "Style-branch guidance scale (none = same as --guidance)"},
      {"run", "tau", FlagType::opt_integer, "Starting step of the stylization segment (none = T)"},
      {"run", "style_prompt", FlagType::string, "Style prompt"},
      {"run", "content_prompt", FlagType::string, "Content prompt used for inversion and the content branch"},
      {"run", "style_init", FlagType::string, "Style branch start: random_noise or inverted_at_tau"},
      {"run", "inject_in_uncond_pass", FlagType::boolean, "Apply injections in the unconditional CFG pass"},
      {"run", "snapshot_stride", FlagType::integer, "Save branch latents every N steps (0 = off)"},
      {"run", "input", FlagType::string, "Input image (.ppm/.png) or latent (.npy)"},
      {"run", "record", FlagType::string, "Existing inversion record (.artinv)"},
      {"run", "toy_image", FlagType::opt_integer, "Use the procedural toy image with this seed as input"},
      {"run", "output_dir", FlagType::string, "Root of the output tree"},
      {"run", "run_id", FlagType::string, "Run directory name (default: UTC timestamp + config hash)"},
      {"run", "workers", FlagType::integer, "Worker threads for batch work"},
      {"plan", "content_layers", FlagType::layers, "Content swap layers, e.g. 4-7 or 4,5 ('' = none)"},
      {"plan", "content_kind", FlagType::string, "Content feature: resnet_hidden or resnet_output"},
      {"plan", "style_layers", FlagType::layers, "AdaIN style layers ('' = none)"},
      {"plan", "c2s_layers", FlagType::layers, "Content-to-style query injection layers ('' = none)"},
      {"plan", "c2s_blend", FlagType::number, "Blend weight of injected queries (1 = replace)"},
      {"metrics", "style_set", FlagType::string_list, "Candidate style prompts for CLIP Style Score (repeatable)"},
      {"metrics", "cache_dir", FlagType::string, "Judge cache directory (default: $ARTIST_CACHE_DIR)"},
      {"metrics", "offline", FlagType::boolean, "Use stub clients only"},
      {"metrics", "taus", FlagType::int_list, "Tau grid for analyze, comma separated"},
      {"metrics", "aggregation", FlagType::string, "Content proxy aggregation: quadrature or linear"},
      {"metrics", "sweep_seeds", FlagType::integer, "Number of seeds in the empirical sweep"},
      {"clients", "judge_endpoint", FlagType::string, "Chat-completions URL of the live judge"},
      {"clients", "judge_model", FlagType::string, "Model identifier of the live judge"},
      {"clients", "timeout_seconds", FlagType::number, "Judge request timeout"},
      {"clients", "max_concurrency", FlagType::integer, "Concurrent judge requests"},
      {"clients", "requests_per_second", FlagType::number, "Judge token-bucket rate"},
      {"clients", "burst", FlagType::number, "Judge token-bucket capacity"},
      {"clients", "embedding_dim", FlagType::integer, "Stub embedding dimension"},
      {"clients", "stub_seed", FlagType::integer, "Seed of the stub clients"},
  };
  return flags;
}

inline const char* type_label(FlagType t) {
  switch (t) {
    case FlagType::string: return "TEXT";
    case FlagType::integer: return "INT";
    case FlagType::number: return "FLOAT";
    case FlagType::boolean: return "BOOL";
    case FlagType::layers: return "LAYERS";
    case FlagType::opt_integer: return "INT|none";
    case FlagType::opt_number: return "FLOAT|none";
    case FlagType::string_list: return "TEXT...";
    case FlagType::int_list: return "INTS";
  }
  return "TEXT";
}

inline std::string kebab(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorCode::invalid_argument, "expected a boolean, got '" + v + "'");
}

inline nlohmann::json flag_value(const FlagSpec& f, const std::vector<std::string>& raw) {
  const std::string& v = raw.back();
  const std::string name = kebab(f.key);
  try {
    switch (f.type) {
      case FlagType::string: return v;
      case FlagType::integer: {
        std::size_t used = 0;
        const long long n = std::stoll(v, &used);
        ARTIST_CHECK(used == v.size(), ErrorCode::invalid_argument, name + ": not an integer '" + v + "'");
        return n;
      }
      case FlagType::number: {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        ARTIST_CHECK(used == v.size(), ErrorCode::invalid_argument, name + ": not a number '" + v + "'");
        return d;
      }
      case FlagType::boolean: return parse_bool(v);
      case FlagType::layers: return parse_layers(v);
      case FlagType::opt_integer:
        if (v == "none" || v.empty()) return nullptr;
        return std::stoll(v);
      case FlagType::opt_number:
        if (v == "none" || v.empty()) return nullptr;
        return std::stod(v);
      case FlagType::string_list: return raw;
      case FlagType::int_list: {
        nlohmann::json out = nlohmann::json::array();
        for (int t : parse_layers(v)) out.push_back(t);
        return out;
      }
    }
  } catch (const std::logic_error&) {
  }
  throw Error(ErrorCode::invalid_argument, name + ": bad value '" + v + "'");
}

/// Command-line layer of one subcommand: the config file path plus raw flag values.
struct ConfigLayer {
  std::string config_file;
  std::map<std::string, std::vector<std::string>> raw;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "JSON config file with run/plan/metrics/clients sections");
    for (const FlagSpec& f : config_flags()) {
      const std::string id = std::string(f.section) + "." + f.key;
      auto* opt = app.add_option(kebab(f.key), raw[id], f.help);
      if (f.type == FlagType::string_list) opt->allow_extra_args(false)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
      else opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      opt->type_size(1)->expected(1)->type_name(type_label(f.type));
      options[id] = opt;
    }
  }

  /// Built-in defaults, then the config file, then flags given on the command line.
  RunConfig resolve() const {
    nlohmann::json cfg = default_config_json();
    if (!config_file.empty()) {
      nlohmann::json file;
      try {
        file = nlohmann::json::parse(io::read_file(config_file));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_argument, "config file '" + config_file + "': " + e.what());
      }
      merge_config(cfg, file);
    }
    for (const FlagSpec& f : config_flags()) {
      const std::string id = std::string(f.section) + "." + f.key;
      if (options.at(id)->count() == 0) continue;
      cfg[f.section][f.key] = flag_value(f, raw.at(id));
    }
    return from_json(cfg);
  }
};

/// Runs the tool on argv-style arguments (args[0] is the program name). Returns the exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Training-free text-driven stylization with content and style delegation branches", "artist"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "artist 1.0.0");

  auto* inv = app.add_subcommand("invert", "Invert a content image into a recorded DDIM trajectory");
  auto* sty = app.add_subcommand("stylize", "Stylize a recorded (or freshly inverted) content latent");
  auto* ana = app.add_subcommand("analyze", "Theoretical and empirical content/style growth curves");
  auto* evl = app.add_subcommand("evaluate", "Score content/stylized pairs with the metric suite");
  auto* abl = app.add_subcommand("ablate", "Run one stylization per value of an ablation axis");

  ConfigLayer inv_cfg, sty_cfg, ana_cfg, evl_cfg, abl_cfg;
  inv_cfg.attach(*inv);
  sty_cfg.attach(*sty);
  ana_cfg.attach(*ana);
  evl_cfg.attach(*evl);
  abl_cfg.attach(*abl);

  AnalyzeOptions ana_opt;
  ana->add_flag("--theoretical-only", ana_opt.theoretical_only, "Schedule-only curves; no backend is constructed");
  ana->add_flag("--self-test", ana_opt.self_test, "Fit exponents of synthetic power laws and print them");
  EvaluateOptions evl_opt;
  evl->add_option("--input-dir", evl_opt.input_dir, "Directory with content/, stylized/ and prompts.json");
  AblateOptions abl_opt;
  abl->add_option("--axis", abl_opt.axis,
                  "content_layers, style_layers, c2s_layers, tau, guidance, content_kind or style_init")
      ->required();
  abl->add_option("--values", abl_opt.values, "One value per run; repeat the flag for several runs")
      ->required()
      ->allow_extra_args(false)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  RunConfig config;
  try {
    if (inv->parsed()) config = inv_cfg.resolve();
    if (sty->parsed()) config = sty_cfg.resolve();
    if (ana->parsed()) config = ana_cfg.resolve();
    if (evl->parsed()) config = evl_cfg.resolve();
    if (abl->parsed()) config = abl_cfg.resolve();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (inv->parsed()) return cmd_invert(config, out);
    if (sty->parsed()) return cmd_stylize(config, out);
    if (ana->parsed()) return cmd_analyze(config, ana_opt, out);
    if (evl->parsed()) return cmd_evaluate(config, evl_opt, out, err);
    if (abl->parsed()) return cmd_ablate(config, abl_opt, out);
  } catch (const NonFiniteError& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::invalid_argument ? kUsage : kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace artist::cli
