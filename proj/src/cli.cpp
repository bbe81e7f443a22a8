#include "freqfield/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <vector>

#include "freqfield/container.hpp"
#include "freqfield/data.hpp"
#include "freqfield/image.hpp"
#include "freqfield/train.hpp"

namespace freqfield {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointName = "checkpoint.ffc";
constexpr const char* kConfigName = "config.txt";

struct KeySpec {
  const char* key;
  const char* value;
  const char* help;
};

// Config keys, their defaults and help text. Flags are the same names with
// '-' in place of '_'.
const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs{
      {"full_res", "64", "full-resolution image width and height"},
      {"train_views", "16", "number of training views"},
      {"test_views", "4", "number of held-out views"},
      {"scales", "4", "number of dyadic scales (1, 2, 4, ...)"},
      {"supersample", "8", "per-axis supersampling of the ground-truth renderer"},
      {"seed", "0", "random seed"},
      {"steps", "4000", "total optimization steps"},
      {"warmup", "700", "spatial-domain warm-up steps"},
      {"batch", "1024", "rays per step"},
      {"lr_factors", "0.02", "learning rate of the grid factors"},
      {"lr_masks", "0.02", "learning rate of the frequency masks"},
      {"lr_decoder", "0.001", "learning rate of the color decoder"},
      {"mask_mode", "literal", "mask reading: literal or multiplicative"},
      {"samples", "64", "samples per ray"},
      {"probe_every", "500", "held-out probe interval in steps (0 disables)"},
      {"extent", "64", "grid extent per axis"},
      {"density_rank", "4", "density components"},
      {"appearance_rank", "12", "appearance components"},
      {"hidden", "32", "decoder hidden width"},
      {"epsilon", "0.5", "mask offset"},
      {"density_scale", "25", "density multiplier"},
      {"init_std", "0.1", "initial factor standard deviation"},
      {"no_mask", "false", "disable the learnable masks"},
      {"no_lpf", "false", "disable the low-pass filters"},
      {"shared_lpf", "false", "use one low-pass filter for every scale"},
      {"split", "test", "views to render: train or test"},
  };
  return specs;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string flag_name(const std::string& key) {
  std::string f = "--" + key;
  for (auto& c : f)
    if (c == '_') c = '-';
  return f;
}

/// Typed view of the resolved key/value settings.
class Settings {
 public:
  explicit Settings(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  const std::map<std::string, std::string>& values() const { return values_; }
  const std::string& str(const std::string& key) const { return values_.at(key); }

  std::size_t count(const std::string& key) const {
    const auto& v = str(key);
    try {
      std::size_t pos = 0;
      const long long n = std::stoll(v, &pos);
      if (pos == v.size() && n >= 0) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }

  double real(const std::string& key) const {
    const auto& v = str(key);
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }

  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
  }

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.total_steps = count("steps");
    cfg.warmup_steps = count("warmup");
    cfg.batch_rays = count("batch");
    cfg.lr_factors = real("lr_factors");
    cfg.lr_masks = real("lr_masks");
    cfg.lr_decoder = real("lr_decoder");
    cfg.seed = count("seed");
    try {
      cfg.mask_mode = parse_mask_mode(str("mask_mode"));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("mask_mode: ") + e.what());
    }
    cfg.samples_per_ray = count("samples");
    cfg.probe_every = count("probe_every");
    cfg.field.extent = count("extent");
    cfg.field.density_rank = count("density_rank");
    cfg.field.appearance_rank = count("appearance_rank");
    cfg.field.hidden = count("hidden");
    cfg.field.epsilon = real("epsilon");
    cfg.field.density_scale = real("density_scale");
    cfg.field.init_std = real("init_std");
    cfg.field.scales = ScaleConfig::dyadic(count("scales"));
    cfg.variant = ablation().variant();
    cfg.validate();
    return cfg;
  }

  AblationFlags ablation() const {
    return {flag("no_mask"), flag("no_lpf"), flag("shared_lpf")};
  }

 private:
  std::map<std::string, std::string> values_;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw ConfigError("output directory " + dir.string() +
                        " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

fs::path checkpoint_file(const fs::path& p) {
  return fs::is_directory(p) ? p / kCheckpointName : p;
}

MultiScaleField<float> load_checkpoint(const fs::path& p) {
  const auto file = checkpoint_file(p);
  if (!fs::exists(file)) throw ConfigError("checkpoint " + file.string() + " not found");
  return MultiScaleField<float>::from_container(Container::read(file));
}

MultiScaleDataset open_dataset(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--data is required");
  return load_dataset(dir);
}

void check_scales(const MultiScaleField<float>& field, const MultiScaleDataset& ds) {
  if (field.config().scales.reduction_factors != ds.reductions)
    throw ConfigError("checkpoint has " + std::to_string(field.num_scales()) +
                      " scales but the dataset has " + std::to_string(ds.num_scales()));
}

void write_report(const fs::path& dir, const MetricReport& report, std::ostream& out) {
  write_text(dir / "metrics.json", report.to_json() + "\n");
  const auto table = report.to_text();
  write_text(dir / "metrics.txt", table);
  out << table;
}

RenderSettings render_settings(const Settings& s, const MultiScaleDataset& ds) {
  TrainConfig cfg;
  cfg.samples_per_ray = s.count("samples");
  return eval_settings(cfg, ds);
}

// Options shared by the subcommands that take them, captured as strings and
// resolved after parsing.
struct Command {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> given;
  std::string config_path;
  std::string data, out, checkpoint;
  bool force = false;

  void add_keys(std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
      const auto& spec = *std::find_if(key_specs().begin(), key_specs().end(),
                                       [&](const KeySpec& s) { return std::string(s.key) == k; });
      const std::string key = k;
      if (std::string(spec.value) == "false") {
        app->add_flag_callback(flag_name(key), [this, key] { given[key] = "true"; }, spec.help);
      } else {
        app->add_option_function<std::string>(
               flag_name(key), [this, key](const std::string& v) { given[key] = v; }, spec.help)
            ->type_name(std::string("[") + spec.value + "]");
      }
    }
  }

  Settings resolve() const {
    auto values = config_defaults();
    if (!config_path.empty())
      for (auto& [k, v] : parse_config_text(read_file(config_path))) values[k] = v;
    for (auto& [k, v] : given) values[k] = v;
    return Settings(std::move(values));
  }
};

int cmd_make_dataset(const Command& c, std::ostream& out) {
  const auto s = c.resolve();
  CameraRigOptions rig;
  rig.train_views = s.count("train_views");
  rig.test_views = s.count("test_views");
  rig.full_resolution = s.count("full_res");
  if (rig.full_resolution == 0) throw ConfigError("full_res must be positive");
  rig.focal = 80.0 * static_cast<double>(rig.full_resolution) / 64.0;
  const auto seed = s.count("seed");
  const auto scales = ScaleConfig::dyadic(s.count("scales"));
  const auto supersample = s.count("supersample");
  auto ds = build_multiscale(SyntheticScene::standard(seed), camera_rig(rig, seed),
                             scales.reduction_factors, supersample);
  prepare_output_dir(c.out, c.force);
  save_dataset(ds, c.out);
  write_text(fs::path(c.out) / kConfigName, format_config(s.values()));
  out << "wrote " << ds.views.size() << " views x " << ds.num_scales() << " scales to " << c.out
      << "\n";
  return kExitOk;
}

int cmd_train(const Command& c, std::ostream& out) {
  const auto s = c.resolve();
  const auto cfg = s.train_config();
  const auto ds = open_dataset(c.data);
  prepare_output_dir(c.out, c.force);
  write_text(fs::path(c.out) / kConfigName, format_config(s.values()));
  std::ofstream log(fs::path(c.out) / "log.jsonl");
  auto progress = [&](const LogRecord& r) {
    log << r.to_json() << "\n";
    if (!r.probe_psnr.empty()) {
      out << "step " << r.step << " loss " << r.loss << " probe psnr";
      for (double p : r.probe_psnr) out << " " << p;
      out << "\n";
    }
  };
  const auto result = train_loop(cfg, ds, progress);
  result.field.to_container().write(fs::path(c.out) / kCheckpointName);
  out << "trained " << cfg.total_steps << " steps (" << variant_name(cfg.variant) << ", "
      << mask_mode_name(cfg.mask_mode) << "), checkpoint in " << c.out << "\n";
  return kExitOk;
}

int cmd_eval(const Command& c, std::ostream& out) {
  const auto s = c.resolve();
  auto field = load_checkpoint(c.checkpoint);
  const auto ds = open_dataset(c.data);
  check_scales(field, ds);
  prepare_output_dir(c.out, c.force);
  write_text(fs::path(c.out) / kConfigName, format_config(s.values()));
  write_report(c.out, evaluate_field(field, ds, render_settings(s, ds), s.str("split")), out);
  return kExitOk;
}

int cmd_render(const Command& c, std::ostream& out) {
  const auto s = c.resolve();
  auto field = load_checkpoint(c.checkpoint);
  const auto ds = open_dataset(c.data);
  check_scales(field, ds);
  const auto views = ds.split_indices(s.str("split"));
  if (views.empty()) throw ConfigError("split '" + s.str("split") + "' has no views");
  prepare_output_dir(c.out, c.force);
  write_text(fs::path(c.out) / kConfigName, format_config(s.values()));
  const auto rs = render_settings(s, ds);
  char name[64];
  for (std::size_t v : views)
    for (std::size_t k = 0; k < ds.num_scales(); ++k) {
      std::snprintf(name, sizeof name, "view_%03zu_scale_%zu.png", v, k);
      write_png(fs::path(c.out) / name, render_image(field, ds.camera(v, k), rs));
    }
  out << "rendered " << views.size() << " views x " << ds.num_scales() << " scales to " << c.out
      << "\n";
  return kExitOk;
}

std::vector<double> plane_sum(const Grid3D<float>& m) {
  const std::size_t rank = m.extent(0), n = m.extent(1) * m.extent(2);
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < rank; ++r)
    for (std::size_t i = 0; i < n; ++i) out[i] += m.data()[r * n + i];
  return out;
}

int cmd_inspect(const Command& c, std::ostream& out) {
  auto field = load_checkpoint(c.checkpoint);
  prepare_output_dir(c.out, c.force);
  field.expand_all();
  const std::size_t n = field.config().extent;
  std::size_t written = 0;
  char name[64];
  for (std::size_t k = 0; k < field.num_scales(); ++k) {
    const auto& masks = field.params().masks[k];
    for (int kind = 0; kind < 2; ++kind) {
      const char* kind_name = kind == 0 ? "density" : "appearance";
      const auto& fm = kind == 0 ? masks.density : masks.appearance;
      const auto& grid = kind == 0 ? field.density_grid(k) : field.appearance_grid(k);
      for (int p = 0; p < 3; ++p) {
        const auto& mv = fm.matrices[p].values.data();
        std::snprintf(name, sizeof name, "mask_%s_plane%d_scale%zu.png", kind_name, p, k);
        write_gray_png(fs::path(c.out) / name, n, n, std::vector<double>(mv.begin(), mv.end()));
        std::snprintf(name, sizeof name, "feature_%s_plane%d_scale%zu.png", kind_name, p, k);
        write_gray_png(fs::path(c.out) / name, n, n, plane_sum(grid.matrices[p]));
        written += 2;
      }
    }
  }
  out << "wrote " << written << " images to " << c.out << "\n";
  return kExitOk;
}

int cmd_ablate(const Command& c, std::ostream& out) {
  const auto s = c.resolve();
  auto cfg = s.train_config();
  const auto flags = s.ablation();
  const auto ds = open_dataset(c.data);
  prepare_output_dir(c.out, c.force);
  write_text(fs::path(c.out) / kConfigName, format_config(s.values()));
  cfg.variant = Variant::full;
  const auto report = run_ablation(cfg, flags, ds);
  out << "variant " << variant_name(flags.variant()) << "\n";
  write_report(c.out, report, out);
  return kExitOk;
}

}  // namespace

const std::map<std::string, std::string>& config_defaults() {
  static const auto defaults = [] {
    std::map<std::string, std::string> m;
    for (const auto& s : key_specs()) m[s.key] = s.value;
    return m;
  }();
  return defaults;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!config_defaults().contains(key))
      throw ConfigError("config line " + std::to_string(no) + ": unknown key '" + key + "'");
    if (value.empty())
      throw ConfigError("config line " + std::to_string(no) + ": empty value for '" + key + "'");
    out[key] = value;
  }
  return out;
}

std::string format_config(const std::map<std::string, std::string>& values) {
  std::string s;
  for (const auto& [k, v] : values) s += k + " = " + v + "\n";
  return s;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-domain anti-aliased radiance fields"};
  app.require_subcommand(1);

  const std::initializer_list<const char*> train_keys{
      "seed", "steps", "warmup", "batch", "lr_factors", "lr_masks", "lr_decoder",
      "mask_mode", "samples", "probe_every", "extent", "density_rank", "appearance_rank",
      "hidden", "epsilon", "density_scale", "init_std", "scales", "no_mask", "no_lpf",
      "shared_lpf"};

  std::vector<std::pair<Command, int (*)(const Command&, std::ostream&)>> cmds;
  cmds.reserve(6);
  auto add = [&](const char* name, const char* help, int (*fn)(const Command&, std::ostream&)) {
    cmds.push_back({Command{}, fn});
    auto& c = cmds.back().first;
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config", c.config_path, "key = value settings file")
        ->check(CLI::ExistingFile);
    c.app->add_flag("--force", c.force, "allow writing into a non-empty output directory");
    c.app->add_option("--out", c.out, "output directory")->required();
    return &c;
  };

  auto* make = add("make-dataset", "render the synthetic multi-scale dataset", cmd_make_dataset);
  make->add_keys({"full_res", "train_views", "test_views", "scales", "supersample", "seed"});

  auto* train = add("train", "train a field on a dataset", cmd_train);
  train->app->add_option("--data", train->data, "dataset directory")->required();
  train->add_keys(train_keys);

  auto* render = add("render", "render dataset views from a checkpoint", cmd_render);
  render->app->add_option("--checkpoint", render->checkpoint, "checkpoint file or run directory")
      ->required();
  render->app->add_option("--data", render->data, "dataset directory")->required();
  render->add_keys({"samples", "split"});

  auto* eval = add("eval", "per-scale PSNR and SSIM of a checkpoint", cmd_eval);
  eval->app->add_option("--checkpoint", eval->checkpoint, "checkpoint file or run directory")
      ->required();
  eval->app->add_option("--data", eval->data, "dataset directory")->required();
  eval->add_keys({"samples", "split"});

  auto* inspect = add("inspect", "export mask and feature images", cmd_inspect);
  inspect->app->add_option("--checkpoint", inspect->checkpoint, "checkpoint file or run directory")
      ->required();

  auto* ablate = add("ablate", "train one ablation variant and evaluate it", cmd_ablate);
  ablate->app->add_option("--data", ablate->data, "dataset directory")->required();
  ablate->add_keys(train_keys);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (auto& [c, fn] : cmds)
      if (c.app->parsed()) return fn(c, out);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}

int run_cli(int argc, const char* const* argv) { return run_cli(argc, argv, std::cout, std::cerr); }

}  // namespace freqfield
