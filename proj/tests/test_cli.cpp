#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "freqfield/cli.hpp"
#include "freqfield/image.hpp"
#include "freqfield/train.hpp"

using namespace freqfield;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("freqaa_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "freqaa");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 16 px, 3 views, cheap enough for every test below.
void make_small_dataset(const std::string& dir, const std::string& seed = "0") {
  const auto r = cli({"make-dataset", "--out", dir, "--full-res", "16", "--train-views", "2",
                      "--test-views", "1", "--supersample", "2", "--seed", seed});
  REQUIRE(r.code == kExitOk);
}

const std::vector<std::string> kTinyTrain{"--extent", "8", "--samples", "8", "--batch", "16",
                                          "--density-rank", "1", "--appearance-rank", "2",
                                          "--hidden", "4", "--probe-every", "0"};

std::vector<std::string> train_args(const std::string& data, const std::string& out,
                                    std::vector<std::string> extra) {
  std::vector<std::string> a{"train", "--data", data, "--out", out};
  a.insert(a.end(), kTinyTrain.begin(), kTinyTrain.end());
  a.insert(a.end(), extra.begin(), extra.end());
  return a;
}

}  // namespace

TEST_CASE("config text parsing") {
  const auto m = parse_config_text("# comment\nsteps = 12\n\n  mask_mode=multiplicative  # x\n");
  CHECK(m.size() == 2);
  CHECK(m.at("steps") == "12");
  CHECK(m.at("mask_mode") == "multiplicative");
  CHECK_THROWS_WITH_AS(parse_config_text("stepz = 1\n"), doctest::Contains("line 1"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("steps\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("steps =\n"), ConfigError);
  CHECK(config_defaults().at("mask_mode") == "literal");
  CHECK(parse_config_text(format_config(config_defaults())) == config_defaults());
}

TEST_CASE("help documents every flag and unknown flags are errors") {
  const auto help = cli({"train", "--help"});
  CHECK(help.code == kExitOk);
  for (const auto& [key, value] : config_defaults()) {
    if (key == "full_res" || key == "train_views" || key == "test_views" ||
        key == "supersample" || key == "split")
      continue;
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    INFO(flag);
    CHECK(help.out.find(flag) != std::string::npos);
  }
  CHECK(cli({"train", "--data", "x", "--out", "y", "--bogus"}).code == kExitConfig);
  CHECK(cli({}).code == kExitConfig);
}

TEST_CASE("make-dataset: determinism, divisibility and non-empty output") {
  TempDir tmp;
  make_small_dataset(tmp / "a", "7");
  make_small_dataset(tmp / "b", "7");
  std::size_t pngs = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp.path / "a")) {
    if (e.path().extension() != ".png") continue;
    const auto rel = fs::relative(e.path(), tmp.path / "a");
    CHECK(slurp(e.path()) == slurp(tmp.path / "b" / rel));
    ++pngs;
  }
  CHECK(pngs == 3 * 4);
  CHECK(fs::exists(tmp.path / "a" / "config.txt"));

  const auto again = cli({"make-dataset", "--out", tmp / "a", "--full-res", "16"});
  CHECK(again.code == kExitConfig);
  CHECK(again.err.find("--force") != std::string::npos);

  const auto bad = cli({"make-dataset", "--out", tmp / "c", "--full-res", "60"});
  CHECK(bad.code == kExitConfig);
  CHECK(bad.err.find("not divisible") != std::string::npos);
}

TEST_CASE("train: exit codes, init checkpoint and resolved config") {
  TempDir tmp;
  make_small_dataset(tmp / "ds");

  const auto zero = cli(train_args(tmp / "ds", tmp / "init", {"--steps", "0", "--seed", "3"}));
  REQUIRE(zero.code == kExitOk);
  const auto c = Container::read(tmp.path / "init" / "checkpoint.ffc");
  CHECK(c.get_string("domain") == "spatial");
  MultiScaleField<float> fresh(MultiScaleField<float>::from_container(c).config(), 3);
  auto loaded = MultiScaleField<float>::from_container(c);
  CHECK(named_tensors(loaded.params())[0].values[0] ==
        named_tensors(fresh.params())[0].values[0]);

  CHECK(cli(train_args(tmp / "ds", tmp / "r1", {"--no-mask", "--no-lpf"})).code == kExitConfig);
  const auto missing = cli(train_args(tmp / "nope", tmp / "r2", {"--steps", "0"}));
  CHECK(missing.code == kExitConfig);
  CHECK(missing.err.find("not found") != std::string::npos);
  CHECK(cli(train_args(tmp / "ds", tmp / "r3", {"--mask-mode", "odd"})).code == kExitConfig);
  CHECK(cli(train_args(tmp / "ds", tmp / "r4", {"--steps", "5", "--warmup", "5"})).code ==
        kExitConfig);

  // Flags override the file; the file overrides defaults.
  std::ofstream(tmp.path / "cfg.txt") << "steps = 4\nwarmup = 2\nlr_masks = 0.5\n";
  const auto r = cli(train_args(tmp / "ds", tmp / "r5", {"--config", tmp / "cfg.txt",
                                                          "--steps", "3"}));
  REQUIRE(r.code == kExitOk);
  const auto resolved = parse_config_text(slurp(tmp.path / "r5" / "config.txt"));
  CHECK(resolved.at("steps") == "3");
  CHECK(resolved.at("lr_masks") == "0.5");
  CHECK(resolved.at("extent") == "8");
  CHECK(resolved.at("lr_decoder") == config_defaults().at("lr_decoder"));
  std::ifstream log(tmp.path / "r5" / "log.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 3);
}

TEST_CASE("train: a divergent run exits with the numeric code") {
  TempDir tmp;
  make_small_dataset(tmp / "ds");
  const auto r =
      cli(train_args(tmp / "ds", tmp / "run", {"--steps", "3", "--warmup", "1", "--lr-factors", "1e300"}));
  CHECK(r.code == kExitNumeric);
}

TEST_CASE("eval: report layout, averages and scale mismatch") {
  TempDir tmp;
  make_small_dataset(tmp / "ds");
  REQUIRE(cli(train_args(tmp / "ds", tmp / "run", {"--steps", "0"})).code == kExitOk);
  const auto r = cli({"eval", "--checkpoint", tmp / "run", "--data", tmp / "ds", "--out",
                      tmp / "ev", "--samples", "8"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(slurp(tmp.path / "ev" / "metrics.json"));
  REQUIRE(j["psnr"].size() == 5);
  double sum = 0;
  for (const char* k : {"1x", "1/2x", "1/4x", "1/8x"}) {
    CHECK(std::isfinite(j["psnr"][k].get<double>()));
    sum += j["psnr"][k].get<double>();
  }
  CHECK(std::abs(j["psnr"]["avg"].get<double>() - sum / 4) < 1e-9);
  CHECK(fs::exists(tmp.path / "ev" / "metrics.txt"));

  CHECK(cli(train_args(tmp / "ds", tmp / "bad", {"--steps", "0", "--scales", "3"})).code ==
        kExitConfig);
  REQUIRE(cli({"make-dataset", "--out", tmp / "ds3", "--full-res", "16", "--train-views", "2",
               "--test-views", "1", "--supersample", "1", "--scales", "3"})
              .code == kExitOk);
  REQUIRE(cli(train_args(tmp / "ds3", tmp / "run3", {"--steps", "0", "--scales", "3"})).code ==
          kExitOk);
  CHECK(cli({"eval", "--checkpoint", tmp / "run3", "--data", tmp / "ds", "--out", tmp / "ev3"})
            .code == kExitConfig);

  std::ofstream(tmp.path / "bad.ffc") << "not a checkpoint";
  const auto corrupt =
      cli({"eval", "--checkpoint", tmp / "bad.ffc", "--data", tmp / "ds", "--out", tmp / "ev4"});
  CHECK(corrupt.code == kExitConfig);
}

TEST_CASE("render writes one image per view and scale") {
  TempDir tmp;
  make_small_dataset(tmp / "ds");
  REQUIRE(cli(train_args(tmp / "ds", tmp / "run", {"--steps", "0"})).code == kExitOk);
  REQUIRE(cli({"render", "--checkpoint", tmp / "run", "--data", tmp / "ds", "--out", tmp / "rd",
               "--samples", "8"})
              .code == kExitOk);
  for (int k = 0; k < 4; ++k) {
    const auto img = read_png(tmp.path / "rd" / ("view_001_scale_" + std::to_string(k) + ".png"));
    CHECK(img.width == 16u >> k);
  }
}

TEST_CASE("inspect: file names, counts and untrained masks") {
  TempDir tmp;
  make_small_dataset(tmp / "ds");
  REQUIRE(cli(train_args(tmp / "ds", tmp / "run",
                         {"--steps", "4", "--warmup", "2", "--no-mask"}))
              .code == kExitOk);
  const auto r = cli({"inspect", "--checkpoint", tmp / "run", "--out", tmp / "in"});
  REQUIRE(r.code == kExitOk);
  for (const char* kind : {"density", "appearance"})
    for (int p = 0; p < 3; ++p) {
      std::size_t masks = 0;
      for (int k = 0; k < 4; ++k) {
        const std::string suffix = std::string(kind) + "_plane" + std::to_string(p) + "_scale" +
                                   std::to_string(k) + ".png";
        CHECK(fs::exists(tmp.path / "in" / ("feature_" + suffix)));
        const auto mask = tmp.path / "in" / ("mask_" + suffix);
        if (!fs::exists(mask)) continue;
        ++masks;
        const auto img = read_png(mask);
        double mean = 0, sq = 0;
        for (double v : img.data) mean += v;
        mean /= img.data.size();
        for (double v : img.data) sq += (v - mean) * (v - mean);
        CHECK(std::sqrt(sq / img.data.size()) < 1e-3);
      }
      CHECK(masks == 4);
    }
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp.path / "in")) ++files;
  CHECK(files == 2 * 2 * 3 * 4);
}

TEST_CASE("ablate rejects two flags") {
  TempDir tmp;
  make_small_dataset(tmp / "ds");
  auto args = train_args(tmp / "ds", tmp / "ab", {"--no-lpf", "--shared-lpf"});
  args[0] = "ablate";
  CHECK(cli(args).code == kExitConfig);
  args = train_args(tmp / "ds", tmp / "ab2", {"--steps", "2", "--warmup", "1", "--shared-lpf"});
  args[0] = "ablate";
  const auto r = cli(args);
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("shared_lpf") != std::string::npos);
}
