#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <sstream>

#include "artist/cli/app.hpp"
#include "support.hpp"

using namespace artist;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result artist_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "artist");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("artist_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  /// Runs a command into <root>/<tag>/run and returns that run directory.
  fs::path run_into(const std::string& tag, std::vector<std::string> args, int expect = 0) {
    args.insert(args.end(), {"--output-dir", (root_ / tag).string(), "--run-id", "run"});
    const Result r = artist_cli(args);
    EXPECT_EQ(r.code, expect) << r.err;
    return root_ / tag / "run";
  }

  static std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
    return files;
  }

  static nlohmann::json json_file(const fs::path& p) { return nlohmann::json::parse(io::read_file(p)); }

  fs::path root_;
};

}  // namespace

TEST(CliUsage, HelpOnEveryCommand) {
  EXPECT_EQ(artist_cli({"--help"}).code, 0);
  for (const std::string cmd : {"invert", "stylize", "analyze", "evaluate", "ablate"}) {
    const Result r = artist_cli({cmd, "--help"});
    EXPECT_EQ(r.code, 0) << cmd;
    for (const auto& f : cli::config_flags()) EXPECT_NE(r.out.find(cli::kebab(f.key)), std::string::npos) << cmd << " " << f.key;
    EXPECT_NE(r.out.find("--config"), std::string::npos);
  }
  EXPECT_NE(artist_cli({"analyze", "--help"}).out.find("--theoretical-only"), std::string::npos);
  EXPECT_NE(artist_cli({"evaluate", "--help"}).out.find("--input-dir"), std::string::npos);
  EXPECT_NE(artist_cli({"ablate", "--help"}).out.find("--axis"), std::string::npos);
}

TEST(CliUsage, UsageErrorsExitOne) {
  EXPECT_EQ(artist_cli({}).code, 1);
  EXPECT_EQ(artist_cli({"stylize", "--no-such-flag", "1"}).code, 1);
  EXPECT_EQ(artist_cli({"stylize", "--steps", "many"}).code, 1);
  EXPECT_EQ(artist_cli({"stylize", "--content-layers", "4-x"}).code, 1);
  EXPECT_EQ(artist_cli({"ablate", "--axis", "tau"}).code, 1);
  EXPECT_EQ(artist_cli({"stylize", "--config", "/nonexistent/config.json"}).code, 1);
}

TEST(CliConfig, LayerParsing) {
  EXPECT_EQ(cli::parse_layers("4-7"), (LayerSet{4, 5, 6, 7}));
  EXPECT_EQ(cli::parse_layers("4,5"), (LayerSet{4, 5}));
  EXPECT_EQ(cli::parse_layers("1,3-4"), (LayerSet{1, 3, 4}));
  EXPECT_EQ(cli::parse_layers(""), LayerSet{});
  EXPECT_EQ(cli::parse_layers("none"), LayerSet{});
  EXPECT_EQ(cli::format_layers({4, 5, 6}), "4,5,6");
  EXPECT_THROW(cli::parse_layers("7-4"), Error);
}

TEST(CliConfig, DefaultsAndRoundTrip) {
  const cli::RunConfig c;
  EXPECT_EQ(c.steps, 50);
  EXPECT_EQ(c.guidance, 7.5);
  EXPECT_EQ(c.plan, InjectionPlan{});
  const cli::RunConfig back = cli::from_json(cli::to_json(c));
  EXPECT_EQ(cli::to_json(back), cli::to_json(c));
  EXPECT_EQ(cli::config_hash(back), cli::config_hash(c));
  cli::RunConfig moved = c;
  moved.output_dir = "elsewhere";
  moved.run_id = "x";
  EXPECT_EQ(cli::config_hash(moved), cli::config_hash(c));
  moved.seed = 1;
  EXPECT_NE(cli::config_hash(moved), cli::config_hash(c));
}

TEST(CliConfig, MergeRejectsUnknownKeys) {
  nlohmann::json base = cli::default_config_json();
  EXPECT_THROW(cli::merge_config(base, {{"run", {{"stepz", 3}}}}), Error);
  EXPECT_THROW(cli::merge_config(base, {{"extras", {}}}), Error);
  cli::merge_config(base, {{"run", {{"steps", 3}}}});
  EXPECT_EQ(base["run"]["steps"], 3);
}

TEST_F(CliTest, ThreeLayerPrecedence) {
  const fs::path cfg = root_ / "config.json";
  io::write_file(cfg, R"({"run": {"steps": 4, "guidance": 3.0, "style_prompt": "from file", "seed": 9},
                          "plan": {"style_layers": "10-12"}})");
  const fs::path dir = run_into("p", {"stylize", "--config", cfg.string(), "--toy-image", "1", "--guidance", "5",
                                      "--seed", "2"});
  const auto m = json_file(dir / "manifest.json");
  const auto& run = m["config"]["run"];
  EXPECT_EQ(run["guidance"], 5.0);
  EXPECT_EQ(run["seed"], 2);
  EXPECT_EQ(run["steps"], 4);
  EXPECT_EQ(run["style_prompt"], "from file");
  EXPECT_EQ(m["config"]["plan"]["style_layers"], nlohmann::json({10, 11, 12}));
  EXPECT_EQ(run["schedule"], "scaled-linear");
  EXPECT_EQ(m["config"]["plan"]["content_layers"], nlohmann::json({4, 5, 6, 7}));
  EXPECT_FALSE(run.contains("output_dir"));
  EXPECT_EQ(m["summary"]["denoise_calls"], 4 * 5);
}

TEST_F(CliTest, UnknownConfigKeyIsUsageError) {
  const fs::path cfg = root_ / "bad.json";
  io::write_file(cfg, R"({"run": {"guidence": 3.0}})");
  const Result r = artist_cli({"stylize", "--config", cfg.string(), "--toy-image", "0"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("guidence"), std::string::npos);
}

TEST_F(CliTest, InvertIsDeterministicAndFast) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path a = run_into("a", {"invert", "--toy-image", "0"});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 10.0);
  const fs::path b = run_into("b", {"invert", "--toy-image", "0"});
  EXPECT_EQ(tree(a), tree(b));
  const InversionRecord rec = load_record(a / "result.artinv");
  EXPECT_EQ(rec.steps(), 50);
  EXPECT_NEAR(checksum(rec.latents.back()), 1267.0005942483647, 1e-8);
  EXPECT_LT(json_file(a / "manifest.json")["summary"]["replay_max_abs_error"].get<double>(), 1e-4);
}

TEST_F(CliTest, MissingInputIsRuntimeError) {
  const Result r = artist_cli({"invert", "--input", (root_ / "nope.png").string(), "--output-dir", root_.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error: io"), std::string::npos);
  EXPECT_EQ(artist_cli({"invert", "--output-dir", root_.string()}).code, 1);
}

TEST_F(CliTest, InputFormats) {
  const Tensor latent = artist::testing::toy_latent(0);
  io::write_npy(root_ / "x.npy", latent);
  io::write_image(root_ / "x.png", make_toy_image(0));
  const fs::path from_npy = run_into("npy", {"invert", "--input", (root_ / "x.npy").string(), "--steps", "5"});
  const fs::path from_png = run_into("png", {"invert", "--input", (root_ / "x.png").string(), "--steps", "5"});
  EXPECT_EQ(load_record(from_npy / "result.artinv").latents[0].values(), latent.values());
  // PNG goes through 8-bit quantization first
  EXPECT_LT(max_abs_diff(load_record(from_png / "result.artinv").latents[0], latent), 1.0 / 255.0);
}

TEST_F(CliTest, StylizeDefaultMatchesGoldenAndRepeats) {
  const std::vector<std::string> args{"stylize", "--toy-image", "0", "--style-prompt", "an oil painting"};
  const fs::path a = run_into("a", args);
  const fs::path b = run_into("b", args);
  EXPECT_EQ(tree(a), tree(b));
  const Tensor out = io::read_npy(a / "result.npy");
  EXPECT_NEAR(checksum(out), 1587.7355487594648, 1e-7);
  const auto m = json_file(a / "manifest.json");
  for (const std::string f : {"record.artinv", "result.npy", "result.ppm", "diagnostics.log"})
    EXPECT_EQ(m["artifacts"][f], io::sha256_hex(io::read_file(a / f))) << f;
  EXPECT_EQ(m["summary"]["denoise_calls"], 250);
}

TEST_F(CliTest, ReusesRecordFile) {
  const fs::path inv = run_into("inv", {"invert", "--toy-image", "3", "--steps", "6"});
  const fs::path a = run_into("a", {"stylize", "--record", (inv / "result.artinv").string(), "--steps", "6",
                                    "--style-prompt", "pixel art"});
  const fs::path b = run_into("b", {"stylize", "--toy-image", "3", "--steps", "6", "--style-prompt", "pixel art"});
  EXPECT_EQ(io::read_file(a / "result.npy"), io::read_file(b / "result.npy"));
  EXPECT_FALSE(fs::exists(a / "record.artinv"));
  const Result wrong = artist_cli({"stylize", "--record", (inv / "result.artinv").string(), "--output-dir", root_.string()});
  EXPECT_EQ(wrong.code, 2);
}

TEST_F(CliTest, InertDelegationsGivePlainSampling) {
  const fs::path dir = run_into("d", {"stylize", "--toy-image", "2", "--steps", "10", "--style-prompt", "a pencil sketch",
                                      "--content-layers", "", "--style-layers", "", "--c2s-layers", ""});
  const auto be = make_toy_backend(0);
  const auto s = make_schedule(ScheduleKind::scaled_linear, 10);
  const InversionRecord rec = load_record(dir / "record.artinv");
  const Tensor plain = sample_ddim(rec.latents.back(), 10, "a pencil sketch", 7.5, s, *be);
  EXPECT_EQ(io::read_npy(dir / "result.npy").values(), plain.values());
  EXPECT_EQ(json_file(dir / "manifest.json")["summary"]["denoise_calls"], 20);
}

TEST_F(CliTest, TauZeroGivesReconstruction) {
  const fs::path dir = run_into("t", {"stylize", "--toy-image", "2", "--tau", "0", "--style-prompt", "pixel art"});
  EXPECT_EQ(io::read_npy(dir / "result.npy").values(), artist::testing::toy_latent(2).values());
  EXPECT_EQ(json_file(dir / "manifest.json")["summary"]["denoise_calls"], 0);
}

TEST_F(CliTest, SnapshotsWritten) {
  const fs::path dir = run_into("s", {"stylize", "--toy-image", "2", "--steps", "4", "--snapshot-stride", "2",
                                      "--style-prompt", "pixel art"});
  const io::Container c = io::parse_container(io::read_file(dir / "snapshots.artinv"));
  EXPECT_EQ(c.metadata["index"].size(), 6u);
  EXPECT_EQ(c.metadata["count"], 6);
}

TEST_F(CliTest, AnalyzeTheoreticalOnlyMakesNoCalls) {
  const fs::path dir = run_into("a", {"analyze", "--theoretical-only"});
  const auto summary = json_file(dir / "summary.json");
  EXPECT_EQ(summary["backend_calls"], 0);
  EXPECT_GT(summary["theoretical"]["style"]["exponent"].get<double>(),
            summary["theoretical"]["content"]["exponent"].get<double>());
  const std::string csv = io::read_file(dir / "curves.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "tau,S,C,empirical_content,empirical_style,seed");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 52);
  EXPECT_TRUE(fs::exists(root_ / "a" / "run" / "manifest.json"));
}

TEST_F(CliTest, AnalyzeSelfTest) {
  const Result r = artist_cli({"analyze", "--self-test"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("identity exponent 1 "), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("square exponent 2 "), std::string::npos) << r.out;
}

TEST_F(CliTest, AnalyzeEmpiricalIsDeterministicAcrossWorkerCounts) {
  const std::vector<std::string> args{"analyze", "--steps", "10", "--sweep-seeds", "3", "--style-prompt", "pixel art"};
  auto with_workers = args;
  with_workers.insert(with_workers.end(), {"--workers", "2"});
  const fs::path a = run_into("a", args);
  const fs::path b = run_into("b", args);
  const fs::path c = run_into("c", with_workers);
  EXPECT_EQ(tree(a), tree(b));
  EXPECT_EQ(io::read_file(a / "curves.csv"), io::read_file(c / "curves.csv"));
  const auto summary = json_file(a / "summary.json");
  EXPECT_GT(summary["backend_calls"].get<int>(), 0);
  EXPECT_TRUE(summary["empirical"].contains("exponent_gap"));
  const std::string csv = io::read_file(a / "curves.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 10);
  EXPECT_EQ(artist_cli({"analyze", "--steps", "10", "--output-dir", root_.string()}).code, 1);
}

class CliEvaluateTest : public CliTest {
 protected:
  /// content/, stylized/ and prompts.json for n images x the given prompts.
  fs::path make_corpus(const std::string& name, int n, const std::vector<std::string>& prompts) {
    const fs::path dir = root_ / name;
    fs::create_directories(dir / "content");
    fs::create_directories(dir / "stylized");
    nlohmann::json items = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
      const std::string c = "c" + std::to_string(i) + ".png";
      io::write_image(dir / "content" / c, make_toy_image(std::uint64_t(i), 64, 64));
      for (std::size_t p = 0; p < prompts.size(); ++p) {
        const std::string s = "s" + std::to_string(i) + "_" + std::to_string(p) + ".ppm";
        io::write_image(dir / "stylized" / s, make_toy_image(std::uint64_t(1000 + 10 * i + int(p)), 64, 64));
        items.push_back({{"id", "c" + std::to_string(i)}, {"content", c}, {"stylized", s}, {"style_prompt", prompts[p]}});
      }
    }
    io::write_file(dir / "prompts.json", items.dump(1));
    return dir;
  }
};

TEST_F(CliEvaluateTest, OfflineDeskCorpusIsDeterministicAndFast) {
  const fs::path corpus = make_corpus("corpus", 16, {"an oil painting", "a pencil sketch", "pixel art", "a cubist painting"});
  const auto start = std::chrono::steady_clock::now();
  const fs::path a = run_into("a", {"evaluate", "--input-dir", corpus.string()});
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 30.0);
  const fs::path b = run_into("b", {"evaluate", "--input-dir", corpus.string()});
  EXPECT_EQ(tree(a), tree(b));
  const fs::path c = run_into("c", {"evaluate", "--input-dir", corpus.string(), "--workers", "3"});
  EXPECT_EQ(io::read_file(a / "report.json"), io::read_file(c / "report.json"));
  EXPECT_EQ(io::read_file(a / "report.csv"), io::read_file(c / "report.csv"));
  const auto report = json_file(a / "report.json");
  EXPECT_EQ(report["items"].size(), 64u);
  EXPECT_EQ(report["aggregates"]["succeeded"], 64);
  EXPECT_EQ(report["provenance"]["mode"], "offline");
  EXPECT_EQ(report["provenance"]["judge"]["kind"], "stub");
}

TEST_F(CliEvaluateTest, CacheDirFromEnvironment) {
  const fs::path corpus = make_corpus("corpus", 2, {"pixel art"});
  ::setenv("ARTIST_CACHE_DIR", (root_ / "cache").string().c_str(), 1);
  const fs::path a = run_into("a", {"evaluate", "--input-dir", corpus.string()});
  ::unsetenv("ARTIST_CACHE_DIR");
  const std::string log = io::read_file(root_ / "cache" / "judge_cache.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 6);
  const fs::path b = run_into("b", {"evaluate", "--input-dir", corpus.string(), "--cache-dir", (root_ / "cache").string()});
  EXPECT_EQ(io::read_file(a / "report.json"), io::read_file(b / "report.json"));
}

TEST_F(CliEvaluateTest, EmptyInputIsAnError) {
  fs::create_directories(root_ / "empty" / "content");
  fs::create_directories(root_ / "empty" / "stylized");
  io::write_file(root_ / "empty" / "prompts.json", "[]");
  EXPECT_EQ(artist_cli({"evaluate", "--input-dir", (root_ / "empty").string(), "--output-dir", root_.string()}).code, 2);
  EXPECT_EQ(artist_cli({"evaluate", "--input-dir", (root_ / "missing").string(), "--output-dir", root_.string()}).code, 2);
  EXPECT_EQ(artist_cli({"evaluate", "--output-dir", root_.string()}).code, 1);
}

TEST_F(CliEvaluateTest, UnpairedItemsAreSkippedWithPartialExit) {
  const fs::path corpus = make_corpus("corpus", 2, {"pixel art"});
  io::write_image(corpus / "stylized" / "orphan.ppm", make_toy_image(5, 64, 64));
  auto items = json_file(corpus / "prompts.json");
  items.push_back({{"content", "gone.png"}, {"stylized", "s0_0.ppm"}, {"style_prompt", "pixel art"}});
  io::write_file(corpus / "prompts.json", items.dump());
  const Result r = artist_cli({"evaluate", "--input-dir", corpus.string(), "--output-dir", (root_ / "o").string(),
                               "--run-id", "run"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("orphan.ppm"), std::string::npos);
  EXPECT_NE(r.err.find("gone.png"), std::string::npos);
  EXPECT_EQ(json_file(root_ / "o" / "run" / "report.json")["items"].size(), 2u);
}

TEST_F(CliTest, AblateGuidanceZeroIsUnconditional) {
  const fs::path dir = run_into("g", {"ablate", "--axis", "guidance", "--values", "0", "--toy-image", "1", "--steps", "8",
                                      "--style-prompt", "pixel art"});
  const fs::path ref = run_into("r", {"stylize", "--toy-image", "1", "--steps", "8", "--style-prompt", "", "--guidance", "1"});
  EXPECT_EQ(io::read_file(dir / "0_guidance_scale=0" / "result.npy"), io::read_file(ref / "result.npy"));
  const auto m = json_file(dir / "manifest.json");
  EXPECT_EQ(m["summary"]["runs"].size(), 1u);
}

TEST_F(CliTest, AblateContentKindGivesDistinctRuns) {
  const fs::path dir = run_into("k", {"ablate", "--axis", "content_kind", "--values", "resnet_hidden", "--values",
                                      "resnet_output", "--toy-image", "1", "--steps", "8", "--style-prompt", "pixel art"});
  const auto runs = json_file(dir / "manifest.json")["summary"]["runs"];
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_NE(runs[0]["latent_checksum"], runs[1]["latent_checksum"]);
  EXPECT_TRUE(fs::exists(dir / "1_content_kind=resnet_output" / "result.ppm"));
}

TEST_F(CliTest, AblateStyleInitPair) {
  const fs::path dir = run_into("s", {"ablate", "--axis", "style_init", "--values", "random_noise", "--values",
                                      "inverted_at_tau", "--tau", "5", "--toy-image", "1", "--steps", "8",
                                      "--style-prompt", "pixel art"});
  const auto runs = json_file(dir / "manifest.json")["summary"]["runs"];
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[0]["denoise_calls"], 25);
  EXPECT_NE(runs[0]["latent_checksum"], runs[1]["latent_checksum"]);
  const fs::path ref = run_into("r", {"stylize", "--style-init", "inverted_at_tau", "--tau", "5", "--toy-image", "1",
                                      "--steps", "8", "--style-prompt", "pixel art"});
  EXPECT_EQ(io::read_file(dir / "1_style_init=inverted_at_tau" / "result.npy"), io::read_file(ref / "result.npy"));
}

TEST_F(CliTest, AblateRejectsBadValues) {
  EXPECT_EQ(artist_cli({"ablate", "--axis", "tau", "--values", "abc", "--toy-image", "0", "--output-dir", root_.string()}).code, 1);
  EXPECT_EQ(artist_cli({"ablate", "--axis", "warp", "--values", "1", "--toy-image", "0", "--output-dir", root_.string()}).code, 1);
}

TEST_F(CliTest, UnknownBackendIsRuntimeError) {
  const Result r = artist_cli({"stylize", "--backend", "sd15", "--toy-image", "0", "--output-dir", root_.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("unavailable"), std::string::npos);
}
