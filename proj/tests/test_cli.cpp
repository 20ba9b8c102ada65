#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "kspdiff/cli.hpp"
#include "kspdiff/manifest.hpp"
#include "kspdiff/tensor_io.hpp"

namespace {

namespace fs = std::filesystem;
using namespace kspdiff;
using nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / (std::string("kspdiff_cli_") + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }
  fs::path p(const std::string& rel) const { return root_ / rel; }

  // 8 slices, 32x32, 4 coils
  void small_dataset(const std::string& name = "data", std::uint64_t seed = 3) {
    ASSERT_EQ(run({"phantom", "--n", "8", "--size", "32", "--ellipses", "6", "--seed", std::to_string(seed), "--out",
                   p(name).string()}),
              0)
        << err_.str();
  }

  fs::path root_;
  std::ostringstream out_, err_;
};

TEST_F(Cli, PhantomWritesManifestAndSlices) {
  small_dataset();
  const auto m = DatasetManifest::load(p("data") / kManifestName);
  EXPECT_EQ(m.slices.size(), 8u);
  EXPECT_EQ(m.phantom.rows, 32u);
  EXPECT_NO_THROW(m.verify_files(p("data")));
  EXPECT_EQ(read_tensor(p("data") / m.sensitivities).shape(), (Shape{4, 32, 32}));
}

TEST_F(Cli, SameSeedIsByteIdentical) {
  small_dataset("a", 9);
  small_dataset("b", 9);
  const auto m = DatasetManifest::load(p("a") / kManifestName);
  EXPECT_EQ(slurp(p("a") / m.sensitivities), slurp(p("b") / m.sensitivities));
  for (const auto& s : m.slices) EXPECT_EQ(slurp(p("a") / s), slurp(p("b") / s)) << s;
  small_dataset("c", 10);
  EXPECT_NE(slurp(p("a") / m.slices[0]), slurp(p("c") / m.slices[0]));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run({"phantom", "--size", "8", "--out", p("x").string()}), cli::kExitUsage);
  EXPECT_EQ(run({}), cli::kExitUsage);
  EXPECT_EQ(run({"nonsense"}), cli::kExitUsage);
  EXPECT_EQ(run({"phantom", "--n", "abc"}), cli::kExitUsage);
  EXPECT_EQ(run({"--help"}), cli::kExitOk);
  small_dataset();
  for (const char* rho : {"0", "1", "1.5", "-0.2"})
    EXPECT_EQ(run({"train", "--data", p("data").string(), "--rho", rho, "--out", p("run").string()}), cli::kExitUsage)
        << rho;
  EXPECT_FALSE(fs::exists(p("run")));
}

TEST_F(Cli, ExistingOutputNeedsForce) {
  small_dataset();
  EXPECT_EQ(run({"phantom", "--n", "2", "--size", "32", "--out", p("data").string()}), cli::kExitUsage);
  EXPECT_NE(err_.str().find("--force"), std::string::npos);
  EXPECT_EQ(DatasetManifest::load(p("data") / kManifestName).slices.size(), 8u);
  EXPECT_EQ(run({"phantom", "--n", "2", "--size", "32", "--out", p("data").string(), "--force"}), 0);
  EXPECT_EQ(DatasetManifest::load(p("data") / kManifestName).slices.size(), 2u);
}

TEST_F(Cli, MissingDatasetIsRuntimeError) {
  EXPECT_EQ(run({"undersample", "--data", p("nowhere").string(), "--out", p("us").string()}), cli::kExitRuntime);
}

TEST_F(Cli, UndersampleWritesMasksAndKspace) {
  small_dataset();
  ASSERT_EQ(run({"undersample", "--data", p("data").string(), "--R", "4", "--cf", "0.125", "--seed", "1", "--out",
                 p("us").string()}),
            0)
      << err_.str();
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(p("us") / "masks")) {
    const auto m = mask_from_json(read_json(e.path()));
    EXPECT_EQ(m.width, 32u);
    EXPECT_EQ(m.center_count(), 4u);
    for (std::size_t c = m.center_lo; c < m.center_hi; ++c) EXPECT_TRUE(m[c]);
    const auto ks = read_tensor(p("us") / "kspace" / (e.path().stem().string() + ".cksp"));
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (!m[i % 32]) EXPECT_EQ(ks[i], cplx(0.0));
    ++n;
  }
  EXPECT_EQ(n, 8u);

  // deterministic per seed
  ASSERT_EQ(run({"undersample", "--data", p("data").string(), "--R", "4", "--cf", "0.125", "--seed", "1", "--out",
                 p("us2").string()}),
            0);
  EXPECT_EQ(slurp(p("us") / "kspace" / "slice_0003.cksp"), slurp(p("us2") / "kspace" / "slice_0003.cksp"));
  EXPECT_EQ(slurp(p("us") / "masks" / "slice_0003.json"), slurp(p("us2") / "masks" / "slice_0003.json"));
}

TEST_F(Cli, FullSamplingKeepsAllKspace) {
  small_dataset();
  ASSERT_EQ(run({"undersample", "--data", p("data").string(), "--R", "1", "--out", p("us").string()}), 0);
  const auto m = mask_from_json(read_json(p("us") / "masks" / "slice_0000.json"));
  EXPECT_EQ(m.count(), 32u);
  const auto ks = read_tensor(p("us") / "kspace" / "slice_0000.cksp");
  std::size_t nonzero = 0;
  for (auto v : ks.data()) nonzero += v != cplx(0.0);
  EXPECT_GT(nonzero, ks.size() / 2);
}

TEST_F(Cli, EvalOfTruthIsPerfect) {
  small_dataset();
  fs::create_directories(p("rec"));
  json names = json::array(), ids = json::array();
  for (int i = 0; i < 4; ++i) {
    const std::string n = "slice_000" + std::to_string(i);
    fs::copy_file(p("data") / "slices" / (n + ".cksp"), p("rec") / (n + ".cksp"));
    names.push_back(n);
    ids.push_back(i);
  }
  std::ofstream(p("rec") / "index.json")
      << json{{"method", "truth"}, {"dataset", p("data").string()}, {"slices", names}, {"ids", ids}}.dump();
  ASSERT_EQ(run({"eval", "--recons", p("rec").string(), "--n-boot", "200"}), 0) << err_.str();
  std::istringstream csv(slurp(p("rec") / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
    ASSERT_EQ(f.size(), 5u);
    EXPECT_EQ(f[1], "truth");
    EXPECT_EQ(std::stod(f[2]), 0.0);
    EXPECT_EQ(std::stod(f[4]), 1.0);
    ++rows;
  }
  EXPECT_EQ(rows, 4);
  EXPECT_TRUE(fs::exists(p("rec") / "metrics.json"));
}

TEST_F(Cli, StatsOnIdenticalReports) {
  const std::string body = "0,m,0.1,30,0.9\n1,m,0.2,28,0.8\n2,m,0.15,29,0.85\n3,m,0.12,31,0.88\n";
  std::vector<std::string> files;
  for (const char* m : {"a", "b", "c"}) {
    std::string rows = body;
    for (std::size_t pos; (pos = rows.find(",m,")) != std::string::npos;) rows.replace(pos, 3, std::string(",") + m + ",");
    std::ofstream(p(std::string(m) + ".csv")) << MetricReport::csv_header() << "\n" << rows;
    files.push_back(p(std::string(m) + ".csv").string());
  }
  std::vector<std::string> args{"stats", "--out", p("st").string(), "--reports"};
  args.insert(args.end(), files.begin(), files.end());
  ASSERT_EQ(run(args), 0) << err_.str();
  const json s = read_json(p("st") / "stats.json");
  for (const char* m : {"nmse", "psnr", "ssim"}) {
    EXPECT_DOUBLE_EQ(s[m]["anova"]["p"].get<double>(), 1.0) << m;
    ASSERT_EQ(s[m]["tukey"].size(), 3u);
    for (const auto& t : s[m]["tukey"]) EXPECT_DOUBLE_EQ(t["p"].get<double>(), 1.0) << m;
  }
}

TEST_F(Cli, StatsRejectsMismatchedSlices) {
  std::ofstream(p("a.csv")) << MetricReport::csv_header() << "\n0,a,.1,30,.9\n1,a,.2,28,.8\n2,a,.1,29,.8\n";
  std::ofstream(p("b.csv")) << MetricReport::csv_header() << "\n0,b,.1,30,.9\n1,b,.2,28,.8\n5,b,.1,29,.8\n";
  EXPECT_EQ(run({"stats", "--out", p("st").string(), "--reports", p("a.csv").string(), p("b.csv").string()}),
            cli::kExitRuntime);
  EXPECT_NE(err_.str().find("only in first [2]"), std::string::npos) << err_.str();
  EXPECT_NE(err_.str().find("only in second [5]"), std::string::npos) << err_.str();
}

TEST_F(Cli, ConfigFileAndFlagsResolve) {
  small_dataset();
  cli::RunConfig c;
  c.dataset = p("data").string();
  c.holdout = 2;
  c.train.rho = 0.3;
  c.train.max_steps = 2;
  c.train.batch_size = 2;
  c.train.denoiser.hidden_channels = 8;
  c.train.discriminator.channels = {4, 4, 4, 4};
  std::ofstream(p("cfg.json")) << c.to_json().dump(2);
  ASSERT_EQ(run({"train", "--config", p("cfg.json").string(), "--rho", "0.7", "--seed", "5", "--out",
                 p("run").string()}),
            0)
      << err_.str();
  const auto r = cli::RunConfig::from_json(read_json(p("run") / "config.json"));
  EXPECT_EQ(r.train.rho, 0.7);
  EXPECT_EQ(r.train.seed, 5u);
  EXPECT_EQ(r.holdout, 2u);
  EXPECT_EQ(r.train.denoiser.hidden_channels, 8u);
  EXPECT_EQ(r.to_json(), [&] {
    c.train.rho = 0.7;
    c.train.seed = 5;
    return c.to_json();
  }());

  std::ofstream(p("bad.json")) << R"({"train": {"batch_size": "four"}})";
  EXPECT_EQ(run({"train", "--config", p("bad.json").string(), "--data", p("data").string()}), cli::kExitUsage);
}

TEST_F(Cli, TrainResumeMatchesUninterrupted) {
  small_dataset();
  const std::vector<std::string> base{"train",     "--data",        p("data").string(), "--holdout", "2",
                                      "--batch-size", "2",          "--lambda",          "0.1",      "--seed",
                                      "4",         "--checkpoint-every", "2"};
  // tiny networks through a config file
  cli::RunConfig c;
  c.train.denoiser.hidden_channels = 8;
  c.train.denoiser.layers = 3;
  c.train.discriminator.channels = {4, 4, 4, 4};
  std::ofstream(p("cfg.json")) << c.to_json().dump();
  auto args = [&](const std::string& out, const std::string& steps) {
    auto a = base;
    a.insert(a.end(), {"--config", p("cfg.json").string(), "--out", p(out).string(), "--max-steps", steps});
    return a;
  };
  ASSERT_EQ(run(args("full", "6")), 0) << err_.str();
  ASSERT_EQ(run(args("part", "4")), 0) << err_.str();
  auto resumed = args("part", "6");
  resumed.push_back("--resume");
  ASSERT_EQ(run(resumed), 0) << err_.str();
  EXPECT_EQ(slurp(p("full") / "logs" / "metrics.csv"), slurp(p("part") / "logs" / "metrics.csv"));
  const fs::path a = p("full") / "checkpoints" / "last", b = p("part") / "checkpoints" / "last";
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a))) << e.path();
    ++files;
  }
  EXPECT_GE(files, 3u);
  // recon from the run, then eval
  ASSERT_EQ(run({"recon", "--run", p("full").string()}), 0) << err_.str();
  ASSERT_EQ(run({"eval", "--recons", (p("full") / "recons").string(), "--n-boot", "100"}), 0) << err_.str();
  EXPECT_EQ(read_json(p("full") / "recons" / "metrics.json")["slices"], json({6, 7}));

  EXPECT_EQ(run({"train", "--resume", "--data", p("data").string(), "--out", p("fresh").string()}), cli::kExitUsage);
}

TEST_F(Cli, ZeroFilledReconAndDefaultOutRoot) {
  small_dataset();
  ::setenv(cli::kOutRootEnv, p("root").string().c_str(), 1);
  ASSERT_EQ(run({"recon", "--method", "zero_filled", "--data", p("data").string(), "--R", "1", "--holdout", "3"}), 0)
      << err_.str();
  ::unsetenv(cli::kOutRootEnv);
  const fs::path rec = p("root") / "recon_zero_filled";
  ASSERT_TRUE(fs::exists(rec / "index.json"));
  ASSERT_EQ(run({"eval", "--recons", rec.string(), "--n-boot", "100"}), 0) << err_.str();
  const json m = read_json(rec / "metrics.json");
  // full sampling: zero filling is exact up to single-precision storage
  EXPECT_LT(m["zero_filled"]["nmse"]["mean"].get<double>(), 1e-10);
  EXPECT_EQ(m["slices"], json({5, 6, 7}));
}

}  // namespace
