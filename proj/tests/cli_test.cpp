// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "model_oracle.hpp"
#include "run_config.hpp"
#include "shufflenas/analysis.hpp"

using namespace shufflenas;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "shufflenas");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("shufflenas_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small synthetic run settings.
  std::vector<std::string> tiny(std::vector<std::string> extra) const {
    std::vector<std::string> a{"--synthetic", "--B", "3", "--N", "1", "--filters", "8", "--batch-size", "32",
                               "--synthetic-train", "64", "--synthetic-val", "64", "--synthetic-test", "64"};
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  }

  std::vector<std::string> cmd(const std::string& name, std::vector<std::string> extra) const {
    auto a = tiny(std::move(extra));
    a.insert(a.begin(), name);
    return a;
  }

  std::string write_genotype(const std::string& text) const {
    const auto p = path("g.txt");
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir_;
};

const char* kGenotype = "normal: 0 SEP3 | 0 CONV1 | 1 IDENTITY\nreduction: 0 SEP5 | 0 MAXPOOL3 | 1 SEP3\n";

}  // namespace

TEST_F(Cli, SearchSmokeWritesRunDirectory) {
  const auto r = run(cmd("search", {"--epochs", "10", "--seed", "1", "--derive-samples", "4", "--derive-batches",
                                    "1", "--out-dir", path("run")}));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"config.txt", "history.csv", "genotype.txt", "checkpoint.bin"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  const auto history = read(dir_ / "run" / "history.csv");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 11);
  EXPECT_NO_THROW(load_genotype(dir_ / "run" / "genotype.txt"));
}

TEST_F(Cli, SameSeedGivesIdenticalHistory) {
  for (const char* name : {"a", "b"})
    ASSERT_EQ(run(cmd("search", {"--f64", "--epochs", "3", "--seed", "4", "--derive-samples", "2",
                                 "--derive-batches", "1", "--out-dir", path(name)}))
                  .code,
              0);
  EXPECT_EQ(read(dir_ / "a" / "history.csv"), read(dir_ / "b" / "history.csv"));
  EXPECT_EQ(read(dir_ / "a" / "genotype.txt"), read(dir_ / "b" / "genotype.txt"));
}

TEST_F(Cli, ResumedSearchMatchesUninterrupted) {
  const auto base = [&](const std::string& out, const std::string& epochs) {
    return cmd("search", {"--f64", "--seed", "2", "--derive-samples", "2", "--derive-batches", "1", "--epochs", epochs,
                          "--out-dir", path(out), "--resume"});
  };
  ASSERT_EQ(run(base("straight", "4")).code, 0);
  ASSERT_EQ(run(base("split", "2")).code, 0);
  const auto r = run(base("split", "4"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resumed at epoch 2"), std::string::npos);
  EXPECT_EQ(read(dir_ / "straight" / "history.csv"), read(dir_ / "split" / "history.csv"));
}

TEST_F(Cli, MissingDataDirIsUsageError) {
  const auto r = run({"search", "--B", "3", "--data-dir", "", "--out-dir", path("run")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--data-dir"), std::string::npos) << r.err;
  const auto r2 = run({"search", "--data-dir", path("nowhere"), "--out-dir", path("run")});
  EXPECT_EQ(r2.code, 2);
  EXPECT_NE(r2.err.find("--data-dir"), std::string::npos) << r2.err;
  EXPECT_FALSE(fs::exists(dir_ / "run"));
}

TEST_F(Cli, MalformedGenotypeIsUsageError) {
  const auto g = write_genotype("normal: 0 SEP3 | 4 CONV1 | 0 SEP5\nreduction: 0 SEP3 | 0 SEP3 | 0 SEP3\n");
  const auto r = run(cmd("train", {"--genotype", g, "--epochs", "1", "--out-dir", path("run")}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
  EXPECT_EQ(run(cmd("train", {"--epochs", "1", "--out-dir", path("run")})).code, 2);  // no --genotype
}

TEST_F(Cli, BadFlagsAreUsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"search", "--B", "0", "--synthetic"}).code, 2);
  EXPECT_EQ(run({"search", "--merge", "product", "--synthetic"}).code, 2);
  EXPECT_EQ(run({"search", "--epochs", "631", "--synthetic"}).code, 2);
  EXPECT_EQ(run({"search", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, TrainThenEvalIsDeterministic) {
  const auto g = write_genotype(kGenotype);
  const auto t = run(cmd("train", {"--genotype", g, "--epochs", "2", "--cutout", "--out-dir", path("run")}));
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("final_test_error"), std::string::npos);
  const auto history = read(dir_ / "run" / "history.csv");
  EXPECT_EQ(history.substr(0, history.find('\n')), "epoch,train_loss,train_error,val_error,test_error,lr");
  EXPECT_EQ(cli::RunConfig::parse(read(dir_ / "run" / "config.txt")).cutout, true);

  const auto e1 = run({"eval", "--config", path("run/config.txt")});
  const auto e2 = run({"eval", "--config", path("run/config.txt")});
  ASSERT_EQ(e1.code, 0) << e1.err;
  EXPECT_EQ(e1.out, e2.out);
  EXPECT_NE(e1.out.find("test_error"), std::string::npos);

  // A model with different width does not match the checkpoint.
  EXPECT_EQ(run({"eval", "--config", path("run/config.txt"), "--filters", "16"}).code, 2);
}

TEST_F(Cli, CorruptCheckpointIsRuntimeFailure) {
  fs::create_directories(dir_ / "run");
  std::ofstream(path("run/checkpoint.bin")) << "not a checkpoint";
  const auto r = run(cmd("eval", {"--checkpoint", path("run/checkpoint.bin")}));
  EXPECT_EQ(r.code, 1) << r.err;
}

TEST_F(Cli, ConfigFileReproducesFlags) {
  const auto g = write_genotype(kGenotype);
  ASSERT_EQ(run(cmd("train", {"--genotype", g, "--epochs", "1", "--cell-bn", "--drop-path-keep", "0.5", "--merge",
                              "concat_1x1", "--seed", "9", "--out-dir", path("first")}))
                .code,
            0);
  const auto first = cli::RunConfig::parse(read(dir_ / "first" / "config.txt"));
  EXPECT_TRUE(first.cell_bn);
  EXPECT_EQ(first.drop_path_keep, 0.5);
  EXPECT_EQ(first.model_config(10).keep_prob(), 0.5);
  EXPECT_EQ(first.merge, "concat_1x1");

  ASSERT_EQ(run({"train", "--config", path("first/config.txt"), "--out-dir", path("second")}).code, 0);
  auto second = cli::RunConfig::parse(read(dir_ / "second" / "config.txt"));
  second.out_dir = first.out_dir;
  EXPECT_EQ(second.to_text(), first.to_text());
  EXPECT_EQ(read(dir_ / "first" / "history.csv"), read(dir_ / "second" / "history.csv"));
}

TEST(RunConfig, TextRoundTripAndErrors) {
  cli::RunConfig c;
  c.blocks = 4;
  c.lr_max = 0.1 + 0.2;
  c.drop_path_keep = 0.75;
  c.data_dir = "/data/cifar";
  c.seed = 18446744073709551615ULL;
  EXPECT_EQ(cli::RunConfig::parse(c.to_text()).to_text(), c.to_text());
  EXPECT_EQ(cli::RunConfig::parse(c.to_text()).lr_max, 0.1 + 0.2);
  EXPECT_THROW(cli::RunConfig::parse("nonsense = 1\n"), ConfigError);
  EXPECT_THROW(cli::RunConfig::parse("blocks = five\n"), ConfigError);
  EXPECT_THROW(cli::RunConfig::parse("blocks\n"), ConfigError);
  EXPECT_EQ(cli::RunConfig::parse("# comment\n\nblocks = 2  # trailing\n").blocks, 2);
  cli::RunConfig d;
  d.cell_bn = true;
  d.resolve();
  EXPECT_EQ(d.drop_path_keep, 0.5);
}

TEST_F(Cli, AnalyzePrintsExactParamsAndStableDot) {
  const auto g = write_genotype("normal: 0 SEP3 | 1 CONV1 | 0 SEP5 | 2 IDENTITY\n"
                                "reduction: 0 SEP5 | 0 MAXPOOL3 | 1 SEP3 | 3 MINPOOL3\n");
  const auto a = run({"analyze", "--genotype", g, "--B", "4", "--filters", "36", "--N", "4", "--dot"});
  ASSERT_EQ(a.code, 0) << a.err;
  ModelConfig mc;
  mc.blocks = 4;
  mc.filters = 36;
  mc.repeats = 4;
  const Genotype geno = load_genotype(g);
  EXPECT_EQ(a.out.rfind("params " + std::to_string(shufflenas::testing::model_params_oracle(mc, &geno)) + "\n", 0), 0u) << a.out;
  EXPECT_NE(a.out.find("digraph genotype"), std::string::npos);
  EXPECT_EQ(run({"analyze", "--genotype", g, "--B", "4", "--filters", "36", "--N", "4", "--dot"}).out, a.out);
  EXPECT_EQ(run({"analyze", "--genotype", g, "--B", "3"}).code, 2);  // block count mismatch
}

TEST_F(Cli, BenchEmitsOneRowPerBatchSize) {
  const auto r = run({"bench", "--B", "3", "--N", "1", "--filters", "8", "--batch", "1,2,4", "--iters", "2",
                      "--warmup", "0", "--no-enas", "--out-dir", path("bench")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 4);
  EXPECT_EQ(read(dir_ / "bench" / "bench.csv"), r.out);
  EXPECT_TRUE(fs::exists(dir_ / "bench" / "bench_config.txt"));
  EXPECT_EQ(run({"bench", "--batch", "1,x"}).code, 2);
  EXPECT_EQ(run({"bench", "--iters", "0"}).code, 2);
}

TEST_F(Cli, GenotypeCommandIsSeededAndValidates) {
  const auto a = run({"genotype", "--B", "5", "--seed", "3"});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, run({"genotype", "--B", "5", "--seed", "3"}).out);
  EXPECT_EQ(decode(a.out).blocks(), 5);
  const auto g = write_genotype("# comment\nreduction: 0 SEP3\nnormal:0 CONV1\n");
  const auto c = run({"genotype", "--B", "1", "--genotype", g});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(c.out, "normal: 0 CONV1\nreduction: 0 SEP3\n");
}

TEST(ShippedGenotypes, LoadAsFiveBlockCells) {
  for (const char* name : {"shufflenasnet_a.txt", "shufflenasnet_b.txt"}) {
    const fs::path p = fs::path(SHUFFLENAS_SOURCE_DIR) / "data" / "genotypes" / name;
    EXPECT_EQ(load_genotype(p).blocks(), 5) << name;
  }
}
