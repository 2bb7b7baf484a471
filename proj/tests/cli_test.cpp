#include "rvae/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <map>
#include <sstream>

#include "temp_dir.hpp"

namespace rvae {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Every file in a directory (recursively) except resolved.cfg.
std::map<std::string, std::string> outputs(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "resolved.cfg") continue;
    files[fs::relative(e.path(), dir).string()] = testing::read_file(e.path());
  }
  return files;
}

const char* kTrainCfg = R"(seed = 5
[data]
n = 200
dim = 64
contamination = gaussian_noise
fraction = 0.1
[model]
hidden = 16
latent = 2
[loss]
divergence = beta
beta = 0.01
[train]
epochs = 2
batch_size = 32
checkpoint_every = 1
)";

class Cli : public ::testing::Test {
 protected:
  testing::TempDir dir;

  fs::path train_once(const std::string& name, std::vector<std::string> extra = {}) {
    testing::write_file(dir / "train.cfg", kTrainCfg);
    std::vector<std::string> args{"train", "-c", (dir / "train.cfg").string(), "-o",
                                  (dir / name).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = run(args);
    EXPECT_EQ(r.code, 0) << r.err;
    return dir / name;
  }

  // Runs a command, then reruns it from the echoed config into a fresh
  // directory and checks every output file is byte-identical.
  void expect_replayable(std::vector<std::string> args, const std::string& name) {
    args.insert(args.end(), {"-o", (dir / name).string()});
    const auto first = run(args);
    ASSERT_EQ(first.code, 0) << first.err;
    ASSERT_TRUE(fs::exists(dir / name / "resolved.cfg"));
    const auto replay = run({args[0], "-c", (dir / name / "resolved.cfg").string(), "-o",
                             (dir / (name + "_replay")).string()});
    ASSERT_EQ(replay.code, 0) << replay.err;
    const auto a = outputs(dir / name), b = outputs(dir / (name + "_replay"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b);
    auto ea = Config::load(dir / name / "resolved.cfg");
    auto eb = Config::load(dir / (name + "_replay") / "resolved.cfg");
    ea.erase("out");
    eb.erase("out");
    EXPECT_EQ(ea, eb);
  }
};

TEST_F(Cli, TrainWritesCheckpointsLogAndEcho) {
  const auto out = train_once("run");
  for (const char* f : {"model.ckpt", "model_epoch_1.ckpt", "model_epoch_2.ckpt",
                        "train_log.csv", "resolved.cfg"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto echo = Config::load(out / "resolved.cfg");
  EXPECT_EQ(echo.get("seed"), "5");
  EXPECT_EQ(echo.get("train.lr"), "0.001");
  EXPECT_EQ(echo.get("model.obs"), "bernoulli");
  EXPECT_EQ(echo.get("data.dim"), "64");
  const auto ck = load_checkpoint(out / "model.ckpt");
  EXPECT_EQ(ck.loss, LossSpec::robust(ObsModel::Bernoulli, 0.01));
  EXPECT_EQ(ck.params.arch.hidden_dim, 16u);
}

TEST_F(Cli, SameSeedSameCheckpoint) {
  const auto a = train_once("a", {"--seed", "7"});
  const auto b = train_once("b", {"--seed", "7"});
  const auto c = train_once("c", {"--seed", "8"});
  EXPECT_EQ(testing::read_file(a / "model.ckpt"), testing::read_file(b / "model.ckpt"));
  EXPECT_EQ(testing::read_file(a / "train_log.csv"), testing::read_file(b / "train_log.csv"));
  EXPECT_NE(testing::read_file(a / "model.ckpt"), testing::read_file(c / "model.ckpt"));
  EXPECT_EQ(Config::load(a / "resolved.cfg").get("seed"), "7");
}

TEST_F(Cli, TrainReplaysFromEcho) {
  testing::write_file(dir / "train.cfg", kTrainCfg);
  expect_replayable({"train", "-c", (dir / "train.cfg").string()}, "t");
}

TEST_F(Cli, EvalReplaysFromEcho) {
  const auto model = train_once("m");
  expect_replayable({"eval", "--set", "eval.checkpoint=" + (model / "model.ckpt").string(),
                     "--set", "test_data.n=100", "--set", "test_data.dim=64", "--set",
                     "test_data.contamination=gaussian_noise", "--set",
                     "test_data.fraction=0.2"},
                    "e");
  for (const char* f : {"errors.csv", "eval_summary.csv", "roc.csv", "latent.csv",
                        "recon_grid.pgm"}) {
    EXPECT_TRUE(fs::exists(dir / "e" / f)) << f;
  }
  EXPECT_EQ(testing::read_file(dir / "e" / "eval_summary.csv").rfind("records,outliers,ratio,auc\n100,20,", 0),
            0u);
}

TEST_F(Cli, SweepReplaysFromEcho) {
  testing::write_file(dir / "sweep.cfg", std::string(kTrainCfg) + R"(
[test_data]
n = 80
dim = 64
contamination = gaussian_noise
fraction = 0.1
[sweep]
betas = 0.01, 0.1
fractions = 0, 0.1
save_checkpoints = true
)");
  expect_replayable({"sweep", "-c", (dir / "sweep.cfg").string(), "--workers", "2"}, "s");
  EXPECT_TRUE(fs::exists(dir / "s" / "sweep.csv"));
  EXPECT_TRUE(fs::exists(dir / "s" / "cells" / "beta_0.1_fraction_0.1.ckpt"));
}

TEST_F(Cli, SelectBetaReplaysFromEcho) {
  const auto a = train_once("ma");
  expect_replayable({"select-beta", "--seed", "3", "--set",
                     "probe.checkpoints=" + (a / "model_epoch_1.ckpt").string() + "," +
                         (a / "model.ckpt").string(),
                     "--set", "probe.n_probe=4"},
                    "p");
  EXPECT_TRUE(fs::exists(dir / "p" / "probe_summary.csv"));
  EXPECT_TRUE(fs::exists(dir / "p" / "probe_beta_0.01.pgm"));
}

TEST_F(Cli, RobustfitReplaysFromEcho) {
  expect_replayable({"robustfit-demo", "--seed", "11", "--set", "robustfit.n=500"}, "r");
  const auto summary = testing::read_file(dir / "r" / "fit_demo.csv");
  EXPECT_EQ(summary.rfind("method,mu,sigma,beta\n", 0), 0u);
}

TEST_F(Cli, MakeDataRoundTripsThroughManifest) {
  expect_replayable({"make-data", "--set", "data.n=60", "--set", "data.dim=49", "--set",
                     "data.contamination=gaussian_noise", "--set", "data.fraction=0.1",
                     "--set", "make_data.prefix=toy"},
                    "d");
  const auto manifest = DatasetManifest::load(dir / "d" / "toy.manifest");
  const auto ds = build_dataset(manifest);
  EXPECT_EQ(ds.rows, 60u);
  EXPECT_EQ(ds.dim, 49u);
  EXPECT_EQ(ds.outlier_count(), 6u);
  DatasetManifest orig;
  orig.n = 60;
  orig.dim = 49;
  orig.contamination = "gaussian_noise";
  orig.fraction = 0.1;
  const auto direct = build_dataset(orig);
  EXPECT_EQ(ds.is_outlier, direct.is_outlier);
  EXPECT_EQ(ds.labels, direct.labels);
}

TEST_F(Cli, EvalOnWrongDimensionIsDataError) {
  const auto model = train_once("m");
  const auto r = run({"eval", "-o", (dir / "bad").string(), "--set",
                      "eval.checkpoint=" + (model / "model.ckpt").string(), "--set",
                      "test_data.n=50", "--set", "test_data.dim=49"});
  EXPECT_EQ(r.code, cli::kDataError);
  EXPECT_NE(r.err.find("D=64"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("D=49"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownKeyIsConfigError) {
  testing::write_file(dir / "typo.cfg", std::string(kTrainCfg) + "[train]\nepohcs = 3\n");
  const auto r = run({"train", "-c", (dir / "typo.cfg").string(), "-o", (dir / "x").string()});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("train.epohcs"), std::string::npos) << r.err;
}

TEST_F(Cli, BadValuesAndFlagsAreConfigErrors) {
  EXPECT_EQ(run({"train", "-o", (dir / "x").string(), "--set", "data.n=10", "--set",
                 "train.epochs=many"})
                .code,
            cli::kConfigError);
  EXPECT_EQ(run({"train", "--no-such-flag"}).code, cli::kConfigError);
  EXPECT_EQ(run({}).code, cli::kConfigError);
  EXPECT_EQ(run({"train", "-c", (dir / "missing.cfg").string()}).code, cli::kConfigError);
  EXPECT_EQ(run({"train", "-o", (dir / "x").string()}).code, cli::kConfigError);
}

TEST_F(Cli, MissingInputFileIsDataError) {
  const auto r = run({"eval", "-o", (dir / "x").string(), "--set",
                      "eval.checkpoint=" + (dir / "nope.ckpt").string(), "--set",
                      "test_data.n=10"});
  EXPECT_EQ(r.code, cli::kDataError);
  const auto idx = run({"train", "-o", (dir / "y").string(), "--set", "data.source=idx",
                        "--set", "data.images=" + (dir / "none.idx").string()});
  EXPECT_EQ(idx.code, cli::kDataError) << idx.err;
}

TEST_F(Cli, SeedPrecedence) {
  auto seed_of = [&](const std::string& name, std::vector<std::string> extra) {
    std::vector<std::string> args{"robustfit-demo", "-o", (dir / name).string(), "--set",
                                  "robustfit.n=50"};
    args.insert(args.end(), extra.begin(), extra.end());
    EXPECT_EQ(run(args).code, 0);
    return Config::load(dir / name / "resolved.cfg").get("seed");
  };
  ::setenv("RVAE_SEED", "42", 1);
  EXPECT_EQ(seed_of("env", {}), "42");
  EXPECT_EQ(seed_of("cfg", {"--set", "seed=9"}), "9");
  EXPECT_EQ(seed_of("flag", {"--set", "seed=9", "--seed", "3"}), "3");
  ::setenv("RVAE_SEED", "forty", 1);
  EXPECT_EQ(run({"robustfit-demo", "-o", (dir / "bad").string()}).code, cli::kConfigError);
  ::unsetenv("RVAE_SEED");
  EXPECT_EQ(seed_of("none", {}), "0");
}

TEST_F(Cli, HelpExitsCleanly) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("select-beta"), std::string::npos);
}

}  // namespace
}  // namespace rvae
