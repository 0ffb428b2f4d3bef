#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "test_util.hpp"

namespace fs = std::filesystem;
using tgm::testing::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run tgm_run(const TempDir& dir, const std::string& args) {
  const std::string out = dir.str("stdout.txt"), err = dir.str("stderr.txt");
  const std::string cmd = std::string(TGM_BIN) + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const char* kConfig = R"(data.count = 12
data.frames = 4
data.height = 16
data.width = 16
patch.t = 2
patch.h = 8
patch.w = 8
model.D = 16
model.depth = 1
model.heads = 2
model.decoder_D = 16
model.decoder_depth = 1
model.decoder_heads = 2
model.D_proj = 16
model.proj_hidden = 16
batch_size = 4
epochs = 2
warmup_epochs = 1
probe.epochs = 5
eval.retrieval_count = 6
)";

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    std::ofstream(dir_->path() / "run.conf") << kConfig;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string common() {
    return "--config " + dir_->str("run.conf") + " --out-dir " + dir_->str("out");
  }
  static TempDir* dir_;
};

TempDir* CliPipeline::dir_ = nullptr;

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  TempDir dir("cli_usage");
  EXPECT_EQ(tgm_run(dir, "--help").code, 0);
  EXPECT_EQ(tgm_run(dir, "pretrain --help").code, 0);
  EXPECT_EQ(tgm_run(dir, "").code, 2);
  EXPECT_EQ(tgm_run(dir, "no-such-command").code, 2);
  EXPECT_EQ(tgm_run(dir, "mask-stats --gamma 1.5").code, 2);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  TempDir dir("cli_config");
  const auto r = tgm_run(dir, "gen-data --out-dir " + dir.str("o") + " --set mask.gama=0.5");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("mask.gama"), std::string::npos);
  EXPECT_EQ(tgm_run(dir, "gen-data --config " + dir.str("absent.conf")).code, 2);
  EXPECT_EQ(tgm_run(dir, "gen-data --out-dir " + dir.str("o") + " --set model.heads=5").code, 2);
}

TEST(Cli, RuntimeErrorsExitWithOne) {
  TempDir dir("cli_runtime");
  const auto r = tgm_run(dir, "retrieve --out-dir " + dir.str("o") + " --checkpoint " + dir.str("missing.tgmc"));
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliPipeline, EndToEnd) {
  auto run = [&](const std::string& args) {
    const auto r = tgm_run(*dir_, args);
    EXPECT_EQ(r.code, 0) << args << "\n" << r.err;
    return r;
  };
  const fs::path out = dir_->path() / "out";
  run("gen-data " + common() + " --simmaps");
  EXPECT_TRUE(fs::exists(out / "corpus" / "captions.txt"));
  EXPECT_TRUE(fs::exists(out / "corpus" / "videos" / "video_00000.tgmv") ||
              !fs::is_empty(out / "corpus" / "videos"));

  run("pretrain " + common() + " --set loss.contrastive=true --dump-masks");
  EXPECT_TRUE(fs::exists(out / "loss.csv"));
  EXPECT_TRUE(fs::exists(out / "masks.bin"));
  const fs::path ckpt = out / "checkpoint.tgmc";
  ASSERT_TRUE(fs::exists(ckpt));
  ASSERT_TRUE(fs::exists(out / "checkpoint.tgmc.manifest"));
  EXPECT_EQ(slurp(out / "loss.csv").rfind("step,l_mse,l_nce,nce_diagnostic,lr,wall_ms", 0), 0u);

  run("probe " + common() + " --checkpoint " + ckpt.string());
  const auto probe = nlohmann::json::parse(slurp(out / "probe_metrics.json"));
  EXPECT_TRUE(probe["top1"].is_number());
  EXPECT_TRUE(probe["r_at_1"].is_null());

  run("finetune " + common() + " --checkpoint " + ckpt.string());
  EXPECT_TRUE(fs::exists(out / "finetuned.tgmc"));
  EXPECT_TRUE(nlohmann::json::parse(slurp(out / "finetune_metrics.json"))["top1"].is_number());

  run("retrieve " + common() + " --checkpoint " + ckpt.string());
  const auto ret = nlohmann::json::parse(slurp(out / "retrieval_metrics.json"));
  EXPECT_TRUE(ret["r_at_1"].is_number());
  EXPECT_TRUE(ret["chance_r_at_1"].is_number());

  const auto ms = run("mask-stats " + common() + " --algorithms tube,text-top --count 6");
  EXPECT_NE(ms.out.find("text-top"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "mask_stats.tsv"));

  run("visualize " + common() + " --video 0 --checkpoint " + ckpt.string() + " --loss-csv " +
      (out / "loss.csv").string() + " --label run");
  EXPECT_TRUE(fs::exists(out / "losses.svg"));
  int pgm = 0;
  for (const auto& e : fs::recursive_directory_iterator(out))
    pgm += e.path().extension() == ".pgm";
  EXPECT_GT(pgm, 0);

  // architecture mismatch is refused unless forced
  const auto bad = tgm_run(*dir_, "probe " + common() + " --checkpoint " + ckpt.string() + " --set model.D=32 --set model.D_proj=32");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("--force"), std::string::npos);
}
