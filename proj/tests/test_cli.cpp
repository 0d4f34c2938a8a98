#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "support.hpp"
#include "xlt/analysis.hpp"
#include "xlt/cli.hpp"
#include "xlt/evaluation.hpp"

using namespace xlt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome xlt_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const char* kTinyConfig =
    "encoder_layers = 1\ndecoder_layers = 1\nheads = 2\nmodel_dim = 16\nffn_dim = 32\n"
    "max_sequence_length = 48\nprecision = f32\nsteps = 20\nbatch_tokens = 200\n"
    "learning_rate = 0.003\nwarmup_steps = 10\nbpe_merges = 30\n";

// synth + bpe + a short multilingual run, shared by every test in the suite.
class Pipeline : public ::testing::Test {
 protected:
  static inline fixtures::TempDir* dir = nullptr;

  static fs::path at(const std::string& name) { return dir->path / name; }

  static void SetUpTestSuite() {
    dir = new fixtures::TempDir("cli");
    spit(at("tiny.cfg"), kTinyConfig);
    ASSERT_EQ(xlt_run({"synth", "--languages", "3", "--train-sentences", "150", "--test-sentences", "10", "--lexicon",
                       "12", "--train-out", at("train.tsv").string(), "--test-out", at("test.tsv").string(),
                       "--seed", "4"})
                  .code,
              0);
    ASSERT_EQ(xlt_run({"bpe", "--corpus", at("train.tsv").string(), "--merges", "30", "--out", at("bpe.txt").string()})
                  .code,
              0);
    const auto r = xlt_run({"train", "--config", at("tiny.cfg").string(), "--corpus", at("train.tsv").string(), "--bpe",
                            at("bpe.txt").string(), "--out", at("multi.ckpt").string(), "--log",
                            at("multi_log.csv").string(), "--seed", "5"});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  static void TearDownTestSuite() {
    delete dir;
    dir = nullptr;
  }
};

}  // namespace

TEST(Cli, UnknownCommandAndMissingFlagsAreUsageErrors) {
  EXPECT_EQ(xlt_run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(xlt_run({"train"}).code, cli::kExitUsage);
  EXPECT_EQ(xlt_run({}).code, cli::kExitUsage);
}

TEST(Cli, MissingInputFileIsDataError) {
  fixtures::TempDir d("cli");
  const auto r = xlt_run({"bpe", "--corpus", (d.path / "nope.tsv").string(), "--out", (d.path / "b").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_FALSE(r.err.empty());
  EXPECT_FALSE(fs::exists(d.path / "b"));
}

TEST(Cli, EvaluateReferencesAgainstThemselves) {
  fixtures::TempDir d("cli");
  spit(d.path / "ref.txt", "a b c d e\nthe cat sat on the mat\n");
  const auto r = xlt_run({"evaluate", "--hyp-file", (d.path / "ref.txt").string(), "--ref-file",
                          (d.path / "ref.txt").string(), "--out", (d.path / "bleu.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(d.path / "bleu.json"));
  EXPECT_DOUBLE_EQ(j["bleu"].get<double>(), 100.0);
}

TEST(Cli, BeamZeroIsUsageError) {
  fixtures::TempDir d("cli");
  spit(d.path / "ref.txt", "a b c d\n");
  EXPECT_EQ(xlt_run({"evaluate", "--beam", "0", "--hyp-file", (d.path / "ref.txt").string(), "--ref-file",
                     (d.path / "ref.txt").string()})
                .code,
            cli::kExitUsage);
}

TEST(Cli, SelectOnHandBuiltReport) {
  fixtures::TempDir d("cli");
  CorrelationReport r;
  r.labels = {"en-xa", "en-xb", "xa-en", "xb-en"};
  r.matrix = {{1, 0, 0.7, 0.7}, {0, 1, 0.5, 0.5}, {0.7, 0.5, 1, 0}, {0.7, 0.5, 0, 1}};
  r.subset = "dec";
  r.metric = "spearman";
  summarize(r);
  write_report_csv(r, d.path / "report.csv");
  const auto res = xlt_run({"select", "--report", (d.path / "report.csv").string(), "--rule", "related",
                            "--threshold", "0.6", "--out", (d.path / "sel.txt").string()});
  ASSERT_EQ(res.code, 0) << res.err;
  EXPECT_EQ(slurp(d.path / "sel.txt"), "xa\n");
}

TEST_F(Pipeline, TransferPlanNeedsCheckpoint) {
  const auto r = xlt_run({"finetune", "--plan", "load-enc", "--config", at("tiny.cfg").string(), "--corpus",
                          at("train.tsv").string(), "--out", at("x.ckpt").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("from-checkpoint"), std::string::npos);
  EXPECT_FALSE(fs::exists(at("x.ckpt")));
}

TEST_F(Pipeline, BilingualBaselineAndRerunLogIsIdentical) {
  const std::vector<std::string> base{"train", "--plan", "none", "--config", at("tiny.cfg").string(), "--corpus",
                                      at("train.tsv").string(), "--bpe", at("bpe.txt").string(), "--pair", "xa-en",
                                      "--steps", "10", "--seed", "9"};
  auto a = base;
  a.insert(a.end(), {"--out", at("bi1.ckpt").string(), "--log", at("bi1.csv").string()});
  auto b = base;
  b.insert(b.end(), {"--out", at("bi2.ckpt").string(), "--log", at("bi2.csv").string()});
  ASSERT_EQ(xlt_run(a).code, 0);
  ASSERT_EQ(xlt_run(b).code, 0);
  const auto log = slurp(at("bi1.csv"));
  EXPECT_EQ(log, slurp(at("bi2.csv")));
  EXPECT_EQ(log.substr(0, log.find('\n')).substr(0, 9), "step,loss");
  EXPECT_EQ(slurp(at("bi1.ckpt")), slurp(at("bi2.ckpt")));
}

TEST_F(Pipeline, FinetuneFromMultilingual) {
  const auto r = xlt_run({"finetune", "--plan", "freeze-enc", "--from-checkpoint", at("multi.ckpt").string(),
                          "--config", at("tiny.cfg").string(), "--corpus", at("train.tsv").string(), "--pair",
                          "xa-en", "--steps", "5", "--out", at("ft.ckpt").string()});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(Pipeline, ProbeCorrelateClusterVerify) {
  EXPECT_EQ(xlt_run({"probe", "--checkpoint", at("multi.ckpt").string(), "--corpus", at("train.tsv").string(), "--pair",
                     "xa-en", "--samples", "0", "--out", at("bad.csv").string()})
                .code,
            cli::kExitUsage);
  EXPECT_FALSE(fs::exists(at("bad.csv")));

  std::vector<std::string> files;
  for (const std::string pair : {"xa-en", "xb-en", "xc-en"}) {
    const auto out = at("scores_" + pair + ".csv").string();
    const auto r = xlt_run({"probe", "--checkpoint", at("multi.ckpt").string(), "--corpus", at("train.tsv").string(),
                            "--pair", pair, "--samples", "40", "--normalize", "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    files.push_back(out);
  }
  // Same seed, same file.
  ASSERT_EQ(xlt_run({"probe", "--checkpoint", at("multi.ckpt").string(), "--corpus", at("train.tsv").string(),
                     "--pair", "xa-en", "--samples", "40", "--normalize", "--out", at("again.csv").string()})
                .code,
            0);
  EXPECT_EQ(slurp(files[0]), slurp(at("again.csv")));

  auto verify = files;
  verify.insert(verify.begin(), "verify-scores");
  EXPECT_EQ(xlt_run(verify).code, 0);
  auto s = read_scores_csv(files[0]);
  EXPECT_LE(max_norm_deviation(s), 1e-6);

  const auto self = xlt_run({"correlate", files[0], files[0], "--subset", "dec", "--out", at("self.csv").string()});
  ASSERT_EQ(self.code, 0) << self.err;
  const auto rep = read_report_csv(at("self.csv"));
  for (const auto& row : rep.matrix) {
    for (double v : row) EXPECT_EQ(v, 1.0);
  }

  for (const std::string sub : {"enc", "dec", "cross", "self"}) {
    const auto r = xlt_run({"correlate", files[0], files[1], files[2], "--subset", sub, "--out",
                            at("corr_" + sub + ".csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_report_csv(at("corr_" + sub + ".csv")).labels.size(), 3u);
  }

  const auto cl = xlt_run({"cluster", files[0], files[1], files[2], "--k", "3", "--out", at("clusters.csv").string(),
                           "--projection-out", at("proj.csv").string()});
  ASSERT_EQ(cl.code, 0) << cl.err;
  EXPECT_NE(cl.out.find("cost 0 "), std::string::npos) << cl.out;
  EXPECT_TRUE(fs::exists(at("proj.csv")));

  // A head-score file with one module scaled breaks the norm check.
  s.scores[0] *= 3.0;
  write_scores_csv(s, at("broken.csv"));
  EXPECT_NE(xlt_run({"verify-scores", at("broken.csv").string()}).code, 0);
}

TEST_F(Pipeline, EvaluateIsRepeatable) {
  const std::vector<std::string> args{"evaluate", "--checkpoint", at("multi.ckpt").string(), "--corpus",
                                      at("test.tsv").string(), "--pair", "xb-en"};
  auto a = args;
  a.insert(a.end(), {"--out", at("e1.json").string()});
  auto b = args;
  b.insert(b.end(), {"--beam", "2", "--out", at("e2.json").string()});
  ASSERT_EQ(xlt_run(a).code, 0);
  ASSERT_EQ(xlt_run(b).code, 0);
  a.back() = at("e3.json").string();
  ASSERT_EQ(xlt_run(a).code, 0);
  EXPECT_EQ(slurp(at("e1.json")), slurp(at("e3.json")));
  EXPECT_EQ(nlohmann::json::parse(slurp(at("e1.json")))["pair"], "xb-en");
}

namespace {

std::string small_recipe(const std::string& bpe_input) {
  return R"({
  "name": "mini",
  "seed": 3,
  "externals": {"config": "tiny.cfg"},
  "stages": [
    {"name": "data", "command": "synth",
     "args": {"train-out": "${self.train}", "test-out": "${self.test}", "languages": 2,
              "train-sentences": 60, "test-sentences": 5, "lexicon": 10},
     "outputs": {"train": "train.tsv", "test": "test.tsv"}},
    {"name": "bpe", "command": "bpe",
     "args": {"corpus": ")" + bpe_input + R"(", "merges": 20, "out": "${self.model}"},
     "outputs": {"model": "bpe.txt"}},
    {"name": "multi", "command": "train",
     "args": {"config": "${ext.config}", "corpus": "${data.train}", "bpe": "${bpe.model}", "steps": 5,
              "out": "${self.checkpoint}", "log": "${self.log}"},
     "outputs": {"checkpoint": "model.ckpt", "log": "log.csv"}}
  ]
})";
}

}  // namespace

TEST(Recipe, MissingStageInputFailsBeforeRunning) {
  fixtures::TempDir d("cli");
  spit(d.path / "tiny.cfg", kTinyConfig);
  spit(d.path / "bad.json", small_recipe("${nowhere.train}"));
  const auto r = xlt_run({"recipe", (d.path / "bad.json").string(), "--runs-dir", (d.path / "runs").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("nowhere"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(d.path / "runs" / "mini" / "data" / "train.tsv"));
}

TEST(Recipe, ResumeSkipsAndRerunIsByteIdentical) {
  fixtures::TempDir d("cli");
  spit(d.path / "tiny.cfg", kTinyConfig);
  spit(d.path / "mini.json", small_recipe("${data.train}"));
  const auto recipe = (d.path / "mini.json").string();

  const auto first = xlt_run({"recipe", recipe, "--runs-dir", (d.path / "a").string()});
  ASSERT_EQ(first.code, 0) << first.err;
  const auto manifest = slurp(d.path / "a" / "mini" / "manifest.json");
  const auto log = slurp(d.path / "a" / "mini" / "multi" / "log.csv");

  const auto resumed = xlt_run({"recipe", recipe, "--runs-dir", (d.path / "a").string()});
  ASSERT_EQ(resumed.code, 0);
  EXPECT_NE(resumed.out.find("[multi] skipped"), std::string::npos) << resumed.out;
  EXPECT_NE(slurp(d.path / "a" / "mini" / "recipe.log").find("multi skipped"), std::string::npos);
  EXPECT_EQ(slurp(d.path / "a" / "mini" / "manifest.json"), manifest);

  // A tampered output forces that stage to run again.
  spit(d.path / "a" / "mini" / "multi" / "log.csv", "garbage\n");
  const auto repaired = xlt_run({"recipe", recipe, "--runs-dir", (d.path / "a").string()});
  EXPECT_NE(repaired.out.find("[data] skipped"), std::string::npos);
  EXPECT_EQ(repaired.out.find("[multi] skipped"), std::string::npos);
  EXPECT_EQ(slurp(d.path / "a" / "mini" / "multi" / "log.csv"), log);

  const auto second = xlt_run({"recipe", recipe, "--runs-dir", (d.path / "b").string()});
  ASSERT_EQ(second.code, 0);
  EXPECT_EQ(slurp(d.path / "b" / "mini" / "manifest.json"), manifest);

  const auto other_seed = xlt_run({"recipe", recipe, "--runs-dir", (d.path / "c").string(), "--seed", "4"});
  ASSERT_EQ(other_seed.code, 0);
  EXPECT_NE(slurp(d.path / "c" / "mini" / "manifest.json"), manifest);
}
