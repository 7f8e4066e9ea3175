#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"
#include "tokenbinder/errors.hpp"

using namespace tbtest;
using namespace tokenbinder::cli;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  fs::path dir;
  fs::path cfg;

  void SetUp() override {
    dir = fs::temp_directory_path() / ("tokenbinder_cli_" +
                                       std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    cfg = dir / "run.cfg";
    std::ofstream(cfg) << format_config(tiny_config());
  }
  void TearDown() override { fs::remove_all(dir); }

  Command parse(std::vector<std::string> args) const {
    args.insert(args.begin(), "tokenbinder");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return parse_args(static_cast<int>(argv.size()), argv.data());
  }

  int invoke(std::vector<std::string> args, std::string* out_text = nullptr) const {
    args.insert(args.begin(), "tokenbinder");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int rc = run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    return rc;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }
};

}  // namespace

TEST_F(CliTest, MinimalTrainInvocation) {
  const Command c = parse({"train", "--config", cfg.string()});
  EXPECT_EQ(c.verb, Verb::train);
  EXPECT_EQ(c.config_path, cfg);
  EXPECT_TRUE(c.overrides.empty());
  EXPECT_FALSE(c.deterministic);
  EXPECT_FALSE(c.seed.has_value());
}

TEST_F(CliTest, AblateSweepOverK) {
  const Command c = parse({"ablate", "--config", cfg.string(), "--set", "k=5,10,20"});
  EXPECT_EQ(c.verb, Verb::ablate);
  ASSERT_EQ(c.overrides.size(), 1u);
  EXPECT_EQ(c.overrides[0].key, "k");
  EXPECT_EQ(c.overrides[0].values, (std::vector<std::string>{"5", "10", "20"}));
  const auto rows = ablation_rows(c, resolve_config(c));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].config.model.top_k, 20u);
  EXPECT_EQ(rows[0].axis, "k");
}

TEST_F(CliTest, AllFlags) {
  const Command c = parse({"eval", "--config", cfg.string(), "--set", "layers=2", "--set", "k=4",
                           "--out", (dir / "o").string(), "--seed", "42", "--deterministic"});
  EXPECT_EQ(c.out_dir, dir / "o");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_TRUE(c.deterministic);
  const RunConfig r = resolve_config(c);
  EXPECT_EQ(r.model.layers, 2u);
  EXPECT_EQ(r.model.top_k, 4u);
  EXPECT_EQ(r.train.seed, 42u);
  EXPECT_FALSE(r.model.use_gumbel);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_THROW(parse({}), UsageError);
  EXPECT_THROW(parse({"fly"}), UsageError);
  EXPECT_THROW(parse({"train", "--set", "nonsense=1"}), UsageError);
  EXPECT_THROW(parse({"train", "--set", "k"}), UsageError);
  EXPECT_THROW(parse({"train", "--set", "k="}), UsageError);
  EXPECT_THROW(parse({"train", "--set", "k=5,10"}), UsageError);
  EXPECT_THROW(parse({"train", "--config", (dir / "missing.cfg").string()}), UsageError);
  EXPECT_THROW(parse({"train", "--bogus"}), UsageError);
  try {
    parse({"fly"});
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("fly"), std::string::npos);
  }
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(invoke({"--help"}), 0);
  EXPECT_EQ(invoke({"fly"}), 2);
  // The cap on m is a validation failure, not a usage error.
  EXPECT_EQ(invoke({"eval", "--config", cfg.string(), "--set", "indicator_count=7", "--out", dir.string()}), 1);
}

TEST_F(CliTest, ComponentAblationRows) {
  const Command c = parse({"ablate", "--config", cfg.string()});
  const auto rows = ablation_rows(c, resolve_config(c));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_FALSE(rows[0].config.model.use_indicators);
  EXPECT_TRUE(rows[1].config.model.use_indicators);
  EXPECT_FALSE(rows[1].config.model.use_stage1_scores);
  EXPECT_TRUE(rows[2].config.model.use_stage1_scores);
  EXPECT_FALSE(rows[2].config.model.use_gumbel);
  EXPECT_TRUE(rows[3].config.model.use_gumbel);
}

TEST_F(CliTest, UntrainedEvalRowsIdentical) {
  std::string out;
  ASSERT_EQ(invoke({"eval", "--config", cfg.string(), "--out", dir.string()}, &out), 0);
  std::istringstream lines(slurp(dir / "metrics.csv"));
  std::string header, broad, full;
  std::getline(lines, header);
  std::getline(lines, broad);
  std::getline(lines, full);
  ASSERT_EQ(broad.rfind("broad-only,", 0), 0u) << broad;
  ASSERT_EQ(full.rfind("two-stage,", 0), 0u) << full;
  EXPECT_EQ(broad.substr(broad.find(',')), full.substr(full.find(',')));
  EXPECT_TRUE(fs::exists(dir / "video_gallery.tbgl"));
  EXPECT_TRUE(fs::exists(dir / "text_gallery.tbgl"));
}

TEST_F(CliTest, TrainThenQueryUsesCheckpoint) {
  ASSERT_EQ(invoke({"train", "--config", cfg.string(), "--out", dir.string()}), 0);
  EXPECT_TRUE(fs::exists(dir / "checkpoint_epoch1.tbck"));
  EXPECT_TRUE(fs::exists(dir / "checkpoint.tbck"));
  const std::string loss = slurp(dir / "loss.csv");
  EXPECT_EQ(loss.rfind("epoch,step,l_t2v,l_v2t,l_focus_t,l_focus_v,combined\n", 0), 0u);

  std::string out;
  ASSERT_EQ(invoke({"query", "--config", cfg.string(), "--set", "checkpoint=" + (dir / "checkpoint.tbck").string(),
                    "--set", "query_index=2", "--out", dir.string()},
                   &out),
            0);
  std::istringstream lines(out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "rank,id,stage1,delta,final");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, tiny_config().data.pairs);
}

TEST_F(CliTest, GradcheckPasses) {
  std::string out;
  EXPECT_EQ(invoke({"gradcheck", "--config", cfg.string(), "--out", dir.string()}, &out), 0);
  EXPECT_NE(out.find("max_rel_error"), std::string::npos);
  EXPECT_EQ(out.find("FAIL"), std::string::npos) << out;
}
