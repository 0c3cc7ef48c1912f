#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "disputelab/pipeline.hpp"

using namespace disputelab;
using namespace disputelab::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "disputelab");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("disputelab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small synthetic experiment: corpus, embeddings and a config next to them.
fs::path synthetic_experiment(const fs::path& dir, const std::string& out_name) {
  std::ofstream(dir / "config.json") << json{
      {"seed", 4},
      {"paths", {{"corpus", "synthetic.jsonl"}, {"embeddings", "synthetic_embeddings.txt"}, {"output_dir", out_name}}},
      {"filter", {{"min_tokens", 60}}},
      {"split", {{"train", 0.6}, {"validation", 0.2}}},
      {"linear", {{"grid_C", {0.1, 10}}}},
      {"neural",
       {{"embedding_dim", 8}, {"hidden", 3}, {"max_epochs", 2}, {"learning_rate", 0.003},
        {"models", {"averaged", "hierarchical+edits"}}}},
      {"mc", {{"samples", 4}}},
      {"evaluate", {{"permutation_iterations", 50}}}}
      .dump(2);
  const auto r = run_cli({"synth", "-c", (dir / "config.json").string(), "--out", dir.string(),
                          "--conversations", "220"});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir / "config.json";
}

}  // namespace

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(ExperimentConfig::from_json(json{{"neural", {{"hiden", 3}}}}, "."), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(json::object(), ".", {"nope.x=1"}), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(json::object(), ".", {"neural.hidden"}), ConfigError);
}

TEST(Config, OverridesSeedAndHash) {
  const auto base = ExperimentConfig::from_json(json::object(), ".");
  const auto changed = ExperimentConfig::from_json(json::object(), ".", {"neural.hidden=64"});
  EXPECT_EQ(changed.effective["neural"]["hidden"], 64);
  EXPECT_NE(changed.hash, base.hash);
  const auto served =
      ExperimentConfig::from_json(json::object(), ".", {"serve.port=9999", "threads=2", "paths.output_dir=x"});
  EXPECT_EQ(served.hash, base.hash);
  const auto seeded = ExperimentConfig::from_json(json::object(), ".", {}, 17);
  EXPECT_EQ(seeded.seed, 17u);
  EXPECT_NE(seeded.stage_seed("split"), seeded.stage_seed("train"));
  const auto named = ExperimentConfig::from_json(json::object(), ".", {"serve.model=averaged"});
  EXPECT_EQ(named.serve_model, "averaged");
}

TEST(Config, NeuralVariantNames) {
  const ModelConfig base;
  EXPECT_TRUE(neural_variant("hierarchical+edits", base).model.include_edits);
  const auto s = neural_variant("sequential+stripped", base).model;
  EXPECT_TRUE(s.include_edits && s.strip_edit_token);
  EXPECT_EQ(neural_variant("averaged", base).model.architecture, Architecture::Averaged);
  EXPECT_THROW(neural_variant("hierarchical+colour", base), ConfigError);
}

TEST(Cli, BadUsageExitsNonZero) {
  EXPECT_NE(run_cli({}).code, 0);
  EXPECT_NE(run_cli({"frobnicate"}).code, 0);
  const auto r = run_cli({"ingest", "--set", "filter.min_utterances=\"x\""});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("disputelab:"), std::string::npos);
}

TEST(Cli, IngestReportsFilterCounts) {
  const auto dir = scratch("ingest");
  const auto r = run_cli({"ingest", "--set", "paths.corpus=" + std::string(TEST_DATA_DIR) + "/filter_fixture.jsonl",
                          "--set", "paths.output_dir=" + dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = slurp(dir / "ingest_report.csv");
  EXPECT_NE(report.find("# config_hash="), std::string::npos);
  EXPECT_NE(report.find("input,200\n"), std::string::npos);
  EXPECT_NE(report.find("rejected_min_utterances,40\n"), std::string::npos);
  EXPECT_NE(report.find("rejected_max_utterances,30\n"), std::string::npos);
  EXPECT_NE(report.find("rejected_min_tokens,25\n"), std::string::npos);
  EXPECT_NE(report.find("rejected_min_participants,23\n"), std::string::npos);
  EXPECT_NE(report.find("kept,82\n"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, PipelineIsDeterministicAndChecksHashes) {
  const auto dir = scratch("pipeline");
  const auto config = synthetic_experiment(dir, "a");
  const auto a = run_cli({"pipeline", "-c", config.string()});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run_cli({"pipeline", "-c", config.string(), "--set", "paths.output_dir=b"});
  ASSERT_EQ(b.code, 0) << b.err;
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 10u);
  EXPECT_TRUE(fs::exists(dir / "a" / "report.csv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "models" / "neural" / "hierarchical+edits.json"));

  const auto stale = run_cli({"evaluate", "-c", config.string(), "--set", "neural.hidden=5"});
  EXPECT_EQ(stale.code, 1);
  EXPECT_NE(stale.err.find("config"), std::string::npos) << stale.err;

  const auto tr = run_cli({"trace", "-c", config.string(), "-m", "hierarchical+edits"});
  EXPECT_EQ(tr.code, 0) << tr.err;
  EXPECT_TRUE(fs::exists(dir / "a" / "traces" / "hierarchical+edits"));
  fs::remove_all(dir);
}

TEST(Cli, BinaryRunsAndHonoursSeedVariable) {
  const auto dir = scratch("binary");
  const std::string cmd = std::string("DISPUTELAB_SEED=3 \"") + DISPUTELAB_BINARY + "\" synth --out " + dir.string() +
                          " --conversations 22 > " + (dir / "log.txt").string() + " 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0) << slurp(dir / "log.txt");
  const auto first = slurp(dir / "synthetic.jsonl");
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(slurp(dir / "synthetic.jsonl"), first);
  const std::string bad = std::string("\"") + DISPUTELAB_BINARY + "\" split --set nope=1 > /dev/null 2>&1";
  EXPECT_NE(std::system(bad.c_str()), 0);
  fs::remove_all(dir);
}
