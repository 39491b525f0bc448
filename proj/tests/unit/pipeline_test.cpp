#include <gtest/gtest.h>

#include <fstream>

#include "bpa/error.hpp"
#include "bpa/manifest.hpp"
#include "bpa/pipeline.hpp"
#include "temp_dir.hpp"

using namespace bpa;
using namespace bpa::pipeline;
using bpa::testing::TempDir;
using nlohmann::json;

namespace {

json tiny_config(const std::filesystem::path& root) {
  return {
      {"seed", 4},
      {"output_root", root.string()},
      {"toy_corpus", {{"size", 16}, {"counts", {{"nevus", 20}, {"APN", 4}, {"grader_melanoma", 10}}}}},
      {"resolution", 16},
      {"bulk", {{"target_resolution", 16}, {"latent_dim", 8}, {"fmap_base", 32}, {"fmap_max", 4}}},
      {"conditions", "AD"},
  };
}

std::filesystem::path write_config(const TempDir& dir, const json& j) {
  const auto path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

std::string config_error_field(const json& j) {
  try {
    j.get<RunConfig>().validate();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

}  // namespace

TEST(RunConfig, ErrorsNameTheOffendingField) {
  TempDir dir;
  json j = tiny_config(dir.path());
  EXPECT_EQ(config_error_field(j), "<none>");

  json no_seed = j;
  no_seed.erase("seed");
  EXPECT_EQ(config_error_field(no_seed), "seed");

  json bad = j;
  bad["bulk"]["batch_size"] = 1;
  EXPECT_EQ(config_error_field(bad), "bulk.batch_size");

  bad = j;
  bad["transfer"] = {{"ngff", 3}};
  EXPECT_EQ(config_error_field(bad), "transfer.ngff");

  bad = j;
  bad["detector"] = {{"augment", {{"input_size", 0}}}};
  EXPECT_EQ(config_error_field(bad), "detector.augment.input_size");

  bad = j;
  bad["bulk"]["seed"] = 3;
  EXPECT_EQ(config_error_field(bad), "bulk.seed");

  bad = j;
  bad["conditions"] = "AE";
  EXPECT_EQ(config_error_field(bad), "conditions");

  bad = j;
  bad["pool_dirs"] = {{"nevus", dir.path().string()}};
  EXPECT_EQ(config_error_field(bad), "pool_dirs");

  bad = j;
  bad["resolution"] = 32;
  EXPECT_EQ(config_error_field(bad), "bulk.target_resolution");
}

TEST(RunConfig, OverridesParseJsonWithStringFallback) {
  json j = {{"bulk", {{"batch_size", 4}}}};
  apply_overrides(j, {"bulk.batch_size=8", "bulk.learning_rate=0.5", "conditions=AD", "toy_corpus.size=16"});
  EXPECT_EQ(j["bulk"]["batch_size"], 8);
  EXPECT_EQ(j["bulk"]["learning_rate"], 0.5);
  EXPECT_EQ(j["conditions"], "AD");
  EXPECT_EQ(j["toy_corpus"]["size"], 16);
  EXPECT_THROW(apply_overrides(j, {"no_equals_sign"}), ConfigError);
}

TEST(RunConfig, LoadAppliesOverrides) {
  TempDir dir;
  const auto path = write_config(dir, tiny_config(dir / "runs"));
  const RunConfig c = load_config(path, {"seed=9", "generate_count=12"});
  EXPECT_EQ(c.seed.value(), 9u);
  EXPECT_EQ(c.generate_count, 12);
  EXPECT_THROW(load_config(path, {"resolution=0"}), ConfigError);
  EXPECT_THROW(load_config(dir / "absent.json"), ConfigError);
}

TEST(RunConfig, HashIgnoresSeedAndOutputRoot) {
  TempDir dir;
  const RunConfig a = tiny_config(dir / "x").get<RunConfig>();
  json other = tiny_config(dir / "y");
  other["seed"] = 5;
  const RunConfig b = other.get<RunConfig>();
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.run_dir(), b.run_dir());
  EXPECT_NE(a.stage_seed("train-bulk"), b.stage_seed("train-bulk"));
  EXPECT_NE(a.stage_seed("train-bulk"), a.stage_seed("train-transfer"));

  other["generate_count"] = 7;
  EXPECT_NE(other.get<RunConfig>().hash(), a.hash());
  EXPECT_EQ(a.run_dir().filename().string(), a.hash().substr(0, 12) + "-s4");
}

TEST(RunConfig, JsonRoundTrip) {
  TempDir dir;
  const RunConfig a = tiny_config(dir.path()).get<RunConfig>();
  const json j = a;
  const RunConfig b = j.get<RunConfig>();
  EXPECT_EQ(json(b), j);
  EXPECT_EQ(b.hash(), a.hash());
}

TEST(Stages, NamesRoundTrip) {
  EXPECT_EQ(all_stages().size(), 11u);
  for (Stage s : all_stages()) EXPECT_EQ(parse_stage(to_string(s)), s);
  EXPECT_THROW(parse_stage("train"), ConfigError);
  EXPECT_TRUE(per_condition(Stage::kTrainApn));
  EXPECT_FALSE(per_condition(Stage::kReport));
}

TEST(Run, ReportWithoutEvaluationIsMissingDependency) {
  TempDir dir;
  pipeline::Run run(tiny_config(dir.path()).get<RunConfig>());
  try {
    run.execute(Stage::kReport);
    FAIL() << "report ran without evaluation";
  } catch (const MissingDependency& e) {
    EXPECT_EQ(e.stage(), "eval-apn");
    EXPECT_STREQ(e.what(), "missing: eval-apn");
  }
  EXPECT_THROW(run.execute(Stage::kTrainBulk), MissingDependency);
}

TEST(Run, ConditionArgumentsAreChecked) {
  TempDir dir;
  pipeline::Run run(tiny_config(dir.path()).get<RunConfig>());
  EXPECT_THROW(run.execute(Stage::kBuildDataset), ConfigError);
  EXPECT_THROW(run.execute(Stage::kBuildDataset, 'B'), ConfigError);
  EXPECT_THROW(run.execute(Stage::kIngest, 'A'), ConfigError);
}

TEST(Run, IngestWritesPoolsAndRefusesToRunTwice) {
  TempDir dir;
  pipeline::Run run(tiny_config(dir.path()).get<RunConfig>());
  run.execute(Stage::kIngest);
  EXPECT_TRUE(run.complete(Stage::kIngest));
  EXPECT_TRUE(std::filesystem::exists(run.dir() / "config.json"));
  const Manifest nevus = read_manifest(run.stage_dir(Stage::kIngest) / "nevus.jsonl");
  EXPECT_GT(nevus.size(), 0u);
  EXPECT_LE(nevus.size(), 20u);
  EXPECT_EQ(read_manifest(run.stage_dir(Stage::kIngest) / "APN.jsonl").size(), 4u);
  EXPECT_THROW(run.execute(Stage::kIngest), Error);

  // Same science config under a fresh root yields the same pools.
  json again = tiny_config(dir / "again");
  pipeline::Run twin(again.get<RunConfig>());
  twin.execute(Stage::kIngest);
  const Manifest copy = read_manifest(twin.stage_dir(Stage::kIngest) / "nevus.jsonl");
  ASSERT_EQ(copy.size(), nevus.size());
  for (size_t i = 0; i < nevus.size(); ++i) EXPECT_EQ(copy[i].id, nevus[i].id);
}

TEST(Run, NonEmptyStageDirectoryIsRefused) {
  TempDir dir;
  pipeline::Run run(tiny_config(dir.path()).get<RunConfig>());
  const auto out = run.stage_dir(Stage::kIngest);
  std::filesystem::create_directories(out);
  std::ofstream(out / "stray.txt") << "x";
  EXPECT_THROW(run.execute(Stage::kIngest), Error);
  EXPECT_FALSE(run.complete(Stage::kIngest));
}

TEST(Run, StageFromAnotherConfigIsRejected) {
  TempDir dir;
  pipeline::Run run(tiny_config(dir.path()).get<RunConfig>());
  run.execute(Stage::kIngest);
  // Same run directory, different science config: the marker hash no longer matches.
  json j = tiny_config(dir.path());
  j["generate_count"] = 3;
  pipeline::Run other(j.get<RunConfig>());
  std::filesystem::create_directories(other.dir());
  std::filesystem::copy(run.dir(), other.dir(), std::filesystem::copy_options::recursive);
  EXPECT_THROW(other.execute(Stage::kTrainBulk), Error);
}
