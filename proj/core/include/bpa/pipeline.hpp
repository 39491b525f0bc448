#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bpa/bulk.hpp"
#include "bpa/classifier.hpp"
#include "bpa/manifest.hpp"
#include "bpa/transfer.hpp"

// Stage graph of a full run: ingest, bulk production, feature transition,
// training conditions, detector and grader training, evaluation and report.
namespace bpa::pipeline {

// Procedurally rendered stand-in corpus; see bpa::toy.
struct ToyCorpusConfig {
  int64_t size = 32;
  // Per-pool image counts overriding the toy defaults.
  std::map<std::string, int64_t> counts;
};

struct RunConfig {
  std::string profile = "desk";  // "desk" or "full"
  std::optional<uint64_t> seed;
  std::filesystem::path output_root = "runs";

  // Exactly one of these supplies the image pools.
  std::optional<ToyCorpusConfig> toy_corpus;
  std::map<std::string, std::filesystem::path> pool_dirs;  // each directory holds images and labels.json

  int64_t resolution = 32;
  ArtifactSet exclude_artifacts;

  bulk::ProgressiveConfig bulk;
  int64_t generate_count = 1000;
  transfer::CycleConfig transfer;

  std::string conditions = "ABCD";
  double condition_scale = 1.0;

  eval::ClassifierConfig detector;
  eval::ClassifierConfig grader;
  int64_t grader_held_out_per_class = 50;

  // Stage seeds are derived from `seed`; per-stage "seed" keys are not accepted.
  uint64_t stage_seed(std::string_view stage) const;
  // Hash of every science field (excludes seed and output_root).
  std::string hash() const;
  std::filesystem::path run_dir() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
// Applies "dotted.key=value" overrides; values parse as JSON, falling back to a string.
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& overrides);

// Pool names a run reads from its sources.
namespace roles {
inline constexpr const char* kValNevus = "val_nevus";
inline constexpr const char* kValApn = "val_apn";
inline constexpr const char* kEvalNevus = "eval_nevus";
inline constexpr const char* kEvalApn = "eval_apn";
inline constexpr const char* kGraderNevus = "grader_nevus";
inline constexpr const char* kGraderMelanoma = "grader_melanoma";
}  // namespace roles

enum class Stage {
  kIngest,
  kTrainBulk,
  kGenerateNevus,
  kTrainTransfer,
  kApplyTransfer,
  kBuildDataset,
  kTrainApn,
  kTrainGrader,
  kEvalApn,
  kEvalGrading,
  kReport,
};

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);
// Stages in dependency order.
const std::vector<Stage>& all_stages();
// build-dataset, train-apn and eval-apn run once per training condition.
bool per_condition(Stage s);

class Run {
 public:
  explicit Run(RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  const std::filesystem::path& dir() const { return dir_; }
  const std::string& config_hash() const { return hash_; }

  std::filesystem::path stage_dir(Stage s, std::optional<char> condition = std::nullopt) const;
  bool complete(Stage s, std::optional<char> condition = std::nullopt) const;

  // Runs one stage. Throws MissingDependency naming the first absent
  // prerequisite and Error when the stage directory is already in use.
  void execute(Stage s, std::optional<char> condition = std::nullopt);
  // Runs every stage (each configured condition for per-condition stages),
  // skipping stages that already completed.
  void execute_all();

 private:
  void require(Stage s, std::optional<char> condition = std::nullopt) const;
  Manifest pool(const std::string& name) const;
  std::map<std::string, Manifest> training_pools(char condition) const;

  // Stage bodies; each returns a summary stored in the stage marker.
  nlohmann::json ingest(const std::filesystem::path& out);
  nlohmann::json train_bulk(const std::filesystem::path& out);
  nlohmann::json generate_nevus(const std::filesystem::path& out);
  nlohmann::json train_transfer(const std::filesystem::path& out);
  nlohmann::json apply_transfer(const std::filesystem::path& out);
  nlohmann::json build_dataset(const std::filesystem::path& out, char condition);
  nlohmann::json train_apn(const std::filesystem::path& out, char condition);
  nlohmann::json train_grader(const std::filesystem::path& out);
  nlohmann::json eval_apn(const std::filesystem::path& out, char condition);
  nlohmann::json eval_grading(const std::filesystem::path& out);
  nlohmann::json report(const std::filesystem::path& out);

  RunConfig cfg_;
  std::string hash_;
  std::filesystem::path dir_;
};

// Names of the report files written by the report stage.
inline constexpr const char* kMetricsCsv = "metrics.csv";
inline constexpr const char* kRocCsv = "roc.csv";
inline constexpr const char* kHistogramCsv = "score_histogram.csv";
inline constexpr const char* kSummaryJson = "summary.json";

}  // namespace bpa::pipeline
