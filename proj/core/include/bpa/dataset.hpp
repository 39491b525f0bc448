#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bpa/image.hpp"
#include "bpa/manifest.hpp"

namespace bpa::data {

// Labels applied to every image of an ingested directory. Loaded from a
// key-value JSON file, e.g. {"pool": "nevus", "label_diagnosis": "nevus"}.
struct LabelSpec {
  std::string pool;
  std::optional<bool> label_structure;
  std::optional<Diagnosis> label_diagnosis;
  // JSON object mapping file name -> list of artifact flags.
  std::optional<std::filesystem::path> artifact_sidecar;
  // Apply the toy-corpus heuristic flagger (procedural data only).
  bool heuristic_artifact_flags = false;
};

LabelSpec load_label_spec(const std::filesystem::path& path);

struct IngestOptions {
  int64_t target_resolution = 256;
  // Resized images are written here as <id>.png.
  std::filesystem::path output_dir;
};

// Reads every image file of `dir` (sorted by name), center-crops and scales it
// to the target resolution, and returns one record per decodable file. Ids are
// SHA-256 hashes of the source bytes. Undecodable files are skipped and
// reported in `skipped`.
Manifest ingest(const std::filesystem::path& dir, const LabelSpec& labels, const IngestOptions& options,
                std::vector<std::string>* skipped = nullptr);

// Drops records whose artifact flags intersect `excluded`.
Manifest filter_artifacts(const Manifest& m, const ArtifactSet& excluded);

// Pool names used by the training conditions.
namespace pools {
inline constexpr const char* kNevus = "nevus";
inline constexpr const char* kNevusG = "nevusG";
inline constexpr const char* kApn = "APN";
inline constexpr const char* kApnNevus = "APN_nevus";
inline constexpr const char* kApnNevusG = "APN_nevusG";
}  // namespace pools

// Structure label implied by a pool name (positive for the APN pools).
bool pool_is_positive(const std::string& pool);
// Real pools must be stocked; generated pools may be topped up on demand.
bool pool_is_real(const std::string& pool);

struct TrainingCondition {
  char id = 'A';
  std::string name;
  // Pool name -> number of records drawn, in a fixed pool order.
  std::vector<std::pair<std::string, int64_t>> counts;

  int64_t total() const;
  int64_t count_of(const std::string& pool) const;
};

// The four dataset recipes at full size (A baseline, B CycleGAN, C simplified
// BPA, D BPA).
TrainingCondition training_condition(char id);
// Scales every count by `factor`, rounding to nearest and keeping nonzero
// pools at >= 1.
TrainingCondition scale_condition(const TrainingCondition& c, double factor);

// Supplies `needed` more records for a generated pool that is short.
using TopUp = std::function<Manifest(const std::string& pool, int64_t needed)>;

// Samples each pool without replacement (deterministic under seed) and labels
// records by pool. Throws DataError("insufficient pool: <name>") when a pool
// cannot supply its count.
Manifest build_condition(const TrainingCondition& condition, const std::map<std::string, Manifest>& pools,
                         uint64_t seed, const TopUp& top_up = {});

// Deterministic split into (remaining, held_out) taking `held_out_per_class`
// records of each class as decided by `label`.
std::pair<Manifest, Manifest> stratified_split(const Manifest& m, const std::function<bool(const ManifestRecord&)>& label,
                                               int64_t held_out_per_class, uint64_t seed);

// Loads a record's image at its stored resolution.
ImageTensor load_record_image(const ManifestRecord& r, PixelRange range);

}  // namespace bpa::data
