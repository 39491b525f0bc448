#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "bpa/checklist.hpp"

namespace bpa {

enum class Provenance { kReal, kGeneratedPhase1, kGeneratedPhase2 };
enum class Diagnosis { kNevus, kMelanoma };
enum class ArtifactFlag { kHair, kMeasure, kPen, kAcral };

using ArtifactSet = std::set<ArtifactFlag>;

std::string_view to_string(Provenance p);
std::string_view to_string(Diagnosis d);
std::string_view to_string(ArtifactFlag f);
Provenance parse_provenance(std::string_view s);
Diagnosis parse_diagnosis(std::string_view s);
ArtifactFlag parse_artifact_flag(std::string_view s);

// One image's identity, labels and provenance. Serialized as one JSON line.
struct ManifestRecord {
  std::string id;  // lowercase hex content hash
  std::string path;
  std::optional<bool> label_structure;
  std::optional<Diagnosis> label_diagnosis;
  Provenance provenance = Provenance::kReal;
  std::optional<std::string> source_id;
  ArtifactSet artifact_flags;
  // Pool this record was assigned to (nevus, nevusG, APN, ...), when known.
  std::optional<std::string> pool;
  std::optional<ChecklistAssessment> checklist;

  // Throws DataError when provenance and source_id disagree or id is malformed.
  void validate() const;

  bool operator==(const ManifestRecord&) const = default;
};

using Manifest = std::vector<ManifestRecord>;

std::string to_json_line(const ManifestRecord& r);
ManifestRecord parse_json_line(std::string_view line);

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace bpa
