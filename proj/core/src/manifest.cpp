#include "bpa/manifest.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "bpa/error.hpp"

namespace bpa {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kReal:
      return "real";
    case Provenance::kGeneratedPhase1:
      return "generated_phase1";
    case Provenance::kGeneratedPhase2:
      return "generated_phase2";
  }
  return "real";
}

std::string_view to_string(Diagnosis d) { return d == Diagnosis::kNevus ? "nevus" : "melanoma"; }

std::string_view to_string(ArtifactFlag f) {
  switch (f) {
    case ArtifactFlag::kHair:
      return "hair";
    case ArtifactFlag::kMeasure:
      return "measure";
    case ArtifactFlag::kPen:
      return "pen";
    case ArtifactFlag::kAcral:
      return "acral";
  }
  return "hair";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "real") return Provenance::kReal;
  if (s == "generated_phase1") return Provenance::kGeneratedPhase1;
  if (s == "generated_phase2") return Provenance::kGeneratedPhase2;
  throw DataError("unknown provenance '" + std::string(s) + "'");
}

Diagnosis parse_diagnosis(std::string_view s) {
  if (s == "nevus") return Diagnosis::kNevus;
  if (s == "melanoma") return Diagnosis::kMelanoma;
  throw DataError("unknown diagnosis '" + std::string(s) + "'");
}

ArtifactFlag parse_artifact_flag(std::string_view s) {
  if (s == "hair") return ArtifactFlag::kHair;
  if (s == "measure") return ArtifactFlag::kMeasure;
  if (s == "pen") return ArtifactFlag::kPen;
  if (s == "acral") return ArtifactFlag::kAcral;
  throw DataError("unknown artifact flag '" + std::string(s) + "'");
}

void ManifestRecord::validate() const {
  if (id.empty() || id.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw DataError("record id '" + id + "' is not a lowercase hex hash");
  }
  if (provenance == Provenance::kGeneratedPhase2 && !source_id) {
    throw DataError("record " + id + ": generated_phase2 requires source_id");
  }
  if (provenance == Provenance::kReal && source_id) {
    throw DataError("record " + id + ": real record must not carry source_id");
  }
}

std::string to_json_line(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["path"] = r.path;
  j["label_structure"] = r.label_structure ? nlohmann::ordered_json(*r.label_structure) : nlohmann::ordered_json(nullptr);
  j["label_diagnosis"] = r.label_diagnosis ? nlohmann::ordered_json(to_string(*r.label_diagnosis)) : nlohmann::ordered_json(nullptr);
  j["provenance"] = to_string(r.provenance);
  j["source_id"] = r.source_id ? nlohmann::ordered_json(*r.source_id) : nlohmann::ordered_json(nullptr);
  j["artifact_flags"] = nlohmann::ordered_json::array();
  for (auto f : r.artifact_flags) j["artifact_flags"].push_back(to_string(f));
  if (r.pool) j["pool"] = *r.pool;
  if (r.checklist) j["checklist"] = nlohmann::json(*r.checklist);
  return j.dump();
}

ManifestRecord parse_json_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest line: ") + e.what());
  }
  try {
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    if (auto it = j.find("label_structure"); it != j.end() && !it->is_null()) r.label_structure = it->get<bool>();
    if (auto it = j.find("label_diagnosis"); it != j.end() && !it->is_null()) {
      r.label_diagnosis = parse_diagnosis(it->get<std::string>());
    }
    r.provenance = parse_provenance(j.at("provenance").get<std::string>());
    if (auto it = j.find("source_id"); it != j.end() && !it->is_null()) r.source_id = it->get<std::string>();
    if (auto it = j.find("artifact_flags"); it != j.end()) {
      for (const auto& f : *it) r.artifact_flags.insert(parse_artifact_flag(f.get<std::string>()));
    }
    if (auto it = j.find("pool"); it != j.end() && !it->is_null()) r.pool = it->get<std::string>();
    if (auto it = j.find("checklist"); it != j.end() && !it->is_null()) r.checklist = it->get<ChecklistAssessment>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid manifest record: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write manifest " + path.string());
  for (const auto& r : m) os << to_json_line(r) << '\n';
  if (!os) throw Error("failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      m.push_back(parse_json_line(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

}  // namespace bpa
