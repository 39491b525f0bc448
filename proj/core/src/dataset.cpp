#include "bpa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <unordered_set>

#include "bpa/error.hpp"
#include "bpa/hash.hpp"
#include "bpa/log.hpp"
#include "bpa/rng.hpp"
#include "bpa/toy.hpp"

namespace fs = std::filesystem;

namespace bpa::data {
namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff";
}

std::map<std::string, ArtifactSet> load_sidecar(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open artifact sidecar " + path.string());
  nlohmann::json j = nlohmann::json::parse(is);
  std::map<std::string, ArtifactSet> out;
  for (const auto& [name, flags] : j.items()) {
    ArtifactSet s;
    for (const auto& f : flags) s.insert(parse_artifact_flag(f.get<std::string>()));
    out.emplace(name, std::move(s));
  }
  return out;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

LabelSpec load_label_spec(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open label spec " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed label spec " + path.string() + ": " + e.what());
  }
  LabelSpec spec;
  spec.pool = j.value("pool", std::string{});
  if (auto it = j.find("label_structure"); it != j.end() && !it->is_null()) spec.label_structure = it->get<bool>();
  if (auto it = j.find("label_diagnosis"); it != j.end() && !it->is_null()) {
    spec.label_diagnosis = parse_diagnosis(it->get<std::string>());
  }
  if (auto it = j.find("artifact_sidecar"); it != j.end() && !it->is_null()) {
    fs::path p = it->get<std::string>();
    spec.artifact_sidecar = p.is_absolute() ? p : path.parent_path() / p;
  }
  spec.heuristic_artifact_flags = j.value("heuristic_artifact_flags", false);
  return spec;
}

Manifest ingest(const fs::path& dir, const LabelSpec& labels, const IngestOptions& options,
                std::vector<std::string>* skipped) {
  if (!fs::is_directory(dir)) throw DataError("ingest: not a directory: " + dir.string());
  if (options.target_resolution <= 0) throw DataError("ingest: target resolution must be positive");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::map<std::string, ArtifactSet> sidecar;
  if (labels.artifact_sidecar) sidecar = load_sidecar(*labels.artifact_sidecar);

  fs::create_directories(options.output_dir);
  Manifest out;
  std::unordered_set<std::string> seen;
  for (const auto& file : files) {
    const std::string bytes = read_bytes(file);
    ImageTensor img;
    try {
      img = decode_image(bytes, PixelRange::kUnit);
    } catch (const DataError&) {
      log::warn("ingest: skipping undecodable file " + file.string());
      if (skipped) skipped->push_back(file.string());
      continue;
    }
    ManifestRecord r;
    r.id = sha256_hex(bytes);
    if (!seen.insert(r.id).second) {
      log::warn("ingest: duplicate content " + file.filename().string() + " (id " + r.id.substr(0, 12) + ")");
      continue;
    }
    img = crop_and_resize(img, options.target_resolution);
    const fs::path dest = fs::absolute(options.output_dir / (r.id + ".png"));
    write_png(dest, img);
    r.path = dest.string();
    r.label_structure = labels.label_structure;
    r.label_diagnosis = labels.label_diagnosis;
    r.provenance = Provenance::kReal;
    if (!labels.pool.empty()) r.pool = labels.pool;
    if (auto it = sidecar.find(file.filename().string()); it != sidecar.end()) r.artifact_flags = it->second;
    if (labels.heuristic_artifact_flags) {
      for (auto f : toy::heuristic_artifact_flags(img)) r.artifact_flags.insert(f);
    }
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

Manifest filter_artifacts(const Manifest& m, const ArtifactSet& excluded) {
  Manifest out;
  for (const auto& r : m) {
    const bool hit = std::any_of(r.artifact_flags.begin(), r.artifact_flags.end(),
                                 [&](ArtifactFlag f) { return excluded.contains(f); });
    if (!hit) out.push_back(r);
  }
  return out;
}

bool pool_is_positive(const std::string& pool) {
  if (pool == pools::kApn || pool == pools::kApnNevus || pool == pools::kApnNevusG) return true;
  if (pool == pools::kNevus || pool == pools::kNevusG) return false;
  throw DataError("unknown pool '" + pool + "'");
}

bool pool_is_real(const std::string& pool) { return pool == pools::kNevus || pool == pools::kApn; }

int64_t TrainingCondition::total() const {
  int64_t t = 0;
  for (const auto& [_, n] : counts) t += n;
  return t;
}

int64_t TrainingCondition::count_of(const std::string& pool) const {
  for (const auto& [name, n] : counts) {
    if (name == pool) return n;
  }
  return 0;
}

TrainingCondition training_condition(char id) {
  using namespace pools;
  switch (id) {
    case 'A':
      return {'A', "baseline", {{kNevus, 10000}, {kApn, 230}}};
    case 'B':
      return {'B', "CycleGAN", {{kNevus, 10000}, {kApn, 230}, {kApnNevus, 10000}}};
    case 'C':
      return {'C', "simplified BPA", {{kNevus, 10000}, {kApn, 230}, {kApnNevusG, 10000}}};
    case 'D':
      return {'D', "BPA", {{kNevus, 10000}, {kNevusG, 10000}, {kApn, 230}, {kApnNevusG, 20000}}};
    default:
      throw DataError(std::string("unknown training condition '") + id + "'");
  }
}

TrainingCondition scale_condition(const TrainingCondition& c, double factor) {
  if (!(factor > 0.0)) throw DataError("condition scale factor must be positive");
  TrainingCondition out = c;
  for (auto& [_, n] : out.counts) {
    if (n > 0) n = std::max<int64_t>(1, std::llround(static_cast<double>(n) * factor));
  }
  return out;
}

Manifest build_condition(const TrainingCondition& condition, const std::map<std::string, Manifest>& pool_map,
                         uint64_t seed, const TopUp& top_up) {
  Manifest out;
  out.reserve(static_cast<size_t>(condition.total()));
  std::unordered_set<std::string> ids;
  for (const auto& [pool, count] : condition.counts) {
    const bool positive = pool_is_positive(pool);
    Manifest source;
    if (auto it = pool_map.find(pool); it != pool_map.end()) source = it->second;
    if (static_cast<int64_t>(source.size()) < count) {
      if (pool_is_real(pool) || !top_up) throw DataError("insufficient pool: " + pool);
      Manifest extra = top_up(pool, count - static_cast<int64_t>(source.size()));
      source.insert(source.end(), extra.begin(), extra.end());
      if (static_cast<int64_t>(source.size()) < count) throw DataError("insufficient pool: " + pool);
    }
    Rng rng(derive_seed(seed, "condition/" + pool));
    const auto order = rng.permutation(source.size());
    for (int64_t i = 0; i < count; ++i) {
      ManifestRecord r = source[order[static_cast<size_t>(i)]];
      r.label_structure = positive;
      r.pool = pool;
      if (!ids.insert(r.id).second) {
        throw DataError("duplicate id " + r.id + " in condition " + std::string(1, condition.id));
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::pair<Manifest, Manifest> stratified_split(const Manifest& m, const std::function<bool(const ManifestRecord&)>& label,
                                               int64_t held_out_per_class, uint64_t seed) {
  std::vector<size_t> pos, neg;
  for (size_t i = 0; i < m.size(); ++i) (label(m[i]) ? pos : neg).push_back(i);
  if (static_cast<int64_t>(pos.size()) < held_out_per_class || static_cast<int64_t>(neg.size()) < held_out_per_class) {
    throw DataError("stratified_split: not enough records to hold out " + std::to_string(held_out_per_class) +
                    " per class");
  }
  Rng rng(derive_seed(seed, "split"));
  std::set<size_t> held;
  for (auto* group : {&pos, &neg}) {
    const auto order = rng.permutation(group->size());
    for (int64_t i = 0; i < held_out_per_class; ++i) held.insert((*group)[order[static_cast<size_t>(i)]]);
  }
  Manifest keep, out;
  for (size_t i = 0; i < m.size(); ++i) (held.contains(i) ? out : keep).push_back(m[i]);
  return {std::move(keep), std::move(out)};
}

ImageTensor load_record_image(const ManifestRecord& r, PixelRange range) {
  try {
    return read_image(r.path, range);
  } catch (const DataError& e) {
    throw DataError("record " + r.id + ": " + e.what());
  }
}

}  // namespace bpa::data
