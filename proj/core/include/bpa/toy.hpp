#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bpa/image.hpp"
#include "bpa/manifest.hpp"
#include "bpa/rng.hpp"

// Procedural stand-ins for dermoscopy pools: smooth pigmented blobs on a skin
// background, optionally overlaid with a dark mesh (the structure of interest)
// or rendered as irregular multi-coloured lesions.
namespace bpa::toy {

enum class LesionKind {
  kPlain,     // regular blob, no mesh
  kMesh,      // regular blob with a pigment mesh
  kMalignant  // irregular outline, mesh, blue-white veil
};

struct RenderOptions {
  int64_t size = 32;
  bool hair = false;
};

// Renders one lesion in the unit range.
ImageTensor render(LesionKind kind, Rng& rng, const RenderOptions& options = {});

// Flags hair when enough near-black pixels are present. Only meaningful for
// procedural images, where lesion pigment never gets that dark.
ArtifactSet heuristic_artifact_flags(const ImageTensor& img);

struct PoolSpec {
  std::string name;
  LesionKind kind = LesionKind::kPlain;
  int64_t count = 0;
  double hair_fraction = 0.0;
  std::optional<bool> label_structure;
  std::optional<Diagnosis> label_diagnosis;
};

struct CorpusSpec {
  int64_t size = 32;
  uint64_t seed = 0;
  std::vector<PoolSpec> pools;
};

// Pools consumed by the desk pipeline, with the given per-pool counts.
CorpusSpec default_corpus(uint64_t seed, int64_t size = 32);

// Writes each pool to <dir>/<pool>/ as PNG files plus a labels.json that
// `ingest` understands. Returns the pool directories in spec order.
std::vector<std::filesystem::path> write_corpus(const std::filesystem::path& dir, const CorpusSpec& spec);

}  // namespace bpa::toy
