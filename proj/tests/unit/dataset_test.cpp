#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>

#include "bpa/dataset.hpp"
#include "bpa/error.hpp"
#include "bpa/hash.hpp"
#include "bpa/image.hpp"
#include "bpa/manifest.hpp"
#include "temp_dir.hpp"

using namespace bpa;
using bpa::testing::TempDir;

namespace {

Manifest stub_pool(const std::string& pool, int64_t n, Provenance provenance = Provenance::kReal) {
  Manifest m;
  for (int64_t i = 0; i < n; ++i) {
    ManifestRecord r;
    r.id = sha256_hex(pool + "/" + std::to_string(i));
    r.path = "/stub/" + r.id + ".png";
    r.provenance = provenance;
    if (provenance == Provenance::kGeneratedPhase2) r.source_id = sha256_hex("base/" + std::to_string(i));
    r.pool = pool;
    m.push_back(std::move(r));
  }
  return m;
}

std::map<std::string, Manifest> full_pools() {
  using namespace data::pools;
  return {{kNevus, stub_pool(kNevus, 12000)},
          {kApn, stub_pool(kApn, 230)},
          {kNevusG, stub_pool(kNevusG, 20000, Provenance::kGeneratedPhase1)},
          {kApnNevus, stub_pool(kApnNevus, 10000, Provenance::kGeneratedPhase2)},
          {kApnNevusG, stub_pool(kApnNevusG, 20000, Provenance::kGeneratedPhase2)}};
}

std::map<std::string, int64_t> pool_counts(const Manifest& m) {
  std::map<std::string, int64_t> out;
  for (const auto& r : m) out[r.pool.value()]++;
  return out;
}

ImageTensor solid(int64_t h, int64_t w, double value) { return ImageTensor(h, w, PixelRange::kUnit, value); }

}  // namespace

TEST(Manifest, JsonLineRoundTrip) {
  ManifestRecord r;
  r.id = sha256_hex("x");
  r.path = "/data/x.png";
  r.label_structure = true;
  r.label_diagnosis = Diagnosis::kMelanoma;
  r.provenance = Provenance::kGeneratedPhase2;
  r.source_id = sha256_hex("y");
  r.artifact_flags = {ArtifactFlag::kHair, ArtifactFlag::kPen};
  r.pool = "APN_nevusG";
  ChecklistAssessment c;
  c.atypical_pigment_network = true;
  r.checklist = c;
  EXPECT_EQ(parse_json_line(to_json_line(r)), r);

  ManifestRecord bare;
  bare.id = sha256_hex("z");
  bare.path = "z.png";
  EXPECT_EQ(parse_json_line(to_json_line(bare)), bare);
}

TEST(Manifest, FileRoundTrip) {
  TempDir dir;
  const Manifest m = stub_pool("nevus", 25);
  write_manifest(dir / "m.jsonl", m);
  EXPECT_EQ(read_manifest(dir / "m.jsonl"), m);
}

TEST(Manifest, ValidationRejectsBadRecords) {
  ManifestRecord r;
  r.id = "NotHex";
  EXPECT_THROW(r.validate(), DataError);
  r.id = sha256_hex("a");
  r.provenance = Provenance::kGeneratedPhase2;
  EXPECT_THROW(r.validate(), DataError);
  r.provenance = Provenance::kReal;
  r.source_id = sha256_hex("b");
  EXPECT_THROW(r.validate(), DataError);
  EXPECT_ANY_THROW(parse_json_line("{\"id\": 3}"));
}

TEST(Conditions, FullProfileCounts) {
  using namespace data::pools;
  const auto pools = full_pools();
  const std::map<char, std::map<std::string, int64_t>> expected = {
      {'A', {{kNevus, 10000}, {kApn, 230}}},
      {'B', {{kNevus, 10000}, {kApn, 230}, {kApnNevus, 10000}}},
      {'C', {{kNevus, 10000}, {kApn, 230}, {kApnNevusG, 10000}}},
      {'D', {{kNevus, 10000}, {kNevusG, 10000}, {kApn, 230}, {kApnNevusG, 20000}}},
  };
  for (const auto& [id, counts] : expected) {
    const Manifest m = data::build_condition(data::training_condition(id), pools, 7);
    EXPECT_EQ(pool_counts(m), counts) << "condition " << id;
    std::set<std::string> ids;
    for (const auto& r : m) {
      ids.insert(r.id);
      EXPECT_EQ(r.label_structure.value(), data::pool_is_positive(*r.pool));
    }
    EXPECT_EQ(ids.size(), m.size());
  }
  EXPECT_EQ(data::training_condition('A').total(), 10230);
}

TEST(Conditions, DeterministicGivenSeed) {
  const auto pools = full_pools();
  const auto cond = data::training_condition('C');
  EXPECT_EQ(data::build_condition(cond, pools, 3), data::build_condition(cond, pools, 3));
  EXPECT_NE(data::build_condition(cond, pools, 3), data::build_condition(cond, pools, 4));
}

TEST(Conditions, ScaledCounts) {
  const auto d = data::scale_condition(data::training_condition('D'), 0.05);
  EXPECT_EQ(d.count_of(data::pools::kNevus), 500);
  EXPECT_EQ(d.count_of(data::pools::kApn), 12);
  EXPECT_EQ(d.count_of(data::pools::kNevusG), 500);
  EXPECT_EQ(d.count_of(data::pools::kApnNevusG), 1000);
  const auto tiny = data::scale_condition(data::training_condition('A'), 1e-6);
  EXPECT_EQ(tiny.count_of(data::pools::kApn), 1);
  EXPECT_THROW(data::scale_condition(d, 0.0), DataError);
}

TEST(Conditions, InsufficientRealPoolNamesThePool) {
  auto pools = full_pools();
  pools[data::pools::kApn] = stub_pool(data::pools::kApn, 100);
  try {
    data::build_condition(data::training_condition('A'), pools, 0);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_STREQ(e.what(), "insufficient pool: APN");
  }
}

TEST(Conditions, GeneratedPoolsTopUp) {
  auto pools = full_pools();
  pools[data::pools::kApnNevusG] = stub_pool(data::pools::kApnNevusG, 15000, Provenance::kGeneratedPhase2);
  EXPECT_THROW(data::build_condition(data::training_condition('D'), pools, 0), DataError);
  int64_t requested = 0;
  const data::TopUp top_up = [&](const std::string& pool, int64_t needed) {
    requested = needed;
    Manifest extra = stub_pool(pool + "-extra", needed, Provenance::kGeneratedPhase2);
    for (auto& r : extra) r.pool = pool;
    return extra;
  };
  const Manifest m = data::build_condition(data::training_condition('D'), pools, 0, top_up);
  EXPECT_EQ(requested, 5000);
  EXPECT_EQ(pool_counts(m)[data::pools::kApnNevusG], 20000);
}

TEST(Conditions, DuplicateIdsRejected) {
  auto pools = full_pools();
  pools[data::pools::kApnNevus] = stub_pool(data::pools::kNevus, 10000, Provenance::kGeneratedPhase2);
  EXPECT_THROW(data::build_condition(data::training_condition('B'), pools, 0), DataError);
}

TEST(Conditions, UnknownConditionRejected) { EXPECT_THROW(data::training_condition('E'), DataError); }

TEST(Dataset, FilterArtifacts) {
  Manifest m = stub_pool("nevus", 4);
  m[1].artifact_flags = {ArtifactFlag::kHair};
  m[2].artifact_flags = {ArtifactFlag::kPen, ArtifactFlag::kMeasure};
  EXPECT_EQ(data::filter_artifacts(m, {}).size(), 4u);
  const Manifest no_hair = data::filter_artifacts(m, {ArtifactFlag::kHair});
  ASSERT_EQ(no_hair.size(), 3u);
  EXPECT_EQ(no_hair[1].id, m[2].id);
  EXPECT_EQ(data::filter_artifacts(m, {ArtifactFlag::kHair, ArtifactFlag::kMeasure}).size(), 2u);
}

TEST(Dataset, StratifiedSplit) {
  Manifest m = stub_pool("p", 30);
  for (size_t i = 0; i < m.size(); ++i) m[i].label_diagnosis = i < 10 ? Diagnosis::kMelanoma : Diagnosis::kNevus;
  const auto is_mel = [](const ManifestRecord& r) { return r.label_diagnosis == Diagnosis::kMelanoma; };
  const auto [train, held] = data::stratified_split(m, is_mel, 4, 1);
  EXPECT_EQ(train.size(), 22u);
  EXPECT_EQ(held.size(), 8u);
  EXPECT_EQ(std::count_if(held.begin(), held.end(), is_mel), 4);
  EXPECT_THROW(data::stratified_split(m, is_mel, 11, 1), DataError);
}

TEST(Ingest, ResizesHashesAndSkips) {
  TempDir dir;
  const auto src = dir / "src";
  std::filesystem::create_directories(src);
  write_png(src / "a.png", solid(40, 60, 0.2));
  write_png(src / "b.png", solid(64, 64, 0.7));
  std::filesystem::copy_file(src / "b.png", src / "b_copy.png");
  std::ofstream(src / "broken.png") << "not an image";
  std::ofstream(src / "notes.txt") << "ignored";

  data::LabelSpec labels;
  labels.pool = "nevus";
  labels.label_structure = false;
  labels.label_diagnosis = Diagnosis::kNevus;
  std::vector<std::string> skipped;
  const Manifest m = data::ingest(src, labels, {32, dir / "out"}, &skipped);

  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(skipped.size(), 1u);
  for (const auto& r : m) {
    EXPECT_NO_THROW(r.validate());
    EXPECT_EQ(r.provenance, Provenance::kReal);
    EXPECT_EQ(r.pool.value(), "nevus");
    EXPECT_EQ(r.label_structure, std::optional<bool>(false));
    const ImageTensor img = read_image(r.path, PixelRange::kUnit);
    EXPECT_EQ(img.height(), 32);
    EXPECT_EQ(img.width(), 32);
  }
  EXPECT_EQ(m[0].id, sha256_file(src / "a.png"));
  EXPECT_THROW(data::ingest(dir / "missing", labels, {32, dir / "out2"}), DataError);
}

TEST(Ingest, LabelSpecFromJson) {
  TempDir dir;
  std::ofstream(dir / "labels.json") << R"({"pool": "APN", "label_structure": true, "label_diagnosis": null})";
  const auto spec = data::load_label_spec(dir / "labels.json");
  EXPECT_EQ(spec.pool, "APN");
  EXPECT_EQ(spec.label_structure, std::optional<bool>(true));
  EXPECT_FALSE(spec.label_diagnosis.has_value());
  EXPECT_FALSE(spec.heuristic_artifact_flags);
}
