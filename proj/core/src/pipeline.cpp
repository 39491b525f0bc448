#include "bpa/pipeline.hpp"

#include <fmt/format.h>

#include <chrono>
#include <fstream>
#include <limits>

#include "bpa/dataset.hpp"
#include "bpa/error.hpp"
#include "bpa/hash.hpp"
#include "bpa/log.hpp"
#include "bpa/rng.hpp"
#include "bpa/toy.hpp"
#include "json_fields.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bpa::pipeline {
namespace {

constexpr const char* kMarker = "stage.json";

template <typename T>
void read_section(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (it->is_object() && it->contains("seed")) {
    throw ConfigError(std::string(key) + ".seed", "stage seeds derive from the top-level seed");
  }
  try {
    from_json(*it, out);
  } catch (const ConfigError& e) {
    detail::rethrow_nested(key, e);
  }
}

template <typename T>
void validate_section(const char* key, const T& section) {
  try {
    section.validate();
  } catch (const ConfigError& e) {
    detail::rethrow_nested(key, e);
  }
}

json without_seed(json j) {
  j.erase("seed");
  return j;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  os << j.dump(2) << '\n';
  if (!os) throw Error("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw Error("malformed " + path.string() + ": " + e.what());
  }
}

Manifest concat(Manifest a, const Manifest& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<ImageTensor> load_images(const Manifest& m) {
  std::vector<ImageTensor> out;
  out.reserve(m.size());
  for (const auto& r : m) out.push_back(data::load_record_image(r, PixelRange::kUnit));
  return out;
}

// Producing stage of each pool a run reads.
Stage producer(const std::string& pool) {
  if (pool == data::pools::kNevusG) return Stage::kGenerateNevus;
  if (pool == data::pools::kApnNevus || pool == data::pools::kApnNevusG) return Stage::kApplyTransfer;
  return Stage::kIngest;
}

std::string condition_label(const data::TrainingCondition& c) {
  std::string pools;
  for (const auto& [pool, n] : c.counts) {
    if (n == 0) continue;
    if (!pools.empty()) pools += '+';
    pools += pool;
  }
  return fmt::format("{}: {}", c.id, pools);
}

const std::vector<std::string>& required_pools() {
  static const std::vector<std::string> names = {data::pools::kNevus, data::pools::kApn,    roles::kEvalNevus,
                                                 roles::kEvalApn,     roles::kGraderNevus, roles::kGraderMelanoma};
  return names;
}

json confusion_json(const eval::ConfusionMetrics& m) {
  return {{"tp", m.tp},         {"fp", m.fp},     {"tn", m.tn},
          {"fn", m.fn},         {"accuracy", m.accuracy}, {"recall", m.recall},
          {"precision", m.precision}, {"specificity", m.specificity}, {"f1", m.f1},
          {"degenerate", m.degenerate}};
}

eval::ConfusionMetrics confusion_from_json(const json& j) {
  eval::ConfusionMetrics m;
  m.tp = j.at("tp");
  m.fp = j.at("fp");
  m.tn = j.at("tn");
  m.fn = j.at("fn");
  m.accuracy = j.at("accuracy");
  m.recall = j.at("recall");
  m.precision = j.at("precision");
  m.specificity = j.at("specificity");
  m.f1 = j.at("f1");
  m.degenerate = j.at("degenerate");
  return m;
}

class StageTimer {
 public:
  explicit StageTimer(std::string name) : name_(std::move(name)), start_(std::chrono::steady_clock::now()) {
    log::info("stage " + name_ + ": start");
  }
  ~StageTimer() {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start_;
    log::info(fmt::format("stage {}: {:.1f} s", name_, dt.count()));
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

// ------------------------------------------------------------------ config

uint64_t RunConfig::stage_seed(std::string_view stage) const {
  if (!seed) throw ConfigError("seed", "must be set explicitly");
  return derive_seed(*seed, "run/" + std::string(stage));
}

std::string RunConfig::hash() const {
  json j = *this;
  j.erase("seed");
  j.erase("output_root");
  return sha256_hex(j.dump());
}

fs::path RunConfig::run_dir() const {
  if (!seed) throw ConfigError("seed", "must be set explicitly");
  return output_root / fmt::format("{}-s{}", hash().substr(0, 12), *seed);
}

void RunConfig::validate() const {
  if (!seed) throw ConfigError("seed", "must be set explicitly");
  if (profile != "desk" && profile != "full") throw ConfigError("profile", "must be \"desk\" or \"full\"");
  if (toy_corpus.has_value() == !pool_dirs.empty()) {
    throw ConfigError("pool_dirs", "exactly one of toy_corpus and pool_dirs must be given");
  }
  if (toy_corpus) {
    if (toy_corpus->size < 8) throw ConfigError("toy_corpus.size", "must be at least 8");
    const auto defaults = toy::default_corpus(0, toy_corpus->size);
    for (const auto& [name, n] : toy_corpus->counts) {
      const bool known = std::any_of(defaults.pools.begin(), defaults.pools.end(),
                                     [&](const toy::PoolSpec& p) { return p.name == name; });
      if (!known) throw ConfigError("toy_corpus.counts." + name, "unknown toy pool");
      if (n < 0) throw ConfigError("toy_corpus.counts." + name, "must be nonnegative");
    }
  } else {
    for (const auto& name : required_pools()) {
      if (!pool_dirs.count(name)) throw ConfigError("pool_dirs." + name, "required pool is missing");
    }
    for (const auto& [name, dir] : pool_dirs) {
      if (!fs::is_directory(dir)) throw ConfigError("pool_dirs." + name, "not a directory: " + dir.string());
      if (!fs::exists(dir / "labels.json")) throw ConfigError("pool_dirs." + name, "no labels.json in " + dir.string());
    }
  }
  if (resolution < 8) throw ConfigError("resolution", "must be at least 8");
  validate_section("bulk", bulk);
  if (bulk.target_resolution != resolution) throw ConfigError("bulk.target_resolution", "must equal resolution");
  if (generate_count < 0) throw ConfigError("generate_count", "must be nonnegative");
  validate_section("transfer", transfer);
  if (conditions.empty()) throw ConfigError("conditions", "must name at least one condition");
  for (size_t i = 0; i < conditions.size(); ++i) {
    const char c = conditions[i];
    if (c < 'A' || c > 'D') throw ConfigError("conditions", std::string("unknown condition '") + c + "'");
    if (conditions.find(c) != i) throw ConfigError("conditions", std::string("duplicate condition '") + c + "'");
  }
  if (!(condition_scale > 0.0)) throw ConfigError("condition_scale", "must be positive");
  validate_section("detector", detector);
  validate_section("grader", grader);
  if (grader_held_out_per_class < 1) throw ConfigError("grader_held_out_per_class", "must be at least 1");
}

void to_json(json& j, const RunConfig& c) {
  j = json::object();
  j["profile"] = c.profile;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["output_root"] = c.output_root.string();
  if (c.toy_corpus) j["toy_corpus"] = {{"size", c.toy_corpus->size}, {"counts", c.toy_corpus->counts}};
  if (!c.pool_dirs.empty()) {
    json dirs = json::object();
    for (const auto& [name, dir] : c.pool_dirs) dirs[name] = dir.string();
    j["pool_dirs"] = dirs;
  }
  j["resolution"] = c.resolution;
  json flags = json::array();
  for (auto f : c.exclude_artifacts) flags.push_back(std::string(to_string(f)));
  j["exclude_artifacts"] = flags;
  j["bulk"] = without_seed(c.bulk);
  j["generate_count"] = c.generate_count;
  j["transfer"] = without_seed(c.transfer);
  j["conditions"] = c.conditions;
  j["condition_scale"] = c.condition_scale;
  j["detector"] = without_seed(c.detector);
  j["grader"] = without_seed(c.grader);
  j["grader_held_out_per_class"] = c.grader_held_out_per_class;
}

void from_json(const json& j, RunConfig& c) {
  detail::reject_unknown(j, {"profile", "seed", "output_root", "toy_corpus", "pool_dirs", "resolution",
                             "exclude_artifacts", "bulk", "generate_count", "transfer", "conditions", "condition_scale",
                             "detector", "grader", "grader_held_out_per_class"});
  detail::read_field(j, "profile", c.profile);
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || (!it->is_number_unsigned() && it->get<int64_t>() < 0)) {
      throw ConfigError("seed", "must be a nonnegative integer");
    }
    c.seed = it->get<uint64_t>();
  }
  std::string root;
  detail::read_field(j, "output_root", root);
  if (!root.empty()) c.output_root = root;
  if (auto it = j.find("toy_corpus"); it != j.end() && !it->is_null()) {
    try {
      detail::reject_unknown(*it, {"size", "counts"});
      ToyCorpusConfig toy;
      detail::read_field(*it, "size", toy.size);
      detail::read_field(*it, "counts", toy.counts);
      c.toy_corpus = toy;
    } catch (const ConfigError& e) {
      detail::rethrow_nested("toy_corpus", e);
    }
  }
  if (auto it = j.find("pool_dirs"); it != j.end() && !it->is_null()) {
    std::map<std::string, std::string> dirs;
    detail::read_field(j, "pool_dirs", dirs);
    c.pool_dirs.clear();
    for (const auto& [name, dir] : dirs) c.pool_dirs[name] = dir;
  }
  detail::read_field(j, "resolution", c.resolution);
  if (auto it = j.find("exclude_artifacts"); it != j.end()) {
    std::vector<std::string> names;
    detail::read_field(j, "exclude_artifacts", names);
    c.exclude_artifacts.clear();
    for (const auto& n : names) {
      try {
        c.exclude_artifacts.insert(parse_artifact_flag(n));
      } catch (const Error& e) {
        throw ConfigError("exclude_artifacts", e.what());
      }
    }
  }
  read_section(j, "bulk", c.bulk);
  detail::read_field(j, "generate_count", c.generate_count);
  read_section(j, "transfer", c.transfer);
  detail::read_field(j, "conditions", c.conditions);
  detail::read_field(j, "condition_scale", c.condition_scale);
  read_section(j, "detector", c.detector);
  read_section(j, "grader", c.grader);
  detail::read_field(j, "grader_held_out_per_class", c.grader_held_out_per_class);
}

void apply_overrides(json& j, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(o, "override must look like key.path=value");
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &j;
    size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw ConfigError(key, "empty path component");
      if (!node->is_object()) throw ConfigError(key, "parent is not an object");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      if (node->is_null()) *node = json::object();
      start = dot + 1;
    }
  }
}

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("", "cannot open config " + path.string());
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded()) throw ConfigError("", "config " + path.string() + " is not valid JSON");
  apply_overrides(j, overrides);
  RunConfig cfg = j.get<RunConfig>();
  // Relative pool directories resolve against the config file.
  for (auto& [_, dir] : cfg.pool_dirs) {
    if (dir.is_relative()) dir = path.parent_path() / dir;
  }
  cfg.validate();
  return cfg;
}

// ------------------------------------------------------------------ stages

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kIngest:
      return "ingest";
    case Stage::kTrainBulk:
      return "train-bulk";
    case Stage::kGenerateNevus:
      return "generate-nevus";
    case Stage::kTrainTransfer:
      return "train-transfer";
    case Stage::kApplyTransfer:
      return "apply-transfer";
    case Stage::kBuildDataset:
      return "build-dataset";
    case Stage::kTrainApn:
      return "train-apn";
    case Stage::kTrainGrader:
      return "train-grader";
    case Stage::kEvalApn:
      return "eval-apn";
    case Stage::kEvalGrading:
      return "eval-grading";
    case Stage::kReport:
      return "report";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  for (Stage st : all_stages()) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("stage", "unknown stage \"" + std::string(s) + "\"");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = {Stage::kIngest,       Stage::kTrainBulk,     Stage::kGenerateNevus,
                                            Stage::kTrainTransfer, Stage::kApplyTransfer, Stage::kBuildDataset,
                                            Stage::kTrainApn,     Stage::kTrainGrader,   Stage::kEvalApn,
                                            Stage::kEvalGrading,  Stage::kReport};
  return stages;
}

bool per_condition(Stage s) { return s == Stage::kBuildDataset || s == Stage::kTrainApn || s == Stage::kEvalApn; }

Run::Run(RunConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  cfg_.bulk.seed = cfg_.stage_seed("train-bulk");
  cfg_.transfer.seed = cfg_.stage_seed("train-transfer");
  cfg_.detector.seed = cfg_.stage_seed("train-apn");
  cfg_.grader.seed = cfg_.stage_seed("train-grader");
  hash_ = cfg_.hash();
  dir_ = cfg_.run_dir();
}

fs::path Run::stage_dir(Stage s, std::optional<char> condition) const {
  fs::path p = dir_ / std::string(to_string(s));
  if (per_condition(s)) {
    if (!condition) throw ConfigError("condition", std::string(to_string(s)) + " needs a condition");
    p /= std::string(1, *condition);
  }
  return p;
}

bool Run::complete(Stage s, std::optional<char> condition) const {
  return fs::exists(stage_dir(s, condition) / kMarker);
}

void Run::require(Stage s, std::optional<char> condition) const {
  if (!complete(s, condition)) {
    if (condition) log::error(fmt::format("stage {} has not run for condition {}", to_string(s), *condition));
    throw MissingDependency(std::string(to_string(s)));
  }
  const json marker = read_json(stage_dir(s, condition) / kMarker);
  if (marker.value("config_hash", std::string{}) != hash_) {
    throw Error(fmt::format("{} was produced under config hash {}, not {}", stage_dir(s, condition).string(),
                            marker.value("config_hash", std::string{"?"}), hash_));
  }
}

Manifest Run::pool(const std::string& name) const {
  const Stage s = producer(name);
  require(s);
  const fs::path path = stage_dir(s) / (name + ".jsonl");
  if (!fs::exists(path)) throw DataError("pool " + name + " was not produced by " + std::string(to_string(s)));
  return read_manifest(path);
}

std::map<std::string, Manifest> Run::training_pools(char condition) const {
  const auto cond = data::scale_condition(data::training_condition(condition), cfg_.condition_scale);
  std::map<std::string, Manifest> out;
  for (const auto& [name, n] : cond.counts) {
    if (n > 0) out[name] = pool(name);
  }
  return out;
}

void Run::execute(Stage s, std::optional<char> condition) {
  if (per_condition(s)) {
    if (!condition) throw ConfigError("condition", std::string(to_string(s)) + " needs a condition");
    if (cfg_.conditions.find(*condition) == std::string::npos) {
      throw ConfigError("condition", std::string("condition '") + *condition + "' is not configured");
    }
  } else if (condition) {
    throw ConfigError("condition", std::string(to_string(s)) + " does not take a condition");
  }
  const fs::path out = stage_dir(s, condition);
  if (fs::exists(out) && !fs::is_empty(out)) throw Error("stage directory already in use: " + out.string());
  fs::create_directories(out);
  if (!fs::exists(dir_ / "config.json")) write_json(dir_ / "config.json", cfg_);

  const std::string name = std::string(to_string(s)) + (condition ? std::string("/") + *condition : "");
  json summary;
  {
    StageTimer timer(name);
    switch (s) {
      case Stage::kIngest:
        summary = ingest(out);
        break;
      case Stage::kTrainBulk:
        summary = train_bulk(out);
        break;
      case Stage::kGenerateNevus:
        summary = generate_nevus(out);
        break;
      case Stage::kTrainTransfer:
        summary = train_transfer(out);
        break;
      case Stage::kApplyTransfer:
        summary = apply_transfer(out);
        break;
      case Stage::kBuildDataset:
        summary = build_dataset(out, *condition);
        break;
      case Stage::kTrainApn:
        summary = train_apn(out, *condition);
        break;
      case Stage::kTrainGrader:
        summary = train_grader(out);
        break;
      case Stage::kEvalApn:
        summary = eval_apn(out, *condition);
        break;
      case Stage::kEvalGrading:
        summary = eval_grading(out);
        break;
      case Stage::kReport:
        summary = report(out);
        break;
    }
  }
  json marker = {{"stage", to_string(s)}, {"config_hash", hash_}, {"seed", *cfg_.seed}, {"summary", summary}};
  if (condition) marker["condition"] = std::string(1, *condition);
  write_json(out / kMarker, marker);
}

void Run::execute_all() {
  for (Stage s : all_stages()) {
    if (per_condition(s)) {
      for (char c : cfg_.conditions) {
        if (!complete(s, c)) execute(s, c);
      }
    } else if (!complete(s)) {
      execute(s);
    }
  }
}

json Run::ingest(const fs::path& out) {
  std::map<std::string, fs::path> sources = cfg_.pool_dirs;
  if (cfg_.toy_corpus) {
    auto spec = toy::default_corpus(cfg_.stage_seed("toy-corpus"), cfg_.toy_corpus->size);
    for (auto& p : spec.pools) {
      if (auto it = cfg_.toy_corpus->counts.find(p.name); it != cfg_.toy_corpus->counts.end()) p.count = it->second;
    }
    for (const auto& dir : toy::write_corpus(out / "corpus", spec)) sources[dir.filename().string()] = dir;
  }
  json summary = json::object();
  for (const auto& [name, dir] : sources) {
    data::LabelSpec labels = data::load_label_spec(dir / "labels.json");
    if (!labels.pool.empty() && labels.pool != name) {
      log::warn("pool directory " + dir.string() + " declares pool '" + labels.pool + "'; using '" + name + "'");
    }
    labels.pool = name;
    std::vector<std::string> skipped;
    const Manifest all = data::ingest(dir, labels, {cfg_.resolution, out / "images" / name}, &skipped);
    const Manifest kept = data::filter_artifacts(all, cfg_.exclude_artifacts);
    write_manifest(out / (name + ".jsonl"), kept);
    log::info(fmt::format("ingest {}: {} images, {} undecodable, {} excluded for artifacts", name, kept.size(),
                          skipped.size(), all.size() - kept.size()));
    summary[name] = {{"records", kept.size()}, {"skipped", skipped.size()}, {"excluded", all.size() - kept.size()}};
  }
  for (const auto& name : required_pools()) {
    if (!sources.count(name)) throw DataError("required pool " + name + " has no source");
  }
  return summary;
}

json Run::train_bulk(const fs::path& out) {
  const Manifest nevus = pool(data::pools::kNevus);
  if (nevus.empty()) throw DataError("no nevus images to train the generator on");
  bulk::TrainOptions options;
  options.log_csv = out / "log.csv";
  options.config_hash = hash_;
  const auto ckpt = bulk::train_progressive(load_images(nevus), cfg_.bulk, options);
  ckpt.save(out / "generator.bpa");
  return {{"images", nevus.size()}};
}

json Run::generate_nevus(const fs::path& out) {
  require(Stage::kTrainBulk);
  const auto ckpt = bulk::GeneratorCheckpoint::load(stage_dir(Stage::kTrainBulk) / "generator.bpa");
  fs::create_directories(out / "images");
  const Manifest m =
      bulk::generate_bulk(ckpt, cfg_.generate_count, cfg_.stage_seed("generate-nevus"), out / "images", data::pools::kNevusG);
  write_manifest(out / (std::string(data::pools::kNevusG) + ".jsonl"), m);
  return {{"records", m.size()}};
}

json Run::train_transfer(const fs::path& out) {
  const Manifest a = pool(data::pools::kNevus);
  const Manifest b = pool(data::pools::kApn);
  if (a.empty() || b.empty()) throw DataError("both translation domains need images");
  transfer::CycleTrainOptions options;
  options.log_csv = out / "log.csv";
  options.config_hash = hash_;
  const auto ckpt = transfer::cycle_train(load_images(a), load_images(b), cfg_.transfer, options);
  ckpt.save(out / "translator.bpa");
  return {{"domain_a", a.size()}, {"domain_b", b.size()}};
}

json Run::apply_transfer(const fs::path& out) {
  require(Stage::kTrainTransfer);
  const auto ckpt = transfer::TranslatorCheckpoint::load(stage_dir(Stage::kTrainTransfer) / "translator.bpa");
  const Manifest bases_real = pool(data::pools::kNevus);
  const Manifest bases_generated = pool(data::pools::kNevusG);
  fs::create_directories(out / "images");
  const Manifest real = transfer::translate(ckpt, bases_real, transfer::Direction::kAToB, out / "images");
  const Manifest generated = transfer::translate(ckpt, bases_generated, transfer::Direction::kAToB, out / "images");
  write_manifest(out / (std::string(data::pools::kApnNevus) + ".jsonl"), real);
  write_manifest(out / (std::string(data::pools::kApnNevusG) + ".jsonl"), generated);
  return {{data::pools::kApnNevus, real.size()}, {data::pools::kApnNevusG, generated.size()}};
}

json Run::build_dataset(const fs::path& out, char condition) {
  const auto cond = data::scale_condition(data::training_condition(condition), cfg_.condition_scale);
  const Manifest m = data::build_condition(cond, training_pools(condition), cfg_.stage_seed("build-dataset"));
  write_manifest(out / "train.jsonl", m);
  json counts = json::object();
  for (const auto& [pool, n] : cond.counts) counts[pool] = n;
  return {{"name", cond.name}, {"dataset", condition_label(cond)}, {"counts", counts}, {"records", m.size()}};
}

json Run::train_apn(const fs::path& out, char condition) {
  require(Stage::kBuildDataset, condition);
  const Manifest train = read_manifest(stage_dir(Stage::kBuildDataset, condition) / "train.jsonl");
  eval::TrainClassifierOptions options;
  options.log_csv = out / "epochs.csv";
  Manifest validation;
  if (complete(Stage::kIngest) && fs::exists(stage_dir(Stage::kIngest) / (std::string(roles::kValNevus) + ".jsonl")) &&
      fs::exists(stage_dir(Stage::kIngest) / (std::string(roles::kValApn) + ".jsonl"))) {
    validation = concat(pool(roles::kValNevus), pool(roles::kValApn));
    options.validation = &validation;
  }
  auto result = eval::train_detector(train, cfg_.detector, options);
  result.model.save(out / "detector.bpa", {{"config_hash", hash_}, {"condition", std::string(1, condition)}});
  json summary = {{"epochs", result.log.size()},
                  {"final_loss", result.log.back().loss},
                  {"class_weights", {result.weights.negative, result.weights.positive}}};
  if (result.log.back().val_auc) summary["final_val_auc"] = *result.log.back().val_auc;
  return summary;
}

json Run::train_grader(const fs::path& out) {
  const Manifest all = concat(pool(roles::kGraderNevus), pool(roles::kGraderMelanoma));
  auto [train, held_out] = data::stratified_split(
      all, [](const ManifestRecord& r) { return eval::malignancy_label(r).value_or(0) == 1; },
      cfg_.grader_held_out_per_class, cfg_.stage_seed("grader-split"));
  eval::TrainClassifierOptions options;
  options.log_csv = out / "epochs.csv";
  options.validation = &held_out;
  auto result = eval::train_grader(train, cfg_.grader, options);
  result.model.save(out / "grader.bpa", {{"config_hash", hash_}});
  const auto scores = eval::predict(result.model, held_out);
  const auto labels = eval::labels_of(held_out, eval::malignancy_label);
  const auto row = eval::evaluate("held-out", scores, labels, cfg_.grader.threshold);
  json summary = {{"train", train.size()},
                  {"held_out", held_out.size()},
                  {"sensitivity", row.confusion.recall},
                  {"specificity", row.confusion.specificity},
                  {"f1", row.confusion.f1},
                  {"auc", row.auc},
                  {"final_loss", result.log.back().loss}};
  write_json(out / "held_out.json", summary);
  return summary;
}

json Run::eval_apn(const fs::path& out, char condition) {
  require(Stage::kTrainApn, condition);
  const auto model = eval::Classifier::load(stage_dir(Stage::kTrainApn, condition) / "detector.bpa");
  const Manifest test = concat(pool(roles::kEvalNevus), pool(roles::kEvalApn));
  const auto scores = eval::predict(model, test);
  const auto labels = eval::labels_of(test, eval::structure_label);
  const auto cond = data::scale_condition(data::training_condition(condition), cfg_.condition_scale);
  const auto row = eval::evaluate(condition_label(cond), scores, labels, cfg_.detector.threshold);
  {
    std::ofstream os(out / "scores.csv");
    os << "id,label,score\n";
    for (size_t i = 0; i < test.size(); ++i) os << fmt::format("{},{},{:.17g}\n", test[i].id, labels[i], scores[i]);
    if (!os) throw Error("cannot write " + (out / "scores.csv").string());
  }
  json roc = json::array();
  for (const auto& p : eval::roc_curve(scores, labels)) roc.push_back({p.fpr, p.tpr, p.threshold});
  json metrics = {{"condition", std::string(1, condition)},
                  {"dataset", row.dataset},
                  {"confusion", confusion_json(row.confusion)},
                  {"auc", row.auc},
                  {"roc", roc}};
  write_json(out / "metrics.json", metrics);
  return {{"auc", row.auc}, {"accuracy", row.confusion.accuracy}, {"test_images", test.size()}};
}

json Run::eval_grading(const fs::path& out) {
  require(Stage::kTrainGrader);
  const auto model = eval::Classifier::load(stage_dir(Stage::kTrainGrader) / "grader.bpa");
  const std::vector<std::pair<std::string, Manifest>> datasets = {
      {data::pools::kNevus, pool(roles::kEvalNevus)},
      {data::pools::kNevusG, pool(data::pools::kNevusG)},
      {data::pools::kApn, pool(roles::kEvalApn)},
      {data::pools::kApnNevus, pool(data::pools::kApnNevus)},
      {data::pools::kApnNevusG, pool(data::pools::kApnNevusG)},
  };
  json dists = json::array();
  json means = json::object();
  for (const auto& d : eval::score_distribution(model, datasets)) {
    dists.push_back({{"dataset", d.dataset}, {"count", d.count}, {"mean", d.mean}, {"histogram", d.histogram}});
    means[d.dataset] = d.mean;
  }
  write_json(out / "distributions.json", dists);
  return {{"mean_score", means}};
}

json Run::report(const fs::path& out) {
  std::vector<eval::MetricRow> rows;
  std::vector<std::pair<std::string, std::vector<eval::RocPoint>>> curves;
  json conditions = json::array();
  for (char c : cfg_.conditions) {
    require(Stage::kEvalApn, c);
  }
  require(Stage::kEvalGrading);
  require(Stage::kTrainGrader);
  for (char c : cfg_.conditions) {
    const json m = read_json(stage_dir(Stage::kEvalApn, c) / "metrics.json");
    eval::MetricRow row{m.at("dataset"), confusion_from_json(m.at("confusion")), m.at("auc")};
    std::vector<eval::RocPoint> curve;
    for (const auto& p : m.at("roc")) {
      // JSON has no infinity; the leading sentinel threshold is stored as null.
      const double t = p.at(2).is_null() ? std::numeric_limits<double>::infinity() : p.at(2).get<double>();
      curve.push_back({p.at(0), p.at(1), t});
    }
    curves.emplace_back(std::string(1, c), std::move(curve));
    conditions.push_back({{"condition", std::string(1, c)},
                          {"dataset", row.dataset},
                          {"accuracy", row.confusion.accuracy},
                          {"recall", row.confusion.recall},
                          {"precision", row.confusion.precision},
                          {"f1", row.confusion.f1},
                          {"auc", row.auc},
                          {"degenerate", row.confusion.degenerate}});
    rows.push_back(std::move(row));
  }
  std::vector<eval::ScoreDistribution> dists;
  for (const auto& d : read_json(stage_dir(Stage::kEvalGrading) / "distributions.json")) {
    dists.push_back({d.at("dataset"), d.at("count"), d.at("mean"), d.at("histogram").get<std::vector<double>>()});
  }
  eval::write_metrics_csv(out / kMetricsCsv, rows);
  eval::write_roc_csv(out / kRocCsv, curves);
  eval::write_histogram_csv(out / kHistogramCsv, dists);
  json grading = json::array();
  for (const auto& d : dists) grading.push_back({{"dataset", d.dataset}, {"count", d.count}, {"mean", d.mean}});
  const json summary = {{"config_hash", hash_},
                        {"seed", *cfg_.seed},
                        {"profile", cfg_.profile},
                        {"detection", conditions},
                        {"grader", read_json(stage_dir(Stage::kTrainGrader) / "held_out.json")},
                        {"grading", grading}};
  write_json(out / kSummaryJson, summary);
  return {{"conditions", cfg_.conditions}};
}

}  // namespace bpa::pipeline
