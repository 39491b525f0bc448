#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bpa/augment.hpp"
#include "bpa/manifest.hpp"
#include "bpa/metrics.hpp"
#include "bpa/nn/layers.hpp"

// Binary image classifiers for structure detection and malignancy grading.
namespace bpa::eval {

struct ClassifierConfig {
  // Feature extractor id; see make_backbone.
  std::string backbone = "small_cnn";
  int64_t width = 16;
  AugmentPolicy augment;
  double learning_rate = 1e-5;
  double momentum = 0.9;
  double weight_decay = 1e-6;
  // "coefficient": L2 coefficient applied every step.
  // "epoch_lr_decay": learning rate multiplied by (1 - weight_decay) after each epoch.
  std::string weight_decay_mode = "coefficient";
  bool class_weighting = true;
  int64_t epochs = 10;
  int64_t batch_size = 32;
  uint64_t seed = 0;
  double threshold = 0.5;

  int64_t input_size() const { return augment.input_size; }
  void validate() const;
};

void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);

class Backbone {
 public:
  virtual ~Backbone() = default;
  // Unit-range images [N,3,S,S] -> features [N, feature_dim()].
  virtual nn::Var features(const nn::Var& x) const = 0;
  virtual int64_t feature_dim() const = 0;
};

// Four strided 3x3 conv layers and global average pooling.
class SmallCnn : public Backbone {
 public:
  SmallCnn(nn::ParameterStore& store, int64_t width, Rng& rng);
  nn::Var features(const nn::Var& x) const override;
  int64_t feature_dim() const override { return dim_; }

 private:
  std::vector<nn::Conv2d> convs_;
  int64_t dim_;
};

// Known ids: "small_cnn". Throws ConfigError for anything else.
std::unique_ptr<Backbone> make_backbone(const ClassifierConfig& cfg, nn::ParameterStore& store, Rng& rng);

inline constexpr const char* kClassifierKind = "bpa.classifier";

class Classifier {
 public:
  Classifier(const ClassifierConfig& cfg, Rng& rng);

  nn::Var logits(const nn::Var& x) const;
  // Sigmoid scores [N].
  nn::Var scores(const nn::Var& x) const;

  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }
  const ClassifierConfig& config() const { return cfg_; }

  void save(const std::filesystem::path& path, const nlohmann::json& extra_meta = {}) const;
  static Classifier load(const std::filesystem::path& path);

 private:
  ClassifierConfig cfg_;
  nn::ParameterStore params_;
  std::shared_ptr<Backbone> backbone_;
  nn::Linear head_;
};

struct EpochLog {
  int64_t epoch = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  std::optional<double> val_auc;
};

struct TrainResult {
  Classifier model;
  std::vector<EpochLog> log;
  ClassWeights weights;
};

// Returns 0/1, or nullopt when the record carries no label for this task.
using LabelFn = std::function<std::optional<int>(const ManifestRecord&)>;

std::optional<int> structure_label(const ManifestRecord& r);
std::optional<int> malignancy_label(const ManifestRecord& r);
// Labels for every record; throws DataError naming an unlabeled record.
std::vector<int> labels_of(const Manifest& m, const LabelFn& label);

struct TrainClassifierOptions {
  const Manifest* validation = nullptr;
  std::optional<std::filesystem::path> log_csv;
};

// Throws DataError when the labeled training set lacks a class.
TrainResult train_classifier(const Manifest& train, const LabelFn& label, const ClassifierConfig& cfg,
                             const TrainClassifierOptions& options = {});
TrainResult train_detector(const Manifest& train, const ClassifierConfig& cfg,
                           const TrainClassifierOptions& options = {});
TrainResult train_grader(const Manifest& train, const ClassifierConfig& cfg, const TrainClassifierOptions& options = {});

// Scores without augmentation; an undecodable image raises DataError naming the record.
std::vector<double> predict(const Classifier& model, const Manifest& images);
std::vector<double> predict_images(const Classifier& model, const std::vector<ImageTensor>& images);

struct ScoreDistribution {
  std::string dataset;
  int64_t count = 0;
  double mean = 0.0;
  std::vector<double> histogram;
};

// Empty datasets are skipped with a warning.
std::vector<ScoreDistribution> score_distribution(const Classifier& model,
                                                  const std::vector<std::pair<std::string, Manifest>>& datasets,
                                                  int64_t bins = 50);

struct MetricRow {
  std::string dataset;
  ConfusionMetrics confusion;
  double auc = 0.0;
};

MetricRow evaluate(const std::string& dataset, std::span<const double> scores, std::span<const int> labels,
                   double threshold = 0.5);

// Dataset,Accuracy,Recall,Precision,F1,AUC (percentages to one decimal).
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
// dataset,fpr,tpr,threshold
void write_roc_csv(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, std::vector<RocPoint>>>& curves);
// dataset,bin_low,bin_high,mass
void write_histogram_csv(const std::filesystem::path& path, const std::vector<ScoreDistribution>& dists);

}  // namespace bpa::eval
