#include "bpa/classifier.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>

#include "bpa/archive.hpp"
#include "bpa/dataset.hpp"
#include "bpa/error.hpp"
#include "bpa/log.hpp"
#include "bpa/nn/optim.hpp"
#include "json_fields.hpp"

namespace fs = std::filesystem;

namespace bpa::eval {

using nn::Tensor;
using nn::Var;

namespace {

constexpr int64_t kPredictBatch = 64;

std::ofstream open_csv(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  return os;
}

}  // namespace

void ClassifierConfig::validate() const {
  if (backbone.empty()) throw ConfigError("backbone", "must be set");
  if (width <= 0) throw ConfigError("width", "must be positive");
  try {
    augment.validate();
  } catch (const ConfigError& e) {
    detail::rethrow_nested("augment", e);
  }
  if (!(learning_rate > 0)) throw ConfigError("learning_rate", "must be positive");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum", "must be in [0, 1)");
  if (weight_decay < 0 || weight_decay >= 1) throw ConfigError("weight_decay", "must be in [0, 1)");
  if (weight_decay_mode != "coefficient" && weight_decay_mode != "epoch_lr_decay") {
    throw ConfigError("weight_decay_mode", "must be \"coefficient\" or \"epoch_lr_decay\"");
  }
  if (epochs < 1) throw ConfigError("epochs", "must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size", "must be at least 1");
  if (threshold < 0 || threshold > 1) throw ConfigError("threshold", "must be in [0, 1]");
}

void to_json(nlohmann::json& j, const ClassifierConfig& c) {
  j = {{"backbone", c.backbone},
       {"width", c.width},
       {"augment", c.augment},
       {"learning_rate", c.learning_rate},
       {"momentum", c.momentum},
       {"weight_decay", c.weight_decay},
       {"weight_decay_mode", c.weight_decay_mode},
       {"class_weighting", c.class_weighting},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"threshold", c.threshold}};
}

void from_json(const nlohmann::json& j, ClassifierConfig& c) {
  detail::reject_unknown(j, {"backbone", "width", "augment", "learning_rate", "momentum", "weight_decay",
                             "weight_decay_mode", "class_weighting", "epochs", "batch_size", "seed", "threshold"});
  detail::read_field(j, "backbone", c.backbone);
  detail::read_field(j, "width", c.width);
  if (auto it = j.find("augment"); it != j.end()) {
    try {
      from_json(*it, c.augment);
    } catch (const ConfigError& e) {
      detail::rethrow_nested("augment", e);
    }
  }
  detail::read_field(j, "learning_rate", c.learning_rate);
  detail::read_field(j, "momentum", c.momentum);
  detail::read_field(j, "weight_decay", c.weight_decay);
  detail::read_field(j, "weight_decay_mode", c.weight_decay_mode);
  detail::read_field(j, "class_weighting", c.class_weighting);
  detail::read_field(j, "epochs", c.epochs);
  detail::read_field(j, "batch_size", c.batch_size);
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "threshold", c.threshold);
}

// ---------------------------------------------------------------- networks

SmallCnn::SmallCnn(nn::ParameterStore& store, int64_t width, Rng& rng) : dim_(4 * width) {
  const nn::Init init = nn::Init::he();
  convs_.emplace_back(store, "backbone.conv0", 3, width, 3, nn::ConvGeometry{1, 1}, rng, init);
  convs_.emplace_back(store, "backbone.conv1", width, 2 * width, 3, nn::ConvGeometry{2, 1}, rng, init);
  convs_.emplace_back(store, "backbone.conv2", 2 * width, 4 * width, 3, nn::ConvGeometry{2, 1}, rng, init);
  convs_.emplace_back(store, "backbone.conv3", 4 * width, 4 * width, 3, nn::ConvGeometry{2, 1}, rng, init);
}

Var SmallCnn::features(const Var& x) const {
  Var h = nn::add_scalar(nn::scale(x, 2.0), -1.0);
  for (const auto& conv : convs_) h = nn::relu(conv.forward(h));
  return nn::global_avg_pool(h);
}

std::unique_ptr<Backbone> make_backbone(const ClassifierConfig& cfg, nn::ParameterStore& store, Rng& rng) {
  if (cfg.backbone == "small_cnn") return std::make_unique<SmallCnn>(store, cfg.width, rng);
  throw ConfigError("backbone", "unsupported backbone \"" + cfg.backbone + "\" (available: small_cnn)");
}

Classifier::Classifier(const ClassifierConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  backbone_ = make_backbone(cfg_, params_, rng);
  head_ = nn::Linear(params_, "head", backbone_->feature_dim(), 1, rng, nn::Init::he(1.0));
}

Var Classifier::logits(const Var& x) const {
  const int64_t s = cfg_.input_size();
  if (x.shape() != nn::Shape{x.shape()[0], 3, s, s}) {
    throw DataError("classifier input " + nn::shape_str(x.shape()) + " does not match input_size " + std::to_string(s));
  }
  return nn::reshape(head_.forward(backbone_->features(x)), {x.shape()[0]});
}

Var Classifier::scores(const Var& x) const { return nn::sigmoid(logits(x)); }

void Classifier::save(const fs::path& path, const nlohmann::json& extra_meta) const {
  Archive ar(kClassifierKind);
  ar.meta()["config"] = cfg_;
  if (!extra_meta.is_null()) ar.meta()["extra"] = extra_meta;
  nn::save_parameters(ar, "", params_);
  ar.save(path);
}

Classifier Classifier::load(const fs::path& path) {
  const Archive ar = Archive::load(path, kClassifierKind);
  Rng unused(0);
  Classifier model(ar.meta().at("config").get<ClassifierConfig>(), unused);
  nn::load_parameters(ar, "", model.params_);
  return model;
}

// ----------------------------------------------------------------- labels

std::optional<int> structure_label(const ManifestRecord& r) {
  if (!r.label_structure) return std::nullopt;
  return *r.label_structure ? 1 : 0;
}

std::optional<int> malignancy_label(const ManifestRecord& r) {
  if (!r.label_diagnosis) return std::nullopt;
  return *r.label_diagnosis == Diagnosis::kMelanoma ? 1 : 0;
}

std::vector<int> labels_of(const Manifest& m, const LabelFn& label) {
  std::vector<int> out;
  out.reserve(m.size());
  for (const auto& r : m) {
    const auto y = label(r);
    if (!y) throw DataError("record " + r.id + " has no label for this task");
    out.push_back(*y);
  }
  return out;
}

// --------------------------------------------------------------- training

TrainResult train_classifier(const Manifest& train, const LabelFn& label, const ClassifierConfig& cfg,
                             const TrainClassifierOptions& options) {
  cfg.validate();
  const std::vector<int> labels = labels_of(train, label);
  const auto n_pos = static_cast<int64_t>(std::count(labels.begin(), labels.end(), 1));
  const auto n_neg = static_cast<int64_t>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("training set needs both classes (positives " +
                                                std::to_string(n_pos) + ", negatives " + std::to_string(n_neg) + ")");
  const ClassWeights weights = cfg.class_weighting ? class_weights(n_neg, n_pos) : ClassWeights{};

  std::vector<int> val_labels;
  if (options.validation) val_labels = labels_of(*options.validation, label);

  Rng init(derive_seed(cfg.seed, "classifier/init"));
  Classifier model(cfg, init);
  const bool coupled = cfg.weight_decay_mode == "coefficient";
  nn::MomentumSgd opt(model.params().vars(), cfg.learning_rate, cfg.momentum, coupled ? cfg.weight_decay : 0.0);
  Rng order_rng(derive_seed(cfg.seed, "classifier/order"));
  Rng aug_rng(derive_seed(cfg.seed, "classifier/augment"));

  std::ofstream log;
  if (options.log_csv) {
    log = open_csv(*options.log_csv);
    log << "epoch,loss,learning_rate,val_auc\n";
  }

  std::vector<EpochLog> history;
  const int64_t s = cfg.input_size();
  double lr = cfg.learning_rate;
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(lr);
    const auto order = order_rng.permutation(train.size());
    double loss_sum = 0.0;
    int64_t seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const auto b = static_cast<int64_t>(end - start);
      Tensor x({b, 3, s, s});
      std::vector<int> y;
      for (size_t i = start; i < end; ++i) {
        const ImageTensor img = augment(data::load_record_image(train[order[i]], PixelRange::kUnit), cfg.augment, aug_rng);
        const ImageTensor one[] = {img};
        const Tensor t = to_batch(one, PixelRange::kUnit);
        std::copy(t.data().begin(), t.data().end(), x.data().begin() + static_cast<int64_t>(i - start) * 3 * s * s);
        y.push_back(labels[order[i]]);
      }
      Var loss = weighted_loss(model.scores(Var::constant(std::move(x))), y, weights);
      opt.step(nn::grad(loss, model.params().vars()));
      loss_sum += loss.item() * static_cast<double>(b);
      seen += b;
    }
    EpochLog entry{epoch, loss_sum / static_cast<double>(seen), lr, std::nullopt};
    if (!std::isfinite(entry.loss)) throw Error(fmt::format("classifier training diverged in epoch {}", epoch));
    if (options.validation && !options.validation->empty()) {
      const auto scores = predict(model, *options.validation);
      entry.val_auc = auc(scores, val_labels);
    }
    if (log.is_open()) {
      log << fmt::format("{},{:.17g},{:.17g},{}\n", entry.epoch, entry.loss, entry.learning_rate,
                         entry.val_auc ? fmt::format("{:.17g}", *entry.val_auc) : std::string{});
    }
    history.push_back(entry);
    if (!coupled) lr *= 1.0 - cfg.weight_decay;
  }
  return {std::move(model), std::move(history), weights};
}

TrainResult train_detector(const Manifest& train, const ClassifierConfig& cfg, const TrainClassifierOptions& options) {
  return train_classifier(train, structure_label, cfg, options);
}

TrainResult train_grader(const Manifest& train, const ClassifierConfig& cfg, const TrainClassifierOptions& options) {
  return train_classifier(train, malignancy_label, cfg, options);
}

// -------------------------------------------------------------- inference

std::vector<double> predict_images(const Classifier& model, const std::vector<ImageTensor>& images) {
  const int64_t s = model.config().input_size();
  std::vector<double> out;
  out.reserve(images.size());
  nn::NoGradGuard guard;
  for (size_t start = 0; start < images.size(); start += kPredictBatch) {
    const size_t end = std::min(images.size(), start + static_cast<size_t>(kPredictBatch));
    std::vector<ImageTensor> chunk;
    for (size_t i = start; i < end; ++i) chunk.push_back(resize(convert_range(images[i], PixelRange::kUnit), s, s));
    const Tensor scores = model.scores(Var::constant(to_batch(chunk, PixelRange::kUnit))).value();
    out.insert(out.end(), scores.data().begin(), scores.data().end());
  }
  return out;
}

std::vector<double> predict(const Classifier& model, const Manifest& images) {
  std::vector<double> out;
  out.reserve(images.size());
  for (size_t start = 0; start < images.size(); start += kPredictBatch) {
    const size_t end = std::min(images.size(), start + static_cast<size_t>(kPredictBatch));
    std::vector<ImageTensor> chunk;
    for (size_t i = start; i < end; ++i) chunk.push_back(data::load_record_image(images[i], PixelRange::kUnit));
    const auto scores = predict_images(model, chunk);
    out.insert(out.end(), scores.begin(), scores.end());
  }
  return out;
}

std::vector<ScoreDistribution> score_distribution(const Classifier& model,
                                                  const std::vector<std::pair<std::string, Manifest>>& datasets,
                                                  int64_t bins) {
  std::vector<ScoreDistribution> out;
  for (const auto& [name, manifest] : datasets) {
    if (manifest.empty()) {
      log::warn("score_distribution: dataset '" + name + "' is empty, omitted");
      continue;
    }
    const auto scores = predict(model, manifest);
    ScoreDistribution d{name, static_cast<int64_t>(scores.size()), 0.0, score_histogram(scores, bins)};
    for (double v : scores) d.mean += v;
    d.mean /= static_cast<double>(scores.size());
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------- reports

MetricRow evaluate(const std::string& dataset, std::span<const double> scores, std::span<const int> labels,
                   double threshold) {
  return {dataset, confusion_metrics(scores, labels, threshold), auc(scores, labels)};
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
  auto os = open_csv(path);
  os << "Dataset,Accuracy,Recall,Precision,F1,AUC\n";
  for (const auto& r : rows) {
    os << fmt::format("{},{:.1f},{:.1f},{:.1f},{:.1f},{:.3f}\n", r.dataset, r.confusion.accuracy, r.confusion.recall,
                      r.confusion.precision, r.confusion.f1, r.auc);
  }
}

void write_roc_csv(const fs::path& path, const std::vector<std::pair<std::string, std::vector<RocPoint>>>& curves) {
  auto os = open_csv(path);
  os << "dataset,fpr,tpr,threshold\n";
  for (const auto& [name, curve] : curves) {
    for (const auto& p : curve) os << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", name, p.fpr, p.tpr, p.threshold);
  }
}

void write_histogram_csv(const fs::path& path, const std::vector<ScoreDistribution>& dists) {
  auto os = open_csv(path);
  os << "dataset,bin_low,bin_high,mass\n";
  for (const auto& d : dists) {
    const auto bins = static_cast<double>(d.histogram.size());
    for (size_t i = 0; i < d.histogram.size(); ++i) {
      os << fmt::format("{},{:.6g},{:.6g},{:.17g}\n", d.dataset, static_cast<double>(i) / bins,
                        static_cast<double>(i + 1) / bins, d.histogram[i]);
    }
  }
}

}  // namespace bpa::eval
