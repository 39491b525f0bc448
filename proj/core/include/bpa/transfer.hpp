#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "bpa/archive.hpp"
#include "bpa/image.hpp"
#include "bpa/manifest.hpp"
#include "bpa/nn/layers.hpp"
#include "bpa/nn/optim.hpp"

// Unpaired two-domain translation used to stamp a structure onto base images.
namespace bpa::transfer {

struct CycleConfig {
  // "resnet" or "identity" (parameter-free pass-through, for testing).
  std::string generator = "resnet";
  int64_t ngf = 8;
  int64_t residual_blocks = 3;
  int64_t ndf = 8;
  int64_t discriminator_layers = 3;
  double init_std = 0.02;
  double lambda_cycle = 10.0;
  // Identity weight as a fraction of lambda_cycle.
  double identity_ratio = 0.5;
  int64_t replay_size = 50;
  int64_t steps = 1000;
  // Learning rate decays linearly to zero over the steps after this fraction.
  double decay_start = 0.5;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  bool flip = true;
  uint64_t seed = 0;

  double lambda_identity() const { return identity_ratio * lambda_cycle; }
  double lr_at(int64_t step) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const CycleConfig& c);
void from_json(const nlohmann::json& j, CycleConfig& c);

// Shape-preserving image-to-image map, [N,3,H,W] -> [N,3,H,W] in [-1, 1].
class Translator {
 public:
  virtual ~Translator() = default;
  virtual nn::Var forward(const nn::Var& x) const = 0;
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

 protected:
  nn::ParameterStore params_;
};

class ResnetTranslator : public Translator {
 public:
  ResnetTranslator(const CycleConfig& cfg, Rng& rng);
  nn::Var forward(const nn::Var& x) const override;

 private:
  nn::Conv2d stem_;
  std::vector<nn::Conv2d> down_;
  std::vector<std::pair<nn::Conv2d, nn::Conv2d>> blocks_;
  std::vector<nn::ConvTranspose2d> up_;
  nn::Conv2d head_;
};

class IdentityTranslator : public Translator {
 public:
  nn::Var forward(const nn::Var& x) const override { return x; }
};

std::unique_ptr<Translator> make_translator(const CycleConfig& cfg, Rng& rng);

// Fully convolutional patch critic: [N,3,H,W] -> [N,1,h,w] raw scores.
class PatchDiscriminator {
 public:
  PatchDiscriminator(const CycleConfig& cfg, Rng& rng);
  nn::Var forward(const nn::Var& x) const;
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

 private:
  nn::ParameterStore params_;
  std::vector<nn::Conv2d> convs_;
};

// Mean absolute elementwise difference. Throws std::invalid_argument on shape mismatch.
double cycle_loss(const ImageTensor& x, const ImageTensor& reconstructed);
nn::Var l1_loss(const nn::Var& a, const nn::Var& b);
// Least-squares adversarial loss mean((scores - target)^2).
nn::Var lsgan_loss(const nn::Var& scores, double target);

struct GeneratorLossTerms {
  nn::Var fake_a, fake_b;  // translations of the real b and a inputs
  nn::Var adv_ab, adv_ba;
  nn::Var cycle_a, cycle_b;
  nn::Var identity_a, identity_b;
};

// adversarial + lambda_cycle * (both cycles) + lambda_identity * (both identities)
nn::Var total_generator_loss(const GeneratorLossTerms& t, const CycleConfig& cfg);

// Returns fakes for the critic: while filling it passes images through;
// afterwards each image is, with probability 1/2, swapped for a stored one.
class ReplayPool {
 public:
  ReplayPool(int64_t capacity, uint64_t seed) : capacity_(capacity), rng_(seed) {}
  nn::Tensor query(const nn::Tensor& batch);

  size_t size() const { return stored_.size(); }
  void save(Archive& ar, const std::string& prefix) const;
  void load(const Archive& ar, const std::string& prefix);

 private:
  int64_t capacity_;
  Rng rng_;
  std::vector<nn::Tensor> stored_;  // each [1,3,H,W]
};

struct CycleLogRow {
  int64_t step = 0;
  double loss_g_ab = 0.0;
  double loss_g_ba = 0.0;
  double loss_d_a = 0.0;
  double loss_d_b = 0.0;
  double loss_cyc = 0.0;
  double loss_id = 0.0;
};

inline constexpr const char* kCheckpointKind = "bpa.cycle_translator";

class CycleTrainer {
 public:
  CycleTrainer(const CycleConfig& cfg, std::vector<ImageTensor> domain_a, std::vector<ImageTensor> domain_b);

  bool done() const { return step_ >= cfg_.steps; }
  int64_t step_index() const { return step_; }
  CycleLogRow step();

  // Generator losses on fixed inputs (no update).
  GeneratorLossTerms generator_terms(const nn::Var& real_a, const nn::Var& real_b) const;

  Archive checkpoint(const std::string& config_hash = {}) const;
  void restore(const Archive& ar);

  const Translator& a_to_b() const { return *g_ab_; }
  const Translator& b_to_a() const { return *g_ba_; }
  // Number of distinct images drawn so far from each domain.
  std::pair<size_t, size_t> coverage() const { return {seen_a_.count, seen_b_.count}; }

 private:
  struct Seen {
    std::vector<bool> flags;
    size_t count = 0;
  };
  nn::Var draw(const std::vector<nn::Tensor>& domain, EpochSampler& sampler, Seen& seen);

  CycleConfig cfg_;
  std::vector<nn::Tensor> a_, b_;
  std::unique_ptr<Translator> g_ab_, g_ba_;
  std::unique_ptr<PatchDiscriminator> d_a_, d_b_;
  std::unique_ptr<nn::Adam> opt_g_, opt_d_;
  EpochSampler sampler_a_, sampler_b_;
  ReplayPool pool_a_, pool_b_;
  Rng aug_;
  int64_t step_ = 0;
  Seen seen_a_, seen_b_;
};

class TranslatorCheckpoint {
 public:
  explicit TranslatorCheckpoint(Archive archive);
  static TranslatorCheckpoint load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const { archive_.save(path); }

  const CycleConfig& config() const { return cfg_; }
  const Archive& archive() const { return archive_; }
  std::string config_hash() const;
  int64_t resolution() const { return resolution_; }
  const Translator& a_to_b() const { return *g_ab_; }
  const Translator& b_to_a() const { return *g_ba_; }

 private:
  Archive archive_;
  CycleConfig cfg_;
  int64_t resolution_ = 0;
  std::shared_ptr<Translator> g_ab_, g_ba_;
};

struct CycleTrainOptions {
  std::optional<std::filesystem::path> log_csv;
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<TranslatorCheckpoint> resume;
  std::string config_hash;
  std::function<void(const CycleLogRow&)> on_step;
};

// Throws DataError on an empty domain or a resolution mismatch.
TranslatorCheckpoint cycle_train(const std::vector<ImageTensor>& domain_a, const std::vector<ImageTensor>& domain_b,
                                 const CycleConfig& cfg, const CycleTrainOptions& options = {});

enum class Direction { kAToB, kBToA };

// Translates every record's image and writes the result as <id>.png. Records
// carry provenance generated_phase2 and link to their source. For a_to_b,
// real sources land in pool APN_nevus and phase-1 sources in APN_nevusG.
Manifest translate(const TranslatorCheckpoint& ckpt, const Manifest& images, Direction direction,
                   const std::filesystem::path& out_dir);

// Translates in-memory images (signed range in and out).
std::vector<ImageTensor> translate_images(const Translator& g, const std::vector<ImageTensor>& images);

}  // namespace bpa::transfer
