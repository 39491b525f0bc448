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

// Progressive-growing generator for mass production of base lesion images.
namespace bpa::bulk {

struct LatentVector {
  std::vector<double> values;
  uint64_t seed = 0;   // stream the vector was drawn from
  int64_t index = 0;   // position within that stream
};

// n standard-normal vectors drawn sequentially from one stream seeded by `seed`.
std::vector<LatentVector> sample_latent(int64_t n, int64_t latent_dim, uint64_t seed);

struct ProgressiveConfig {
  int64_t target_resolution = 32;
  int64_t latent_dim = 512;
  int64_t fmap_base = 256;
  int64_t fmap_max = 32;
  bool pixel_norm = true;
  bool equalized_lr = true;
  bool minibatch_stddev = true;
  // Generator 3x3 convolutions pad by edge reflection instead of zeros.
  bool reflect_padding = false;
  int64_t batch_size = 16;
  // Real images shown per stage; growing stages spend the first half fading in.
  int64_t images_per_stage = 2000;
  double learning_rate = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double gp_weight = 10.0;
  double drift_weight = 1e-3;
  uint64_t seed = 0;

  int64_t num_stages() const;
  // Channel width of stage s.
  int64_t channels(int64_t stage) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const ProgressiveConfig& c);
void from_json(const nlohmann::json& j, ProgressiveConfig& c);

// Side lengths 4, 8, ... up to `target`. Throws ConfigError unless target is 4 * 2^k.
std::vector<int64_t> stage_schedule(int64_t target);

struct ProgressiveStage {
  int64_t index = 0;
  double alpha = 1.0;

  int64_t resolution() const { return int64_t{4} << index; }
};

class Generator {
 public:
  Generator(const ProgressiveConfig& cfg, Rng& rng);

  // z: [N, latent_dim] -> images [N, 3, R, R] in [-1, 1].
  nn::Var forward(const nn::Var& z, ProgressiveStage stage) const;
  // Output of the stage-s pathway alone (no blending).
  nn::Var pathway(const nn::Var& z, int64_t stage) const;

  ImageTensor generate(const LatentVector& z, ProgressiveStage stage) const;

  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }
  const ProgressiveConfig& config() const { return cfg_; }

 private:
  void check_stage(ProgressiveStage stage) const;
  nn::Var features(const nn::Var& z, int64_t stage, nn::Var* previous) const;
  nn::Var to_rgb(const nn::Var& x, int64_t stage) const;

  ProgressiveConfig cfg_;
  nn::ParameterStore params_;
  nn::Linear dense_;
  std::vector<std::vector<nn::Conv2d>> blocks_;
  std::vector<nn::Conv2d> to_rgb_;
};

class Discriminator {
 public:
  Discriminator(const ProgressiveConfig& cfg, Rng& rng);

  // images [N, 3, R, R] -> critic scores [N, 1]
  nn::Var forward(const nn::Var& images, ProgressiveStage stage) const;

  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

 private:
  ProgressiveConfig cfg_;
  nn::ParameterStore params_;
  std::vector<nn::Conv2d> from_rgb_;
  std::vector<std::vector<nn::Conv2d>> blocks_;
  nn::Conv2d final_conv_;
  nn::Linear final_dense_;
  nn::Linear final_out_;
};

// Critic loss with gradient penalty and drift term; `mix` holds per-sample
// interpolation weights in [0, 1].
nn::Var critic_loss(const Discriminator& d, const nn::Var& real, const nn::Var& fake, const nn::Tensor& mix,
                    ProgressiveStage stage, const ProgressiveConfig& cfg, nn::Var* grad_penalty = nullptr);
// Wasserstein generator loss, -mean(D(fake)).
nn::Var generator_loss(const Discriminator& d, const nn::Var& fake, ProgressiveStage stage);

struct LogRow {
  int64_t step = 0;
  int64_t stage = 0;
  double alpha = 1.0;
  double loss_g = 0.0;
  double loss_d = 0.0;
  double grad_penalty = 0.0;
};

// Full training state: both networks, optimizers, data order and noise stream.
class Trainer {
 public:
  // `images` are [3, R, R]-convertible pool images at the target resolution.
  Trainer(const ProgressiveConfig& cfg, std::vector<ImageTensor> images);

  bool done() const;
  ProgressiveStage current_stage() const;
  int64_t step_index() const { return step_; }
  LogRow step();

  // Per-stage optimization steps: ceil(images_per_stage / batch_size).
  int64_t steps_per_stage() const;

  Archive checkpoint(const std::string& config_hash = {}) const;
  void restore(const Archive& ar);

  const Generator& generator() const { return *g_; }
  const Discriminator& discriminator() const { return *d_; }

 private:
  nn::Var real_batch(const std::vector<size_t>& idx, ProgressiveStage stage) const;

  ProgressiveConfig cfg_;
  std::vector<std::vector<nn::Tensor>> pyramid_;  // [stage][image] -> [3, r, r]
  std::unique_ptr<Generator> g_;
  std::unique_ptr<Discriminator> d_;
  std::unique_ptr<nn::Adam> opt_g_;
  std::unique_ptr<nn::Adam> opt_d_;
  EpochSampler sampler_;
  Rng noise_;
  int64_t step_ = 0;
};

inline constexpr const char* kCheckpointKind = "bpa.progressive_gan";

// Trained generator plus the state needed to resume training.
class GeneratorCheckpoint {
 public:
  explicit GeneratorCheckpoint(Archive archive);
  static GeneratorCheckpoint load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const { archive_.save(path); }

  const ProgressiveConfig& config() const { return cfg_; }
  const Archive& archive() const { return archive_; }
  std::string config_hash() const;
  // Generator with the checkpointed weights.
  const Generator& generator() const { return *generator_; }
  ProgressiveStage final_stage() const { return {cfg_.num_stages() - 1, 1.0}; }

 private:
  Archive archive_;
  ProgressiveConfig cfg_;
  std::shared_ptr<Generator> generator_;
};

struct TrainOptions {
  std::optional<std::filesystem::path> log_csv;
  // Saves a checkpoint to `checkpoint_path` every N steps (0 = only at the end).
  int64_t checkpoint_every = 0;
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<GeneratorCheckpoint> resume;
  std::string config_hash;
  // Stop after this many total steps (for tests); negative = run to completion.
  int64_t max_steps = -1;
  std::function<void(const LogRow&)> on_step;
};

// Trains on the pool images (all target_resolution square). Throws DataError
// on an empty pool or wrongly sized images.
GeneratorCheckpoint train_progressive(const std::vector<ImageTensor>& pool, const ProgressiveConfig& cfg,
                                      const TrainOptions& options = {});

// Writes `count` generated PNGs to `out_dir` and returns their records
// (provenance generated_phase1, pool nevusG).
Manifest generate_bulk(const GeneratorCheckpoint& ckpt, int64_t count, uint64_t seed,
                       const std::filesystem::path& out_dir, const std::string& pool = "nevusG");

}  // namespace bpa::bulk
