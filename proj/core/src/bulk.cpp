#include "bpa/bulk.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>

#include "bpa/error.hpp"
#include "bpa/hash.hpp"
#include "bpa/log.hpp"
#include "json_fields.hpp"

namespace fs = std::filesystem;

namespace bpa::bulk {

using nn::Conv2d;
using nn::ConvGeometry;
using nn::Init;
using nn::Linear;
using nn::Tensor;
using nn::Var;

namespace {

constexpr double kSlope = 0.2;
constexpr double kSqrt2 = 1.4142135623730951;

Init layer_init(const ProgressiveConfig& cfg, double gain) {
  return cfg.equalized_lr ? Init::equalized(gain) : Init::he(gain);
}

Var lrelu(const Var& x) { return nn::leaky_relu(x, kSlope); }

Tensor avg_pool_tensor(const Tensor& x) {
  nn::NoGradGuard guard;
  return nn::avg_pool2x(Var::constant(x)).value();
}

}  // namespace

std::vector<LatentVector> sample_latent(int64_t n, int64_t latent_dim, uint64_t seed) {
  if (latent_dim <= 0) throw ConfigError("latent_dim", "must be positive");
  if (n < 0) throw ConfigError("count", "must be nonnegative");
  Rng rng(seed);
  std::vector<LatentVector> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    auto& z = out[static_cast<size_t>(i)];
    z.seed = seed;
    z.index = i;
    z.values.resize(static_cast<size_t>(latent_dim));
    for (auto& v : z.values) v = rng.normal();
  }
  return out;
}

std::vector<int64_t> stage_schedule(int64_t target) {
  std::vector<int64_t> out;
  for (int64_t r = 4; r <= target; r *= 2) out.push_back(r);
  if (out.empty() || out.back() != target) {
    throw ConfigError("target_resolution", fmt::format("{} is not 4 times a power of two", target));
  }
  return out;
}

int64_t ProgressiveConfig::num_stages() const { return static_cast<int64_t>(stage_schedule(target_resolution).size()); }

int64_t ProgressiveConfig::channels(int64_t stage) const {
  return std::max<int64_t>(1, std::min(fmap_base >> (stage + 1), fmap_max));
}

void ProgressiveConfig::validate() const {
  stage_schedule(target_resolution);
  if (latent_dim <= 0) throw ConfigError("latent_dim", "must be positive");
  if (fmap_base <= 0 || fmap_max <= 0) throw ConfigError("fmap_base", "channel counts must be positive");
  if (batch_size < 2) throw ConfigError("batch_size", "must be at least 2");
  if (images_per_stage < batch_size) throw ConfigError("images_per_stage", "must be at least one batch");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate", "must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("beta1", "Adam betas must be in [0, 1)");
  if (gp_weight < 0 || drift_weight < 0) throw ConfigError("gp_weight", "penalty weights must be nonnegative");
}

void to_json(nlohmann::json& j, const ProgressiveConfig& c) {
  j = {{"target_resolution", c.target_resolution},
       {"latent_dim", c.latent_dim},
       {"fmap_base", c.fmap_base},
       {"fmap_max", c.fmap_max},
       {"pixel_norm", c.pixel_norm},
       {"equalized_lr", c.equalized_lr},
       {"minibatch_stddev", c.minibatch_stddev},
       {"reflect_padding", c.reflect_padding},
       {"batch_size", c.batch_size},
       {"images_per_stage", c.images_per_stage},
       {"learning_rate", c.learning_rate},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"gp_weight", c.gp_weight},
       {"drift_weight", c.drift_weight},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ProgressiveConfig& c) {
  detail::reject_unknown(j, {"target_resolution", "latent_dim", "fmap_base", "fmap_max", "pixel_norm", "equalized_lr",
                             "minibatch_stddev", "reflect_padding", "batch_size", "images_per_stage", "learning_rate", "beta1", "beta2",
                             "gp_weight", "drift_weight", "seed"});
  detail::read_field(j, "target_resolution", c.target_resolution);
  detail::read_field(j, "latent_dim", c.latent_dim);
  detail::read_field(j, "fmap_base", c.fmap_base);
  detail::read_field(j, "fmap_max", c.fmap_max);
  detail::read_field(j, "pixel_norm", c.pixel_norm);
  detail::read_field(j, "equalized_lr", c.equalized_lr);
  detail::read_field(j, "minibatch_stddev", c.minibatch_stddev);
  detail::read_field(j, "reflect_padding", c.reflect_padding);
  detail::read_field(j, "batch_size", c.batch_size);
  detail::read_field(j, "images_per_stage", c.images_per_stage);
  detail::read_field(j, "learning_rate", c.learning_rate);
  detail::read_field(j, "beta1", c.beta1);
  detail::read_field(j, "beta2", c.beta2);
  detail::read_field(j, "gp_weight", c.gp_weight);
  detail::read_field(j, "drift_weight", c.drift_weight);
  detail::read_field(j, "seed", c.seed);
}

// ---------------------------------------------------------------- generator

Generator::Generator(const ProgressiveConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int64_t stages = cfg_.num_stages();
  const int64_t c0 = cfg_.channels(0);
  const ConvGeometry same{1, cfg_.reflect_padding ? 0 : 1};
  dense_ = Linear(params_, "dense", cfg_.latent_dim, c0 * 16, rng, layer_init(cfg_, kSqrt2 / 4));
  blocks_.resize(static_cast<size_t>(stages));
  blocks_[0].emplace_back(params_, "b0.conv", c0, c0, 3, same, rng, layer_init(cfg_, kSqrt2));
  for (int64_t s = 1; s < stages; ++s) {
    const std::string p = "b" + std::to_string(s);
    blocks_[s].emplace_back(params_, p + ".conv0", cfg_.channels(s - 1), cfg_.channels(s), 3, same, rng,
                            layer_init(cfg_, kSqrt2));
    blocks_[s].emplace_back(params_, p + ".conv1", cfg_.channels(s), cfg_.channels(s), 3, same, rng,
                            layer_init(cfg_, kSqrt2));
  }
  for (int64_t s = 0; s < stages; ++s) {
    to_rgb_.emplace_back(params_, "rgb" + std::to_string(s), cfg_.channels(s), 3, 1, ConvGeometry{1, 0}, rng,
                         layer_init(cfg_, 1.0));
  }
}

void Generator::check_stage(ProgressiveStage stage) const {
  if (stage.index < 0 || stage.index >= cfg_.num_stages()) {
    throw ConfigError("stage", fmt::format("stage {} outside schedule of {} stages", stage.index, cfg_.num_stages()));
  }
  if (!(stage.alpha >= 0.0 && stage.alpha <= 1.0)) throw ConfigError("alpha", "must be in [0, 1]");
}

Var Generator::features(const Var& z, int64_t stage, Var* previous) const {
  auto norm = [&](const Var& v) { return cfg_.pixel_norm ? nn::pixel_norm(v) : v; };
  const int64_t n = z.shape()[0];
  Var x = norm(z);
  x = norm(lrelu(nn::reshape(dense_.forward(x), {n, cfg_.channels(0), 4, 4})));
  auto conv3 = [&](const nn::Conv2d& conv, const Var& v) {
    return conv.forward(cfg_.reflect_padding ? nn::reflect_pad(v, 1) : v);
  };
  x = norm(lrelu(conv3(blocks_[0][0], x)));
  for (int64_t s = 1; s <= stage; ++s) {
    if (s == stage && previous) *previous = x;
    x = nn::upsample_nearest2x(x);
    for (const auto& conv : blocks_[s]) x = norm(lrelu(conv3(conv, x)));
  }
  return x;
}

Var Generator::to_rgb(const Var& x, int64_t stage) const { return nn::tanh(to_rgb_[stage].forward(x)); }

Var Generator::pathway(const Var& z, int64_t stage) const {
  check_stage({stage, 1.0});
  return to_rgb(features(z, stage, nullptr), stage);
}

Var Generator::forward(const Var& z, ProgressiveStage stage) const {
  check_stage(stage);
  if (z.shape().size() != 2 || z.shape()[1] != cfg_.latent_dim) {
    throw ConfigError("latent_dim", "latent batch has shape " + nn::shape_str(z.shape()));
  }
  if (stage.index == 0 || stage.alpha >= 1.0) return pathway(z, stage.index);
  Var previous;
  Var x = features(z, stage.index, &previous);
  Var low = nn::upsample_nearest2x(to_rgb(previous, stage.index - 1));
  if (stage.alpha <= 0.0) return low;
  return nn::lerp(low, to_rgb(x, stage.index), stage.alpha);
}

ImageTensor Generator::generate(const LatentVector& z, ProgressiveStage stage) const {
  if (static_cast<int64_t>(z.values.size()) != cfg_.latent_dim) {
    throw ConfigError("latent_dim", fmt::format("latent vector has length {}, expected {}", z.values.size(),
                                                cfg_.latent_dim));
  }
  nn::NoGradGuard guard;
  Var out = forward(Var::constant(Tensor({1, cfg_.latent_dim}, z.values)), stage);
  return from_batch(out.value(), 0, PixelRange::kSigned);
}

// ------------------------------------------------------------ discriminator

Discriminator::Discriminator(const ProgressiveConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int64_t stages = cfg_.num_stages();
  const ConvGeometry same{1, 1};
  for (int64_t s = 0; s < stages; ++s) {
    from_rgb_.emplace_back(params_, "rgb" + std::to_string(s), 3, cfg_.channels(s), 1, ConvGeometry{1, 0}, rng,
                           layer_init(cfg_, kSqrt2));
  }
  blocks_.resize(static_cast<size_t>(stages));
  for (int64_t s = 1; s < stages; ++s) {
    const std::string p = "b" + std::to_string(s);
    blocks_[s].emplace_back(params_, p + ".conv0", cfg_.channels(s), cfg_.channels(s), 3, same, rng,
                            layer_init(cfg_, kSqrt2));
    blocks_[s].emplace_back(params_, p + ".conv1", cfg_.channels(s), cfg_.channels(s - 1), 3, same, rng,
                            layer_init(cfg_, kSqrt2));
  }
  const int64_t c0 = cfg_.channels(0);
  const int64_t extra = cfg_.minibatch_stddev ? 1 : 0;
  final_conv_ = Conv2d(params_, "final.conv", c0 + extra, c0, 3, same, rng, layer_init(cfg_, kSqrt2));
  final_dense_ = Linear(params_, "final.dense", c0 * 16, c0, rng, layer_init(cfg_, kSqrt2));
  final_out_ = Linear(params_, "final.out", c0, 1, rng, layer_init(cfg_, 1.0));
}

Var Discriminator::forward(const Var& images, ProgressiveStage stage) const {
  const int64_t k = stage.index;
  if (k < 0 || k >= cfg_.num_stages()) throw ConfigError("stage", "stage outside schedule");
  const int64_t r = stage.resolution();
  if (images.shape() != nn::Shape{images.shape()[0], 3, r, r}) {
    throw DataError("discriminator input " + nn::shape_str(images.shape()) + " does not match stage resolution");
  }
  auto block = [&](Var x, int64_t s) {
    for (const auto& conv : blocks_[s]) x = lrelu(conv.forward(x));
    return nn::avg_pool2x(x);
  };
  Var x = lrelu(from_rgb_[k].forward(images));
  if (k > 0) {
    x = block(x, k);
    if (stage.alpha < 1.0) {
      Var low = lrelu(from_rgb_[k - 1].forward(nn::avg_pool2x(images)));
      x = nn::lerp(low, x, stage.alpha);
    }
    for (int64_t s = k - 1; s >= 1; --s) x = block(x, s);
  }
  if (cfg_.minibatch_stddev) x = nn::minibatch_stddev(x);
  x = lrelu(final_conv_.forward(x));
  x = nn::reshape(x, {x.shape()[0], cfg_.channels(0) * 16});
  x = lrelu(final_dense_.forward(x));
  return final_out_.forward(x);
}

// ------------------------------------------------------------------- losses

Var critic_loss(const Discriminator& d, const Var& real, const Var& fake, const Tensor& mix, ProgressiveStage stage,
                const ProgressiveConfig& cfg, Var* grad_penalty) {
  const int64_t n = real.shape()[0];
  if (fake.shape() != real.shape() || mix.numel() != n) throw std::invalid_argument("critic_loss: shape mismatch");
  Tensor blend(real.shape());
  const int64_t per = real.numel() / n;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < per; ++k) {
      const int64_t e = i * per + k;
      blend[e] = real.value()[e] + mix[i] * (fake.value()[e] - real.value()[e]);
    }
  }
  Var d_real = d.forward(real, stage);
  Var d_fake = d.forward(fake, stage);
  Var x_hat = Var::leaf(std::move(blend), true);
  Var d_hat = d.forward(x_hat, stage);
  Var g = nn::grad(nn::sum(d_hat), {x_hat}, {}, true)[0];
  Var norm = nn::sqrt(nn::add_scalar(nn::sum_per_sample(nn::square(g)), 1e-12));
  Var gp = nn::mean(nn::square(nn::add_scalar(norm, -1.0)));
  if (grad_penalty) *grad_penalty = gp;
  Var loss = nn::sub(nn::mean(d_fake), nn::mean(d_real));
  loss = nn::add(loss, nn::scale(gp, cfg.gp_weight));
  return nn::add(loss, nn::scale(nn::mean(nn::square(d_real)), cfg.drift_weight));
}

Var generator_loss(const Discriminator& d, const Var& fake, ProgressiveStage stage) {
  return nn::scale(nn::mean(d.forward(fake, stage)), -1.0);
}

// ------------------------------------------------------------------ trainer

Trainer::Trainer(const ProgressiveConfig& cfg, std::vector<ImageTensor> images)
    : cfg_(cfg),
      sampler_(images.empty() ? 1 : images.size(), derive_seed(cfg.seed, "bulk/data")),
      noise_(derive_seed(cfg.seed, "bulk/noise")) {
  cfg_.validate();
  if (images.empty()) throw DataError("train_progressive: empty pool");
  const int64_t stages = cfg_.num_stages();
  pyramid_.resize(static_cast<size_t>(stages));
  for (const auto& img : images) {
    if (img.height() != cfg_.target_resolution || img.width() != cfg_.target_resolution) {
      throw DataError(fmt::format("train_progressive: image is {}x{}, expected {}x{}", img.height(), img.width(),
                                  cfg_.target_resolution, cfg_.target_resolution));
    }
    const ImageTensor one[] = {img};
    Tensor t = to_batch(one, PixelRange::kSigned);
    for (int64_t s = stages - 1; s >= 0; --s) {
      pyramid_[s].push_back(t);
      if (s > 0) t = avg_pool_tensor(t);
    }
  }
  Rng init(derive_seed(cfg_.seed, "bulk/init"));
  g_ = std::make_unique<Generator>(cfg_, init);
  d_ = std::make_unique<Discriminator>(cfg_, init);
  const nn::AdamConfig adam{cfg_.learning_rate, cfg_.beta1, cfg_.beta2, 1e-8};
  opt_g_ = std::make_unique<nn::Adam>(g_->params().vars(), adam);
  opt_d_ = std::make_unique<nn::Adam>(d_->params().vars(), adam);
}

int64_t Trainer::steps_per_stage() const { return (cfg_.images_per_stage + cfg_.batch_size - 1) / cfg_.batch_size; }

bool Trainer::done() const { return step_ >= cfg_.num_stages() * steps_per_stage(); }

ProgressiveStage Trainer::current_stage() const {
  const int64_t per = steps_per_stage();
  const int64_t s = std::min(step_ / per, cfg_.num_stages() - 1);
  if (s == 0) return {0, 1.0};
  const double shown = static_cast<double>((step_ - s * per) * cfg_.batch_size);
  const double fade = static_cast<double>(cfg_.images_per_stage) / 2.0;
  return {s, std::min(1.0, shown / fade)};
}

Var Trainer::real_batch(const std::vector<size_t>& idx, ProgressiveStage stage) const {
  const int64_t r = stage.resolution();
  const int64_t n = static_cast<int64_t>(idx.size());
  const int64_t per = 3 * r * r;
  Tensor out({n, 3, r, r});
  for (int64_t i = 0; i < n; ++i) {
    const Tensor& hi = pyramid_[stage.index][idx[i]];
    std::copy(hi.data().begin(), hi.data().end(), out.data().begin() + i * per);
  }
  if (stage.index > 0 && stage.alpha < 1.0) {
    // Real images fade in the same way as generated ones.
    Tensor low({n, 3, r / 2, r / 2});
    const int64_t per_low = per / 4;
    for (int64_t i = 0; i < n; ++i) {
      const Tensor& lo = pyramid_[stage.index - 1][idx[i]];
      std::copy(lo.data().begin(), lo.data().end(), low.data().begin() + i * per_low);
    }
    const Tensor up = nn::upsample_nearest2x(low);
    for (int64_t e = 0; e < out.numel(); ++e) out[e] = up[e] + stage.alpha * (out[e] - up[e]);
  }
  return Var::constant(std::move(out));
}

LogRow Trainer::step() {
  if (done()) throw std::logic_error("Trainer::step after completion");
  const ProgressiveStage stage = current_stage();
  const int64_t b = cfg_.batch_size;
  auto draw_latent = [&] {
    Tensor z({b, cfg_.latent_dim});
    for (auto& v : z.data()) v = noise_.normal();
    return Var::constant(std::move(z));
  };

  std::vector<size_t> idx(static_cast<size_t>(b));
  for (auto& i : idx) i = sampler_.next();
  Var real = real_batch(idx, stage);
  Var fake;
  {
    nn::NoGradGuard guard;
    fake = Var::constant(g_->forward(draw_latent(), stage).value());
  }
  Tensor mix({b});
  for (auto& v : mix.data()) v = noise_.uniform();
  Var gp;
  Var loss_d = critic_loss(*d_, real, fake, mix, stage, cfg_, &gp);
  opt_d_->step(nn::grad(loss_d, d_->params().vars()));

  Var loss_g = generator_loss(*d_, g_->forward(draw_latent(), stage), stage);
  opt_g_->step(nn::grad(loss_g, g_->params().vars()));

  LogRow row{step_, stage.index, stage.alpha, loss_g.item(), loss_d.item(), gp.item()};
  ++step_;
  return row;
}

Archive Trainer::checkpoint(const std::string& config_hash) const {
  Archive ar(kCheckpointKind);
  ar.meta()["config"] = cfg_;
  ar.meta()["config_hash"] = config_hash;
  ar.meta()["step"] = step_;
  const ProgressiveStage stage = current_stage();
  ar.meta()["stage"] = stage.index;
  ar.meta()["alpha"] = stage.alpha;
  ar.meta()["sampler"] = sampler_.state();
  ar.meta()["rng"] = noise_.state();
  nn::save_parameters(ar, "g/", g_->params());
  nn::save_parameters(ar, "d/", d_->params());
  opt_g_->save(ar, "opt_g/");
  opt_d_->save(ar, "opt_d/");
  return ar;
}

void Trainer::restore(const Archive& ar) {
  if (ar.kind() != kCheckpointKind) throw DataError("not a progressive GAN checkpoint: " + ar.kind());
  if (nlohmann::json(cfg_) != ar.meta().at("config")) throw ConfigError("bulk", "checkpoint config differs");
  nn::load_parameters(ar, "g/", g_->params());
  nn::load_parameters(ar, "d/", d_->params());
  opt_g_->load(ar, "opt_g/");
  opt_d_->load(ar, "opt_d/");
  sampler_.restore(ar.meta().at("sampler").get<std::string>());
  noise_.restore(ar.meta().at("rng").get<std::string>());
  step_ = ar.meta().at("step").get<int64_t>();
}

// --------------------------------------------------------------- checkpoint

GeneratorCheckpoint::GeneratorCheckpoint(Archive archive) : archive_(std::move(archive)) {
  if (archive_.kind() != kCheckpointKind) throw DataError("not a progressive GAN checkpoint: " + archive_.kind());
  cfg_ = archive_.meta().at("config").get<ProgressiveConfig>();
  Rng unused(0);
  generator_ = std::make_shared<Generator>(cfg_, unused);
  nn::load_parameters(archive_, "g/", generator_->params());
}

GeneratorCheckpoint GeneratorCheckpoint::load(const fs::path& path) {
  return GeneratorCheckpoint(Archive::load(path, kCheckpointKind));
}

std::string GeneratorCheckpoint::config_hash() const { return archive_.meta().value("config_hash", std::string{}); }

// ---------------------------------------------------------------- training

GeneratorCheckpoint train_progressive(const std::vector<ImageTensor>& pool, const ProgressiveConfig& cfg,
                                      const TrainOptions& options) {
  Trainer trainer(cfg, pool);
  if (options.resume) trainer.restore(options.resume->archive());

  std::ofstream log;
  if (options.log_csv) {
    const bool append = options.resume.has_value() && fs::exists(*options.log_csv);
    log.open(*options.log_csv, append ? std::ios::app : std::ios::trunc);
    if (!log) throw Error("cannot write " + options.log_csv->string());
    if (!append) log << "step,stage,alpha,loss_g,loss_d,grad_penalty\n";
  }
  auto save = [&] {
    if (options.checkpoint_path) trainer.checkpoint(options.config_hash).save(*options.checkpoint_path);
  };

  while (!trainer.done() && (options.max_steps < 0 || trainer.step_index() < options.max_steps)) {
    const LogRow row = trainer.step();
    if (!std::isfinite(row.loss_d) || !std::isfinite(row.loss_g)) {
      throw Error(fmt::format("progressive training diverged at step {} (loss_d={}, loss_g={})", row.step,
                              row.loss_d, row.loss_g));
    }
    if (log.is_open()) {
      log << fmt::format("{},{},{:.6f},{:.17g},{:.17g},{:.17g}\n", row.step, row.stage, row.alpha, row.loss_g,
                         row.loss_d, row.grad_penalty);
    }
    if (options.on_step) options.on_step(row);
    if (options.checkpoint_every > 0 && (row.step + 1) % options.checkpoint_every == 0) save();
  }
  GeneratorCheckpoint out(trainer.checkpoint(options.config_hash));
  save();
  return out;
}

Manifest generate_bulk(const GeneratorCheckpoint& ckpt, int64_t count, uint64_t seed, const fs::path& out_dir,
                       const std::string& pool) {
  if (count < 0) throw ConfigError("count", "must be nonnegative");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error("cannot create output directory " + out_dir.string());

  const Generator& g = ckpt.generator();
  const int64_t dim = g.config().latent_dim;
  const ProgressiveStage stage = ckpt.final_stage();
  constexpr int64_t kBatch = 64;
  Rng stream(seed);
  Manifest out;
  out.reserve(static_cast<size_t>(count));
  nn::NoGradGuard guard;
  for (int64_t start = 0; start < count; start += kBatch) {
    const int64_t n = std::min(kBatch, count - start);
    Tensor z({n, dim});
    for (auto& v : z.data()) v = stream.normal();
    const Tensor images = g.forward(Var::constant(std::move(z)), stage).value();
    for (int64_t i = 0; i < n; ++i) {
      const std::string png = encode_png(convert_range(from_batch(images, i, PixelRange::kSigned), PixelRange::kUnit));
      ManifestRecord r;
      r.id = sha256_hex(png);
      const fs::path path = fs::absolute(out_dir / (r.id + ".png"));
      if (fs::exists(path)) throw Error("generated image collides with existing file " + path.string());
      std::ofstream os(path, std::ios::binary);
      os.write(png.data(), static_cast<std::streamsize>(png.size()));
      if (!os) throw Error("cannot write " + path.string());
      r.path = path.string();
      r.provenance = Provenance::kGeneratedPhase1;
      r.pool = pool;
      out.push_back(std::move(r));
    }
  }
  log::info(fmt::format("generated {} images into {}", count, out_dir.string()));
  return out;
}

}  // namespace bpa::bulk
