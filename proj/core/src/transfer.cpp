#include "bpa/transfer.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "bpa/dataset.hpp"
#include "bpa/error.hpp"
#include "bpa/hash.hpp"
#include "bpa/log.hpp"
#include "json_fields.hpp"

namespace fs = std::filesystem;

namespace bpa::transfer {

using nn::Conv2d;
using nn::ConvGeometry;
using nn::ConvTranspose2d;
using nn::Init;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

Tensor image_tensor(const ImageTensor& img) {
  const ImageTensor one[] = {img};
  return to_batch(one, PixelRange::kSigned);
}

Tensor flip_tensor(const Tensor& t) {
  Tensor out(t.shape());
  const int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t k = 0; k < c; ++k)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) out.at(i, k, y, x) = t.at(i, k, y, w - 1 - x);
  return out;
}

// Spatial size of the patch critic's output for a square input of side `side`.
int64_t patch_output_side(const CycleConfig& cfg, int64_t side) {
  for (int64_t l = 0; l < cfg.discriminator_layers; ++l) side = nn::conv_out_size(side, 4, {2, 1});
  side = nn::conv_out_size(side, 4, {1, 1});
  return nn::conv_out_size(side, 4, {1, 1});
}

}  // namespace

double CycleConfig::lr_at(int64_t step) const {
  const auto start = static_cast<int64_t>(std::floor(static_cast<double>(steps) * decay_start));
  if (step < start) return learning_rate;
  const double span = static_cast<double>(steps - start + 1);
  return learning_rate * std::max(0.0, 1.0 - static_cast<double>(step - start + 1) / span);
}

void CycleConfig::validate() const {
  if (generator != "resnet" && generator != "identity") {
    throw ConfigError("generator", "must be \"resnet\" or \"identity\", got \"" + generator + "\"");
  }
  if (ngf <= 0 || ndf <= 0) throw ConfigError("ngf", "filter counts must be positive");
  if (residual_blocks < 0) throw ConfigError("residual_blocks", "must be nonnegative");
  if (discriminator_layers < 1) throw ConfigError("discriminator_layers", "must be at least 1");
  if (lambda_cycle < 0 || identity_ratio < 0) throw ConfigError("lambda_cycle", "loss weights must be nonnegative");
  if (replay_size < 0) throw ConfigError("replay_size", "must be nonnegative");
  if (steps < 0) throw ConfigError("steps", "must be nonnegative");
  if (decay_start < 0 || decay_start > 1) throw ConfigError("decay_start", "must be in [0, 1]");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate", "must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("beta1", "Adam betas must be in [0, 1)");
}

void to_json(nlohmann::json& j, const CycleConfig& c) {
  j = {{"generator", c.generator},
       {"ngf", c.ngf},
       {"residual_blocks", c.residual_blocks},
       {"ndf", c.ndf},
       {"discriminator_layers", c.discriminator_layers},
       {"init_std", c.init_std},
       {"lambda_cycle", c.lambda_cycle},
       {"identity_ratio", c.identity_ratio},
       {"replay_size", c.replay_size},
       {"steps", c.steps},
       {"decay_start", c.decay_start},
       {"learning_rate", c.learning_rate},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"flip", c.flip},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, CycleConfig& c) {
  detail::reject_unknown(j, {"generator", "ngf", "residual_blocks", "ndf", "discriminator_layers", "init_std",
                             "lambda_cycle", "identity_ratio", "replay_size", "steps", "decay_start", "learning_rate",
                             "beta1", "beta2", "flip", "seed"});
  detail::read_field(j, "generator", c.generator);
  detail::read_field(j, "ngf", c.ngf);
  detail::read_field(j, "residual_blocks", c.residual_blocks);
  detail::read_field(j, "ndf", c.ndf);
  detail::read_field(j, "discriminator_layers", c.discriminator_layers);
  detail::read_field(j, "init_std", c.init_std);
  detail::read_field(j, "lambda_cycle", c.lambda_cycle);
  detail::read_field(j, "identity_ratio", c.identity_ratio);
  detail::read_field(j, "replay_size", c.replay_size);
  detail::read_field(j, "steps", c.steps);
  detail::read_field(j, "decay_start", c.decay_start);
  detail::read_field(j, "learning_rate", c.learning_rate);
  detail::read_field(j, "beta1", c.beta1);
  detail::read_field(j, "beta2", c.beta2);
  detail::read_field(j, "flip", c.flip);
  detail::read_field(j, "seed", c.seed);
}

// ---------------------------------------------------------------- networks

ResnetTranslator::ResnetTranslator(const CycleConfig& cfg, Rng& rng) {
  const Init init = Init::normal(cfg.init_std);
  const int64_t f = cfg.ngf;
  stem_ = Conv2d(params_, "stem", 3, f, 7, ConvGeometry{1, 0}, rng, init);
  down_.emplace_back(params_, "down0", f, 2 * f, 3, ConvGeometry{2, 1}, rng, init);
  down_.emplace_back(params_, "down1", 2 * f, 4 * f, 3, ConvGeometry{2, 1}, rng, init);
  for (int64_t i = 0; i < cfg.residual_blocks; ++i) {
    const std::string p = "res" + std::to_string(i);
    blocks_.emplace_back(Conv2d(params_, p + ".conv0", 4 * f, 4 * f, 3, ConvGeometry{1, 0}, rng, init),
                         Conv2d(params_, p + ".conv1", 4 * f, 4 * f, 3, ConvGeometry{1, 0}, rng, init));
  }
  up_.emplace_back(params_, "up0", 4 * f, 2 * f, 3, ConvGeometry{2, 1}, 1, rng, init);
  up_.emplace_back(params_, "up1", 2 * f, f, 3, ConvGeometry{2, 1}, 1, rng, init);
  head_ = Conv2d(params_, "head", f, 3, 7, ConvGeometry{1, 0}, rng, init);
}

Var ResnetTranslator::forward(const Var& x) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] % 4 != 0 || s[3] % 4 != 0 || s[2] < 8 || s[3] < 8) {
    throw DataError("translator input " + nn::shape_str(s) + " must be [N,3,H,W] with H, W multiples of 4 (>= 8)");
  }
  Var h = nn::relu(nn::instance_norm(stem_.forward(nn::reflect_pad(x, 3))));
  for (const auto& conv : down_) h = nn::relu(nn::instance_norm(conv.forward(h)));
  for (const auto& [c0, c1] : blocks_) {
    Var y = nn::relu(nn::instance_norm(c0.forward(nn::reflect_pad(h, 1))));
    y = nn::instance_norm(c1.forward(nn::reflect_pad(y, 1)));
    h = nn::add(h, y);
  }
  for (const auto& conv : up_) h = nn::relu(nn::instance_norm(conv.forward(h)));
  return nn::tanh(head_.forward(nn::reflect_pad(h, 3)));
}

std::unique_ptr<Translator> make_translator(const CycleConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.generator == "identity") return std::make_unique<IdentityTranslator>();
  return std::make_unique<ResnetTranslator>(cfg, rng);
}

PatchDiscriminator::PatchDiscriminator(const CycleConfig& cfg, Rng& rng) {
  const Init init = Init::normal(cfg.init_std);
  int64_t in = 3;
  int64_t out = cfg.ndf;
  for (int64_t l = 0; l < cfg.discriminator_layers; ++l) {
    convs_.emplace_back(params_, "conv" + std::to_string(l), in, out, 4, ConvGeometry{2, 1}, rng, init);
    in = out;
    out = cfg.ndf * std::min<int64_t>(int64_t{1} << (l + 1), 8);
  }
  convs_.emplace_back(params_, "conv" + std::to_string(cfg.discriminator_layers), in, out, 4, ConvGeometry{1, 1}, rng,
                      init);
  convs_.emplace_back(params_, "out", out, 1, 4, ConvGeometry{1, 1}, rng, init);
}

Var PatchDiscriminator::forward(const Var& x) const {
  Var h = x;
  for (size_t i = 0; i + 1 < convs_.size(); ++i) {
    h = convs_[i].forward(h);
    if (i > 0) h = nn::instance_norm(h);
    h = nn::leaky_relu(h, 0.2);
  }
  return convs_.back().forward(h);
}

// ------------------------------------------------------------------ losses

double cycle_loss(const ImageTensor& x, const ImageTensor& reconstructed) {
  if (x.height() != reconstructed.height() || x.width() != reconstructed.width()) {
    throw std::invalid_argument("cycle_loss: shape mismatch");
  }
  const auto a = x.data();
  const auto b = reconstructed.data();
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

Var l1_loss(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("l1_loss: shape mismatch");
  return nn::mean(nn::abs(nn::sub(a, b)));
}

Var lsgan_loss(const Var& scores, double target) { return nn::mean(nn::square(nn::add_scalar(scores, -target))); }

Var total_generator_loss(const GeneratorLossTerms& t, const CycleConfig& cfg) {
  Var loss = nn::add(t.adv_ab, t.adv_ba);
  loss = nn::add(loss, nn::scale(nn::add(t.cycle_a, t.cycle_b), cfg.lambda_cycle));
  return nn::add(loss, nn::scale(nn::add(t.identity_a, t.identity_b), cfg.lambda_identity()));
}

// ------------------------------------------------------------ replay pool

Tensor ReplayPool::query(const Tensor& batch) {
  if (capacity_ == 0) return batch;
  Tensor out(batch.shape());
  const int64_t n = batch.dim(0);
  const int64_t per = batch.numel() / n;
  for (int64_t i = 0; i < n; ++i) {
    Tensor item({1, batch.dim(1), batch.dim(2), batch.dim(3)});
    std::copy(batch.data().begin() + i * per, batch.data().begin() + (i + 1) * per, item.data().begin());
    Tensor chosen = item;
    if (static_cast<int64_t>(stored_.size()) < capacity_) {
      stored_.push_back(item);
    } else if (rng_.uniform() > 0.5) {
      const size_t j = rng_.below(stored_.size());
      chosen = stored_[j];
      stored_[j] = std::move(item);
    }
    std::copy(chosen.data().begin(), chosen.data().end(), out.data().begin() + i * per);
  }
  return out;
}

void ReplayPool::save(Archive& ar, const std::string& prefix) const {
  ar.meta()[prefix + "size"] = stored_.size();
  ar.meta()[prefix + "rng"] = rng_.state();
  for (size_t i = 0; i < stored_.size(); ++i) ar.put(prefix + std::to_string(i), stored_[i]);
}

void ReplayPool::load(const Archive& ar, const std::string& prefix) {
  const auto n = ar.meta().at(prefix + "size").get<size_t>();
  rng_.restore(ar.meta().at(prefix + "rng").get<std::string>());
  stored_.clear();
  for (size_t i = 0; i < n; ++i) stored_.push_back(ar.get(prefix + std::to_string(i)));
}

// ----------------------------------------------------------------- trainer

CycleTrainer::CycleTrainer(const CycleConfig& cfg, std::vector<ImageTensor> domain_a,
                           std::vector<ImageTensor> domain_b)
    : cfg_(cfg),
      sampler_a_(domain_a.empty() ? 1 : domain_a.size(), derive_seed(cfg.seed, "cycle/data_a")),
      sampler_b_(domain_b.empty() ? 1 : domain_b.size(), derive_seed(cfg.seed, "cycle/data_b")),
      pool_a_(cfg.replay_size, derive_seed(cfg.seed, "cycle/pool_a")),
      pool_b_(cfg.replay_size, derive_seed(cfg.seed, "cycle/pool_b")),
      aug_(derive_seed(cfg.seed, "cycle/augment")) {
  cfg_.validate();
  if (domain_a.empty() || domain_b.empty()) throw DataError("cycle_train: empty domain");
  const int64_t side = domain_a.front().height();
  for (const auto* domain : {&domain_a, &domain_b}) {
    for (const auto& img : *domain) {
      if (img.height() != side || img.width() != side) {
        throw DataError(fmt::format("cycle_train: resolution mismatch ({}x{} vs {}x{})", img.height(), img.width(),
                                    side, side));
      }
    }
  }
  if (patch_output_side(cfg_, side) < 1) {
    throw ConfigError("discriminator_layers", fmt::format("too many layers for {}x{} images", side, side));
  }
  for (const auto& img : domain_a) a_.push_back(image_tensor(img));
  for (const auto& img : domain_b) b_.push_back(image_tensor(img));
  seen_a_.flags.assign(a_.size(), false);
  seen_b_.flags.assign(b_.size(), false);

  Rng init(derive_seed(cfg_.seed, "cycle/init"));
  g_ab_ = make_translator(cfg_, init);
  g_ba_ = make_translator(cfg_, init);
  d_a_ = std::make_unique<PatchDiscriminator>(cfg_, init);
  d_b_ = std::make_unique<PatchDiscriminator>(cfg_, init);
  std::vector<Var> gp = g_ab_->params().vars();
  for (const auto& v : g_ba_->params().vars()) gp.push_back(v);
  std::vector<Var> dp = d_a_->params().vars();
  for (const auto& v : d_b_->params().vars()) dp.push_back(v);
  const nn::AdamConfig adam{cfg_.learning_rate, cfg_.beta1, cfg_.beta2, 1e-8};
  opt_g_ = std::make_unique<nn::Adam>(gp, adam);
  opt_d_ = std::make_unique<nn::Adam>(dp, adam);
}

Var CycleTrainer::draw(const std::vector<Tensor>& domain, EpochSampler& sampler, Seen& seen) {
  const size_t i = sampler.next();
  if (!seen.flags[i]) {
    seen.flags[i] = true;
    ++seen.count;
  }
  if (cfg_.flip && aug_.bernoulli(0.5)) return Var::constant(flip_tensor(domain[i]));
  return Var::constant(domain[i]);
}

GeneratorLossTerms CycleTrainer::generator_terms(const Var& real_a, const Var& real_b) const {
  GeneratorLossTerms t;
  t.fake_b = g_ab_->forward(real_a);
  t.fake_a = g_ba_->forward(real_b);
  t.adv_ab = lsgan_loss(d_b_->forward(t.fake_b), 1.0);
  t.adv_ba = lsgan_loss(d_a_->forward(t.fake_a), 1.0);
  t.cycle_a = l1_loss(g_ba_->forward(t.fake_b), real_a);
  t.cycle_b = l1_loss(g_ab_->forward(t.fake_a), real_b);
  if (cfg_.lambda_identity() > 0.0) {
    t.identity_a = l1_loss(g_ba_->forward(real_a), real_a);
    t.identity_b = l1_loss(g_ab_->forward(real_b), real_b);
  } else {
    t.identity_a = Var::constant(Tensor::scalar(0.0));
    t.identity_b = Var::constant(Tensor::scalar(0.0));
  }
  return t;
}

CycleLogRow CycleTrainer::step() {
  if (done()) throw std::logic_error("CycleTrainer::step after completion");
  const double lr = cfg_.lr_at(step_);
  opt_g_->set_lr(lr);
  opt_d_->set_lr(lr);

  Var real_a = draw(a_, sampler_a_, seen_a_);
  Var real_b = draw(b_, sampler_b_, seen_b_);

  const GeneratorLossTerms t = generator_terms(real_a, real_b);
  Var loss_g = total_generator_loss(t, cfg_);
  std::vector<Var> g_params = g_ab_->params().vars();
  for (const auto& v : g_ba_->params().vars()) g_params.push_back(v);
  if (!g_params.empty()) opt_g_->step(nn::grad(loss_g, g_params));

  Var fake_b = Var::constant(pool_b_.query(t.fake_b.value()));
  Var fake_a = Var::constant(pool_a_.query(t.fake_a.value()));
  Var loss_d_a = nn::scale(nn::add(lsgan_loss(d_a_->forward(real_a), 1.0), lsgan_loss(d_a_->forward(fake_a), 0.0)), 0.5);
  Var loss_d_b = nn::scale(nn::add(lsgan_loss(d_b_->forward(real_b), 1.0), lsgan_loss(d_b_->forward(fake_b), 0.0)), 0.5);
  std::vector<Var> d_params = d_a_->params().vars();
  for (const auto& v : d_b_->params().vars()) d_params.push_back(v);
  opt_d_->step(nn::grad(nn::add(loss_d_a, loss_d_b), d_params));

  CycleLogRow row{step_,
                  t.adv_ab.item(),
                  t.adv_ba.item(),
                  loss_d_a.item(),
                  loss_d_b.item(),
                  t.cycle_a.item() + t.cycle_b.item(),
                  t.identity_a.item() + t.identity_b.item()};
  ++step_;
  return row;
}

Archive CycleTrainer::checkpoint(const std::string& config_hash) const {
  Archive ar(kCheckpointKind);
  ar.meta()["config"] = cfg_;
  ar.meta()["config_hash"] = config_hash;
  ar.meta()["resolution"] = a_.front().dim(2);
  ar.meta()["step"] = step_;
  ar.meta()["sampler_a"] = sampler_a_.state();
  ar.meta()["sampler_b"] = sampler_b_.state();
  ar.meta()["rng"] = aug_.state();
  nn::save_parameters(ar, "g_ab/", g_ab_->params());
  nn::save_parameters(ar, "g_ba/", g_ba_->params());
  nn::save_parameters(ar, "d_a/", d_a_->params());
  nn::save_parameters(ar, "d_b/", d_b_->params());
  opt_g_->save(ar, "opt_g/");
  opt_d_->save(ar, "opt_d/");
  pool_a_.save(ar, "pool_a/");
  pool_b_.save(ar, "pool_b/");
  return ar;
}

void CycleTrainer::restore(const Archive& ar) {
  if (ar.kind() != kCheckpointKind) throw DataError("not a translator checkpoint: " + ar.kind());
  if (nlohmann::json(cfg_) != ar.meta().at("config")) throw ConfigError("transfer", "checkpoint config differs");
  nn::load_parameters(ar, "g_ab/", g_ab_->params());
  nn::load_parameters(ar, "g_ba/", g_ba_->params());
  nn::load_parameters(ar, "d_a/", d_a_->params());
  nn::load_parameters(ar, "d_b/", d_b_->params());
  opt_g_->load(ar, "opt_g/");
  opt_d_->load(ar, "opt_d/");
  pool_a_.load(ar, "pool_a/");
  pool_b_.load(ar, "pool_b/");
  sampler_a_.restore(ar.meta().at("sampler_a").get<std::string>());
  sampler_b_.restore(ar.meta().at("sampler_b").get<std::string>());
  aug_.restore(ar.meta().at("rng").get<std::string>());
  step_ = ar.meta().at("step").get<int64_t>();
}

// -------------------------------------------------------------- checkpoint

TranslatorCheckpoint::TranslatorCheckpoint(Archive archive) : archive_(std::move(archive)) {
  if (archive_.kind() != kCheckpointKind) throw DataError("not a translator checkpoint: " + archive_.kind());
  cfg_ = archive_.meta().at("config").get<CycleConfig>();
  resolution_ = archive_.meta().at("resolution").get<int64_t>();
  Rng unused(0);
  g_ab_ = make_translator(cfg_, unused);
  g_ba_ = make_translator(cfg_, unused);
  nn::load_parameters(archive_, "g_ab/", g_ab_->params());
  nn::load_parameters(archive_, "g_ba/", g_ba_->params());
}

TranslatorCheckpoint TranslatorCheckpoint::load(const fs::path& path) {
  return TranslatorCheckpoint(Archive::load(path, kCheckpointKind));
}

std::string TranslatorCheckpoint::config_hash() const { return archive_.meta().value("config_hash", std::string{}); }

TranslatorCheckpoint cycle_train(const std::vector<ImageTensor>& domain_a, const std::vector<ImageTensor>& domain_b,
                                 const CycleConfig& cfg, const CycleTrainOptions& options) {
  CycleTrainer trainer(cfg, domain_a, domain_b);
  if (options.resume) trainer.restore(options.resume->archive());
  std::ofstream log;
  if (options.log_csv) {
    const bool append = options.resume.has_value() && fs::exists(*options.log_csv);
    log.open(*options.log_csv, append ? std::ios::app : std::ios::trunc);
    if (!log) throw Error("cannot write " + options.log_csv->string());
    if (!append) log << "step,loss_g_ab,loss_g_ba,loss_d_a,loss_d_b,loss_cyc,loss_id\n";
  }
  while (!trainer.done()) {
    const CycleLogRow r = trainer.step();
    if (!std::isfinite(r.loss_g_ab + r.loss_g_ba + r.loss_d_a + r.loss_d_b + r.loss_cyc + r.loss_id)) {
      throw Error(fmt::format("cycle training diverged at step {}", r.step));
    }
    if (log.is_open()) {
      log << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.step, r.loss_g_ab, r.loss_g_ba,
                         r.loss_d_a, r.loss_d_b, r.loss_cyc, r.loss_id);
    }
    if (options.on_step) options.on_step(r);
  }
  TranslatorCheckpoint out(trainer.checkpoint(options.config_hash));
  if (options.checkpoint_path) out.save(*options.checkpoint_path);
  return out;
}

// --------------------------------------------------------------- translate

std::vector<ImageTensor> translate_images(const Translator& g, const std::vector<ImageTensor>& images) {
  constexpr size_t kBatch = 16;
  std::vector<ImageTensor> out;
  out.reserve(images.size());
  nn::NoGradGuard guard;
  for (size_t start = 0; start < images.size(); start += kBatch) {
    const size_t end = std::min(images.size(), start + kBatch);
    std::vector<ImageTensor> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                   images.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor y = g.forward(Var::constant(to_batch(chunk, PixelRange::kSigned))).value();
    for (size_t i = 0; i < chunk.size(); ++i) {
      out.push_back(from_batch(y, static_cast<int64_t>(i), PixelRange::kSigned));
    }
  }
  return out;
}

Manifest translate(const TranslatorCheckpoint& ckpt, const Manifest& images, Direction direction,
                   const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error("cannot create output directory " + out_dir.string());
  const Translator& g = direction == Direction::kAToB ? ckpt.a_to_b() : ckpt.b_to_a();
  const int64_t side = ckpt.resolution();
  constexpr size_t kChunk = 64;
  Manifest out;
  out.reserve(images.size());
  for (size_t start = 0; start < images.size(); start += kChunk) {
    const size_t end = std::min(images.size(), start + kChunk);
    std::vector<ImageTensor> batch;
    for (size_t i = start; i < end; ++i) {
      ImageTensor img = data::load_record_image(images[i], PixelRange::kSigned);
      if (img.height() != side || img.width() != side) {
        throw DataError(fmt::format("record {} is {}x{}, translator expects {}x{}", images[i].id, img.height(),
                                    img.width(), side, side));
      }
      batch.push_back(std::move(img));
    }
    const auto translated = translate_images(g, batch);
    for (size_t i = start; i < end; ++i) {
      const ManifestRecord& src = images[i];
      const std::string png = encode_png(convert_range(translated[i - start], PixelRange::kUnit));
      ManifestRecord r;
      r.id = sha256_hex(png);
      const fs::path path = fs::absolute(out_dir / (r.id + ".png"));
      std::ofstream os(path, std::ios::binary);
      os.write(png.data(), static_cast<std::streamsize>(png.size()));
      if (!os) throw Error("cannot write " + path.string());
      r.path = path.string();
      r.provenance = Provenance::kGeneratedPhase2;
      r.source_id = src.id;
      if (direction == Direction::kAToB) {
        if (src.provenance == Provenance::kReal) r.pool = data::pools::kApnNevus;
        if (src.provenance == Provenance::kGeneratedPhase1) r.pool = data::pools::kApnNevusG;
        r.label_structure = true;
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace bpa::transfer
