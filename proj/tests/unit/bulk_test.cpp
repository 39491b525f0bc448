#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "bpa/archive.hpp"
#include "bpa/bulk.hpp"
#include "bpa/error.hpp"
#include "bpa/nn/ops.hpp"
#include "bpa/toy.hpp"
#include "gradcheck.hpp"
#include "temp_dir.hpp"

using namespace bpa;
using namespace bpa::bulk;
using bpa::testing::TempDir;

namespace {

ProgressiveConfig tiny_config() {
  ProgressiveConfig c;
  c.target_resolution = 16;
  c.latent_dim = 16;
  c.fmap_base = 64;
  c.fmap_max = 8;
  c.batch_size = 4;
  c.images_per_stage = 16;
  c.seed = 5;
  return c;
}

std::vector<ImageTensor> toy_pool(int n, int64_t size) {
  Rng rng(1);
  std::vector<ImageTensor> out;
  for (int i = 0; i < n; ++i) out.push_back(toy::render(toy::LesionKind::kPlain, rng, {size, false}));
  return out;
}

nn::Tensor latents(int64_t n, int64_t dim, uint64_t seed) {
  nn::Tensor z({n, dim});
  const auto vs = sample_latent(n, dim, seed);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t k = 0; k < dim; ++k) z[i * dim + k] = vs[static_cast<size_t>(i)].values[static_cast<size_t>(k)];
  return z;
}

double largest_gap(const nn::Tensor& a, const nn::Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double worst = 0;
  for (int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST(Latent, StatisticsAndDeterminism) {
  const auto z = sample_latent(2000, 8, 42);
  ASSERT_EQ(z.size(), 2000u);
  double sum = 0, sq = 0;
  for (const auto& v : z) {
    ASSERT_EQ(v.values.size(), 8u);
    EXPECT_EQ(v.seed, 42u);
    for (double x : v.values) {
      sum += x;
      sq += x * x;
    }
  }
  const double n = 16000.0;
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0, 0.05);
  EXPECT_EQ(sample_latent(3, 8, 42)[2].values, z[2].values);
  EXPECT_NE(sample_latent(3, 8, 43)[0].values, z[0].values);
  EXPECT_THROW(sample_latent(1, 0, 0), ConfigError);
}

TEST(Schedule, DoublesFromFourToTarget) {
  EXPECT_EQ(stage_schedule(32), (std::vector<int64_t>{4, 8, 16, 32}));
  EXPECT_EQ(stage_schedule(4), (std::vector<int64_t>{4}));
  EXPECT_EQ(stage_schedule(256).size(), 7u);
  EXPECT_THROW(stage_schedule(24), ConfigError);
  EXPECT_THROW(stage_schedule(2), ConfigError);
  ProgressiveConfig c;
  EXPECT_EQ(c.num_stages(), 4);
  EXPECT_EQ(c.channels(0), 32);
  EXPECT_EQ(c.channels(3), 16);
}

TEST(Config, JsonRoundTripAndValidation) {
  const ProgressiveConfig c = tiny_config();
  const nlohmann::json j = c;
  EXPECT_EQ(nlohmann::json(j.get<ProgressiveConfig>()), j);
  ProgressiveConfig bad = c;
  bad.batch_size = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW((nlohmann::json{{"fmap_maximum", 3}}.get<ProgressiveConfig>()), ConfigError);
}

TEST(Generator, ShapesAndRangeAtEveryStage) {
  const ProgressiveConfig c = tiny_config();
  Rng rng(1);
  Generator g(c, rng);
  Discriminator d(c, rng);
  const nn::Var z = nn::Var::constant(latents(3, c.latent_dim, 9));
  for (int64_t s = 0; s < c.num_stages(); ++s) {
    for (double alpha : {0.0, 0.5, 1.0}) {
      if (s == 0 && alpha < 1.0) continue;
      const ProgressiveStage stage{s, alpha};
      const nn::Var img = g.forward(z, stage);
      ASSERT_EQ(img.shape(), (nn::Shape{3, 3, stage.resolution(), stage.resolution()}));
      for (double v : img.value().data()) {
        ASSERT_GE(v, -1.0);
        ASSERT_LE(v, 1.0);
      }
      EXPECT_EQ(d.forward(img, stage).numel(), 3);
    }
  }
  EXPECT_THROW(g.forward(z, {c.num_stages(), 1.0}), ConfigError);
  const ImageTensor one = g.generate(sample_latent(1, c.latent_dim, 3)[0], {2, 1.0});
  EXPECT_EQ(one.height(), 16);
}

TEST(Generator, ReflectPaddingKeepsShapesAndParameters) {
  ProgressiveConfig c = tiny_config();
  c.reflect_padding = true;
  const nlohmann::json j = c;
  EXPECT_TRUE(j.get<ProgressiveConfig>().reflect_padding);

  Rng rng_zero(1), rng_reflect(1);
  Generator zero(tiny_config(), rng_zero);
  Generator reflect(c, rng_reflect);
  ASSERT_EQ(zero.params().vars().size(), reflect.params().vars().size());
  const nn::Var z = nn::Var::constant(latents(2, c.latent_dim, 9));
  for (int64_t s = 0; s < c.num_stages(); ++s) {
    const nn::Var a = zero.forward(z, {s, 1.0});
    const nn::Var b = reflect.forward(z, {s, 1.0});
    ASSERT_EQ(a.shape(), b.shape());
    // Same weights; only the border treatment differs.
    EXPECT_GT(largest_gap(a.value(), b.value()), 0.0);
  }
}

TEST(Generator, FadeInIdentities) {
  const ProgressiveConfig c = tiny_config();
  Rng rng(2);
  Generator g(c, rng);
  const nn::Var z = nn::Var::constant(latents(2, c.latent_dim, 4));
  for (int64_t s = 1; s < c.num_stages(); ++s) {
    const nn::Tensor hi = g.pathway(z, s).value();
    const nn::Tensor lo = nn::upsample_nearest2x(g.pathway(z, s - 1).value());
    EXPECT_LE(largest_gap(g.forward(z, {s, 1.0}).value(), hi), 1e-5);
    EXPECT_LE(largest_gap(g.forward(z, {s, 0.0}).value(), lo), 1e-5);
  }
}

TEST(Losses, CriticLossGradientMatchesFiniteDifferences) {
  ProgressiveConfig c = tiny_config();
  c.target_resolution = 4;
  c.fmap_max = 4;
  c.latent_dim = 4;
  Rng rng(3);
  Discriminator d(c, rng);
  Generator g(c, rng);
  const ProgressiveStage stage{0, 1.0};
  const nn::Tensor real = bpa::testing::random_tensor({2, 3, 4, 4}, rng, 0.5);
  const nn::Var z = nn::Var::constant(latents(2, c.latent_dim, 1));
  const nn::Tensor mix({2}, std::vector<double>{0.3, 0.7});

  // Gradients with respect to 10 sampled critic parameters, holding the rest fixed.
  auto params = d.params().vars();
  std::vector<std::pair<size_t, int64_t>> picks;
  for (int i = 0; i < 10; ++i) {
    const size_t p = rng.below(params.size());
    picks.emplace_back(p, static_cast<int64_t>(rng.below(static_cast<uint64_t>(params[p].numel()))));
  }
  const nn::Var fake = nn::Var::constant(g.forward(z, stage).value());
  const nn::Var loss = critic_loss(d, nn::Var::constant(real), fake, mix, stage, c);
  const auto grads = nn::grad(loss, params);
  for (const auto& [p, k] : picks) {
    const double original = params[p].value()[k];
    auto eval = [&](double v) {
      params[p].mutable_value()[k] = v;
      const double out = critic_loss(d, nn::Var::constant(real), fake, mix, stage, c).item();
      params[p].mutable_value()[k] = original;
      return out;
    };
    const double eps = 1e-6;
    const double numeric = (eval(original + eps) - eval(original - eps)) / (2 * eps);
    const double analytic = grads[p].value()[k];
    EXPECT_LE(std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}), 1e-3);
  }
}

TEST(Trainer, CheckpointRoundTripIsBitwise) {
  const ProgressiveConfig c = tiny_config();
  const auto pool = toy_pool(8, 16);
  Trainer a(c, pool);
  for (int i = 0; i < 5; ++i) a.step();
  const std::string bytes = a.checkpoint("h").serialize();

  Trainer b(c, pool);
  b.restore(Archive::deserialize(bytes));
  EXPECT_EQ(b.step_index(), 5);
  EXPECT_EQ(b.checkpoint("h").serialize(), bytes);
  for (int i = 0; i < 3; ++i) {
    const LogRow ra = a.step(), rb = b.step();
    EXPECT_EQ(ra.loss_d, rb.loss_d);
    EXPECT_EQ(ra.loss_g, rb.loss_g);
  }
  EXPECT_EQ(a.checkpoint("h").serialize(), b.checkpoint("h").serialize());
}

TEST(Trainer, RunsEveryStageWithFiniteLosses) {
  const ProgressiveConfig c = tiny_config();
  Trainer t(c, toy_pool(8, 16));
  EXPECT_EQ(t.steps_per_stage(), 4);
  int64_t last_stage = -1;
  while (!t.done()) {
    const LogRow row = t.step();
    EXPECT_TRUE(std::isfinite(row.loss_d));
    EXPECT_TRUE(std::isfinite(row.loss_g));
    EXPECT_GE(row.stage, last_stage);
    EXPECT_GE(row.alpha, 0.0);
    EXPECT_LE(row.alpha, 1.0);
    if (row.stage == 0) EXPECT_EQ(row.alpha, 1.0);
    last_stage = row.stage;
  }
  EXPECT_EQ(last_stage, c.num_stages() - 1);
}

TEST(Bulk, TrainingAndGenerationAreDeterministic) {
  TempDir dir;
  const ProgressiveConfig c = tiny_config();
  const auto pool = toy_pool(8, 16);
  TrainOptions opts;
  opts.max_steps = 6;
  const auto first = train_progressive(pool, c, opts);
  const auto second = train_progressive(pool, c, opts);
  EXPECT_EQ(first.archive().serialize(), second.archive().serialize());

  first.save(dir / "g.bpa");
  const auto loaded = GeneratorCheckpoint::load(dir / "g.bpa");
  const auto z = sample_latent(1, c.latent_dim, 8)[0];
  const ImageTensor x = first.generator().generate(z, first.final_stage());
  const ImageTensor y = loaded.generator().generate(z, loaded.final_stage());
  EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));

  std::filesystem::create_directories(dir / "a");
  std::filesystem::create_directories(dir / "b");
  const Manifest ma = generate_bulk(first, 20, 3, dir / "a");
  const Manifest mb = generate_bulk(first, 20, 3, dir / "b");
  ASSERT_EQ(ma.size(), 20u);
  std::set<std::string> ids;
  for (size_t i = 0; i < ma.size(); ++i) {
    EXPECT_EQ(ma[i].id, mb[i].id);
    EXPECT_EQ(ma[i].provenance, Provenance::kGeneratedPhase1);
    EXPECT_EQ(ma[i].pool.value(), "nevusG");
    ids.insert(ma[i].id);
  }
  EXPECT_EQ(ids.size(), 20u);
}
