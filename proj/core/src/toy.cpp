#include "bpa/toy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "bpa/error.hpp"

namespace fs = std::filesystem;

namespace bpa::toy {
namespace {

using Rgb = std::array<double, 3>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kHairLuma = 0.08;

double luma(const Rgb& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

Rgb jitter(Rgb c, Rng& rng, double sd) {
  for (auto& v : c) v += sd * rng.normal();
  return c;
}

// Keeps lesion pigment comfortably above the hair threshold after shading.
Rgb clamp_pigment(Rgb c, double min_luma) {
  const double l = luma(c);
  if (l < min_luma) {
    for (auto& v : c) v += min_luma - l;
  }
  return c;
}

struct Bump {
  double x, y, sigma, amp;
};

double bumps_at(const std::vector<Bump>& bumps, double x, double y) {
  double s = 0.0;
  for (const auto& b : bumps) {
    const double dx = x - b.x, dy = y - b.y;
    s += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
  }
  return s;
}

struct Mesh {
  double angle, period, halfwidth, phase_u, phase_v, warp, warp_freq, warp_phase, contrast;

  double at(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    double u = c * x + s * y;
    double v = -s * x + c * y;
    u += warp * std::sin(v * warp_freq + warp_phase);
    v += warp * std::sin(u * warp_freq + 1.7 * warp_phase);
    auto line = [&](double t, double phase) {
      const double k = t / period + phase;
      const double d = std::abs(k - std::round(k)) * period;
      return std::exp(-(d * d) / (halfwidth * halfwidth));
    };
    return std::max(line(u, phase_u), line(v, phase_v));
  }
};

void draw_hair(ImageTensor& img, Rng& rng) {
  const double n = static_cast<double>(img.height());
  auto edge_point = [&]() -> std::array<double, 2> {
    const double t = rng.uniform(0.0, n);
    switch (rng.below(4)) {
      case 0:
        return {t, 0.0};
      case 1:
        return {t, n - 1};
      case 2:
        return {0.0, t};
      default:
        return {n - 1, t};
    }
  };
  const int strands = 1 + static_cast<int>(rng.below(3));
  for (int s = 0; s < strands; ++s) {
    const auto p0 = edge_point();
    const auto p2 = edge_point();
    const std::array<double, 2> p1{rng.uniform(0.0, n), rng.uniform(0.0, n)};
    const int steps = static_cast<int>(6 * n);
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      const double a = (1 - t) * (1 - t), b = 2 * (1 - t) * t, c = t * t;
      const auto x = static_cast<int64_t>(std::lround(a * p0[0] + b * p1[0] + c * p2[0]));
      const auto y = static_cast<int64_t>(std::lround(a * p0[1] + b * p1[1] + c * p2[1]));
      if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) continue;
      img.at(y, x, 0) = 0.05;
      img.at(y, x, 1) = 0.04;
      img.at(y, x, 2) = 0.04;
    }
  }
}

}  // namespace

ImageTensor render(LesionKind kind, Rng& rng, const RenderOptions& options) {
  if (options.size < 8) throw DataError("toy images must be at least 8 pixels");
  const int64_t n = options.size;
  const double scale = static_cast<double>(n) / 32.0;
  const bool malignant = kind == LesionKind::kMalignant;
  const bool mesh_on = kind != LesionKind::kPlain;

  const Rgb skin = jitter({0.86, 0.70, 0.62}, rng, 0.03);
  const double grad_angle = rng.uniform(0.0, 2 * kPi);
  const double grad_amp = rng.uniform(0.0, 0.04);

  const double cx = n / 2.0 + rng.uniform(-3.0, 3.0) * scale;
  const double cy = n / 2.0 + rng.uniform(-3.0, 3.0) * scale;
  const double ra = rng.uniform(7.0, 10.5) * scale * (malignant ? 1.1 : 1.0);
  const double rb = ra * rng.uniform(malignant ? 0.6 : 0.75, 1.0);
  const double theta = rng.uniform(0.0, kPi);
  const double lobe3 = malignant ? rng.uniform(0.12, 0.22) : rng.uniform(0.0, 0.04);
  const double lobe5 = malignant ? rng.uniform(0.08, 0.15) : 0.0;
  const double ph3 = rng.uniform(0.0, 2 * kPi), ph5 = rng.uniform(0.0, 2 * kPi);
  const double edge = rng.uniform(0.6, 1.2) * scale;

  const Rgb pigment = clamp_pigment(jitter({0.48, 0.32, 0.24}, rng, 0.04), 0.30);
  const Rgb dark_pigment = clamp_pigment(jitter({0.34, 0.22, 0.16}, rng, 0.02), 0.24);
  const Rgb veil = jitter({0.56, 0.63, 0.76}, rng, 0.03);

  std::vector<Bump> mottle;
  for (int i = 0; i < 4; ++i) {
    mottle.push_back({cx + rng.uniform(-ra, ra), cy + rng.uniform(-ra, ra), rng.uniform(2.0, 4.0) * scale,
                      rng.uniform(-0.09, 0.09)});
  }
  Bump veil_bump{cx + rng.uniform(-0.5, 0.5) * ra, cy + rng.uniform(-0.5, 0.5) * ra, rng.uniform(3.0, 5.0) * scale,
                 rng.uniform(0.45, 0.7)};
  Bump dark_bump{cx + rng.uniform(-0.5, 0.5) * ra, cy + rng.uniform(-0.5, 0.5) * ra, rng.uniform(3.0, 5.0) * scale,
                 1.0};

  Mesh mesh{rng.uniform(0.0, kPi),
            rng.uniform(3.6, 5.2) * scale,
            rng.uniform(0.55, 0.8) * scale,
            rng.uniform(0.0, 1.0),
            rng.uniform(0.0, 1.0),
            rng.uniform(0.2, 0.6) * scale,
            rng.uniform(0.25, 0.45) / scale,
            rng.uniform(0.0, 2 * kPi),
            malignant ? rng.uniform(0.35, 0.45) : rng.uniform(0.28, 0.45)};

  ImageTensor img(n, n, PixelRange::kUnit);
  for (int64_t y = 0; y < n; ++y) {
    for (int64_t x = 0; x < n; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double dx = px - cx, dy = py - cy;
      const double u = std::cos(theta) * dx + std::sin(theta) * dy;
      const double v = -std::sin(theta) * dx + std::cos(theta) * dy;
      const double phi = std::atan2(v, u);
      const double outline = 1.0 + lobe3 * std::sin(3 * phi + ph3) + lobe5 * std::sin(5 * phi + ph5);
      const double rho = std::sqrt((u / ra) * (u / ra) + (v / rb) * (v / rb)) / outline;
      const double mask = 1.0 / (1.0 + std::exp(-(1.0 - rho) * ra / edge));

      Rgb bg = skin;
      const double g = grad_amp * std::cos(grad_angle) * (px / n - 0.5) + grad_amp * std::sin(grad_angle) * (py / n - 0.5);
      for (auto& c : bg) c += g;

      Rgb lesion = pigment;
      if (malignant) {
        const double w = bumps_at({dark_bump}, px, py);
        for (int c = 0; c < 3; ++c) lesion[c] = (1 - w) * lesion[c] + w * dark_pigment[c];
      }
      const double shade = (0.8 + 0.2 * std::min(rho, 1.0)) * (1.0 + bumps_at(mottle, px, py));
      for (auto& c : lesion) c *= shade;
      if (mesh_on) {
        const double m = mesh.contrast * mesh.at(px, py) * std::clamp(1.3 - rho, 0.0, 1.0);
        for (auto& c : lesion) c *= 1.0 - m;
      }
      if (malignant) {
        const double w = bumps_at({veil_bump}, px, py);
        for (int c = 0; c < 3; ++c) lesion[c] = (1 - w) * lesion[c] + w * veil[c];
      }
      for (int c = 0; c < 3; ++c) {
        const double val = (1 - mask) * bg[c] + mask * lesion[c] + 0.01 * rng.normal();
        img.at(y, x, c) = std::clamp(val, 0.0, 1.0);
      }
    }
  }
  if (options.hair) draw_hair(img, rng);
  return img;
}

ArtifactSet heuristic_artifact_flags(const ImageTensor& img) {
  const ImageTensor unit = convert_range(img, PixelRange::kUnit);
  int64_t dark = 0;
  for (int64_t y = 0; y < unit.height(); ++y) {
    for (int64_t x = 0; x < unit.width(); ++x) {
      if (luma({unit.at(y, x, 0), unit.at(y, x, 1), unit.at(y, x, 2)}) < kHairLuma) ++dark;
    }
  }
  if (dark * 4 >= unit.width()) return {ArtifactFlag::kHair};
  return {};
}

CorpusSpec default_corpus(uint64_t seed, int64_t size) {
  CorpusSpec spec;
  spec.seed = seed;
  spec.size = size;
  spec.pools = {
      {"nevus", LesionKind::kPlain, 640, 0.1, std::nullopt, Diagnosis::kNevus},
      {"APN", LesionKind::kMesh, 12, 0.0, true, std::nullopt},
      {"val_nevus", LesionKind::kPlain, 32, 0.0, false, Diagnosis::kNevus},
      {"val_apn", LesionKind::kMesh, 32, 0.0, true, std::nullopt},
      {"eval_nevus", LesionKind::kPlain, 100, 0.0, false, Diagnosis::kNevus},
      {"eval_apn", LesionKind::kMesh, 100, 0.0, true, std::nullopt},
      {"grader_nevus", LesionKind::kPlain, 200, 0.0, std::nullopt, Diagnosis::kNevus},
      {"grader_melanoma", LesionKind::kMalignant, 100, 0.0, std::nullopt, Diagnosis::kMelanoma},
  };
  return spec;
}

std::vector<fs::path> write_corpus(const fs::path& dir, const CorpusSpec& spec) {
  std::vector<fs::path> out;
  for (const auto& pool : spec.pools) {
    if (pool.count < 0) throw DataError("toy pool " + pool.name + " has a negative count");
    const fs::path pool_dir = dir / pool.name;
    fs::create_directories(pool_dir);
    Rng rng(derive_seed(spec.seed, "toy/" + pool.name));
    for (int64_t i = 0; i < pool.count; ++i) {
      RenderOptions opts{spec.size, rng.bernoulli(pool.hair_fraction)};
      const ImageTensor img = render(pool.kind, rng, opts);
      char name[32];
      std::snprintf(name, sizeof name, "%05lld.png", static_cast<long long>(i));
      write_png(pool_dir / name, img);
    }
    nlohmann::ordered_json labels;
    labels["pool"] = pool.name;
    labels["label_structure"] = pool.label_structure ? nlohmann::ordered_json(*pool.label_structure) : nlohmann::ordered_json(nullptr);
    labels["label_diagnosis"] =
        pool.label_diagnosis ? nlohmann::ordered_json(to_string(*pool.label_diagnosis)) : nlohmann::ordered_json(nullptr);
    labels["heuristic_artifact_flags"] = true;
    std::ofstream os(pool_dir / "labels.json");
    os << labels.dump(2) << '\n';
    if (!os) throw Error("cannot write " + (pool_dir / "labels.json").string());
    out.push_back(pool_dir);
  }
  return out;
}

}  // namespace bpa::toy
