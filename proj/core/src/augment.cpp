#include "bpa/augment.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgproc.hpp>

#include "bpa/error.hpp"
#include "json_fields.hpp"

namespace bpa::eval {
namespace {

constexpr double kMaxRotateDegrees = 30.0;
constexpr double kMaxShear = 0.3;
constexpr double kMaxTranslate = 0.15;  // fraction of the side
constexpr double kMaxEnhance = 0.9;     // enhancement factor 1 +- this

cv::Mat to_mat(const ImageTensor& img) {
  cv::Mat m(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_64FC3);
  std::copy(img.data().begin(), img.data().end(), m.ptr<double>());
  return m;
}

ImageTensor from_mat(const cv::Mat& m) {
  std::vector<double> data(m.ptr<double>(), m.ptr<double>() + m.total() * 3);
  for (auto& v : data) v = std::clamp(v, 0.0, 1.0);
  return ImageTensor(m.rows, m.cols, PixelRange::kUnit, std::move(data));
}

double luma_at(const ImageTensor& img, int64_t y, int64_t x) {
  return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

// out = base + factor * (img - base), clamped.
ImageTensor blend(const ImageTensor& img, const ImageTensor& base, double factor) {
  ImageTensor out = img;
  auto o = out.data();
  auto b = base.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = std::clamp(b[i] + factor * (o[i] - b[i]), 0.0, 1.0);
  return out;
}

ImageTensor warp(const ImageTensor& img, const cv::Matx23d& m) {
  cv::Mat out;
  cv::warpAffine(to_mat(img), out, m, cv::Size(static_cast<int>(img.width()), static_cast<int>(img.height())),
                 cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
  return from_mat(out);
}

ImageTensor crop(const ImageTensor& img, const CropBox& box) {
  ImageTensor out(box.height, box.width, PixelRange::kUnit);
  for (int64_t y = 0; y < box.height; ++y)
    for (int64_t x = 0; x < box.width; ++x)
      for (int64_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(box.y + y, box.x + x, c);
  return out;
}

}  // namespace

void AugmentPolicy::validate() const {
  if (input_size <= 0) throw ConfigError("input_size", "must be positive");
  if (!(crop_scale_min > 0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1)) {
    throw ConfigError("crop_scale_min", "crop scale must satisfy 0 < min <= max <= 1");
  }
  if (!(crop_ratio_min > 0 && crop_ratio_min <= crop_ratio_max)) {
    throw ConfigError("crop_ratio_min", "crop ratio must satisfy 0 < min <= max");
  }
  if (flip_probability < 0 || flip_probability > 1) throw ConfigError("flip_probability", "must be in [0, 1]");
  if (randaugment_n < 0) throw ConfigError("randaugment_n", "must be nonnegative");
  if (randaugment_m < 0 || randaugment_m > 10) throw ConfigError("randaugment_m", "must be in [0, 10]");
}

void to_json(nlohmann::json& j, const AugmentPolicy& p) {
  j = {{"enabled", p.enabled},
       {"input_size", p.input_size},
       {"crop_scale_min", p.crop_scale_min},
       {"crop_scale_max", p.crop_scale_max},
       {"crop_ratio_min", p.crop_ratio_min},
       {"crop_ratio_max", p.crop_ratio_max},
       {"flip_probability", p.flip_probability},
       {"randaugment_n", p.randaugment_n},
       {"randaugment_m", p.randaugment_m}};
}

void from_json(const nlohmann::json& j, AugmentPolicy& p) {
  detail::reject_unknown(j, {"enabled", "input_size", "crop_scale_min", "crop_scale_max", "crop_ratio_min",
                             "crop_ratio_max", "flip_probability", "randaugment_n", "randaugment_m"});
  detail::read_field(j, "enabled", p.enabled);
  detail::read_field(j, "input_size", p.input_size);
  detail::read_field(j, "crop_scale_min", p.crop_scale_min);
  detail::read_field(j, "crop_scale_max", p.crop_scale_max);
  detail::read_field(j, "crop_ratio_min", p.crop_ratio_min);
  detail::read_field(j, "crop_ratio_max", p.crop_ratio_max);
  detail::read_field(j, "flip_probability", p.flip_probability);
  detail::read_field(j, "randaugment_n", p.randaugment_n);
  detail::read_field(j, "randaugment_m", p.randaugment_m);
}

const std::vector<AugmentOp>& randaugment_ops() {
  static const std::vector<AugmentOp> ops = {
      AugmentOp::kIdentity,  AugmentOp::kAutoContrast, AugmentOp::kEqualize, AugmentOp::kBrightness,
      AugmentOp::kColor,     AugmentOp::kContrast,     AugmentOp::kSharpness, AugmentOp::kPosterize,
      AugmentOp::kRotate,    AugmentOp::kShearX,       AugmentOp::kShearY,   AugmentOp::kTranslateX,
      AugmentOp::kTranslateY};
  return ops;
}

std::string_view to_string(AugmentOp op) {
  switch (op) {
    case AugmentOp::kIdentity:
      return "identity";
    case AugmentOp::kAutoContrast:
      return "auto_contrast";
    case AugmentOp::kEqualize:
      return "equalize";
    case AugmentOp::kBrightness:
      return "brightness";
    case AugmentOp::kColor:
      return "color";
    case AugmentOp::kContrast:
      return "contrast";
    case AugmentOp::kSharpness:
      return "sharpness";
    case AugmentOp::kPosterize:
      return "posterize";
    case AugmentOp::kRotate:
      return "rotate";
    case AugmentOp::kShearX:
      return "shear_x";
    case AugmentOp::kShearY:
      return "shear_y";
    case AugmentOp::kTranslateX:
      return "translate_x";
    case AugmentOp::kTranslateY:
      return "translate_y";
  }
  return "identity";
}

ImageTensor apply_op(const ImageTensor& input, AugmentOp op, double magnitude, int sign) {
  const ImageTensor img = convert_range(input, PixelRange::kUnit);
  const double m = std::clamp(magnitude, 0.0, 10.0) / 10.0;
  const double s = sign < 0 ? -1.0 : 1.0;
  const int64_t h = img.height(), w = img.width();
  const double cx = (static_cast<double>(w) - 1) / 2.0, cy = (static_cast<double>(h) - 1) / 2.0;
  const double factor = 1.0 + s * kMaxEnhance * m;
  switch (op) {
    case AugmentOp::kIdentity:
      return img;
    case AugmentOp::kAutoContrast: {
      ImageTensor out = img;
      for (int64_t c = 0; c < 3; ++c) {
        double lo = 1.0, hi = 0.0;
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) {
            lo = std::min(lo, img.at(y, x, c));
            hi = std::max(hi, img.at(y, x, c));
          }
        if (hi <= lo) continue;
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) out.at(y, x, c) = (img.at(y, x, c) - lo) / (hi - lo);
      }
      return out;
    }
    case AugmentOp::kEqualize: {
      ImageTensor out = img;
      for (int64_t c = 0; c < 3; ++c) {
        cv::Mat channel(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) {
            channel.at<uint8_t>(static_cast<int>(y), static_cast<int>(x)) =
                static_cast<uint8_t>(std::lround(img.at(y, x, c) * 255.0));
          }
        cv::Mat eq;
        cv::equalizeHist(channel, eq);
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) {
            out.at(y, x, c) = eq.at<uint8_t>(static_cast<int>(y), static_cast<int>(x)) / 255.0;
          }
      }
      return out;
    }
    case AugmentOp::kBrightness:
      return blend(img, ImageTensor(h, w, PixelRange::kUnit, 0.0), factor);
    case AugmentOp::kColor: {
      ImageTensor gray(h, w, PixelRange::kUnit);
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          for (int64_t c = 0; c < 3; ++c) gray.at(y, x, c) = luma_at(img, y, x);
      return blend(img, gray, factor);
    }
    case AugmentOp::kContrast: {
      double mean = 0.0;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) mean += luma_at(img, y, x);
      mean /= static_cast<double>(h * w);
      return blend(img, ImageTensor(h, w, PixelRange::kUnit, mean), factor);
    }
    case AugmentOp::kSharpness: {
      cv::Mat smooth;
      const cv::Matx33d kernel(1, 1, 1, 1, 5, 1, 1, 1, 1);
      cv::filter2D(to_mat(img), smooth, -1, kernel * (1.0 / 13.0), cv::Point(-1, -1), 0, cv::BORDER_REPLICATE);
      return blend(img, from_mat(smooth), factor);
    }
    case AugmentOp::kPosterize: {
      const int bits = 8 - static_cast<int>(std::lround(4.0 * m));
      const int mask = (0xFF << (8 - bits)) & 0xFF;
      ImageTensor out = img;
      for (auto& v : out.data()) v = (static_cast<int>(std::lround(v * 255.0)) & mask) / 255.0;
      return out;
    }
    case AugmentOp::kRotate:
      return warp(img, cv::getRotationMatrix2D(cv::Point2f(static_cast<float>(cx), static_cast<float>(cy)),
                                               s * kMaxRotateDegrees * m, 1.0));
    case AugmentOp::kShearX: {
      const double k = s * kMaxShear * m;
      return warp(img, cv::Matx23d(1, k, -k * cy, 0, 1, 0));
    }
    case AugmentOp::kShearY: {
      const double k = s * kMaxShear * m;
      return warp(img, cv::Matx23d(1, 0, 0, k, 1, -k * cx));
    }
    case AugmentOp::kTranslateX:
      return warp(img, cv::Matx23d(1, 0, s * kMaxTranslate * m * static_cast<double>(w), 0, 1, 0));
    case AugmentOp::kTranslateY:
      return warp(img, cv::Matx23d(1, 0, 0, 0, 1, s * kMaxTranslate * m * static_cast<double>(h)));
  }
  return img;
}

CropBox sample_crop(int64_t height, int64_t width, const AugmentPolicy& policy, Rng& rng) {
  const double area = static_cast<double>(height * width);
  const double log_lo = std::log(policy.crop_ratio_min), log_hi = std::log(policy.crop_ratio_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(policy.crop_scale_min, policy.crop_scale_max);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<int64_t>(std::lround(std::sqrt(target * ratio)));
    const auto h = static_cast<int64_t>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= width && h <= height) {
      const auto y = static_cast<int64_t>(rng.below(static_cast<uint64_t>(height - h + 1)));
      const auto x = static_cast<int64_t>(rng.below(static_cast<uint64_t>(width - w + 1)));
      return {x, y, w, h};
    }
  }
  return {0, 0, width, height};
}

ImageTensor augment(const ImageTensor& input, const AugmentPolicy& policy, Rng& rng) {
  const ImageTensor img = convert_range(input, PixelRange::kUnit);
  const int64_t size = policy.input_size;
  if (!policy.enabled) return resize(img, size, size);
  const CropBox box = sample_crop(img.height(), img.width(), policy, rng);
  const bool whole = box.x == 0 && box.y == 0 && box.width == img.width() && box.height == img.height();
  ImageTensor out = resize(whole ? img : crop(img, box), size, size);
  if (rng.bernoulli(policy.flip_probability)) out = flip_horizontal(out);
  const auto& ops = randaugment_ops();
  for (int64_t i = 0; i < policy.randaugment_n; ++i) {
    const AugmentOp op = ops[rng.below(ops.size())];
    const int sign = rng.bernoulli(0.5) ? 1 : -1;
    out = apply_op(out, op, static_cast<double>(policy.randaugment_m), sign);
  }
  return out;
}

}  // namespace bpa::eval
