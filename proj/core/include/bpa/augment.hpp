#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "bpa/image.hpp"
#include "bpa/rng.hpp"

namespace bpa::eval {

struct AugmentPolicy {
  bool enabled = true;
  int64_t input_size = 240;
  // Random resized crop: area fraction and log-uniform aspect ratio ranges.
  double crop_scale_min = 0.5;
  double crop_scale_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0;
  double crop_ratio_max = 4.0 / 3.0;
  double flip_probability = 0.5;
  // RandAugment: number of ops per image and magnitude on a 0..10 scale.
  int64_t randaugment_n = 6;
  int64_t randaugment_m = 8;

  void validate() const;
};

void to_json(nlohmann::json& j, const AugmentPolicy& p);
void from_json(const nlohmann::json& j, AugmentPolicy& p);

enum class AugmentOp {
  kIdentity,
  kAutoContrast,
  kEqualize,
  kBrightness,
  kColor,
  kContrast,
  kSharpness,
  kPosterize,
  kRotate,
  kShearX,
  kShearY,
  kTranslateX,
  kTranslateY,
};

// Every op RandAugment draws from (photometric plus mild geometric).
const std::vector<AugmentOp>& randaugment_ops();
std::string_view to_string(AugmentOp op);

// Applies one op at `magnitude` (0..10). `sign` chooses the direction of
// signed ops (+1 or -1). Input and output are unit range.
ImageTensor apply_op(const ImageTensor& img, AugmentOp op, double magnitude, int sign);

// Crop box (x, y, width, height) drawn like a random resized crop; falls back
// to the whole image when no draw fits.
struct CropBox {
  int64_t x = 0, y = 0, width = 0, height = 0;
};
CropBox sample_crop(int64_t height, int64_t width, const AugmentPolicy& policy, Rng& rng);

// Output is exactly input_size x input_size x 3 in the unit range. With the
// policy disabled this is a plain resize.
ImageTensor augment(const ImageTensor& img, const AugmentPolicy& policy, Rng& rng);

}  // namespace bpa::eval
