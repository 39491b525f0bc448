#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bpa/nn/tensor.hpp"

namespace bpa {

// Intensity convention of an ImageTensor. Generators work in kSigned,
// classifiers in kUnit.
enum class PixelRange {
  kSigned,  // [-1, 1]
  kUnit,    // [0, 1]
};

// H x W x 3 interleaved RGB intensities tagged with their range convention.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int64_t height, int64_t width, PixelRange range, double fill = 0.0);
  ImageTensor(int64_t height, int64_t width, PixelRange range, std::vector<double> hwc);

  static constexpr int64_t kChannels = 3;

  int64_t height() const { return height_; }
  int64_t width() const { return width_; }
  PixelRange range() const { return range_; }
  bool empty() const { return data_.empty(); }

  double& at(int64_t y, int64_t x, int64_t c) { return data_[static_cast<size_t>((y * width_ + x) * 3 + c)]; }
  double at(int64_t y, int64_t x, int64_t c) const { return data_[static_cast<size_t>((y * width_ + x) * 3 + c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const ImageTensor&) const = default;

 private:
  int64_t height_ = 0;
  int64_t width_ = 0;
  PixelRange range_ = PixelRange::kUnit;
  std::vector<double> data_;
};

// Affine remap between conventions: unit = (signed + 1) / 2.
ImageTensor convert_range(const ImageTensor& img, PixelRange target);

// Stacks images (all the same size) into an [N, 3, H, W] tensor, converting to `range`.
nn::Tensor to_batch(std::span<const ImageTensor> images, PixelRange range);
// Extracts sample `index` of an [N, 3, H, W] tensor, tagged with `range`.
ImageTensor from_batch(const nn::Tensor& batch, int64_t index, PixelRange range);

// Lossless 8-bit PNG encoding (values are clamped and rounded to 1/255 steps).
std::string encode_png(const ImageTensor& img);
void write_png(const std::filesystem::path& path, const ImageTensor& img);
// Decodes PNG/JPEG/BMP bytes. Throws DataError when undecodable.
ImageTensor decode_image(const std::string& bytes, PixelRange range);
ImageTensor read_image(const std::filesystem::path& path, PixelRange range);

// Area/bilinear resampling to an exact size.
ImageTensor resize(const ImageTensor& img, int64_t height, int64_t width);
// Largest centered square crop.
ImageTensor center_crop_square(const ImageTensor& img);
// Aspect-preserving center crop followed by scaling to side x side.
ImageTensor crop_and_resize(const ImageTensor& img, int64_t side);
ImageTensor flip_horizontal(const ImageTensor& img);

// Mean squared response of a 3x3 Laplacian on the luminance channel (unit
// range). High for fine periodic structure such as a pigment mesh.
double grid_energy(const ImageTensor& img);

}  // namespace bpa
