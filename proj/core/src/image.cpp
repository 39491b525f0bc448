#include "bpa/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>
#include <stdexcept>

#include "bpa/error.hpp"

namespace bpa {
namespace {

cv::Mat to_mat(const ImageTensor& img) {
  cv::Mat m(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_64FC3);
  std::copy(img.data().begin(), img.data().end(), m.ptr<double>());
  return m;
}

ImageTensor from_mat(const cv::Mat& m, PixelRange range) {
  cv::Mat c = m.isContinuous() ? m : m.clone();
  const double* p = c.ptr<double>();
  return ImageTensor(c.rows, c.cols, range, std::vector<double>(p, p + c.total() * 3));
}

double to_unit(double v, PixelRange from) { return from == PixelRange::kSigned ? (v + 1.0) * 0.5 : v; }

}  // namespace

ImageTensor::ImageTensor(int64_t height, int64_t width, PixelRange range, double fill)
    : height_(height), width_(width), range_(range), data_(static_cast<size_t>(height * width * 3), fill) {}

ImageTensor::ImageTensor(int64_t height, int64_t width, PixelRange range, std::vector<double> hwc)
    : height_(height), width_(width), range_(range), data_(std::move(hwc)) {
  if (static_cast<int64_t>(data_.size()) != height * width * 3) {
    throw std::invalid_argument("ImageTensor: data size does not match " + std::to_string(height) + "x" +
                                std::to_string(width) + "x3");
  }
}

ImageTensor convert_range(const ImageTensor& img, PixelRange target) {
  if (img.range() == target) return img;
  ImageTensor out(img.height(), img.width(), target);
  auto src = img.data();
  auto dst = out.data();
  for (size_t i = 0; i < src.size(); ++i) {
    dst[i] = target == PixelRange::kUnit ? (src[i] + 1.0) * 0.5 : src[i] * 2.0 - 1.0;
  }
  return out;
}

nn::Tensor to_batch(std::span<const ImageTensor> images, PixelRange range) {
  if (images.empty()) return nn::Tensor({0, 3, 0, 0});
  const int64_t h = images[0].height();
  const int64_t w = images[0].width();
  nn::Tensor t({static_cast<int64_t>(images.size()), 3, h, w});
  for (size_t n = 0; n < images.size(); ++n) {
    if (images[n].height() != h || images[n].width() != w) {
      throw DataError("to_batch: mixed image sizes in one batch");
    }
    const ImageTensor img = convert_range(images[n], range);
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) t.at(static_cast<int64_t>(n), c, y, x) = img.at(y, x, c);
  }
  return t;
}

ImageTensor from_batch(const nn::Tensor& batch, int64_t index, PixelRange range) {
  if (batch.rank() != 4 || batch.dim(1) != 3) throw std::invalid_argument("from_batch: expected [N,3,H,W]");
  const int64_t h = batch.dim(2);
  const int64_t w = batch.dim(3);
  ImageTensor img(h, w, range);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) img.at(y, x, c) = batch.at(index, c, y, x);
  return img;
}

std::string encode_png(const ImageTensor& img) {
  cv::Mat m(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_8UC3);
  for (int64_t y = 0; y < img.height(); ++y) {
    auto* row = m.ptr<uint8_t>(static_cast<int>(y));
    for (int64_t x = 0; x < img.width(); ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        const double u = std::clamp(to_unit(img.at(y, x, c), img.range()), 0.0, 1.0);
        // OpenCV stores BGR.
        row[x * 3 + (2 - c)] = static_cast<uint8_t>(std::lround(u * 255.0));
      }
    }
  }
  std::vector<uint8_t> buf;
  if (!cv::imencode(".png", m, buf, {cv::IMWRITE_PNG_COMPRESSION, 6})) throw Error("PNG encoding failed");
  return std::string(buf.begin(), buf.end());
}

void write_png(const std::filesystem::path& path, const ImageTensor& img) {
  const std::string bytes = encode_png(img);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write image " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("failed writing image " + path.string());
}

ImageTensor decode_image(const std::string& bytes, PixelRange range) {
  std::vector<uint8_t> buf(bytes.begin(), bytes.end());
  cv::Mat m;
  if (!buf.empty()) m = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("undecodable image data");
  ImageTensor img(m.rows, m.cols, PixelRange::kUnit);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[x * 3 + (2 - c)] / 255.0;
  }
  return convert_range(img, range);
}

ImageTensor read_image(const std::filesystem::path& path, PixelRange range) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return decode_image(ss.str(), range);
  } catch (const DataError&) {
    throw DataError("undecodable image " + path.string());
  }
}

ImageTensor resize(const ImageTensor& img, int64_t height, int64_t width) {
  if (img.height() == height && img.width() == width) return img;
  cv::Mat out;
  const bool shrinking = height < img.height() && width < img.width();
  cv::resize(to_mat(img), out, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0,
             shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  return from_mat(out, img.range());
}

ImageTensor center_crop_square(const ImageTensor& img) {
  const int64_t side = std::min(img.height(), img.width());
  const int64_t y0 = (img.height() - side) / 2;
  const int64_t x0 = (img.width() - side) / 2;
  ImageTensor out(side, side, img.range());
  for (int64_t y = 0; y < side; ++y)
    for (int64_t x = 0; x < side; ++x)
      for (int64_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

ImageTensor crop_and_resize(const ImageTensor& img, int64_t side) { return resize(center_crop_square(img), side, side); }

ImageTensor flip_horizontal(const ImageTensor& img) {
  ImageTensor out(img.height(), img.width(), img.range());
  for (int64_t y = 0; y < img.height(); ++y)
    for (int64_t x = 0; x < img.width(); ++x)
      for (int64_t c = 0; c < 3; ++c) out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
  return out;
}

double grid_energy(const ImageTensor& img) {
  const int64_t h = img.height();
  const int64_t w = img.width();
  if (h < 3 || w < 3) return 0.0;
  std::vector<double> lum(static_cast<size_t>(h * w));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double v = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
      lum[static_cast<size_t>(y * w + x)] = to_unit(v, img.range());
    }
  double acc = 0.0;
  for (int64_t y = 1; y + 1 < h; ++y)
    for (int64_t x = 1; x + 1 < w; ++x) {
      auto at = [&](int64_t yy, int64_t xx) { return lum[static_cast<size_t>(yy * w + xx)]; };
      const double lap = 4 * at(y, x) - at(y - 1, x) - at(y + 1, x) - at(y, x - 1) - at(y, x + 1);
      acc += lap * lap;
    }
  return acc / static_cast<double>((h - 2) * (w - 2));
}

}  // namespace bpa
