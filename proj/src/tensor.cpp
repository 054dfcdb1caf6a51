#include "scp/tensor.hpp"

#include <cmath>
#include <string>

#include "scp/error.hpp"

namespace scp {

namespace {

void check_dims(int height, int width, int channels) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw ShapeError("latent dimensions must be positive, got " + std::to_string(height) + "x" +
                     std::to_string(width) + "x" + std::to_string(channels));
  }
}

}  // namespace

LatentImage::LatentImage(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

LatentImage::LatentImage(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeError("latent payload has " + std::to_string(data_.size()) + " values, expected " +
                     std::to_string(static_cast<std::size_t>(height) * width * channels));
  }
}

bool LatentImage::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

LabelMask::LabelMask(int height, int width, int fill, int ignore_id)
    : height_(height), width_(width), ignore_id_(ignore_id) {
  if (height <= 0 || width <= 0) throw ShapeError("mask dimensions must be positive");
  ids_.assign(static_cast<std::size_t>(height) * width, fill);
}

LabelMask::LabelMask(int height, int width, std::vector<std::int32_t> ids, int ignore_id)
    : height_(height), width_(width), ignore_id_(ignore_id), ids_(std::move(ids)) {
  if (height <= 0 || width <= 0) throw ShapeError("mask dimensions must be positive");
  if (ids_.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeError("mask payload size does not match " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  for (auto id : ids_) {
    if (id < 0) throw DataError("mask contains negative class id " + std::to_string(id));
  }
}

int downsample_factor(int height, int width, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0 || height % target_h != 0 || width % target_w != 0 ||
      height / target_h != width / target_w) {
    throw ParameterError("mask " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not a common integer multiple of " + std::to_string(target_h) +
                         "x" + std::to_string(target_w));
  }
  return height / target_h;
}

LabelMask downsample_mask(const LabelMask& mask, int target_h, int target_w) {
  const int f = downsample_factor(mask.height(), mask.width(), target_h, target_w);
  if (f == 1) return mask;
  LabelMask out(target_h, target_w, 0, mask.ignore_id());
  for (int y = 0; y < target_h; ++y) {
    const auto sy = static_cast<int>(std::lround((y + 0.5) * f - 0.5));
    for (int x = 0; x < target_w; ++x) {
      const auto sx = static_cast<int>(std::lround((x + 0.5) * f - 0.5));
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

}  // namespace scp
