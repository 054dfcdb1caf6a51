#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace scp {

inline constexpr int kDefaultIgnoreId = 255;

/// H' x W' x C latent stored row-major with channels innermost.
class LatentImage {
 public:
  LatentImage() = default;
  LatentImage(int height, int width, int channels, double fill = 0.0);
  LatentImage(int height, int width, int channels, std::vector<double> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  int tokens() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<double> token(int y, int x) {
    return {data_.data() + index(y, x, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<const double> token(int y, int x) const {
    return {data_.data() + index(y, x, 0), static_cast<std::size_t>(channels_)};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const LatentImage& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool all_finite() const noexcept;

  friend bool operator==(const LatentImage&, const LatentImage&) = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Integer class-id mask. Pixels equal to ignore_id are unlabeled.
class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(int height, int width, int fill = 0, int ignore_id = kDefaultIgnoreId);
  LabelMask(int height, int width, std::vector<std::int32_t> ids, int ignore_id = kDefaultIgnoreId);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int ignore_id() const noexcept { return ignore_id_; }
  void set_ignore_id(int id) noexcept { ignore_id_ = id; }

  std::int32_t& at(int y, int x) { return ids_[static_cast<std::size_t>(y) * width_ + x]; }
  std::int32_t at(int y, int x) const { return ids_[static_cast<std::size_t>(y) * width_ + x]; }
  bool ignored(int y, int x) const { return at(y, x) == ignore_id_; }

  std::span<const std::int32_t> ids() const noexcept { return ids_; }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int ignore_id_ = kDefaultIgnoreId;
  std::vector<std::int32_t> ids_;
};

/// Integer factor f with (height, width) == f * (target_h, target_w); throws ParameterError otherwise.
int downsample_factor(int height, int width, int target_h, int target_w);

/// Nearest-pixel downsampling, center aligned: output (y, x) takes source pixel
/// (lround((y + 0.5) f - 0.5), lround((x + 0.5) f - 0.5)). For even f this is the
/// lower-right of the four central pixels of the f x f block.
LabelMask downsample_mask(const LabelMask& mask, int target_h, int target_w);

}  // namespace scp
