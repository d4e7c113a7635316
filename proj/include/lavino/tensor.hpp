// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lavino {

/// Raised for shape disagreements between tensors and operators.
class ShapeError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for unreadable, unwritable or malformed files.
class IoError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Extents of a video in (frames, height, width, channels) order.
struct Shape
{
  std::size_t frames = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t size() const { return frames * height * width * channels; }
  std::size_t frame_size() const { return height * width * channels; }

  bool operator==(Shape const &) const = default;
};

std::string to_string(Shape const &s);
/// Throws ShapeError unless every dimension is >= 1.
void validate_shape(Shape const &s);

/* Dense (t, h, w, c) row-major video. Values are nominally in [0, 1] but
 * iterates are allowed to leave that range; clamping happens only on export.
 */
class VideoTensor
{
public:
  VideoTensor() = default;
  explicit VideoTensor(Shape shape, double fill = 0.0);
  VideoTensor(Shape shape, std::vector<double> data);

  Shape const &shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t t, std::size_t h, std::size_t w, std::size_t c) const
  {
    return ((t * shape_.height + h) * shape_.width + w) * shape_.channels + c;
  }
  double &operator()(std::size_t t, std::size_t h, std::size_t w, std::size_t c) { return data_[index(t, h, w, c)]; }
  double operator()(std::size_t t, std::size_t h, std::size_t w, std::size_t c) const
  {
    return data_[index(t, h, w, c)];
  }

  std::span<double> data() { return data_; }
  std::span<double const> data() const { return data_; }
  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> frame(std::size_t t);
  std::span<double const> frame(std::size_t t) const;

  /// Copy of frame t as a single-frame tensor.
  VideoTensor frame_tensor(std::size_t t) const;
  void set_frame(std::size_t t, VideoTensor const &f);

  bool all_finite() const;

  VideoTensor &operator+=(VideoTensor const &o);
  VideoTensor &operator-=(VideoTensor const &o);
  VideoTensor &operator*=(double a);

private:
  Shape shape_{};
  std::vector<double> data_{};
};

VideoTensor operator+(VideoTensor a, VideoTensor const &b);
VideoTensor operator-(VideoTensor a, VideoTensor const &b);
VideoTensor operator*(double a, VideoTensor x);

double dot(VideoTensor const &a, VideoTensor const &b);
double norm(VideoTensor const &a);
double squared_norm(VideoTensor const &a);
double max_abs_diff(VideoTensor const &a, VideoTensor const &b);
/// y += a * x
void axpy(double a, VideoTensor const &x, VideoTensor &y);

void require_same_shape(VideoTensor const &a, VideoTensor const &b, char const *what);

/// Standard-normal tensor drawn from a seeded generator.
VideoTensor gaussian_noise(Shape shape, std::uint64_t seed);

/// Spatio-temporal (i, t) slice at a fixed column: rows = height, cols = frames.
struct SliceImage
{
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 0;
  std::vector<double> data; // (row, col, channel) row-major

  double operator()(std::size_t i, std::size_t t, std::size_t c) const { return data[(i * cols + t) * channels + c]; }
};

SliceImage slice_extract(VideoTensor const &x, std::size_t column);
/// Writes a slice back into column j; inverse of slice_extract on that column.
void slice_insert(VideoTensor &x, std::size_t column, SliceImage const &slice);

enum class VideoFormat
{
  FrameDir,
  Raw
};

/// Raw files carry a .vten extension; everything else is treated as a frame directory.
VideoFormat guess_format(std::filesystem::path const &path);

VideoTensor load_video(std::filesystem::path const &path, VideoFormat format);
void save_video(VideoTensor const &x, std::filesystem::path const &path, VideoFormat format);

void save_slice_png(SliceImage const &slice, std::filesystem::path const &path);

} // namespace lavino
