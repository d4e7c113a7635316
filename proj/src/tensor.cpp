// SPDX-License-Identifier: Apache-2.0
#include "lavino/tensor.hpp"

#include "lavino/bytes.hpp"

#include <fmt/core.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace lavino {

namespace fs = std::filesystem;

std::string to_string(Shape const &s)
{
  return fmt::format("({},{},{},{})", s.frames, s.height, s.width, s.channels);
}

void validate_shape(Shape const &s)
{
  if (s.frames == 0 || s.height == 0 || s.width == 0 || s.channels == 0) {
    throw ShapeError(fmt::format("tensor dimensions must be >= 1, got {}", to_string(s)));
  }
}

VideoTensor::VideoTensor(Shape shape, double fill)
  : shape_(shape)
{
  validate_shape(shape);
  data_.assign(shape.size(), fill);
}

VideoTensor::VideoTensor(Shape shape, std::vector<double> data)
  : VideoTensor(shape)
{
  if (data.size() != shape.size()) {
    throw ShapeError(fmt::format("data length {} does not match shape {}", data.size(), to_string(shape)));
  }
  data_ = std::move(data);
}

std::span<double> VideoTensor::frame(std::size_t t)
{
  return std::span<double>(data_).subspan(t * shape_.frame_size(), shape_.frame_size());
}

std::span<double const> VideoTensor::frame(std::size_t t) const
{
  return std::span<double const>(data_).subspan(t * shape_.frame_size(), shape_.frame_size());
}

VideoTensor VideoTensor::frame_tensor(std::size_t t) const
{
  auto f = frame(t);
  return VideoTensor({1, shape_.height, shape_.width, shape_.channels}, std::vector<double>(f.begin(), f.end()));
}

void VideoTensor::set_frame(std::size_t t, VideoTensor const &f)
{
  if (f.shape() != Shape{1, shape_.height, shape_.width, shape_.channels}) {
    throw ShapeError(fmt::format("frame of shape {} does not fit tensor {}", to_string(f.shape()), to_string(shape_)));
  }
  std::ranges::copy(f.data(), frame(t).begin());
}

bool VideoTensor::all_finite() const
{
  return std::ranges::all_of(data_, [](double v) { return std::isfinite(v); });
}

VideoTensor &VideoTensor::operator+=(VideoTensor const &o)
{
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] += o.data_[i];
  }
  return *this;
}

VideoTensor &VideoTensor::operator-=(VideoTensor const &o)
{
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] -= o.data_[i];
  }
  return *this;
}

VideoTensor &VideoTensor::operator*=(double a)
{
  for (auto &v : data_) {
    v *= a;
  }
  return *this;
}

VideoTensor operator+(VideoTensor a, VideoTensor const &b) { return a += b; }
VideoTensor operator-(VideoTensor a, VideoTensor const &b) { return a -= b; }
VideoTensor operator*(double a, VideoTensor x) { return x *= a; }

void require_same_shape(VideoTensor const &a, VideoTensor const &b, char const *what)
{
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", what, to_string(a.shape()), to_string(b.shape())));
  }
}

double dot(VideoTensor const &a, VideoTensor const &b)
{
  require_same_shape(a, b, "dot");
  double s = 0.0;
  auto const da = a.data();
  auto const db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    s += da[i] * db[i];
  }
  return s;
}

double squared_norm(VideoTensor const &a)
{
  double s = 0.0;
  for (double v : a.data()) {
    s += v * v;
  }
  return s;
}

double norm(VideoTensor const &a) { return std::sqrt(squared_norm(a)); }

double max_abs_diff(VideoTensor const &a, VideoTensor const &b)
{
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

void axpy(double a, VideoTensor const &x, VideoTensor &y)
{
  require_same_shape(x, y, "axpy");
  auto const dx = x.data();
  auto dy = y.data();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    dy[i] += a * dx[i];
  }
}

VideoTensor gaussian_noise(Shape shape, std::uint64_t seed)
{
  VideoTensor n(shape);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto &v : n.data()) {
    v = normal(gen);
  }
  return n;
}

SliceImage slice_extract(VideoTensor const &x, std::size_t column)
{
  auto const &s = x.shape();
  if (column >= s.width) {
    throw std::out_of_range(fmt::format("column {} out of range for width {}", column, s.width));
  }
  SliceImage out{s.height, s.frames, s.channels, std::vector<double>(s.height * s.frames * s.channels)};
  for (std::size_t i = 0; i < s.height; ++i) {
    for (std::size_t t = 0; t < s.frames; ++t) {
      for (std::size_t c = 0; c < s.channels; ++c) {
        out.data[(i * s.frames + t) * s.channels + c] = x(t, i, column, c);
      }
    }
  }
  return out;
}

void slice_insert(VideoTensor &x, std::size_t column, SliceImage const &slice)
{
  auto const &s = x.shape();
  if (column >= s.width) {
    throw std::out_of_range(fmt::format("column {} out of range for width {}", column, s.width));
  }
  if (slice.rows != s.height || slice.cols != s.frames || slice.channels != s.channels) {
    throw ShapeError("slice does not match tensor geometry");
  }
  for (std::size_t i = 0; i < s.height; ++i) {
    for (std::size_t t = 0; t < s.frames; ++t) {
      for (std::size_t c = 0; c < s.channels; ++c) {
        x(t, i, column, c) = slice(i, t, c);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Raw format: "VTEN", u32 version, u32 T,H,W,C, then float32 payload. All LE.

namespace {

constexpr char kRawMagic[4] = {'V', 'T', 'E', 'N'};
constexpr std::uint32_t kRawVersion = 1;
constexpr std::size_t kRawHeaderBytes = 4 + 4 + 16;

VideoTensor load_raw(fs::path const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(fmt::format("cannot open {}", path.string()));
  }
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < kRawHeaderBytes || std::memcmp(buf.data(), kRawMagic, 4) != 0) {
    throw IoError(fmt::format("corrupt header in {}", path.string()));
  }
  if (bytes::get_u32(buf.data() + 4) != kRawVersion) {
    throw IoError(fmt::format("corrupt header in {}: unsupported version {}", path.string(), bytes::get_u32(buf.data() + 4)));
  }
  Shape s{bytes::get_u32(buf.data() + 8), bytes::get_u32(buf.data() + 12), bytes::get_u32(buf.data() + 16),
          bytes::get_u32(buf.data() + 20)};
  if (s.frames == 0) {
    throw IoError(fmt::format("zero frames in {}", path.string()));
  }
  if (s.height == 0 || s.width == 0 || s.channels == 0) {
    throw IoError(fmt::format("corrupt header in {}: shape {}", path.string(), to_string(s)));
  }
  if (buf.size() != kRawHeaderBytes + 4 * s.size()) {
    throw IoError(fmt::format("corrupt header in {}: shape {} needs {} payload bytes, file has {}", path.string(),
                              to_string(s), 4 * s.size(), buf.size() - kRawHeaderBytes));
  }
  VideoTensor x(s);
  bytes::get_f32_array(buf.data() + kRawHeaderBytes, x.data());
  if (!x.all_finite()) {
    throw IoError(fmt::format("non-finite values in {}", path.string()));
  }
  return x;
}

void save_raw(VideoTensor const &x, fs::path const &path)
{
  std::vector<std::uint8_t> buf(kRawMagic, kRawMagic + 4);
  bytes::put_u32(buf, kRawVersion);
  auto const &s = x.shape();
  for (auto d : {s.frames, s.height, s.width, s.channels}) {
    bytes::put_u32(buf, static_cast<std::uint32_t>(d));
  }
  bytes::put_f32_array(buf, x.data());
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError(fmt::format("cannot write {}", path.string()));
  }
  out.write(reinterpret_cast<char const *>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) {
    throw IoError(fmt::format("write failed for {}", path.string()));
  }
}

// ---------------------------------------------------------------------------
// PNG frames via the libpng simplified API.

struct PngFrame
{
  std::size_t height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> pixels;
};

PngFrame read_png(fs::path const &path)
{
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError(fmt::format("cannot decode {}: {}", path.string(), image.message));
  }
  bool const color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  PngFrame f{image.height, image.width, color ? 3u : 1u, {}};
  f.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, f.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError(fmt::format("cannot decode {}: {}", path.string(), msg));
  }
  return f;
}

void write_png(fs::path const &path, std::size_t height, std::size_t width, std::size_t channels,
               std::vector<std::uint8_t> const &pixels)
{
  if (channels != 1 && channels != 3) {
    throw IoError(fmt::format("PNG export supports 1 or 3 channels, got {}", channels));
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError(fmt::format("cannot write {}: {}", path.string(), image.message));
  }
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

VideoTensor load_frame_dir(fs::path const &dir)
{
  if (!fs::is_directory(dir)) {
    throw IoError(fmt::format("not a directory: {}", dir.string()));
  }
  std::vector<fs::path> files;
  for (auto const &e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") {
      files.push_back(e.path());
    }
  }
  if (files.empty()) {
    throw IoError(fmt::format("zero frames in {}", dir.string()));
  }
  std::ranges::sort(files);

  auto first = read_png(files.front());
  Shape s{files.size(), first.height, first.width, first.channels};
  VideoTensor x(s);
  for (std::size_t t = 0; t < files.size(); ++t) {
    auto f = t == 0 ? std::move(first) : read_png(files[t]);
    if (f.height != s.height || f.width != s.width || f.channels != s.channels) {
      throw IoError(fmt::format("inconsistent frame dimensions: {} is {}x{}x{}, expected {}x{}x{}", files[t].string(),
                                f.height, f.width, f.channels, s.height, s.width, s.channels));
    }
    auto dst = x.frame(t);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = f.pixels[i] / 255.0;
    }
  }
  return x;
}

void save_frame_dir(VideoTensor const &x, fs::path const &dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) {
    throw IoError(fmt::format("cannot create directory {}", dir.string()));
  }
  auto const &s = x.shape();
  std::vector<std::uint8_t> pixels(s.frame_size());
  for (std::size_t t = 0; t < s.frames; ++t) {
    auto src = x.frame(t);
    std::ranges::transform(src, pixels.begin(), quantize);
    write_png(dir / fmt::format("frame_{:05d}.png", t), s.height, s.width, s.channels, pixels);
  }
}

} // namespace

VideoFormat guess_format(fs::path const &path)
{
  return path.extension() == ".vten" ? VideoFormat::Raw : VideoFormat::FrameDir;
}

VideoTensor load_video(fs::path const &path, VideoFormat format)
{
  if (!fs::exists(path)) {
    throw IoError(fmt::format("missing path: {}", path.string()));
  }
  return format == VideoFormat::Raw ? load_raw(path) : load_frame_dir(path);
}

void save_video(VideoTensor const &x, fs::path const &path, VideoFormat format)
{
  if (!x.all_finite()) {
    throw IoError(fmt::format("refusing to write {}: tensor contains NaN or Inf", path.string()));
  }
  if (format == VideoFormat::Raw) {
    save_raw(x, path);
  } else {
    save_frame_dir(x, path);
  }
}

void save_slice_png(SliceImage const &slice, fs::path const &path)
{
  std::vector<std::uint8_t> pixels(slice.data.size());
  std::ranges::transform(slice.data, pixels.begin(), quantize);
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  write_png(path, slice.rows, slice.cols, slice.channels, pixels);
}

} // namespace lavino
