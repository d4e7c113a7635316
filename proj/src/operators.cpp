// SPDX-License-Identifier: Apache-2.0
#include "lavino/operators.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lavino {

namespace {

char const *stage_name(StageKind k)
{
  switch (k) {
  case StageKind::Identity: return "identity";
  case StageKind::TemporalPool: return "temporal-pool";
  case StageKind::SpatialPool: return "spatial-pool";
  case StageKind::TemporalCircBlur: return "temporal-circ-blur";
  }
  return "?";
}

std::string trim(std::string s)
{
  auto const b = s.find_first_not_of(" \t");
  if (b == std::string::npos) {
    return {};
  }
  auto const e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

// Circular window offsets: centred for odd widths, e.g. w=7 -> -3..3.
long blur_first_offset(std::size_t w) { return -static_cast<long>(w / 2); }

std::size_t wrap(long i, std::size_t n)
{
  long const m = static_cast<long>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

VideoTensor temporal_pool(VideoTensor const &x, std::size_t k)
{
  auto const &in = x.shape();
  Shape out = in;
  out.frames = (in.frames + k - 1) / k;
  VideoTensor y(out);
  double const scale = 1.0 / static_cast<double>(k);
  for (std::size_t j = 0; j < out.frames; ++j) {
    auto dst = y.frame(j);
    for (std::size_t i = 0; i < k; ++i) {
      auto src = x.frame(std::min(j * k + i, in.frames - 1));
      for (std::size_t p = 0; p < dst.size(); ++p) {
        dst[p] += scale * src[p];
      }
    }
  }
  return y;
}

VideoTensor temporal_pool_adjoint(VideoTensor const &y, std::size_t k, Shape const &in)
{
  VideoTensor x(in);
  double const scale = 1.0 / static_cast<double>(k);
  for (std::size_t j = 0; j < y.shape().frames; ++j) {
    auto src = y.frame(j);
    for (std::size_t i = 0; i < k; ++i) {
      // padded tail folds back onto the last real frame
      auto dst = x.frame(std::min(j * k + i, in.frames - 1));
      for (std::size_t p = 0; p < src.size(); ++p) {
        dst[p] += scale * src[p];
      }
    }
  }
  return x;
}

VideoTensor spatial_pool(VideoTensor const &x, std::size_t s)
{
  auto const &in = x.shape();
  Shape out{in.frames, in.height / s, in.width / s, in.channels};
  VideoTensor y(out);
  double const scale = 1.0 / static_cast<double>(s * s);
  for (std::size_t t = 0; t < in.frames; ++t) {
    for (std::size_t h = 0; h < in.height; ++h) {
      for (std::size_t w = 0; w < in.width; ++w) {
        for (std::size_t c = 0; c < in.channels; ++c) {
          y(t, h / s, w / s, c) += scale * x(t, h, w, c);
        }
      }
    }
  }
  return y;
}

VideoTensor spatial_pool_adjoint(VideoTensor const &y, std::size_t s, Shape const &in)
{
  VideoTensor x(in);
  double const scale = 1.0 / static_cast<double>(s * s);
  for (std::size_t t = 0; t < in.frames; ++t) {
    for (std::size_t h = 0; h < in.height; ++h) {
      for (std::size_t w = 0; w < in.width; ++w) {
        for (std::size_t c = 0; c < in.channels; ++c) {
          x(t, h, w, c) = scale * y(t, h / s, w / s, c);
        }
      }
    }
  }
  return x;
}

// out[t] = (1/w) sum_o x[t + o], o over the window; the adjoint sums x[t - o].
VideoTensor temporal_circ_blur(VideoTensor const &x, std::size_t w, bool transpose)
{
  auto const &s = x.shape();
  VideoTensor y(s);
  double const scale = 1.0 / static_cast<double>(w);
  long const first = blur_first_offset(w);
  for (std::size_t t = 0; t < s.frames; ++t) {
    auto dst = y.frame(t);
    for (std::size_t i = 0; i < w; ++i) {
      long const o = first + static_cast<long>(i);
      long const src_t = transpose ? static_cast<long>(t) - o : static_cast<long>(t) + o;
      auto src = x.frame(wrap(src_t, s.frames));
      for (std::size_t p = 0; p < dst.size(); ++p) {
        dst[p] += scale * src[p];
      }
    }
  }
  return y;
}

} // namespace

std::string to_string(OpStage const &s)
{
  if (s.kind == StageKind::Identity) {
    return "identity";
  }
  return fmt::format("{}:{}", stage_name(s.kind), s.factor);
}

OpStage parse_stage(std::string const &text)
{
  auto const t = trim(text);
  if (t == "identity") {
    return {StageKind::Identity, 1};
  }
  auto const colon = t.find(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument(fmt::format("operator stage '{}' needs the form kind:factor", t));
  }
  auto const name = t.substr(0, colon);
  std::size_t factor = 0;
  try {
    std::size_t used = 0;
    auto const v = std::stol(t.substr(colon + 1), &used);
    if (v < 1 || used != t.size() - colon - 1) {
      throw std::invalid_argument("");
    }
    factor = static_cast<std::size_t>(v);
  } catch (std::exception const &) {
    throw std::invalid_argument(fmt::format("operator stage '{}' has an invalid factor", t));
  }
  for (auto k : {StageKind::TemporalPool, StageKind::SpatialPool, StageKind::TemporalCircBlur}) {
    if (name == stage_name(k)) {
      return {k, factor};
    }
  }
  throw std::invalid_argument(fmt::format("unknown operator stage '{}'", name));
}

Shape stage_output_shape(OpStage const &stage, Shape const &in)
{
  switch (stage.kind) {
  case StageKind::Identity:
  case StageKind::TemporalCircBlur: return in;
  case StageKind::TemporalPool: return {(in.frames + stage.factor - 1) / stage.factor, in.height, in.width, in.channels};
  case StageKind::SpatialPool:
    if (in.height % stage.factor != 0 || in.width % stage.factor != 0) {
      throw ShapeError(fmt::format("spatial-pool:{} needs height and width divisible by {}, got {}x{}", stage.factor,
                                   stage.factor, in.height, in.width));
    }
    return {in.frames, in.height / stage.factor, in.width / stage.factor, in.channels};
  }
  return in;
}

VideoTensor apply_stage(OpStage const &stage, VideoTensor const &x)
{
  switch (stage.kind) {
  case StageKind::Identity: return x;
  case StageKind::TemporalPool: return temporal_pool(x, stage.factor);
  case StageKind::SpatialPool: stage_output_shape(stage, x.shape()); return spatial_pool(x, stage.factor);
  case StageKind::TemporalCircBlur: return temporal_circ_blur(x, stage.factor, false);
  }
  return x;
}

VideoTensor adjoint_stage(OpStage const &stage, VideoTensor const &y, Shape const &input)
{
  if (stage_output_shape(stage, input) != y.shape()) {
    throw ShapeError(fmt::format("{} adjoint expects {}, got {}", to_string(stage),
                                 to_string(stage_output_shape(stage, input)), to_string(y.shape())));
  }
  switch (stage.kind) {
  case StageKind::Identity: return y;
  case StageKind::TemporalPool: return temporal_pool_adjoint(y, stage.factor, input);
  case StageKind::SpatialPool: return spatial_pool_adjoint(y, stage.factor, input);
  case StageKind::TemporalCircBlur: return temporal_circ_blur(y, stage.factor, true);
  }
  return y;
}

LinearOp::LinearOp(std::vector<OpStage> stages, Shape input)
  : stages_(std::move(stages))
  , shapes_{input}
{
  validate_shape(input);
  for (auto const &s : stages_) {
    if (s.factor == 0) {
      throw std::invalid_argument("operator factors must be >= 1");
    }
    shapes_.push_back(stage_output_shape(s, shapes_.back()));
  }
}

LinearOp LinearOp::identity(Shape input) { return LinearOp({}, input); }
LinearOp LinearOp::temporal_pool(std::size_t k, Shape input) { return LinearOp({{StageKind::TemporalPool, k}}, input); }
LinearOp LinearOp::spatial_pool(std::size_t s, Shape input) { return LinearOp({{StageKind::SpatialPool, s}}, input); }
LinearOp LinearOp::temporal_circ_blur(std::size_t w, Shape input)
{
  return LinearOp({{StageKind::TemporalCircBlur, w}}, input);
}

LinearOp LinearOp::compose(LinearOp const &outer, LinearOp const &inner)
{
  if (inner.output_shape() != outer.input_shape()) {
    throw ShapeError(fmt::format("compose: inner output {} does not match outer input {}",
                                 to_string(inner.output_shape()), to_string(outer.input_shape())));
  }
  auto stages = inner.stages_;
  stages.insert(stages.end(), outer.stages_.begin(), outer.stages_.end());
  return LinearOp(std::move(stages), inner.input_shape());
}

VideoTensor LinearOp::apply(VideoTensor const &x) const
{
  if (x.shape() != input_shape()) {
    throw ShapeError(fmt::format("operator {} expects input {}, got {}", spec(), to_string(input_shape()),
                                 to_string(x.shape())));
  }
  VideoTensor cur = x;
  for (auto const &s : stages_) {
    cur = apply_stage(s, cur);
  }
  return cur;
}

VideoTensor LinearOp::adjoint(VideoTensor const &y) const
{
  if (y.shape() != output_shape()) {
    throw ShapeError(fmt::format("operator {} adjoint expects {}, got {}", spec(), to_string(output_shape()),
                                 to_string(y.shape())));
  }
  VideoTensor cur = y;
  for (std::size_t i = stages_.size(); i-- > 0;) {
    cur = adjoint_stage(stages_[i], cur, shapes_[i]);
  }
  return cur;
}

std::string LinearOp::spec() const
{
  if (stages_.empty()) {
    return "identity";
  }
  std::string out;
  for (auto const &s : stages_) {
    if (!out.empty()) {
      out += ',';
    }
    out += to_string(s);
  }
  return out;
}

LinearOp parse_operator(std::string const &spec, Shape input)
{
  std::vector<OpStage> stages;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (trim(part).empty()) {
      continue;
    }
    auto st = parse_stage(part);
    if (st.kind != StageKind::Identity) {
      stages.push_back(st);
    }
  }
  return LinearOp(std::move(stages), input);
}

VideoTensor degrade(LinearOp const &op, VideoTensor const &x, NoiseSpec const &noise)
{
  if (!(noise.sigma_n >= 0.0)) {
    throw std::invalid_argument(fmt::format("noise sigma must be >= 0, got {}", noise.sigma_n));
  }
  auto y = op.apply(x);
  if (noise.sigma_n > 0.0) {
    axpy(noise.sigma_n, gaussian_noise(y.shape(), noise.seed), y);
  }
  return y;
}

VideoTensor bilinear_upsample(VideoTensor const &x, std::size_t factor)
{
  auto const &in = x.shape();
  Shape out{in.frames, in.height * factor, in.width * factor, in.channels};
  VideoTensor y(out);
  auto coord = [factor](std::size_t o, std::size_t n, std::size_t &i0, std::size_t &i1, double &frac) {
    double const src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    double const clamped = std::clamp(src, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(clamped));
    i1 = std::min(i0 + 1, n - 1);
    frac = clamped - static_cast<double>(i0);
  };
  for (std::size_t t = 0; t < out.frames; ++t) {
    for (std::size_t h = 0; h < out.height; ++h) {
      std::size_t h0, h1;
      double fh;
      coord(h, in.height, h0, h1, fh);
      for (std::size_t w = 0; w < out.width; ++w) {
        std::size_t w0, w1;
        double fw;
        coord(w, in.width, w0, w1, fw);
        for (std::size_t c = 0; c < out.channels; ++c) {
          double const top = (1 - fw) * x(t, h0, w0, c) + fw * x(t, h0, w1, c);
          double const bot = (1 - fw) * x(t, h1, w0, c) + fw * x(t, h1, w1, c);
          y(t, h, w, c) = (1 - fh) * top + fh * bot;
        }
      }
    }
  }
  return y;
}

VideoTensor pseudo_inverse_init(LinearOp const &op, VideoTensor const &y)
{
  if (y.shape() != op.output_shape()) {
    throw ShapeError(fmt::format("pseudo-inverse of {} expects {}, got {}", op.spec(), to_string(op.output_shape()),
                                 to_string(y.shape())));
  }
  VideoTensor cur = y;
  for (std::size_t i = op.stages_.size(); i-- > 0;) {
    auto const &stage = op.stages_[i];
    auto const &in = op.shapes_[i];
    switch (stage.kind) {
    case StageKind::Identity:
    case StageKind::TemporalCircBlur: break;
    case StageKind::TemporalPool: {
      VideoTensor up(in);
      for (std::size_t t = 0; t < in.frames; ++t) {
        auto src = cur.frame(t / stage.factor);
        std::ranges::copy(src, up.frame(t).begin());
      }
      cur = std::move(up);
      break;
    }
    case StageKind::SpatialPool: cur = bilinear_upsample(cur, stage.factor); break;
    }
  }
  return cur;
}

Problem parse_problem(std::string const &name)
{
  if (name == "A" || name == "a") {
    return Problem::A;
  }
  if (name == "B" || name == "b") {
    return Problem::B;
  }
  if (name == "C" || name == "c") {
    return Problem::C;
  }
  throw std::invalid_argument(fmt::format("unknown problem '{}', expected A, B or C", name));
}

char problem_letter(Problem p)
{
  switch (p) {
  case Problem::A: return 'A';
  case Problem::B: return 'B';
  case Problem::C: return 'C';
  }
  return '?';
}

std::vector<OpStage> problem_stages(Problem p)
{
  switch (p) {
  case Problem::A: return {{StageKind::TemporalPool, 4}, {StageKind::SpatialPool, 4}};
  case Problem::B: return {{StageKind::TemporalCircBlur, 7}, {StageKind::SpatialPool, 8}};
  case Problem::C: return {{StageKind::TemporalPool, 8}, {StageKind::SpatialPool, 8}};
  }
  return {};
}

LinearOp problem_operator(Problem p, Shape input) { return LinearOp(problem_stages(p), input); }

} // namespace lavino
