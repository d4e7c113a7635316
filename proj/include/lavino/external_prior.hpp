// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lavino/priors.hpp"

#include <chrono>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <sys/types.h>

namespace lavino {

/// Handshake failures, malformed frames, server-side errors, timeouts and exits.
class ProtocolError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

namespace wire {

inline constexpr char kMagic[4] = {'L', 'P', 'R', 'I'};
inline constexpr std::uint32_t kVersion = 1;

enum class Opcode : std::uint8_t
{
  Consistency = 1,
  EpsPredict = 2,
};

enum class Status : std::uint8_t
{
  Ok = 0,
  Error = 1,
};

std::vector<std::uint8_t> encode_handshake(std::string const &model_id);
std::vector<std::uint8_t> encode_request(Opcode op, std::uint32_t timestep, VideoTensor const &z);

} // namespace wire

struct ExternalPriorOptions
{
  std::chrono::milliseconds timeout{std::chrono::seconds(300)};
  AlphaSchedule schedule{};
};

/* Prior served by a companion process speaking the LPRI protocol on its
 * stdin/stdout. The codec is the identity on this side; any latent codec
 * lives inside the server's consistency call. One request in flight per
 * connection; concurrent callers are serialized.
 */
class ExternalPrior : public Prior
{
public:
  /// Launches `command` through /bin/sh and completes the handshake.
  static std::unique_ptr<ExternalPrior> connect(std::string const &command, std::string const &model_id,
                                                ExternalPriorOptions options = {});

  ~ExternalPrior() override;
  ExternalPrior(ExternalPrior const &) = delete;
  ExternalPrior &operator=(ExternalPrior const &) = delete;

  std::string name() const override { return "external:" + model_id_; }
  AlphaSchedule const &schedule() const override { return options_.schedule; }
  VideoTensor consistency(VideoTensor const &z, int t) const override;
  /// The handshake does not advertise capabilities; servers without one answer with an error frame.
  bool has_eps_predictor() const override { return true; }
  VideoTensor predict_eps(VideoTensor const &z, int t) const override;

  /// Declared latent shape; all zeros means "same as input".
  Shape const &declared_latent_shape() const { return latent_; }
  bool same_shape_latent() const { return latent_same_; }

private:
  ExternalPrior(std::string model_id, ExternalPriorOptions options);
  VideoTensor call(wire::Opcode op, VideoTensor const &z, int t) const;
  void handshake();
  void shutdown();

  std::string model_id_;
  ExternalPriorOptions options_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  Shape latent_{};
  bool latent_same_ = true;
  mutable std::mutex mutex_;
  mutable bool broken_ = false;
};

} // namespace lavino
