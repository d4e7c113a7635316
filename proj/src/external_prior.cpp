// SPDX-License-Identifier: Apache-2.0
#include "lavino/external_prior.hpp"

#include "lavino/bytes.hpp"

#include <fmt/core.h>

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

extern char **environ;

namespace lavino {

namespace wire {

std::vector<std::uint8_t> encode_handshake(std::string const &model_id)
{
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  bytes::put_u32(out, kVersion);
  bytes::put_string(out, model_id);
  return out;
}

std::vector<std::uint8_t> encode_request(Opcode op, std::uint32_t timestep, VideoTensor const &z)
{
  std::vector<std::uint8_t> out;
  bytes::put_u8(out, static_cast<std::uint8_t>(op));
  bytes::put_u32(out, timestep);
  auto const &s = z.shape();
  for (auto d : {s.frames, s.height, s.width, s.channels}) {
    bytes::put_u32(out, static_cast<std::uint32_t>(d));
  }
  bytes::put_f32_array(out, z.data());
  return out;
}

} // namespace wire

namespace {

using Clock = std::chrono::steady_clock;

void write_all(int fd, std::vector<std::uint8_t> const &buf, Clock::time_point deadline)
{
  std::size_t off = 0;
  while (off < buf.size()) {
    auto const remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (remaining <= 0) {
      throw ProtocolError("timeout while sending to prior server");
    }
    pollfd pfd{fd, POLLOUT, 0};
    int const rc = ::poll(&pfd, 1, static_cast<int>(std::min<long>(remaining, 1000)));
    if (rc < 0 && errno != EINTR) {
      throw ProtocolError(fmt::format("poll failed: {}", std::strerror(errno)));
    }
    if (rc <= 0) {
      continue;
    }
    if (pfd.revents & (POLLERR | POLLHUP)) {
      throw ProtocolError("prior server exited (stdin closed)");
    }
    ssize_t const n = ::write(fd, buf.data() + off, buf.size() - off);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) {
        continue;
      }
      throw ProtocolError(fmt::format("prior server exited: write failed ({})", std::strerror(errno)));
    }
    off += static_cast<std::size_t>(n);
  }
}

/// Reads exactly `n` bytes; `what` names the field for error messages.
std::vector<std::uint8_t> read_exact(int fd, std::size_t n, Clock::time_point deadline, char const *what)
{
  std::vector<std::uint8_t> buf(n);
  std::size_t off = 0;
  while (off < n) {
    auto const remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (remaining <= 0) {
      throw ProtocolError(fmt::format("timeout waiting for {} ({} of {} bytes received)", what, off, n));
    }
    pollfd pfd{fd, POLLIN, 0};
    int const rc = ::poll(&pfd, 1, static_cast<int>(std::min<long>(remaining, 1000)));
    if (rc < 0 && errno != EINTR) {
      throw ProtocolError(fmt::format("poll failed: {}", std::strerror(errno)));
    }
    if (rc <= 0) {
      continue;
    }
    ssize_t const got = ::read(fd, buf.data() + off, n - off);
    if (got < 0) {
      if (errno == EINTR || errno == EAGAIN) {
        continue;
      }
      throw ProtocolError(fmt::format("read failed: {}", std::strerror(errno)));
    }
    if (got == 0) {
      throw ProtocolError(
        fmt::format("prior server exited: stream closed while reading {} (expected {} bytes, received {})", what, n, off));
    }
    off += static_cast<std::size_t>(got);
  }
  return buf;
}

std::uint32_t read_u32(int fd, Clock::time_point deadline, char const *what)
{
  return bytes::get_u32(read_exact(fd, 4, deadline, what).data());
}

std::string read_message(int fd, Clock::time_point deadline)
{
  auto const len = read_u32(fd, deadline, "error message length");
  if (len > (1u << 20)) {
    throw ProtocolError(fmt::format("error message length {} exceeds 1 MiB", len));
  }
  auto const msg = read_exact(fd, len, deadline, "error message");
  return std::string(msg.begin(), msg.end());
}

Shape read_dims(int fd, Clock::time_point deadline)
{
  auto const b = read_exact(fd, 16, deadline, "response dims");
  return {bytes::get_u32(b.data()), bytes::get_u32(b.data() + 4), bytes::get_u32(b.data() + 8),
          bytes::get_u32(b.data() + 12)};
}

} // namespace

ExternalPrior::ExternalPrior(std::string model_id, ExternalPriorOptions options)
  : model_id_(std::move(model_id))
  , options_(std::move(options))
{
}

std::unique_ptr<ExternalPrior> ExternalPrior::connect(std::string const &command, std::string const &model_id,
                                                      ExternalPriorOptions options)
{
  // A dead server must surface as an error, not terminate the client.
  std::signal(SIGPIPE, SIG_IGN);

  std::unique_ptr<ExternalPrior> prior(new ExternalPrior(model_id, std::move(options)));
  int in_pipe[2];  // parent -> child stdin
  int out_pipe[2]; // child stdout -> parent
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) {
    throw ProtocolError(fmt::format("pipe failed: {}", std::strerror(errno)));
  }
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw ProtocolError(fmt::format("pipe failed: {}", std::strerror(errno)));
  }

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  // Own process group so a kill reaches the server even when the shell forks it.
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  std::string cmd = "exec " + command;
  char sh[] = "/bin/sh";
  char dash_c[] = "-c";
  char *argv[] = {sh, dash_c, cmd.data(), nullptr};
  pid_t pid = -1;
  int const rc = posix_spawn(&pid, "/bin/sh", &actions, &attr, argv, environ);
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    throw ProtocolError(fmt::format("cannot launch prior server '{}': {}", command, std::strerror(rc)));
  }
  prior->pid_ = pid;
  prior->to_child_ = in_pipe[1];
  prior->from_child_ = out_pipe[0];
  prior->handshake();
  return prior;
}

void ExternalPrior::handshake()
{
  auto const deadline = Clock::now() + options_.timeout;
  try {
    write_all(to_child_, wire::encode_handshake(model_id_), deadline);
    auto const first = read_exact(from_child_, 1, deadline, "handshake reply");
    if (first[0] == static_cast<std::uint8_t>(wire::Status::Error)) {
      throw ProtocolError(fmt::format("handshake rejected by server: {}", read_message(from_child_, deadline)));
    }
    auto const rest = read_exact(from_child_, 3, deadline, "handshake magic");
    if (first[0] != wire::kMagic[0] || std::memcmp(rest.data(), wire::kMagic + 1, 3) != 0) {
      throw ProtocolError("handshake failed: bad magic in server reply");
    }
    auto const version = read_u32(from_child_, deadline, "handshake version");
    if (version != wire::kVersion) {
      throw ProtocolError(fmt::format("handshake failed: server speaks version {}, expected {}", version, wire::kVersion));
    }
    latent_ = read_dims(from_child_, deadline);
    latent_same_ = latent_ == Shape{0, 0, 0, 0};
    if (!latent_same_ && latent_.size() == 0) {
      throw ProtocolError(fmt::format("handshake failed: invalid latent shape {}", to_string(latent_)));
    }
  } catch (...) {
    broken_ = true;
    shutdown();
    throw;
  }
}

VideoTensor ExternalPrior::call(wire::Opcode op, VideoTensor const &z, int t) const
{
  options_.schedule.check_timestep(t);
  std::lock_guard lock(mutex_);
  if (broken_) {
    throw ProtocolError(fmt::format("connection to prior '{}' is no longer usable", model_id_));
  }
  if (!latent_same_ && z.shape() != latent_) {
    throw ShapeError(fmt::format("prior '{}' declared latent {}, got tensor {}", model_id_, to_string(latent_),
                                 to_string(z.shape())));
  }
  auto const deadline = Clock::now() + options_.timeout;
  try {
    write_all(to_child_, wire::encode_request(op, static_cast<std::uint32_t>(t), z), deadline);
    auto const status = read_exact(from_child_, 1, deadline, "response status")[0];
    if (status == static_cast<std::uint8_t>(wire::Status::Error)) {
      throw ProtocolError(fmt::format("prior server error: {}", read_message(from_child_, deadline)));
    }
    if (status != static_cast<std::uint8_t>(wire::Status::Ok)) {
      broken_ = true;
      throw ProtocolError(fmt::format("protocol violation: unknown status byte {}", status));
    }
    auto const dims = read_dims(from_child_, deadline);
    if (dims != z.shape()) {
      broken_ = true;
      throw ProtocolError(fmt::format("protocol violation: expected {} payload bytes for {}, server announced {} bytes for {}",
                                      4 * z.size(), to_string(z.shape()), 4 * dims.size(), to_string(dims)));
    }
    auto const payload = read_exact(from_child_, 4 * dims.size(), deadline, "response payload");
    VideoTensor out(dims);
    bytes::get_f32_array(payload.data(), out.data());
    return out;
  } catch (ProtocolError const &e) {
    // Server-side error frames leave the stream aligned; anything else does not.
    if (std::string_view(e.what()).starts_with("prior server error:")) {
      throw;
    }
    broken_ = true;
    throw;
  }
}

VideoTensor ExternalPrior::consistency(VideoTensor const &z, int t) const { return call(wire::Opcode::Consistency, z, t); }

VideoTensor ExternalPrior::predict_eps(VideoTensor const &z, int t) const { return call(wire::Opcode::EpsPredict, z, t); }

void ExternalPrior::shutdown()
{
  if (to_child_ >= 0) {
    ::close(to_child_);
    to_child_ = -1;
  }
  if (from_child_ >= 0) {
    ::close(from_child_);
    from_child_ = -1;
  }
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(-pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

ExternalPrior::~ExternalPrior() { shutdown(); }

} // namespace lavino
