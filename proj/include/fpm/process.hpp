#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fpm/error.hpp"

extern char** environ;

namespace fpm {

struct ProcessResult {
  int exit_code = -1;  // -1 when terminated by a signal
  int signal = 0;
  bool timed_out = false;
  std::vector<std::uint8_t> stdout_data;
  std::string stderr_text;
};

namespace detail {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    reset(o.release());
    return *this;
  }
  ~Fd() { reset(); }
  int get() const noexcept { return fd_; }
  int release() noexcept { return std::exchange(fd_, -1); }
  void reset(int fd = -1) noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }

 private:
  int fd_ = -1;
};

inline void make_pipe(Fd& read_end, Fd& write_end) {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw Error(std::string("pipe: ") + std::strerror(errno));
  read_end.reset(fds[0]);
  write_end.reset(fds[1]);
}

// Blocks SIGPIPE for the calling thread while writing to a child that may
// exit early; a pending SIGPIPE is discarded before the mask is restored.
class SigpipeGuard {
 public:
  SigpipeGuard() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGPIPE);
    pthread_sigmask(SIG_BLOCK, &set_, &old_);
  }
  ~SigpipeGuard() {
    sigset_t pending;
    sigpending(&pending);
    if (sigismember(&pending, SIGPIPE) && !sigismember(&old_, SIGPIPE)) {
      const timespec zero{0, 0};
      while (sigtimedwait(&set_, nullptr, &zero) > 0) {
      }
    }
    pthread_sigmask(SIG_SETMASK, &old_, nullptr);
  }
  SigpipeGuard(const SigpipeGuard&) = delete;
  SigpipeGuard& operator=(const SigpipeGuard&) = delete;

 private:
  sigset_t set_{};
  sigset_t old_{};
};

}  // namespace detail

/// Runs `/bin/sh -c command`, feeding `input` on standard input and capturing
/// standard output and standard error. The child is killed after `timeout`.
inline ProcessResult run_shell_command(const std::string& command, std::span<const std::uint8_t> input,
                                       std::chrono::milliseconds timeout) {
  detail::Fd in_r, in_w, out_r, out_w, err_r, err_w;
  detail::make_pipe(in_r, in_w);
  detail::make_pipe(out_r, out_w);
  detail::make_pipe(err_r, err_w);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_r.get(), STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_w.get(), STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err_w.get(), STDERR_FILENO);

  std::string sh = "/bin/sh", dash_c = "-c", cmd = command;
  char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, "/bin/sh", &actions, nullptr, argv, environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw PluginError("cannot spawn '" + command + "': " + std::strerror(rc), -1, "");

  in_r.reset();
  out_w.reset();
  err_w.reset();
  ::fcntl(in_w.get(), F_SETFL, O_NONBLOCK);

  detail::SigpipeGuard sigpipe_guard;
  ProcessResult result;
  std::size_t written = 0;
  if (input.empty()) in_w.reset();
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::uint8_t buffer[65536];

  while (out_r.get() >= 0 || err_r.get() >= 0) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      result.timed_out = true;
      ::kill(pid, SIGKILL);
      break;
    }
    pollfd fds[3];
    int n = 0;
    int in_slot = -1, out_slot = -1, err_slot = -1;
    if (in_w.get() >= 0) {
      in_slot = n;
      fds[n++] = {in_w.get(), POLLOUT, 0};
    }
    if (out_r.get() >= 0) {
      out_slot = n;
      fds[n++] = {out_r.get(), POLLIN, 0};
    }
    if (err_r.get() >= 0) {
      err_slot = n;
      fds[n++] = {err_r.get(), POLLIN, 0};
    }
    const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    const int ready = ::poll(fds, static_cast<nfds_t>(n), static_cast<int>(std::min<long long>(wait_ms + 1, 1000)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      throw PluginError(std::string("poll: ") + std::strerror(errno), -1, result.stderr_text);
    }
    if (in_slot >= 0 && fds[in_slot].revents) {
      const ssize_t k = ::write(in_w.get(), input.data() + written, input.size() - written);
      if (k > 0) written += static_cast<std::size_t>(k);
      if (k < 0 && errno != EAGAIN && errno != EINTR) in_w.reset();  // EPIPE: child stopped reading
      if (written == input.size()) in_w.reset();
    }
    auto drain = [&](detail::Fd& fd, int slot, auto&& sink) {
      if (slot < 0 || !fds[slot].revents) return;
      const ssize_t k = ::read(fd.get(), buffer, sizeof buffer);
      if (k > 0) {
        sink(static_cast<std::size_t>(k));
      } else if (k == 0 || (errno != EAGAIN && errno != EINTR)) {
        fd.reset();
      }
    };
    drain(out_r, out_slot, [&](std::size_t k) {
      result.stdout_data.insert(result.stdout_data.end(), buffer, buffer + k);
    });
    drain(err_r, err_slot, [&](std::size_t k) {
      result.stderr_text.append(reinterpret_cast<const char*>(buffer), k);
    });
  }
  in_w.reset();

  int status = 0;
  for (;;) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid || (r < 0 && errno != EINTR)) break;
    if (!result.timed_out && std::chrono::steady_clock::now() >= deadline) {
      result.timed_out = true;
      ::kill(pid, SIGKILL);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.signal = WTERMSIG(status);
  }
  return result;
}

}  // namespace fpm
