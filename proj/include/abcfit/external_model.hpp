#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "abcfit/error.hpp"
#include "abcfit/forward_model.hpp"

namespace abcfit {

namespace detail {

struct ProcessOutput {
  int status = 0;
  std::string out;
  std::string err;
};

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

  int get() const { return fd_; }
  int release() {
    const int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void reset(int fd = -1) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }

 private:
  int fd_ = -1;
};

inline void make_pipe(Fd& read_end, Fd& write_end) {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0)
    throw ExternalModelError("pipe() failed", std::strerror(errno));
  read_end.reset(fds[0]);
  write_end.reset(fds[1]);
}

// Runs `/bin/sh -c command`, feeding `input` on stdin and capturing stdout/stderr.
inline ProcessOutput run_shell(const std::string& command, const std::string& input) {
  Fd in_r, in_w, out_r, out_w, err_r, err_w;
  make_pipe(in_r, in_w);
  make_pipe(out_r, out_w);
  make_pipe(err_r, err_w);

  const pid_t pid = ::fork();
  if (pid < 0) throw ExternalModelError("fork() failed", std::strerror(errno));
  if (pid == 0) {
    ::dup2(in_r.get(), STDIN_FILENO);
    ::dup2(out_w.get(), STDOUT_FILENO);
    ::dup2(err_w.get(), STDERR_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  in_r.reset();
  out_w.reset();
  err_w.reset();

  ProcessOutput result;
  std::size_t written = 0;
  char buf[4096];
  // stdin, stdout, stderr
  pollfd fds[3] = {{in_w.get(), POLLOUT, 0}, {out_r.get(), POLLIN, 0}, {err_r.get(), POLLIN, 0}};
  if (input.empty()) {
    in_w.reset();
    fds[0].fd = -1;
  }
  while (fds[0].fd >= 0 || fds[1].fd >= 0 || fds[2].fd >= 0) {
    if (::poll(fds, 3, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (fds[0].fd >= 0 && (fds[0].revents & (POLLOUT | POLLERR | POLLHUP))) {
      ssize_t n = -1;
      if (fds[0].revents & POLLOUT) {
        // A child that exits early must not kill us with SIGPIPE.
        struct sigaction ignore {}, previous {};
        ignore.sa_handler = SIG_IGN;
        ::sigaction(SIGPIPE, &ignore, &previous);
        n = ::write(in_w.get(), input.data() + written, input.size() - written);
        ::sigaction(SIGPIPE, &previous, nullptr);
      }
      if (n > 0) written += static_cast<std::size_t>(n);
      if (n <= 0 || written == input.size()) {
        in_w.reset();
        fds[0].fd = -1;
      }
    }
    for (int k = 1; k < 3; ++k) {
      if (fds[k].fd >= 0 && (fds[k].revents & (POLLIN | POLLERR | POLLHUP))) {
        const ssize_t n = ::read(fds[k].fd, buf, sizeof buf);
        if (n > 0) {
          (k == 1 ? result.out : result.err).append(buf, static_cast<std::size_t>(n));
        } else {
          (k == 1 ? out_r : err_r).reset();
          fds[k].fd = -1;
        }
      }
    }
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  result.status = status;
  return result;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Evaluates a user-supplied model through the line protocol:
//   stdin:  "mu0 t0 d0 nt et\n" then the grid voltages on one line
//   stdout: one line of mobilities, one per grid point; exit status 0.
inline MobilityCurve evaluate_external(const std::string& command, const ParamVector& theta,
                                       const VoltageGrid& grid) {
  if (command.empty()) throw InvalidInput("external model command is empty");
  if (grid.empty()) throw InvalidInput("evaluate_external: empty voltage grid");
  if (!theta.finite()) throw InvalidInput("evaluate_external: non-finite parameters");

  std::string input;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (i) input += ' ';
    input += detail::format_number(theta[i]);
  }
  input += '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i) input += ' ';
    input += detail::format_number(grid[i]);
  }
  input += '\n';

  const auto proc = detail::run_shell(command, input);
  if (!WIFEXITED(proc.status) || WEXITSTATUS(proc.status) != 0) {
    const std::string how = WIFEXITED(proc.status)
                                ? "exited with status " + std::to_string(WEXITSTATUS(proc.status))
                                : "terminated abnormally";
    throw ExternalModelError("external model " + how, proc.err);
  }

  const auto eol = proc.out.find('\n');
  std::istringstream line(proc.out.substr(0, eol));
  std::vector<double> values;
  std::string token;
  while (line >> token) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size())
      throw ExternalModelError("external model produced a malformed value '" + token + "'",
                               proc.err);
    values.push_back(v);
  }
  if (values.size() != grid.size())
    throw ExternalModelError("external model returned " + std::to_string(values.size()) +
                                 " values for a " + std::to_string(grid.size()) + "-point grid",
                             proc.err);

  MobilityCurve curve{grid, std::move(values)};
  try {
    curve.validate();
  } catch (const InvalidInput& e) {
    throw ExternalModelError(std::string("external model output rejected: ") + e.what(), proc.err);
  }
  return curve;
}

inline ForwardModel external_model(std::string command) {
  return [command = std::move(command)](const ParamVector& theta, const VoltageGrid& grid) {
    return evaluate_external(command, theta, grid);
  };
}

}  // namespace abcfit
