#include "fmv/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <stdexcept>

#include "fmv/errors.hpp"

namespace fmv {

namespace {

constexpr std::size_t kStderrTailCap = 16 * 1024;
constexpr std::size_t kReadChunk = 64 * 1024;

bool is_line_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f';
}

using Clock = std::chrono::steady_clock;

std::int64_t ms_since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() -
                                                               start)
      .count();
}

struct FdGuard {
  int fd = -1;
  FdGuard() = default;
  explicit FdGuard(int f) : fd(f) {}
  FdGuard(const FdGuard&) = delete;
  FdGuard& operator=(const FdGuard&) = delete;
  ~FdGuard() { reset(); }
  void reset() {
    if (fd >= 0) {
      ::close(fd);
      fd = -1;
    }
  }
  int release() {
    int f = fd;
    fd = -1;
    return f;
  }
};

struct TempFile {
  std::string path;
  ~TempFile() {
    if (!path.empty()) ::unlink(path.c_str());
  }
};

void set_nonblocking(int fd) {
  int flags = ::fcntl(fd, F_GETFL, 0);
  if (flags >= 0) ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

// Writing to a dead child's stdin must yield EPIPE, not kill the harness.
void ignore_sigpipe_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

std::string write_source_tempfile(const std::string& source) {
  const char* base = ::getenv("TMPDIR");
  std::string templ = std::string(base && *base ? base : "/tmp") +
                      "/fmv-cand-XXXXXX";
  std::vector<char> buf(templ.begin(), templ.end());
  buf.push_back('\0');
  int fd = ::mkstemp(buf.data());
  if (fd < 0) {
    throw SpawnError(std::string("mkstemp failed: ") + std::strerror(errno));
  }
  FdGuard guard(fd);
  std::size_t off = 0;
  while (off < source.size()) {
    ssize_t n = ::write(fd, source.data() + off, source.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      std::string path(buf.data());
      ::unlink(path.c_str());
      throw SpawnError(std::string("writing candidate source failed: ") +
                       std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
  return std::string(buf.data());
}

int waitpid_eintr(pid_t pid, int* status, int options) {
  for (;;) {
    pid_t r = ::waitpid(pid, status, options);
    if (r >= 0 || errno != EINTR) return static_cast<int>(r);
  }
}

}  // namespace

bool utf8_valid(std::string_view bytes) {
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t n = bytes.size();
  std::size_t i = 0;
  while (i < n) {
    unsigned char c = p[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len;
    unsigned cp;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t j = 1; j < len; ++j) {
      if ((p[i + j] & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (p[i + j] & 0x3F);
    }
    // overlongs, surrogates, out of range
    if (len == 2 && cp < 0x80) return false;
    if (len == 3 && (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF))) return false;
    if (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) return false;
    i += len;
  }
  return true;
}

std::optional<std::string> normalize_output(std::string_view raw) {
  if (!utf8_valid(raw)) return std::nullopt;

  std::string text(raw);
  // CRLF -> LF
  std::string joined;
  joined.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n') continue;
    joined.push_back(text[i]);
  }

  std::vector<std::string_view> lines;
  std::string_view rest(joined);
  for (;;) {
    std::size_t pos = rest.find('\n');
    std::string_view line = rest.substr(0, pos);
    while (!line.empty() && is_line_space(line.back())) line.remove_suffix(1);
    while (!line.empty() && is_line_space(line.front())) line.remove_prefix(1);
    lines.push_back(line);
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }

  std::size_t first = 0;
  std::size_t last = lines.size();
  while (first < last && lines[first].empty()) ++first;
  while (last > first && lines[last - 1].empty()) --last;
  if (first == last) return std::nullopt;

  std::string out;
  for (std::size_t i = first; i < last; ++i) {
    if (i > first) out.push_back('\n');
    out.append(lines[i]);
  }
  return out;
}

std::vector<std::string> render_runner_argv(const std::string& runner_command,
                                            const std::string& file_path) {
  std::vector<std::string> argv;
  std::string cur;
  bool in_token = false;
  char quote = '\0';
  for (char c : runner_command) {
    if (quote != '\0') {
      if (c == quote) {
        quote = '\0';
      } else {
        cur.push_back(c);
      }
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
      in_token = true;
      continue;
    }
    if (c == ' ' || c == '\t') {
      if (in_token) {
        argv.push_back(cur);
        cur.clear();
        in_token = false;
      }
      continue;
    }
    cur.push_back(c);
    in_token = true;
  }
  if (quote != '\0') {
    throw SpawnError("unbalanced quote in runner command: " + runner_command);
  }
  if (in_token) argv.push_back(cur);
  if (argv.empty()) {
    throw SpawnError("empty runner command");
  }
  for (std::string& tok : argv) {
    std::size_t pos;
    while ((pos = tok.find("{file}")) != std::string::npos) {
      tok.replace(pos, 6, file_path);
    }
  }
  return argv;
}

ExecOutcome run_candidate(const std::string& program_source,
                          const std::string& runner_command,
                          const std::string& test_input,
                          const ResourceLimits& limits) {
  if (limits.wall_timeout_ms <= 0 || limits.max_output_bytes <= 0) {
    throw std::invalid_argument("ResourceLimits must be positive");
  }
  ignore_sigpipe_once();

  TempFile src;
  src.path = write_source_tempfile(program_source);
  std::vector<std::string> argv = render_runner_argv(runner_command, src.path);

  int in_pipe[2], out_pipe[2], err_pipe[2], status_pipe[2];
  if (::pipe(in_pipe) < 0 || ::pipe(out_pipe) < 0 || ::pipe(err_pipe) < 0 ||
      ::pipe2(status_pipe, O_CLOEXEC) < 0) {
    throw SpawnError(std::string("pipe failed: ") + std::strerror(errno));
  }

  const Clock::time_point start = Clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    throw SpawnError(std::string("fork failed: ") + std::strerror(errno));
  }

  if (pid == 0) {
    // child: own process group so the whole tree can be killed
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[0]);
    ::close(err_pipe[1]);
    ::close(status_pipe[0]);
    if (limits.max_memory_bytes) {
      rlimit rl;
      rl.rlim_cur = static_cast<rlim_t>(*limits.max_memory_bytes);
      rl.rlim_max = static_cast<rlim_t>(*limits.max_memory_bytes);
      ::setrlimit(RLIMIT_AS, &rl);
    }
    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (std::string& a : argv) cargv.push_back(a.data());
    cargv.push_back(nullptr);
    ::execvp(cargv[0], cargv.data());
    int err = errno;
    ssize_t ignored = ::write(status_pipe[1], &err, sizeof(err));
    (void)ignored;
    ::_exit(127);
  }

  // parent
  FdGuard stdin_w(in_pipe[1]), stdout_r(out_pipe[0]), stderr_r(err_pipe[0]),
      status_r(status_pipe[0]);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  ::close(status_pipe[1]);

  // The status pipe reports exec failure; EOF means exec succeeded. exec
  // happens before the program can produce output, so this read cannot
  // deadlock against full stdio pipes.
  int exec_errno = 0;
  for (;;) {
    ssize_t n = ::read(status_r.fd, &exec_errno, sizeof(exec_errno));
    if (n < 0 && errno == EINTR) continue;
    if (n == static_cast<ssize_t>(sizeof(exec_errno))) {
      waitpid_eintr(pid, nullptr, 0);
      throw SpawnError("cannot launch runner '" + argv[0] +
                       "': " + std::strerror(exec_errno));
    }
    break;  // EOF: exec succeeded
  }
  status_r.reset();

  set_nonblocking(stdin_w.fd);
  set_nonblocking(stdout_r.fd);
  set_nonblocking(stderr_r.fd);

  std::string out_buf;
  std::string err_buf;
  std::size_t in_off = 0;
  bool out_eof = false, err_eof = false;

  enum class Verdict { IoDone, TimedOut, Overflow };
  Verdict verdict = Verdict::IoDone;

  const auto deadline_exceeded = [&] {
    return ms_since(start) >= limits.wall_timeout_ms;
  };

  char chunk[kReadChunk];
  for (;;) {
    if (out_eof && err_eof && stdin_w.fd < 0) break;
    if (deadline_exceeded()) {
      verdict = Verdict::TimedOut;
      break;
    }

    pollfd fds[3];
    nfds_t nfds = 0;
    int idx_in = -1, idx_out = -1, idx_err = -1;
    if (stdin_w.fd >= 0) {
      idx_in = static_cast<int>(nfds);
      fds[nfds++] = {stdin_w.fd, POLLOUT, 0};
    }
    if (!out_eof) {
      idx_out = static_cast<int>(nfds);
      fds[nfds++] = {stdout_r.fd, POLLIN, 0};
    }
    if (!err_eof) {
      idx_err = static_cast<int>(nfds);
      fds[nfds++] = {stderr_r.fd, POLLIN, 0};
    }
    if (nfds == 0) break;

    std::int64_t remaining = limits.wall_timeout_ms - ms_since(start);
    if (remaining < 0) remaining = 0;
    int rc = ::poll(fds, nfds, static_cast<int>(remaining));
    if (rc < 0) {
      if (errno == EINTR) continue;
      ::killpg(pid, SIGKILL);
      waitpid_eintr(pid, nullptr, 0);
      throw SpawnError(std::string("poll failed: ") + std::strerror(errno));
    }
    if (rc == 0) continue;  // timeout re-checked at loop head

    if (idx_in >= 0 && (fds[idx_in].revents & (POLLOUT | POLLERR | POLLHUP))) {
      if (fds[idx_in].revents & (POLLERR | POLLHUP)) {
        stdin_w.reset();  // reader gone; fine
      } else {
        ssize_t n = ::write(stdin_w.fd, test_input.data() + in_off,
                            test_input.size() - in_off);
        if (n > 0) {
          in_off += static_cast<std::size_t>(n);
        } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
          stdin_w.reset();
        }
        if (in_off >= test_input.size()) stdin_w.reset();
      }
    }
    if (idx_out >= 0 && (fds[idx_out].revents & (POLLIN | POLLHUP | POLLERR))) {
      ssize_t n = ::read(stdout_r.fd, chunk, sizeof(chunk));
      if (n > 0) {
        out_buf.append(chunk, static_cast<std::size_t>(n));
        if (static_cast<std::int64_t>(out_buf.size()) >
            limits.max_output_bytes) {
          verdict = Verdict::Overflow;
          break;
        }
      } else if (n == 0) {
        out_eof = true;
      } else if (errno != EAGAIN && errno != EINTR) {
        out_eof = true;
      }
    }
    if (idx_err >= 0 && (fds[idx_err].revents & (POLLIN | POLLHUP | POLLERR))) {
      ssize_t n = ::read(stderr_r.fd, chunk, sizeof(chunk));
      if (n > 0) {
        if (err_buf.size() < kStderrTailCap) {
          err_buf.append(chunk, static_cast<std::size_t>(
                                    std::min<std::size_t>(
                                        static_cast<std::size_t>(n),
                                        kStderrTailCap - err_buf.size())));
        }
      } else if (n == 0) {
        err_eof = true;
      } else if (errno != EAGAIN && errno != EINTR) {
        err_eof = true;
      }
    }
  }

  ExecOutcome outcome;
  outcome.stderr_tail = std::move(err_buf);

  int status = 0;
  bool reaped = false;
  if (verdict == Verdict::IoDone) {
    // Streams are closed; wait for exit, still bounded by the wall clock.
    for (;;) {
      int r = waitpid_eintr(pid, &status, WNOHANG);
      if (r == pid) {
        reaped = true;
        break;
      }
      if (r < 0) break;
      if (deadline_exceeded()) {
        verdict = Verdict::TimedOut;
        break;
      }
      ::usleep(1000);
    }
  }
  if (!reaped) {
    ::killpg(pid, SIGKILL);
    waitpid_eintr(pid, &status, 0);
  }
  // Sweep group stragglers (grandchildren that outlived the direct child).
  ::killpg(pid, SIGKILL);

  outcome.duration_ms = ms_since(start);

  switch (verdict) {
    case Verdict::TimedOut:
      outcome.status = ExecStatus::Timeout;
      if (outcome.duration_ms < limits.wall_timeout_ms) {
        outcome.duration_ms = limits.wall_timeout_ms;
      }
      return outcome;
    case Verdict::Overflow:
      outcome.status = ExecStatus::OutputTooLarge;
      return outcome;
    case Verdict::IoDone:
      break;
  }

  if (WIFEXITED(status)) {
    outcome.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    outcome.exit_code = -WTERMSIG(status);
  }
  if (!outcome.exit_code || *outcome.exit_code != 0) {
    outcome.status = ExecStatus::RuntimeError;
    return outcome;
  }

  std::optional<std::string> normalized = normalize_output(out_buf);
  if (!normalized) {
    outcome.status = ExecStatus::InvalidFormat;
    return outcome;
  }
  outcome.status = ExecStatus::Ok;
  outcome.output = std::move(normalized);
  return outcome;
}

}  // namespace fmv
