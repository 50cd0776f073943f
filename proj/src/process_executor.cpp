#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>

#include <fmt/format.h>

#include "mlagent/errors.hpp"
#include "mlagent/executor.hpp"

namespace mlagent {

void TailBuffer::append(const char* data, std::size_t n) {
  buf_.append(data, n);
  if (buf_.size() > 2 * cap_) buf_.erase(0, buf_.size() - cap_);
}

std::string TailBuffer::str() const {
  if (buf_.size() <= cap_) return buf_;
  return buf_.substr(buf_.size() - cap_);
}

ProcessExecutor::ProcessExecutor(std::vector<std::string> env_whitelist) : whitelist_(std::move(env_whitelist)) {}

std::vector<std::string> ProcessExecutor::default_env_whitelist() {
  return {"PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "PYTHONPATH", "VIRTUAL_ENV", "OMP_NUM_THREADS"};
}

namespace {

struct Pipe {
  int fd[2] = {-1, -1};
  void close_all() {
    for (int& f : fd) {
      if (f >= 0) ::close(f);
      f = -1;
    }
  }
};

void make_pipe(Pipe& p) {
  if (::pipe2(p.fd, O_CLOEXEC) != 0) {
    throw SandboxSpawnFailure(fmt::format("pipe: {}", std::strerror(errno)));
  }
}

// Resolved before fork: the child may only make async-signal-safe calls.
std::string resolve_program(const std::string& name, const std::map<std::string, std::string>& env) {
  if (name.find('/') != std::string::npos) return name;
  auto it = env.find("PATH");
  const std::string path = it == env.end() ? "/usr/local/bin:/usr/bin:/bin" : it->second;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    const auto colon = path.find(':', pos);
    std::string dir = path.substr(pos, colon == std::string::npos ? std::string::npos : colon - pos);
    if (dir.empty()) dir = ".";
    const std::string candidate = dir + "/" + name;
    if (::access(candidate.c_str(), X_OK) == 0) return candidate;
    if (colon == std::string::npos) break;
    pos = colon + 1;
  }
  return name;
}

}  // namespace

ExecOutcome ProcessExecutor::execute(const ExecRequest& request) {
  if (request.argv.empty()) throw InvalidArgument("empty command");
  if (!(request.timeout_s > 0.0)) throw InvalidArgument("execution cap must be positive");
  ExecOutcome out;
  if (cancelled_.load()) {
    out.cancelled = true;
    return out;
  }

  std::map<std::string, std::string> env_map;
  for (const auto& name : whitelist_) {
    if (const char* v = std::getenv(name.c_str())) env_map[name] = v;
  }
  for (const auto& [k, v] : request.env) env_map[k] = v;
  std::vector<std::string> env_strings;
  for (const auto& [k, v] : env_map) env_strings.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::vector<std::string> args = request.argv;
  std::vector<char*> argv;
  for (auto& s : args) argv.push_back(s.data());
  argv.push_back(nullptr);
  const std::string workdir = request.workdir.string();
  const std::string program = resolve_program(request.argv[0], env_map);

  Pipe out_pipe, err_pipe, status_pipe;
  make_pipe(out_pipe);
  make_pipe(err_pipe);
  make_pipe(status_pipe);

  const auto start = std::chrono::steady_clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    const int e = errno;
    out_pipe.close_all();
    err_pipe.close_all();
    status_pipe.close_all();
    throw SandboxSpawnFailure(fmt::format("fork: {}", std::strerror(e)));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(out_pipe.fd[1], STDOUT_FILENO);
    ::dup2(err_pipe.fd[1], STDERR_FILENO);
    const int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
    int err = 0;
    if (::chdir(workdir.c_str()) != 0) {
      err = errno;
    } else {
      ::execve(program.c_str(), argv.data(), envp.data());
      err = errno;
    }
    [[maybe_unused]] auto n = ::write(status_pipe.fd[1], &err, sizeof err);
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(out_pipe.fd[1]);
  out_pipe.fd[1] = -1;
  ::close(err_pipe.fd[1]);
  err_pipe.fd[1] = -1;
  ::close(status_pipe.fd[1]);
  status_pipe.fd[1] = -1;

  int spawn_errno = 0;
  const auto got = ::read(status_pipe.fd[0], &spawn_errno, sizeof spawn_errno);
  status_pipe.close_all();
  if (got == static_cast<ssize_t>(sizeof spawn_errno)) {
    ::waitpid(pid, nullptr, 0);
    out_pipe.close_all();
    err_pipe.close_all();
    throw SandboxSpawnFailure(fmt::format("cannot start '{}': {}", request.argv[0], std::strerror(spawn_errno)));
  }

  TailBuffer out_tail, err_tail;
  const auto deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                    std::chrono::duration<double>(request.timeout_s));
  bool killed = false;
  bool exited = false;
  int status = 0;
  char buf[8192];
  auto kill_group = [&] {
    if (!killed) {
      ::kill(-pid, SIGKILL);
      killed = true;
    }
  };

  while (out_pipe.fd[0] >= 0 || err_pipe.fd[0] >= 0 || !exited) {
    const auto now = std::chrono::steady_clock::now();
    if (!killed && (now >= deadline || cancelled_.load())) {
      if (cancelled_.load()) {
        out.cancelled = true;
      } else {
        out.timed_out = true;
      }
      kill_group();
    }
    if (!exited) {
      const pid_t r = ::waitpid(pid, &status, WNOHANG);
      if (r == pid) {
        exited = true;
        // Orphans left in the group would keep our pipes open.
        ::kill(-pid, SIGKILL);
      }
    }
    pollfd fds[2];
    int nfds = 0;
    for (Pipe* p : {&out_pipe, &err_pipe}) {
      if (p->fd[0] >= 0) fds[nfds++] = {p->fd[0], POLLIN, 0};
    }
    if (nfds == 0) {
      if (!exited) ::usleep(10000);
      continue;
    }
    ::poll(fds, static_cast<nfds_t>(nfds), 50);
    for (int i = 0; i < nfds; ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      Pipe& p = fds[i].fd == out_pipe.fd[0] ? out_pipe : err_pipe;
      TailBuffer& tail = &p == &out_pipe ? out_tail : err_tail;
      const auto n = ::read(p.fd[0], buf, sizeof buf);
      if (n > 0) {
        tail.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || (errno != EINTR && errno != EAGAIN)) {
        ::close(p.fd[0]);
        p.fd[0] = -1;
      }
    }
  }

  out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.stdout_tail = out_tail.str();
  out.stderr_tail = err_tail.str();
  if (out.timed_out || out.cancelled) {
    out.exit_code = -1;
  } else if (WIFEXITED(status)) {
    out.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    out.exit_code = 128 + WTERMSIG(status);
  }
  return out;
}

}  // namespace mlagent
