#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mlagent {

inline constexpr std::size_t kOutputTailBytes = 64 * 1024;

struct ExecRequest {
  std::vector<std::string> argv;
  std::filesystem::path workdir;
  double timeout_s = 0.0;
  std::map<std::string, std::string> env;  // merged over the whitelisted parent environment
  bool debug = false;
};

struct ExecOutcome {
  int exit_code = -1;
  bool timed_out = false;
  bool cancelled = false;
  double wall_time_s = 0.0;  // time attributed to the run (simulated executors report their own)
  std::string stdout_tail;
  std::string stderr_tail;

  bool ok() const { return exit_code == 0 && !timed_out && !cancelled; }
};

/// Runs one solution entrypoint. Implementations must be safe to call from
/// several workers at once, each with its own workdir.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual ExecOutcome execute(const ExecRequest& request) = 0;
};

/// Process-level sandbox: fork/exec in its own process group, working
/// directory = workdir, whitelisted environment, stdout/stderr tails, and a
/// group kill at the deadline or on cancellation.
class ProcessExecutor final : public Executor {
 public:
  explicit ProcessExecutor(std::vector<std::string> env_whitelist = default_env_whitelist());

  ExecOutcome execute(const ExecRequest& request) override;

  /// Kills in-flight runs and refuses new ones.
  void cancel_all() { cancelled_.store(true); }
  void reset() { cancelled_.store(false); }

  static std::vector<std::string> default_env_whitelist();

 private:
  std::vector<std::string> whitelist_;
  std::atomic<bool> cancelled_{false};
};

/// Keeps the last `cap` bytes of a growing stream.
class TailBuffer {
 public:
  explicit TailBuffer(std::size_t cap = kOutputTailBytes) : cap_(cap) {}
  void append(const char* data, std::size_t n);
  std::string str() const;

 private:
  std::size_t cap_;
  std::string buf_;
};

}  // namespace mlagent
