#include <chrono>
#include <cstdlib>
#include <fstream>

#include <doctest.h>

#include "helpers.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/executor.hpp"

using namespace mlagent;

namespace {

ExecRequest python(const testing::TempDir& dir, const std::string& code, double timeout_s = 10.0) {
  std::ofstream(dir / "main.py") << code;
  ExecRequest r;
  r.argv = {"python3", "main.py"};
  r.workdir = dir.path();
  r.timeout_s = timeout_s;
  return r;
}

}  // namespace

TEST_CASE("successful run captures stdout and stderr") {
  testing::TempDir dir("exec");
  ProcessExecutor ex;
  const auto o = ex.execute(python(dir, "import sys\nprint('hello')\nprint('warn', file=sys.stderr)\n"));
  CHECK(o.ok());
  CHECK(o.exit_code == 0);
  CHECK(o.stdout_tail == "hello\n");
  CHECK(o.stderr_tail == "warn\n");
  CHECK(o.wall_time_s > 0.0);
}

TEST_CASE("nonzero exit keeps the traceback") {
  testing::TempDir dir("exec");
  ProcessExecutor ex;
  const auto o = ex.execute(python(dir, "raise ValueError('boom')\n"));
  CHECK_FALSE(o.ok());
  CHECK(o.exit_code == 1);
  CHECK(o.stderr_tail.find("ValueError: boom") != std::string::npos);
}

TEST_CASE("deadline kills the whole process group") {
  testing::TempDir dir("exec");
  ProcessExecutor ex;
  const auto start = std::chrono::steady_clock::now();
  const auto o = ex.execute(python(dir,
                                   "import subprocess, sys, time\n"
                                   "print('started', flush=True)\n"
                                   "subprocess.Popen([sys.executable, '-c', 'import time; time.sleep(30)'])\n"
                                   "time.sleep(30)\n",
                                   0.5));
  const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(o.timed_out);
  CHECK_FALSE(o.ok());
  CHECK(o.stdout_tail == "started\n");
  CHECK(took < 10.0);
}

TEST_CASE("environment is whitelisted and extended per request") {
  testing::TempDir dir("exec");
  ::setenv("MLAGENT_TEST_SECRET", "leak", 1);
  ProcessExecutor ex;
  auto req = python(dir, "import os\nprint(os.environ.get('MLAGENT_TEST_SECRET', 'absent'), os.environ['EXTRA'])\n");
  req.env = {{"EXTRA", "given"}};
  const auto o = ex.execute(req);
  CHECK(o.stdout_tail == "absent given\n");
}

TEST_CASE("working directory is the request workdir") {
  testing::TempDir dir("exec");
  ProcessExecutor ex;
  const auto o = ex.execute(python(dir, "open('out.txt', 'w').write('x')\n"));
  CHECK(o.ok());
  CHECK(std::filesystem::exists(dir / "out.txt"));
}

TEST_CASE("a program that cannot start is a spawn failure") {
  testing::TempDir dir("exec");
  ProcessExecutor ex;
  ExecRequest r;
  r.argv = {"definitely-not-a-program-xyz"};
  r.workdir = dir.path();
  r.timeout_s = 5;
  CHECK_THROWS_AS(ex.execute(r), SandboxSpawnFailure);
}

TEST_CASE("cancelled executor refuses work") {
  testing::TempDir dir("exec");
  ProcessExecutor ex;
  ex.cancel_all();
  const auto o = ex.execute(python(dir, "print(1)\n"));
  CHECK(o.cancelled);
  CHECK_FALSE(o.ok());
  ex.reset();
  CHECK(ex.execute(python(dir, "print(1)\n")).ok());
}

TEST_CASE("tail buffer keeps the last bytes") {
  TailBuffer t(4);
  t.append("abc", 3);
  t.append("defg", 4);
  CHECK(t.str() == "defg");
  TailBuffer big;
  const std::string chunk(kOutputTailBytes, 'x');
  big.append(chunk.data(), chunk.size());
  big.append("end", 3);
  CHECK(big.str().size() == kOutputTailBytes);
  CHECK(big.str().substr(big.str().size() - 3) == "end");
}
