#pragma once

#include <stdexcept>
#include <string>

namespace mlagent {

/// Base of every error the library throws. Loop-level failures that the
/// orchestrator records as failed nodes are returned as data instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingField : public Error {
 public:
  explicit MissingField(std::string name)
      : Error("missing field: " + name), field_(std::move(name)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class MalformedDocument : public Error {
 public:
  MalformedDocument(const std::string& why, std::string original)
      : Error("malformed document: " + why), original_(std::move(original)) {}
  const std::string& original() const noexcept { return original_; }

 private:
  std::string original_;
};

class MetricMismatch : public Error {
 public:
  using Error::Error;
};

class UnknownBranch : public Error {
 public:
  explicit UnknownBranch(int branch)
      : Error("unknown branch " + std::to_string(branch)), branch_(branch) {}
  int branch() const noexcept { return branch_; }

 private:
  int branch_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

class ZeroVector : public Error {
 public:
  ZeroVector() : Error("zero-length embedding vector") {}
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class BackendTimeout : public BackendError {
 public:
  using BackendError::BackendError;
};

class RateLimited : public BackendError {
 public:
  using BackendError::BackendError;
};

class FixtureExhausted : public BackendError {
 public:
  using BackendError::BackendError;
};

class UnparseableResponse : public Error {
 public:
  UnparseableResponse(const std::string& step, std::string response)
      : Error("unparseable response for step '" + step + "'"), response_(std::move(response)) {}
  const std::string& response() const noexcept { return response_; }

 private:
  std::string response_;
};

class ZeroWeights : public Error {
 public:
  ZeroWeights() : Error("all aggregation weights are zero") {}
};

class EmptyText : public Error {
 public:
  EmptyText() : Error("cannot embed empty text") {}
};

class SandboxSpawnFailure : public Error {
 public:
  using Error::Error;
};

/// Raised by parse_debug_block; `kind()` distinguishes the three contract violations.
class DebugBlockError : public Error {
 public:
  enum class Kind { BlockMissing, FieldMissing, NonNumericValue };
  DebugBlockError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class SourceMissing : public Error {
 public:
  using Error::Error;
};

class WriteFailure : public Error {
 public:
  using Error::Error;
};

class GraderCrash : public Error {
 public:
  using Error::Error;
};

class MalformedGradeOutput : public Error {
 public:
  MalformedGradeOutput(const std::string& why, std::string output)
      : Error("malformed grade output: " + why), output_(std::move(output)) {}
  const std::string& output() const noexcept { return output_; }

 private:
  std::string output_;
};

class AllCandidatesFailed : public Error {
 public:
  AllCandidatesFailed() : Error("no candidate produced a valid graded submission") {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NoViableParent : public Error {
 public:
  explicit NoViableParent(int branch)
      : Error("branch " + std::to_string(branch) + " has no executed node to build on"), branch_(branch) {}
  int branch() const noexcept { return branch_; }

 private:
  int branch_;
};

class CorruptTrace : public Error {
 public:
  CorruptTrace(const std::string& why, long last_valid_loop)
      : Error("corrupt trace: " + why + " (last valid loop " + std::to_string(last_valid_loop) + ")"),
        last_valid_loop_(last_valid_loop) {}
  long last_valid_loop() const noexcept { return last_valid_loop_; }

 private:
  long last_valid_loop_;
};

}  // namespace mlagent
