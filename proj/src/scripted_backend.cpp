#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mlagent/backend.hpp"
#include "mlagent/errors.hpp"

namespace mlagent {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> read_sequence(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::string> out;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out.push_back(ss.str());
  }
  return out;
}

}  // namespace

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_directory(const fs::path& root) {
  if (!fs::is_directory(root)) throw ConfigError(fmt::format("fixture directory {} not found", root.string()));
  auto backend = std::make_unique<ScriptedBackend>();
  for (const auto& step_dir : fs::directory_iterator(root)) {
    if (!step_dir.is_directory()) continue;
    const std::string step = step_dir.path().filename().string();
    backend->add(step, read_sequence(step_dir.path()));
    for (const auto& sub : fs::directory_iterator(step_dir.path())) {
      const std::string name = sub.path().filename().string();
      if (sub.is_directory() && name.rfind("branch", 0) == 0) {
        backend->add_for_stream(step, std::stoi(name.substr(6)), read_sequence(sub.path()));
      }
    }
  }
  return backend;
}

void ScriptedBackend::add(std::string step, std::vector<std::string> responses) {
  std::lock_guard lock(mutex_);
  shared_[std::move(step)] = std::move(responses);
}

void ScriptedBackend::add_for_stream(std::string step, int stream, std::vector<std::string> responses) {
  std::lock_guard lock(mutex_);
  per_stream_[{std::move(step), stream}] = std::move(responses);
}

const std::vector<std::string>* ScriptedBackend::sequence(const std::string& step, int stream) const {
  if (auto it = per_stream_.find({step, stream}); it != per_stream_.end()) return &it->second;
  if (auto it = shared_.find(step); it != shared_.end()) return &it->second;
  return nullptr;
}

PromptResponse ScriptedBackend::complete(const PromptRequest& request) {
  std::lock_guard lock(mutex_);
  const auto* seq = sequence(request.step_name, request.stream);
  std::size_t& cursor = cursors_[{request.step_name, request.stream}];
  if (!seq || cursor >= seq->size()) {
    throw FixtureExhausted(fmt::format("no fixture left for step '{}' (stream {}, call {})", request.step_name,
                                       request.stream, cursor));
  }
  PromptResponse resp;
  resp.text = (*seq)[cursor++];
  resp.backend_id = id();
  resp.usage.prompt_tokens = static_cast<long>(request.rendered_prompt.size() / 4);
  resp.usage.completion_tokens = static_cast<long>(resp.text.size() / 4);
  return resp;
}

std::size_t ScriptedBackend::cursor(const std::string& step, int stream) const {
  std::lock_guard lock(mutex_);
  auto it = cursors_.find({step, stream});
  return it == cursors_.end() ? 0 : it->second;
}

void ScriptedBackend::set_cursor(const std::string& step, int stream, std::size_t index) {
  std::lock_guard lock(mutex_);
  cursors_[{step, stream}] = index;
}

}  // namespace mlagent
