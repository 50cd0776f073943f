#include "mlagent/prompts.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mlagent/errors.hpp"
#include "mlagent/structured_response.hpp"

namespace mlagent {

std::string render_template(std::string_view tmpl, const PromptVars& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (true) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const std::string name = trim(tmpl.substr(open + 2, close - open - 2));
    auto it = vars.find(name);
    if (it == vars.end()) throw InvalidArgument(fmt::format("prompt placeholder '{}' has no value", name));
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

PromptLibrary::PromptLibrary(std::optional<std::filesystem::path> override_dir) {
  for (const auto& [step, text] : builtin_prompt_templates()) templates_.emplace(step, text);
  if (!override_dir) return;
  if (!std::filesystem::is_directory(*override_dir)) {
    throw ConfigError(fmt::format("prompt directory {} not found", override_dir->string()));
  }
  for (const auto& entry : std::filesystem::directory_iterator(*override_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    templates_[entry.path().stem().string()] = ss.str();
  }
}

const std::string& PromptLibrary::raw(std::string_view step) const {
  if (templates_.empty()) {
    // Default-constructed library: fall back to the built-ins directly.
    const auto& builtins = builtin_prompt_templates();
    auto it = builtins.find(std::string(step));
    if (it == builtins.end()) throw InvalidArgument(fmt::format("no prompt template for step '{}'", step));
    return it->second;
  }
  auto it = templates_.find(step);
  if (it == templates_.end()) throw InvalidArgument(fmt::format("no prompt template for step '{}'", step));
  return it->second;
}

std::string PromptLibrary::render(std::string_view step, const PromptVars& vars) const {
  return render_template(raw(step), vars);
}

}  // namespace mlagent
