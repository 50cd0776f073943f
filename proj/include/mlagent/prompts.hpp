#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace mlagent {

/// Templates compiled in from prompts/<step>.txt.
const std::map<std::string, std::string>& builtin_prompt_templates();

using PromptVars = std::map<std::string, std::string>;

/// Substitutes every `{{ name }}` placeholder. Throws InvalidArgument for a
/// placeholder with no value.
std::string render_template(std::string_view tmpl, const PromptVars& vars);

/// Step-addressable prompt templates: built-ins, overridden per step by
/// `<override_dir>/<step>.txt` when that file exists.
class PromptLibrary {
 public:
  PromptLibrary() = default;
  explicit PromptLibrary(std::optional<std::filesystem::path> override_dir);

  const std::string& raw(std::string_view step) const;
  std::string render(std::string_view step, const PromptVars& vars) const;

 private:
  std::map<std::string, std::string, std::less<>> templates_;
};

}  // namespace mlagent
