#pragma once

#include "unitsynth/common/errors.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace unitsynth::llm {

enum class RoleId { test_generator, bug_fixer, refiner };

std::string_view role_name(RoleId role);
RoleId role_from_name(std::string_view name);

/// A role's system prompt plus a user-message template with `{slot}`
/// placeholders.
struct PromptTemplate {
    std::string system;
    std::string user;

    /// Placeholder names in `user`, in order of first appearance.
    std::vector<std::string> slots() const;
};

/// Shipped defaults; the system prompts are the published agent prompts.
PromptTemplate default_template(RoleId role);

/// Reads `<dir>/<role>.system.txt` and `<dir>/<role>.user.txt`.
PromptTemplate load_template(const std::filesystem::path& dir, RoleId role);

struct Sampling {
    double temperature = 0.2;
    int max_tokens = 2048;
    std::optional<long long> seed;
};

struct ProviderBinding {
    std::string provider = "mock"; // "mock" or "http"
    std::string model = "mock";
};

struct AgentRole {
    RoleId id = RoleId::test_generator;
    PromptTemplate prompt;
    ProviderBinding binding;
    Sampling sampling;

    static AgentRole with_defaults(RoleId id);
};

class TemplateError : public Error {
public:
    TemplateError(const std::string& message, std::string slot)
        : Error(message), slot_(std::move(slot)) {}
    const std::string& slot() const { return slot_; }

private:
    std::string slot_;
};

struct RenderedPrompt {
    std::string system;
    std::string user;

    /// System and user text joined by a blank line.
    std::string text() const;
};

using Slots = std::map<std::string, std::string, std::less<>>;

/// Single-pass substitution: slot values are inserted verbatim and never
/// rescanned. Throws TemplateError naming the first missing slot.
RenderedPrompt render_prompt(const AgentRole& role, const Slots& slots);

} // namespace unitsynth::llm
