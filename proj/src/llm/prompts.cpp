#include "unitsynth/llm/prompts.hpp"

#include "unitsynth/common/text.hpp"

#include <algorithm>
#include <cctype>

namespace unitsynth::llm {

namespace detail {
extern const char* const kTestGeneratorSystem;
extern const char* const kTestGeneratorUser;
extern const char* const kBugFixerSystem;
extern const char* const kBugFixerUser;
extern const char* const kRefinerSystem;
extern const char* const kRefinerUser;
} // namespace detail

std::string_view role_name(RoleId role) {
    switch (role) {
    case RoleId::test_generator: return "test_generator";
    case RoleId::bug_fixer: return "bug_fixer";
    case RoleId::refiner: return "refiner";
    }
    return "unknown";
}

RoleId role_from_name(std::string_view name) {
    for (auto r : {RoleId::test_generator, RoleId::bug_fixer, RoleId::refiner}) {
        if (role_name(r) == name) {
            return r;
        }
    }
    throw ConfigError("unknown agent role: " + std::string(name));
}

namespace {

struct Placeholder {
    size_t begin;
    size_t end; // one past '}'
    std::string_view name;
};

std::vector<Placeholder> placeholders(std::string_view tmpl) {
    std::vector<Placeholder> out;
    size_t i = 0;
    while ((i = tmpl.find('{', i)) != std::string_view::npos) {
        size_t j = i + 1;
        while (j < tmpl.size() &&
               (std::isalnum(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '_')) {
            ++j;
        }
        if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1 &&
            !std::isdigit(static_cast<unsigned char>(tmpl[i + 1]))) {
            out.push_back({i, j + 1, tmpl.substr(i + 1, j - i - 1)});
            i = j + 1;
        } else {
            ++i;
        }
    }
    return out;
}

} // namespace

std::vector<std::string> PromptTemplate::slots() const {
    std::vector<std::string> out;
    for (const auto& p : placeholders(user)) {
        if (std::find(out.begin(), out.end(), p.name) == out.end()) {
            out.emplace_back(p.name);
        }
    }
    return out;
}

PromptTemplate default_template(RoleId role) {
    switch (role) {
    case RoleId::test_generator: return {detail::kTestGeneratorSystem, detail::kTestGeneratorUser};
    case RoleId::bug_fixer: return {detail::kBugFixerSystem, detail::kBugFixerUser};
    case RoleId::refiner: return {detail::kRefinerSystem, detail::kRefinerUser};
    }
    throw ConfigError("unknown agent role");
}

PromptTemplate load_template(const std::filesystem::path& dir, RoleId role) {
    const auto base = std::string(role_name(role));
    return {read_file(dir / (base + ".system.txt")), read_file(dir / (base + ".user.txt"))};
}

AgentRole AgentRole::with_defaults(RoleId id) {
    AgentRole r;
    r.id = id;
    r.prompt = default_template(id);
    return r;
}

std::string RenderedPrompt::text() const { return system + "\n\n" + user; }

RenderedPrompt render_prompt(const AgentRole& role, const Slots& slots) {
    const std::string_view tmpl = role.prompt.user;
    std::string out;
    out.reserve(tmpl.size());
    size_t last = 0;
    for (const auto& p : placeholders(tmpl)) {
        const auto it = slots.find(p.name);
        if (it == slots.end()) {
            throw TemplateError("template for role " + std::string(role_name(role.id)) +
                                    " requires slot '" + std::string(p.name) + "'",
                                std::string(p.name));
        }
        out.append(tmpl.substr(last, p.begin - last));
        out.append(it->second);
        last = p.end;
    }
    out.append(tmpl.substr(last));
    return {role.prompt.system, std::move(out)};
}

} // namespace unitsynth::llm
