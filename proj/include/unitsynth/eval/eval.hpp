#pragma once

#include "unitsynth/improve/improve.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace unitsynth::eval {

struct EvalItem {
    std::string item_id;
    std::string canonical_solution;
    std::vector<std::string> imports;
};

/// Line-delimited `{id, imports, solution}`; `imports` is a list of lines or
/// one string. Throws InputError unless every solution parses and defines a
/// top-level function.
std::vector<EvalItem> read_eval_items(const std::filesystem::path& path);

/// Name of the first top-level function of the solution.
std::string solution_function_name(const EvalItem& item);

/// Imports, a blank gap and the solution, as one module.
std::string item_source(const EvalItem& item);

enum class ItemStatus { pass, fail, rejected, provider_error, excluded };

std::string_view item_status_name(ItemStatus s);

struct ItemResult {
    std::string item_id;
    ItemStatus status = ItemStatus::fail;
    std::optional<double> coverage;
    std::string reason;
};

struct EvalReport {
    size_t item_count = 0;
    size_t evaluated = 0; // item_count minus environment-excluded items
    size_t passes = 0;
    std::optional<double> accuracy;      // none when nothing was evaluated
    std::optional<double> mean_coverage; // none when no evaluated item reported coverage
    std::vector<ItemResult> per_item;    // input order
    std::vector<std::string> excluded;

    bool no_data() const { return !accuracy.has_value(); }
};

/// accuracy = passes / evaluated; rejected suites and provider failures
/// count as failures. Items whose run reports import_missing are
/// environment-excluded and leave the denominator.
EvalReport aggregate(std::vector<ItemResult> per_item);

json to_json(const EvalReport& r);

/// Generates a suite per item with the test-generator role and runs it
/// against the untouched canonical solution with coverage on.
EvalReport evaluate_generator(const std::vector<EvalItem>& items, llm::Gateway& gateway, const llm::AgentRole& role,
                              exec::Orchestrator& orchestrator, int parallelism);

} // namespace unitsynth::eval
