#include "unitsynth/pipeline/cli.hpp"

#include "unitsynth/exec/executor.hpp"
#include "unitsynth/pipeline/pipeline.hpp"

#include <CLI11.hpp>

#include <ostream>

namespace unitsynth::pipeline {

int exit_code_for(std::exception_ptr error) {
    try {
        std::rethrow_exception(error);
    } catch (const llm::BudgetExceeded&) {
        return kExitBudget;
    } catch (const llm::ProviderError&) {
        return kExitProvider;
    } catch (const llm::MockLookupError&) {
        return kExitProvider;
    } catch (const ConfigError&) {
        return kExitConfig;
    } catch (const llm::TemplateError&) {
        return kExitConfig;
    } catch (const exec::StubLookupError&) {
        return kExitConfig;
    } catch (const InputError&) {
        return kExitInput;
    } catch (const IoError&) {
        return kExitInput;
    } catch (...) {
        return kExitInternal;
    }
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Unit-test-guided synthetic code data pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    bool resume = false;
    std::string output_dir;
    int parallelism = 0;
    std::string mock_script;
    std::string stop_after;

    app.add_option("--config", config_path, "Pipeline configuration (JSON)")->required();
    app.add_flag("--resume", resume, "Continue an interrupted run");
    app.add_option("--output-dir", output_dir, "Override the configured output directory");
    app.add_option("--parallelism", parallelism, "Override the configured parallelism")->check(CLI::PositiveNumber);
    app.add_option("--mock-script", mock_script, "Scripted provider replies and executor verdicts");

    // global options may also follow the subcommand
    app.fallthrough();
    std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
    for (Stage s : kAllStages) {
        auto* sub = app.add_subcommand(std::string(stage_name(s)), "Run the " + std::string(stage_name(s)) + " stage");
        stage_cmds.emplace_back(sub, s);
    }
    auto* all = app.add_subcommand("run-all", "Run every stage in order");
    all->add_option("--stop-after", stop_after, "Stop once this stage completes (simulates an interruption)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, e2;
        const int rc = app.exit(e, o, e2);
        out << o.str();
        err << e2.str();
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        Overrides ov;
        if (!output_dir.empty()) {
            ov.output_dir = output_dir;
        }
        if (parallelism > 0) {
            ov.parallelism = parallelism;
        }
        if (!mock_script.empty()) {
            ov.mock_script = mock_script;
        }
        auto cfg = load_config(config_path, ov);
        std::optional<Stage> stop;
        if (!stop_after.empty()) {
            stop = stage_from_name(stop_after);
            if (!stop) {
                throw ConfigError("--stop-after: unknown stage '" + stop_after + "'");
            }
        }
        RunLock lock(cfg.output_dir);
        Pipeline pipeline(std::move(cfg));
        pipeline.set_resume(resume);
        if (all->parsed()) {
            auto manifest = pipeline.run_all({resume, stop});
            if (manifest.is_null()) {
                out << json{{"stopped_after", stop_after}}.dump(2) << "\n";
            } else {
                out << manifest["stages"].dump(2) << "\n";
            }
            return kExitOk;
        }
        for (const auto& [sub, stage] : stage_cmds) {
            if (sub->parsed()) {
                out << pipeline.run_stage(stage).dump(2) << "\n";
                return kExitOk;
            }
        }
        return kExitInternal;
    } catch (...) {
        const auto ep = std::current_exception();
        const int code = exit_code_for(ep);
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
        } catch (...) {
            err << "error: unknown failure\n";
        }
        return code;
    }
}

} // namespace unitsynth::pipeline
