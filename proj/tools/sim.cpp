// Command-line front end: sim reputation|train|evaluate|emit.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "slicing/runtime.hpp"

#include "slicing/config.hpp"
#include "slicing/error.hpp"
#include "slicing/harness.hpp"

namespace {

void print_error(const std::string &kind, const std::string &message) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

} // namespace

int main(int argc, char **argv) {
    slicing::tune_allocator();
    CLI::App app{"Network-slicing resource allocation simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::string mode_name = "constrained";
    bool attacks = false;

    auto add_common = [&](CLI::App *cmd) {
        cmd->add_option("--config", config_path, "Config file (key = value)");
        cmd->add_option("--seed", seed, "Root random seed (overrides config)");
        cmd->add_option("--out", out_dir, "Output directory (overrides config)");
    };
    auto add_mode = [&](CLI::App *cmd) {
        cmd->add_option("--mode", mode_name, "constrained | min-latency | min-dos")
            ->check(CLI::IsMember({"constrained", "min-latency", "min-dos", "min_latency", "min_dos"}));
        cmd->add_flag("--attacks", attacks, "Enable the malicious-miner scenario");
    };

    auto *reputation = app.add_subcommand("reputation", "Reputation tracking traces");
    add_common(reputation);
    auto *train = app.add_subcommand("train", "Train an allocator");
    add_common(train);
    add_mode(train);
    auto *evaluate = app.add_subcommand("evaluate", "Greedy rollouts of a trained allocator");
    add_common(evaluate);
    add_mode(evaluate);
    auto *emit = app.add_subcommand("emit", "Write plot-ready figure CSVs");
    add_common(emit);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        print_error("usage", e.what());
        return 2;
    }

    try {
        slicing::ExperimentConfig cfg;
        if (!config_path.empty())
            cfg = slicing::load_config(config_path);
        if (seed)
            cfg.seed = *seed;
        if (out_dir)
            cfg.output_dir = *out_dir;
        cfg.validate();
        const slicing::Mode mode = slicing::mode_from_string(mode_name);

        if (reputation->parsed()) {
            const auto traces = slicing::run_reputation_experiment(cfg);
            for (const auto &[name, trace] : traces)
                std::cout << name << ": final reputation " << trace.back() << "\n";
        } else if (train->parsed()) {
            const auto result = slicing::run_training(cfg, mode, attacks);
            std::cout << result.summary.to_json().dump() << "\n";
        } else if (evaluate->parsed()) {
            const auto records = slicing::run_evaluation(cfg, mode, attacks);
            std::cout << slicing::summarize(records, mode, attacks, cfg.summary_window).to_json().dump()
                      << "\n";
        } else if (emit->parsed()) {
            for (const auto &path : slicing::emit_figure_data(cfg))
                std::cout << path.string() << "\n";
        }
    } catch (const slicing::ConfigError &e) {
        print_error("config", e.what());
        return 3;
    } catch (const slicing::MissingRunError &e) {
        print_error("missing_run", e.what());
        return 4;
    } catch (const slicing::NumericError &e) {
        print_error("numeric", e.what());
        return 5;
    } catch (const slicing::EmptyCommittee &e) {
        print_error("empty_committee", e.what());
        return 6;
    } catch (const std::exception &e) {
        print_error("internal", e.what());
        return 1;
    }
    return 0;
}
