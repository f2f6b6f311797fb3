#include <csignal>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "experiment.hpp"
#include "fedbn/errors.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated Bayesian-network training over vertically partitioned data"};
    std::string config;
    std::string mode = "train";
    std::string out = "runs";
    std::string party;
    std::optional<uint64_t> seed;
    app.add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--mode", mode, "what to run")
        ->check(CLI::IsMember({"train", "validate", "party", "commodity", "benchmark"}));
    app.add_option("--out", out, "root directory for run outputs");
    app.add_option("--seed", seed, "overrides the config seed");
    app.add_option("--party", party, "party id to serve in party mode");
    CLI11_PARSE(app, argc, argv);

    std::signal(SIGTERM, on_signal);
    std::signal(SIGINT, on_signal);
    std::signal(SIGPIPE, SIG_IGN);

    try {
        const auto cfg = fedbn::app::load_config(config, seed);
        if (mode == "party") {
            if (party.empty()) throw fedbn::ConfigError("party mode needs --party ID");
            fedbn::app::cmd_party(cfg, party, g_stop);
            return 0;
        }
        if (mode == "commodity") {
            fedbn::app::cmd_commodity(cfg, g_stop);
            return 0;
        }
        fedbn::app::RunOutput result;
        if (mode == "train") result = fedbn::app::cmd_train(cfg, out);
        if (mode == "validate") result = fedbn::app::cmd_validate(cfg, out);
        if (mode == "benchmark") result = fedbn::app::cmd_benchmark(cfg, out);
        std::cout << result.dir.string() << "\n";
        for (const auto& f : result.files) std::cout << "  " << f << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "fedbn: " << e.what() << "\n";
        return 1;
    }
}
