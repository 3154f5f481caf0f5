#include "dispel/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

namespace {

const std::map<std::string, std::string> kDescriptions = {
    {"gen-data", "generate the synthetic benchmark into out.dir"},
    {"train-erm", "train the base encoder/predictor on data.dir"},
    {"train-emg", "train a mask generator against the frozen model in base.dir"},
    {"eval", "evaluate with eval.mode = none | global | emg"},
    {"sweep-global", "sweep the global mask percentage"},
    {"bound-check", "compute generalization-error bound terms"},
    {"export-embeddings", "write embeddings (and optionally masks) as CSV"},
    {"pipeline", "gen-data, train-erm, train-emg and eval over pipeline.train_seeds"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Embedding mask generator experiments on frozen encoder/predictor models"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    std::size_t jobs = 1;

    for (const auto& name : dispel::command_names()) {
        const auto it = kDescriptions.find(name);
        CLI::App* sub = app.add_subcommand(name, it == kDescriptions.end() ? "" : it->second);
        sub->add_option("-c,--config", config_path, "flat key = value config file (must set seed)")->required();
        sub->add_option("--set", overrides, "override one key, e.g. --set train.max_epochs=50");
        sub->add_option("--jobs", jobs, "worker threads for permutation importance")->check(CLI::PositiveNumber);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : dispel::kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    dispel::CommandContext ctx;
    ctx.jobs = jobs;
    try {
        ctx.config = dispel::RunConfig::load(config_path);
        for (const auto& o : overrides) ctx.config.set(o);
    } catch (const dispel::Error& e) {
        const int code = dispel::exit_code_for(e);
        std::cerr << dispel::error_line(code, e.kind(), e.what()) << '\n';
        return code;
    }
    return dispel::run_command_guarded(command, ctx, std::cerr);
}
