#include "predfuzz/cli.hpp"

#include <algorithm>
#include <fstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace predfuzz {

CampaignConfig load_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file: " + path);
    }
    try {
        return nlohmann::json::parse(in).get<CampaignConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

CliOptions parse_config(const std::vector<std::string>& args)
{
    CLI::App app{"Predictive directed greybox fuzzer on synthetic programs", "predfuzz"};
    app.allow_extras(false);

    CliOptions opts;
    CampaignConfig flags;
    std::string ablate;
    std::vector<std::string> compare;
    std::uint32_t target = 0;

    app.add_option("--config", opts.config_file, "JSON config file; flags override its values");
    auto* program = app.add_option("--program", flags.program_file, "program JSON file");
    auto* generate = app.add_option("--generate", flags.generate, "generation params, e.g. blocks=64,gates=2,hardness=1,seed=7,len=16");
    program->excludes(generate);
    auto* target_opt = app.add_option("--target", target, "target block id");
    auto* budget = app.add_option("--budget-execs", flags.budget_execs, "execution budget");
    auto* cycle = app.add_option("--cycle-execs", flags.cycle_execs, "executions per fuzzing cycle");
    auto* gamma = app.add_option("--gamma", flags.gamma, "discount factor in (0,1]");
    auto* k = app.add_option("--k", flags.k, "rollout length");
    auto* ensemble = app.add_option("--ensemble", flags.ensemble, "transition model ensemble size");
    auto* seed = app.add_option("--seed", flags.seed, "rng seed");
    auto* ablate_opt = app.add_option("--ablate", ablate, "vee, rlf, fo (comma list) or all");
    auto* epochs = app.add_option("--max-epochs", flags.max_epochs, "transition model epochs per cycle");
    auto* rlf_steps = app.add_option("--rlf-steps", flags.rlf_steps, "policy update steps per cycle");
    auto* lr = app.add_option("--lr", flags.lr, "policy learning rate");
    app.add_option("--out", opts.out, "output directory");
    app.add_option("--compare", compare, "compare two campaign directories")->expected(2);
    app.add_option("--emit-program", opts.emit_program, "write the resolved program JSON and exit");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        opts.help = true;
        opts.help_text = app.help();
        return opts;
    } catch (const CLI::ParseError& e) {
        throw ConfigError(e.what());
    }

    CampaignConfig c = opts.config_file.empty() ? CampaignConfig{} : load_config_file(opts.config_file);
    if (program->count() > 0) {
        c.program_file = flags.program_file;
    }
    if (generate->count() > 0) {
        c.generate = flags.generate;
        c.program_file.clear();
    }
    if (target_opt->count() > 0) {
        c.target = target;
    }
    if (budget->count() > 0) {
        c.budget_execs = flags.budget_execs;
    }
    if (cycle->count() > 0) {
        c.cycle_execs = flags.cycle_execs;
    }
    if (gamma->count() > 0) {
        c.gamma = flags.gamma;
    }
    if (k->count() > 0) {
        c.k = flags.k;
    }
    if (ensemble->count() > 0) {
        c.ensemble = flags.ensemble;
    }
    if (seed->count() > 0) {
        c.seed = flags.seed;
    }
    if (epochs->count() > 0) {
        c.max_epochs = flags.max_epochs;
    }
    if (rlf_steps->count() > 0) {
        c.rlf_steps = flags.rlf_steps;
    }
    if (lr->count() > 0) {
        c.lr = flags.lr;
    }
    if (ablate_opt->count() > 0) {
        try {
            c.ablate = parse_ablation(ablate);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (!compare.empty()) {
        opts.compare = std::make_pair(compare[0], compare[1]);
    }
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    opts.config = std::move(c);
    return opts;
}

}  // namespace predfuzz
