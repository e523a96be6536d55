#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "predfuzz/cli.hpp"
#include "predfuzz/fuzz_engine.hpp"
#include "predfuzz/report.hpp"

using namespace predfuzz;

namespace {

int compare_dirs(const std::string& a, const std::string& b)
{
    const auto ra = load_report_set(a);
    const auto rb = load_report_set(b);
    const Comparison c = compare_campaigns(ra, rb);
    std::printf("runs: %zu vs %zu\n", c.n_a, c.n_b);
    std::printf("speedup (mean b / mean a executions-to-reach): %.4f\n", c.speedup);
    std::printf("A12 (a better): %.4f\n", c.a12);
    std::printf("Mann-Whitney U: %.1f  p = %.4g\n", c.u, c.p_value);
    return 0;
}

int run(const CliOptions& opts)
{
    Campaign campaign(opts.config);
    const CampaignReport report = campaign.run([](const CycleReport& c) {
        std::fprintf(stderr, "cycle %zu  execs %llu  paths %zu  AR %.5f  AAPP %.3f  AAPR %.3f%s\n", c.cycle,
                     static_cast<unsigned long long>(c.execs), c.queue_size, c.ar, c.aapp, c.aapr,
                     c.target_reached ? "  target reached" : "");
        for (const auto& w : c.warnings) {
            std::fprintf(stderr, "warning: %s\n", w.c_str());
        }
    });
    if (!opts.out.empty()) {
        emit_report(report, opts.out);
    }
    std::cout << summary_text(report);
    return report.reached ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv)
{
    try {
        const CliOptions opts = parse_config(std::vector<std::string>(argv + 1, argv + argc));
        if (opts.help) {
            std::cout << opts.help_text;
            return 0;
        }
        if (opts.compare) {
            return compare_dirs(opts.compare->first, opts.compare->second);
        }
        if (!opts.emit_program.empty()) {
            save_program(resolve_program(opts.config), opts.emit_program);
            return 0;
        }
        return run(opts);
    } catch (const ConfigError& e) {
        std::cerr << "predfuzz: " << e.what() << "\n";
        return 64;
    } catch (const std::exception& e) {
        std::cerr << "predfuzz: " << e.what() << "\n";
        return 1;
    }
}
