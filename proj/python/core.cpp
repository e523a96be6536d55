#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "predfuzz/cli.hpp"
#include "predfuzz/fuzz_engine.hpp"
#include "predfuzz/report.hpp"
#include "predfuzz/target_sim.hpp"

namespace py = pybind11;
using namespace predfuzz;
using nlohmann::json;

// Structured values cross the boundary as JSON text; the package wraps them.
PYBIND11_MODULE(_core, m)
{
    m.attr("version") = std::string(kVersion);

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("generate_program", [](const std::string& params) {
        return json(generate_program(parse_generation_params(params))).dump();
    });

    m.def("execute", [](const std::string& program, const py::bytes& input) {
        const ProgramSpec p = json::parse(program).get<ProgramSpec>();
        const std::string raw = input;
        const ExecutionResult r = execute(p, std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
        json j;
        j["path_id"] = r.path_id;
        j["executed_blocks"] = r.executed_blocks;
        j["exec_time"] = r.exec_time;
        j["trace_bits"] = r.trace_bits;
        return j.dump();
    });

    m.def("parse_config", [](const std::vector<std::string>& args) {
        const CliOptions o = parse_config(args);
        return json(o.config).dump();
    });

    m.def(
        "run_campaign",
        [](const std::string& config) {
            const CampaignConfig c = json::parse(config).get<CampaignConfig>();
            CampaignReport r;
            {
                py::gil_scoped_release release;
                r = run_campaign(c);
            }
            return json(r).dump();
        },
        "Runs a campaign and returns the report as JSON text.");

    m.def("campaign_csv", [](const std::string& report) {
        return campaign_csv(json::parse(report).get<CampaignReport>());
    });

    m.def("vargha_delaney_a12",
          [](const std::vector<double>& a, const std::vector<double>& b) { return vargha_delaney_a12(a, b); });

    m.def("mann_whitney_u", [](const std::vector<double>& a, const std::vector<double>& b) {
        const MannWhitney r = mann_whitney_u(a, b);
        return py::make_tuple(r.u, r.p_value, r.exact);
    });
}
