#include "predfuzz/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace predfuzz {

namespace fs = std::filesystem;

namespace {

std::string num(double x)
{
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc{}) {
        throw std::runtime_error("number formatting failed");
    }
    return std::string(buf, end);
}

std::string num(std::uint64_t x)
{
    return std::to_string(x);
}

void write_file(const fs::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << content;
    out.flush();
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

double mean(std::span<const double> xs)
{
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

bool operator==(const CycleReport& a, const CycleReport& b)
{
    return a.cycle == b.cycle && a.execs == b.execs && a.transitions == b.transitions &&
           a.predicted == b.predicted && a.vee_loss == b.vee_loss && a.j_v == b.j_v && a.j_q == b.j_q &&
           a.j_pi == b.j_pi && a.aapp == b.aapp && a.aapr == b.aapr && a.ar == b.ar &&
           a.global_efficiency == b.global_efficiency && a.new_paths == b.new_paths &&
           a.queue_size == b.queue_size && a.rseed == b.rseed && a.prseed == b.prseed &&
           a.target_reached == b.target_reached && a.reached_at == b.reached_at && a.warnings == b.warnings &&
           a.gbest_eff == b.gbest_eff && a.gbest == b.gbest && a.mean_position == b.mean_position;
}

bool operator==(const CampaignReport& a, const CampaignReport& b)
{
    return a.config == b.config && a.version == b.version && a.seed == b.seed && a.budget_execs == b.budget_execs &&
           a.reached == b.reached && a.ttr_execs == b.ttr_execs && a.ttr_seconds == b.ttr_seconds &&
           a.total_execs == b.total_execs && a.cycles == b.cycles && a.final_queue == b.final_queue &&
           a.final_favored == b.final_favored && a.final_rseed == b.final_rseed &&
           a.final_prseed == b.final_prseed;
}

void to_json(nlohmann::json& j, const CycleReport& c)
{
    j = nlohmann::json{
        {"cycle", c.cycle},
        {"execs", c.execs},
        {"transitions", c.transitions},
        {"predicted", c.predicted},
        {"vee_loss", c.vee_loss},
        {"j_v", c.j_v},
        {"j_q", c.j_q},
        {"j_pi", c.j_pi},
        {"aapp", c.aapp},
        {"aapr", c.aapr},
        {"ar", c.ar},
        {"global_efficiency", c.global_efficiency},
        {"new_paths", c.new_paths},
        {"queue_size", c.queue_size},
        {"rseed", c.rseed},
        {"prseed", c.prseed},
        {"target_reached", c.target_reached},
        {"reached_at", c.reached_at ? nlohmann::json(*c.reached_at) : nlohmann::json(nullptr)},
        {"warnings", c.warnings},
        {"gbest_eff", c.gbest_eff},
        {"gbest", c.gbest},
        {"mean_position", c.mean_position},
    };
}

void from_json(const nlohmann::json& j, CycleReport& c)
{
    j.at("cycle").get_to(c.cycle);
    j.at("execs").get_to(c.execs);
    j.at("transitions").get_to(c.transitions);
    j.at("predicted").get_to(c.predicted);
    j.at("vee_loss").get_to(c.vee_loss);
    j.at("j_v").get_to(c.j_v);
    j.at("j_q").get_to(c.j_q);
    j.at("j_pi").get_to(c.j_pi);
    j.at("aapp").get_to(c.aapp);
    j.at("aapr").get_to(c.aapr);
    j.at("ar").get_to(c.ar);
    j.at("global_efficiency").get_to(c.global_efficiency);
    j.at("new_paths").get_to(c.new_paths);
    j.at("queue_size").get_to(c.queue_size);
    j.at("rseed").get_to(c.rseed);
    j.at("prseed").get_to(c.prseed);
    j.at("target_reached").get_to(c.target_reached);
    c.reached_at = j.at("reached_at").is_null() ? std::nullopt
                                                 : std::optional<std::uint64_t>(j.at("reached_at").get<std::uint64_t>());
    j.at("warnings").get_to(c.warnings);
    j.at("gbest_eff").get_to(c.gbest_eff);
    j.at("gbest").get_to(c.gbest);
    j.at("mean_position").get_to(c.mean_position);
}

void to_json(nlohmann::json& j, const CampaignReport& r)
{
    j = nlohmann::json{
        {"format", "predfuzz-campaign"},
        {"version", r.version},
        {"config", r.config},
        {"seed", r.seed},
        {"budget_execs", r.budget_execs},
        {"reached", r.reached},
        {"ttr_execs", r.ttr_execs ? nlohmann::json(*r.ttr_execs) : nlohmann::json(nullptr)},
        {"ttr_seconds", r.ttr_seconds ? nlohmann::json(*r.ttr_seconds) : nlohmann::json(nullptr)},
        {"total_execs", r.total_execs},
        {"cycles", r.cycles},
        {"final_queue", r.final_queue},
        {"final_favored", r.final_favored},
        {"final_rseed", r.final_rseed},
        {"final_prseed", r.final_prseed},
    };
}

void from_json(const nlohmann::json& j, CampaignReport& r)
{
    if (j.value("format", "") != "predfuzz-campaign") {
        throw std::invalid_argument("not a campaign summary");
    }
    j.at("version").get_to(r.version);
    r.config = j.at("config");
    j.at("seed").get_to(r.seed);
    j.at("budget_execs").get_to(r.budget_execs);
    j.at("reached").get_to(r.reached);
    r.ttr_execs = j.at("ttr_execs").is_null() ? std::nullopt
                                               : std::optional<std::uint64_t>(j.at("ttr_execs").get<std::uint64_t>());
    r.ttr_seconds = j.at("ttr_seconds").is_null() ? std::nullopt
                                                   : std::optional<double>(j.at("ttr_seconds").get<double>());
    j.at("total_execs").get_to(r.total_execs);
    j.at("cycles").get_to(r.cycles);
    j.at("final_queue").get_to(r.final_queue);
    j.at("final_favored").get_to(r.final_favored);
    j.at("final_rseed").get_to(r.final_rseed);
    j.at("final_prseed").get_to(r.final_prseed);
}

std::string campaign_csv(const CampaignReport& report)
{
    std::string out =
        "cycle,execs,transitions,predicted,vee_loss,j_v,j_q,j_pi,aapp,aapr,ar,global_efficiency,new_paths,"
        "queue_size,rseed,prseed,target_reached,ttr_execs\n";
    for (const CycleReport& c : report.cycles) {
        out += num(c.cycle) + ',' + num(c.execs) + ',' + num(c.transitions) + ',' + num(c.predicted) + ',' +
               num(c.vee_loss) + ',' + num(c.j_v) + ',' + num(c.j_q) + ',' + num(c.j_pi) + ',' + num(c.aapp) + ',' +
               num(c.aapr) + ',' + num(c.ar) + ',' + num(c.global_efficiency) + ',' + num(c.new_paths) + ',' +
               num(c.queue_size) + ',' + num(c.rseed) + ',' + num(c.prseed) + ',' + (c.target_reached ? "1" : "0") +
               ',' + (c.reached_at ? num(*c.reached_at) : std::string(kTimeoutMark)) + '\n';
    }
    return out;
}

std::string swarm_csv(const CampaignReport& report)
{
    std::string out = "cycle,gbest_eff";
    for (const char* prefix : {"gbest_", "mean_"}) {
        for (std::size_t i = 0; i < kActionDim; ++i) {
            out += ',' + std::string(prefix) + std::to_string(i);
        }
    }
    out += '\n';
    for (const CycleReport& c : report.cycles) {
        out += num(c.cycle) + ',' + num(c.gbest_eff);
        for (double x : c.gbest) {
            out += ',' + num(x);
        }
        for (double x : c.mean_position) {
            out += ',' + num(x);
        }
        out += '\n';
    }
    return out;
}

std::string summary_text(const CampaignReport& report)
{
    std::ostringstream s;
    s << "predfuzz " << report.version << "\n";
    s << "seed: " << report.seed << "\n";
    s << "budget: " << report.budget_execs << " executions\n";
    s << "executions: " << report.total_execs << "\n";
    s << "cycles: " << report.cycles.size() << "\n";
    if (report.reached) {
        s << "TTR: " << *report.ttr_execs << " executions";
        if (report.ttr_seconds) {
            s << ", " << num(*report.ttr_seconds) << " s";
        }
        s << "\n";
    } else {
        s << "TTR: " << kTimeoutMark << "\n";
    }
    s << "queue: " << report.final_queue << " paths, " << report.final_favored << " favored\n";
    s << "reachable seeds: " << report.final_rseed << " (" << num(report.final_prseed) << ")\n";
    if (!report.cycles.empty()) {
        double ar = 0.0;
        for (const auto& c : report.cycles) {
            ar += c.ar;
        }
        s << "mean AR: " << num(ar / static_cast<double>(report.cycles.size())) << "\n";
        s << "last AAPP/AAPR: " << num(report.cycles.back().aapp) << " / " << num(report.cycles.back().aapr) << "\n";
    }
    return s.str();
}

void emit_report(const CampaignReport& report, const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    }
    write_file(dir / "campaign.csv", campaign_csv(report));
    write_file(dir / "swarm.csv", swarm_csv(report));
    write_file(dir / "summary.txt", summary_text(report));
    write_file(dir / "summary.json", nlohmann::json(report).dump(2) + "\n");
}

CampaignReport load_report(const fs::path& dir)
{
    const fs::path path = dir / "summary.json";
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    try {
        return nlohmann::json::parse(in).get<CampaignReport>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

std::vector<CampaignReport> load_report_set(const fs::path& dir)
{
    if (fs::exists(dir / "summary.json")) {
        return {load_report(dir)};
    }
    if (!fs::is_directory(dir)) {
        throw std::runtime_error("not a directory: " + dir.string());
    }
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory() && fs::exists(e.path() / "summary.json")) {
            subdirs.push_back(e.path());
        }
    }
    std::sort(subdirs.begin(), subdirs.end());
    std::vector<CampaignReport> out;
    for (const auto& d : subdirs) {
        out.push_back(load_report(d));
    }
    return out;
}

double executions_to_reach(const CampaignReport& report)
{
    if (report.ttr_execs) {
        return static_cast<double>(*report.ttr_execs);
    }
    return kTimeoutFactor * static_cast<double>(report.budget_execs);
}

double vargha_delaney_a12(std::span<const double> a, std::span<const double> b)
{
    if (a.empty() || b.empty()) {
        throw std::invalid_argument("A12 needs two non-empty samples");
    }
    double wins = 0.0;
    for (double x : a) {
        for (double y : b) {
            wins += x < y ? 1.0 : (x == y ? 0.5 : 0.0);
        }
    }
    return wins / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

MannWhitney mann_whitney_u(std::span<const double> a, std::span<const double> b)
{
    if (a.empty() || b.empty()) {
        throw std::invalid_argument("U test needs two non-empty samples");
    }
    const std::size_t n1 = a.size();
    const std::size_t n2 = b.size();
    MannWhitney r;
    for (double x : a) {
        for (double y : b) {
            r.u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
        }
    }

    std::vector<double> all(a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    std::map<double, std::size_t> counts;
    for (double x : all) {
        ++counts[x];
    }
    const bool ties = counts.size() < all.size();

    if (!ties && n1 <= 20 && n2 <= 20) {
        // f[i][j][u]: orderings of i a-values and j b-values with statistic u.
        const std::size_t umax = n1 * n2;
        std::vector<std::vector<std::vector<double>>> f(
            n1 + 1, std::vector<std::vector<double>>(n2 + 1, std::vector<double>(umax + 1, 0.0)));
        for (std::size_t i = 0; i <= n1; ++i) {
            for (std::size_t j = 0; j <= n2; ++j) {
                if (i == 0 || j == 0) {
                    f[i][j][0] = 1.0;
                    continue;
                }
                for (std::size_t u = 0; u <= i * j; ++u) {
                    // The largest value belongs to a (beats all j b-values) or to b.
                    const double from_a = u >= j ? f[i - 1][j][u - j] : 0.0;
                    f[i][j][u] = from_a + f[i][j - 1][u];
                }
            }
        }
        const auto& dist = f[n1][n2];
        const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
        const auto u = static_cast<std::size_t>(std::llround(r.u));
        double lower = 0.0;
        double upper = 0.0;
        for (std::size_t k = 0; k <= umax; ++k) {
            if (k <= u) {
                lower += dist[k];
            }
            if (k >= u) {
                upper += dist[k];
            }
        }
        r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / total);
        r.exact = true;
        return r;
    }

    const double n = static_cast<double>(n1 + n2);
    double tie_term = 0.0;
    for (const auto& [_, t] : counts) {
        const double td = static_cast<double>(t);
        tie_term += td * td * td - td;
    }
    const double prod = static_cast<double>(n1) * static_cast<double>(n2);
    const double var = prod / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (!(var > 0.0)) {
        r.p_value = 1.0;
        return r;
    }
    const double z = std::max(0.0, std::abs(r.u - prod / 2.0) - 0.5) / std::sqrt(var);
    r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return r;
}

Comparison compare_samples(std::span<const double> a, std::span<const double> b)
{
    if (a.empty() || b.empty()) {
        throw std::invalid_argument("comparison needs two non-empty samples");
    }
    Comparison c;
    c.n_a = a.size();
    c.n_b = b.size();
    const double ma = mean(a);
    c.speedup = ma > 0.0 ? mean(b) / ma : 0.0;
    c.a12 = vargha_delaney_a12(a, b);
    const MannWhitney mw = mann_whitney_u(a, b);
    c.u = mw.u;
    c.p_value = mw.p_value;
    return c;
}

Comparison compare_campaigns(std::span<const CampaignReport> a, std::span<const CampaignReport> b)
{
    if (a.empty() || b.empty()) {
        throw std::invalid_argument("comparison needs two non-empty report sets");
    }
    if (a.size() < 3 || b.size() < 3) {
        throw std::invalid_argument("comparison needs at least three repeats per side");
    }
    std::vector<double> xa;
    std::vector<double> xb;
    for (const auto& r : a) {
        xa.push_back(executions_to_reach(r));
    }
    for (const auto& r : b) {
        xb.push_back(executions_to_reach(r));
    }
    return compare_samples(xa, xb);
}

}  // namespace predfuzz
