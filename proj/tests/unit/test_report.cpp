#include <doctest.h>

#include <algorithm>
#include <clocale>
#include <filesystem>
#include <sstream>

#include "predfuzz/report.hpp"

using namespace predfuzz;
namespace fs = std::filesystem;

namespace {

CampaignReport sample_report(bool reached)
{
    CampaignReport r;
    r.config = nlohmann::json{{"seed", 3}};
    r.version = kVersion;
    r.seed = 3;
    r.budget_execs = 60000;
    for (std::size_t i = 0; i < 3; ++i) {
        CycleReport c;
        c.cycle = i;
        c.execs = 20000 * (i + 1);
        c.transitions = 19000 + i;
        c.vee_loss = -12.25 + 0.1 * static_cast<double>(i);
        c.j_v = 1e-7;
        c.aapp = 0.8125;
        c.aapr = 1.0 / 3.0;
        c.ar = -0.0015;
        c.global_efficiency = 0.001;
        c.queue_size = 10 + i;
        c.rseed = 4;
        c.prseed = 0.4;
        c.gbest[kSeIndex] = 32.5;
        c.mean_position[kSsIndex] = 0.1;
        if (reached && i == 2) {
            c.target_reached = true;
            c.reached_at = 45678;
        }
        if (i == 1) {
            c.warnings.push_back("policy networks diverged; kept last good weights");
        }
        r.cycles.push_back(c);
    }
    r.reached = reached;
    if (reached) {
        r.ttr_execs = 45678;
        r.ttr_seconds = 1.5;
    }
    r.total_execs = reached ? 45678 : 60000;
    r.final_queue = 12;
    r.final_favored = 3;
    r.final_rseed = 4;
    r.final_prseed = 4.0 / 12.0;
    return r;
}

std::vector<std::string> lines_of(const std::string& s)
{
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string line;
    while (std::getline(in, line)) {
        out.push_back(line);
    }
    return out;
}

// Two-sided exact p by enumerating every split of the pooled ranks.
double brute_force_p(const std::vector<double>& a, const std::vector<double>& b)
{
    std::vector<double> pool(a.begin(), a.end());
    pool.insert(pool.end(), b.begin(), b.end());
    const std::size_t n = pool.size();
    auto u_of = [&](const std::vector<bool>& in_a) {
        double u = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (in_a[i] && !in_a[j] && pool[i] > pool[j]) {
                    u += 1.0;
                }
            }
        }
        return u;
    };
    std::vector<bool> observed(n, false);
    std::fill(observed.begin(), observed.begin() + static_cast<std::ptrdiff_t>(a.size()), true);
    const double u0 = u_of(observed);
    std::vector<bool> mask(n, false);
    std::fill(mask.end() - static_cast<std::ptrdiff_t>(a.size()), mask.end(), true);
    double total = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    do {
        const double u = u_of(mask);
        total += 1.0;
        lower += u <= u0 ? 1.0 : 0.0;
        upper += u >= u0 ? 1.0 : 0.0;
    } while (std::next_permutation(mask.begin(), mask.end()));
    return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

}  // namespace

TEST_SUITE("report")
{
    TEST_CASE("campaign csv has one row per cycle")
    {
        const auto lines = lines_of(campaign_csv(sample_report(true)));
        REQUIRE(lines.size() == 4);
        CHECK(lines[0] ==
              "cycle,execs,transitions,predicted,vee_loss,j_v,j_q,j_pi,aapp,aapr,ar,global_efficiency,new_paths,"
              "queue_size,rseed,prseed,target_reached,ttr_execs");
        CHECK(lines[1].starts_with("0,20000,19000,0,-12.25,1e-07,0,0,0.8125,0.3333333333333333,-0.0015,"));
        CHECK(lines[1].ends_with(",0,T.O."));
        CHECK(lines[3].ends_with(",1,45678"));
        const auto cols = std::count(lines[0].begin(), lines[0].end(), ',');
        for (const auto& l : lines) {
            CHECK(std::count(l.begin(), l.end(), ',') == cols);
        }
    }

    TEST_CASE("unreached campaigns carry the timeout mark")
    {
        const CampaignReport r = sample_report(false);
        for (const auto& l : lines_of(campaign_csv(r))) {
            if (!l.starts_with("cycle")) {
                CHECK(l.ends_with(",T.O."));
            }
        }
        CHECK(summary_text(r).find("TTR: T.O.") != std::string::npos);
        CHECK(executions_to_reach(r) == 75000.0);
        CHECK(executions_to_reach(sample_report(true)) == 45678.0);
    }

    TEST_CASE("csv ignores the C locale's decimal separator")
    {
        const std::string before = campaign_csv(sample_report(true));
        const char* old = std::setlocale(LC_NUMERIC, nullptr);
        const std::string saved = old != nullptr ? old : "C";
        if (std::setlocale(LC_NUMERIC, "de_DE.UTF-8") == nullptr) {
            MESSAGE("de_DE locale unavailable; comparing under the default locale");
        }
        CHECK(campaign_csv(sample_report(true)) == before);
        std::setlocale(LC_NUMERIC, saved.c_str());
    }

    TEST_CASE("emit and load round trip, idempotently")
    {
        const fs::path dir = fs::temp_directory_path() / "predfuzz_report_rt";
        fs::remove_all(dir);
        for (bool reached : {true, false}) {
            const CampaignReport r = sample_report(reached);
            emit_report(r, dir);
            const CampaignReport back = load_report(dir);
            CHECK(back == r);
            emit_report(back, dir);
            CHECK(load_report(dir) == r);
            for (const char* f : {"campaign.csv", "swarm.csv", "summary.txt", "summary.json"}) {
                CHECK(fs::exists(dir / f));
            }
        }
        const auto swarm = lines_of(swarm_csv(sample_report(true)));
        CHECK(swarm.size() == 4);
        CHECK(std::count(swarm[0].begin(), swarm[0].end(), ',') == 1 + 2 * static_cast<long>(kActionDim));
        fs::remove_all(dir);
        CHECK_THROWS_AS(load_report(dir), std::runtime_error);
    }

    TEST_CASE("report sets load from subdirectories in order")
    {
        const fs::path root = fs::temp_directory_path() / "predfuzz_report_set";
        fs::remove_all(root);
        for (int i = 0; i < 3; ++i) {
            CampaignReport r = sample_report(i % 2 == 0);
            r.seed = static_cast<std::uint64_t>(10 + i);
            emit_report(r, root / ("run" + std::to_string(i)));
        }
        fs::create_directories(root / "unrelated");
        const auto set = load_report_set(root);
        REQUIRE(set.size() == 3);
        CHECK(set[0].seed == 10);
        CHECK(set[2].seed == 12);
        CHECK(load_report_set(root / "run1").size() == 1);
        fs::remove_all(root);
        CHECK_THROWS_AS(load_report_set(root), std::runtime_error);
    }

    TEST_CASE("A12 examples and antisymmetry")
    {
        const double a[] = {1, 2};
        const double b[] = {3, 4};
        CHECK(vargha_delaney_a12(a, b) == 1.0);
        const double c[] = {1, 3};
        const double d[] = {2, 4};
        CHECK(vargha_delaney_a12(c, d) == 0.75);
        CHECK(vargha_delaney_a12(a, a) == 0.5);

        Rng rng(4);
        for (int t = 0; t < 200; ++t) {
            std::vector<double> x(1 + rng.below(10));
            std::vector<double> y(1 + rng.below(10));
            for (double& v : x) {
                v = rng.uniform();
            }
            for (double& v : y) {
                v = rng.uniform();
            }
            CHECK(vargha_delaney_a12(x, y) == doctest::Approx(1.0 - vargha_delaney_a12(y, x)));
        }
        CHECK_THROWS_AS(vargha_delaney_a12(a, std::span<const double>{}), std::invalid_argument);
    }

    TEST_CASE("exact U test against enumeration")
    {
        const double lo[] = {1, 2, 3, 4};
        const double hi[] = {5, 6, 7, 8, 9};
        const MannWhitney m = mann_whitney_u(lo, hi);
        CHECK(m.exact);
        CHECK(m.u == 0.0);
        CHECK(m.p_value == doctest::Approx(2.0 / 126.0));

        Rng rng(6);
        for (int t = 0; t < 40; ++t) {
            std::vector<double> x(2 + rng.below(4));
            std::vector<double> y(2 + rng.below(4));
            for (double& v : x) {
                v = rng.uniform();
            }
            for (double& v : y) {
                v = rng.uniform();
            }
            const MannWhitney r = mann_whitney_u(x, y);
            CHECK(r.exact);
            CHECK(r.p_value == doctest::Approx(brute_force_p(x, y)));
            CHECK(r.p_value == doctest::Approx(mann_whitney_u(y, x).p_value));
            CHECK(r.u + mann_whitney_u(y, x).u == doctest::Approx(static_cast<double>(x.size() * y.size())));
        }
    }

    TEST_CASE("normal approximation with ties matches a reference value")
    {
        // Reference from an independent statistics package (two-sided,
        // asymptotic, continuity-corrected, tie-corrected).
        std::vector<double> a;
        std::vector<double> b;
        for (int r = 0; r < 3; ++r) {
            for (double v : {1, 1, 2, 3, 5, 8, 8, 9}) {
                a.push_back(v);
            }
            for (double v : {2, 4, 4, 6, 7, 9, 10, 12}) {
                b.push_back(v);
            }
        }
        const MannWhitney m = mann_whitney_u(a, b);
        CHECK_FALSE(m.exact);
        CHECK(m.u == 180.0);
        CHECK(m.p_value == doctest::Approx(0.02583510694427754).epsilon(1e-9));
        const double same[] = {3, 3, 3};
        CHECK(mann_whitney_u(same, same).p_value == 1.0);
    }

    TEST_CASE("campaign comparison")
    {
        std::vector<CampaignReport> fast;
        std::vector<CampaignReport> slow;
        for (std::uint64_t i = 0; i < 4; ++i) {
            CampaignReport f;
            f.budget_execs = 1000;
            f.reached = true;
            f.ttr_execs = 100 + i;
            fast.push_back(f);
            CampaignReport s;
            s.budget_execs = 1000;
            s.reached = i == 0;
            if (s.reached) {
                s.ttr_execs = 800;
            }
            slow.push_back(s);
        }
        const Comparison c = compare_campaigns(fast, slow);
        // mean(slow) = (800 + 3 x 1250) / 4, mean(fast) = 101.5
        CHECK(c.speedup == doctest::Approx((800.0 + 3 * 1250.0) / 4 / 101.5));
        CHECK(c.a12 == 1.0);
        CHECK(c.n_a == 4);
        CHECK(c.p_value < 0.05);
        CHECK_THROWS_AS(compare_campaigns(std::span(fast).first(2), slow), std::invalid_argument);
        CHECK_THROWS_AS(compare_campaigns({}, slow), std::invalid_argument);
    }
}
