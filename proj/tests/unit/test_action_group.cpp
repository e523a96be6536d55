#include <doctest.h>

#include <cmath>
#include <numeric>

#include "predfuzz/action_group.hpp"

using namespace predfuzz;

namespace {

PathRecord record_with(std::uint64_t steps, std::size_t len, std::size_t trace_size)
{
    PathRecord r;
    r.exec_steps = steps;
    r.seed.assign(len, 0);
    for (std::size_t i = 0; i < trace_size; ++i) {
        r.trace.emplace_back(static_cast<BranchId>(i), 1);
    }
    return r;
}

double simplex_sum(std::span<const double> s)
{
    return std::accumulate(s.begin(), s.end(), 0.0);
}

}  // namespace

TEST_SUITE("action_group")
{
    TEST_CASE("inertia weight endpoints and midpoint")
    {
        CHECK(ldiw_inertia(0, 100) == 0.4);
        CHECK(ldiw_inertia(100, 100) == 0.9);
        CHECK(ldiw_inertia(50, 100) == doctest::Approx(0.65));
        CHECK_THROWS_AS(ldiw_inertia(1, 0), std::invalid_argument);
        CHECK_THROWS_AS(ldiw_inertia(5, 4), std::invalid_argument);
    }

    TEST_CASE("initial groups are uniform with zero velocity")
    {
        const PathRecord fast = record_with(10, 4, 5);
        const PathRecord mid = record_with(40, 8, 5);
        const PathRecord slow = record_with(100, 16, 5);
        const PathRecord* queue[] = {&fast, &mid, &slow};
        const ActionGroup gf = init_action_group(fast, queue);
        const ActionGroup gm = init_action_group(mid, queue);
        const ActionGroup gs = init_action_group(slow, queue);
        for (const ActionGroup* g : {&gf, &gm, &gs}) {
            for (double m : g->mt()) {
                CHECK(m == doctest::Approx(1.0 / 16));
            }
            for (double h : g->hr()) {
                CHECK(h == doctest::Approx(1.0 / 7));
            }
            CHECK(g->lc()[0] == 0.5);
            CHECK(g->lc()[1] == 0.5);
            for (double v : g->v) {
                CHECK(v == 0.0);
            }
            CHECK(g->se() >= kSeMin);
            CHECK(g->se() <= kSeMax);
        }
        CHECK(gf.ss() == kSsMax);
        CHECK(gm.ss() == doctest::Approx(0.505));
        CHECK(gs.ss() == doctest::Approx(kSsMin));
        CHECK(gf.se() > gs.se());
    }

    TEST_CASE("performance score follows the speed and coverage multipliers")
    {
        CHECK(performance_score(record_with(100, 1, 10), 100, 10) == 100.0);
        CHECK(performance_score(record_with(20, 1, 10), 100, 10) == 300.0);
        CHECK(performance_score(record_with(2000, 1, 10), 100, 10) == 10.0);
        CHECK(performance_score(record_with(100, 1, 40), 100, 10) == 300.0);
        CHECK(performance_score(record_with(100, 1, 2), 100, 10) == 25.0);
        // 300 x 3 = 900 stays below the cap.
        CHECK(performance_score(record_with(20, 1, 40), 100, 10) == 900.0);
    }

    TEST_CASE("projection repairs every block")
    {
        Position x{};
        x[kSsIndex] = -4;
        x[kSeIndex] = 1e9;
        x[kHrOffset] = -1;
        x[kHrOffset + 1] = 3;
        x[kMtOffset + 2] = -5;
        x[kLcOffset] = std::nan("");
        x[kLcOffset + 1] = -1;
        project(x);
        CHECK(x[kSsIndex] == kSsMin);
        CHECK(x[kSeIndex] == kSeMax);
        CHECK(x[kHrOffset] == 0.0);
        CHECK(x[kHrOffset + 1] == 1.0);
        for (std::size_t i = 0; i < kMtCount; ++i) {
            CHECK(x[kMtOffset + i] == doctest::Approx(1.0 / 16));
        }
        CHECK(x[kLcOffset] == 0.5);
    }

    TEST_CASE("update rule: fixed point and attraction")
    {
        const PathRecord r = record_with(10, 4, 5);
        const PathRecord* queue[] = {&r};
        ActionGroup p = init_action_group(r, queue);
        p.max_iterations = 10;
        Rng rng(3);
        const ActionGroup same = update_particle(p, p.x, rng);
        for (std::size_t i = 0; i < kActionDim; ++i) {
            CHECK(same.x[i] == doctest::Approx(p.x[i]).epsilon(1e-14));
        }

        // lbest = gbest = target, v = 0: x moves along (target - x) by r1 + r2.
        Position target = p.x;
        target[kSsIndex] = 0.5;
        target[kSeIndex] = 50.0;
        p.lbest = target;
        p.has_lbest = true;
        Rng a(9);
        const ActionGroup moved = update_particle(p, target, a);
        Rng b(9);
        const double r1 = b.uniform();
        const double r2 = b.uniform();
        CHECK(moved.x[kSeIndex] == doctest::Approx(std::clamp(p.se() + (r1 + r2) * (50.0 - p.se()), kSeMin, kSeMax)));
        CHECK(moved.v[kSsIndex] == doctest::Approx((r1 + r2) * (0.5 - p.ss())));

        Rng c(9);
        const ActionGroup shared = update_particle(p, target, c, true);
        CHECK(shared.v[kSsIndex] == doctest::Approx(2 * r1 * (0.5 - p.ss())));
    }

    TEST_CASE("simplex preservation under random updates")
    {
        Rng rng(21);
        const PathRecord r = record_with(10, 4, 5);
        const PathRecord* queue[] = {&r};
        ActionGroup p = init_action_group(r, queue);
        p.max_iterations = 1000;
        for (int i = 0; i < 20000; ++i) {
            for (double& v : p.v) {
                v = rng.normal(0, 2);
            }
            Position g{};
            for (double& x : g) {
                x = rng.normal(0, 3);
            }
            p.lbest = g;
            p.has_lbest = rng.bernoulli(0.5);
            p.iterations = rng.below(1001);
            p = update_particle(p, g, rng);
            CHECK(simplex_sum(p.hr()) == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(simplex_sum(p.mt()) == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(simplex_sum(p.lc()) == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(p.ss() >= kSsMin);
            CHECK(p.ss() <= kSsMax);
            CHECK(p.se() >= kSeMin);
            CHECK(p.se() <= kSeMax);
        }
    }

    TEST_CASE("local and global efficiency")
    {
        const MutationOutcome zero[] = {{0, 0}, {0, 0}};
        CHECK(local_efficiency(zero, 0.8) == 0.0);
        const MutationOutcome h[] = {{0.5, 0.5}, {0, 0}};
        CHECK(local_efficiency(h, 0.8) == doctest::Approx(0.45));
        const MutationOutcome h3[] = {{1.5, 1.5}, {0, 0}};
        CHECK(local_efficiency(h3, 0.8) == doctest::Approx(3 * 0.45));
        CHECK_THROWS_AS(local_efficiency(std::span<const MutationOutcome>{}, 0.8), std::invalid_argument);

        SwarmState s;
        CHECK_THROWS_AS(s.global_efficiency(0.8), std::invalid_argument);
        for (const auto& o : h) {
            s.record(o);
        }
        CHECK(s.global_efficiency(0.8) == doctest::Approx(local_efficiency(h, 0.8)));
        // Second seed with equal mutation count and efficiency 0.
        for (const auto& o : zero) {
            s.record(o);
        }
        CHECK(s.global_efficiency(0.8) == doctest::Approx((0.45 + 0.0) / 2));
        CHECK(s.cycle_mutations() == 4);

        // Three times the mutations for the first seed pulls the mean toward it.
        SwarmState w;
        for (int i = 0; i < 3; ++i) {
            for (const auto& o : h) {
                w.record(o);
            }
        }
        for (const auto& o : zero) {
            w.record(o);
        }
        CHECK(std::abs(w.global_efficiency(0.8) - 0.45) < std::abs(w.global_efficiency(0.8) - 0.0));
        w.begin_cycle();
        CHECK(w.cycle_mutations() == 0);
    }

    TEST_CASE("best tracking is monotone")
    {
        SwarmState s;
        ActionGroup p;
        p.x[kSsIndex] = 0.3;
        s.update_bests(p, -1.0, -2.0);
        CHECK(p.has_lbest);
        CHECK(p.lbest_eff == -1.0);
        CHECK(s.has_gbest());
        CHECK(s.gbest_eff() == -2.0);
        p.x[kSsIndex] = 0.7;
        s.update_bests(p, -3.0, -5.0);
        CHECK(p.lbest[kSsIndex] == 0.3);
        CHECK(s.gbest()[kSsIndex] == 0.3);
        Rng rng(4);
        double last = s.gbest_eff();
        for (int i = 0; i < 1000; ++i) {
            s.update_bests(p, rng.normal(), rng.normal());
            CHECK(s.gbest_eff() >= last);
            last = s.gbest_eff();
        }
        s.begin_cycle();
        CHECK_FALSE(s.has_gbest());
        s.update_bests(p, -9.0, -9.0);
        CHECK(s.gbest_eff() == -9.0);
    }

    TEST_CASE("swarm climbs a stationary quadratic landscape")
    {
        Rng rng(77);
        Position star{};
        star[kSsIndex] = 0.3;
        star[kSeIndex] = 200.0;
        for (std::size_t i = 0; i < kHrCount; ++i) {
            star[kHrOffset + i] = i == 2 ? 0.7 : 0.05;
        }
        for (std::size_t i = 0; i < kMtCount; ++i) {
            star[kMtOffset + i] = i == 5 ? 0.55 : 0.03;
        }
        star[kLcOffset] = 0.9;
        star[kLcOffset + 1] = 0.1;
        project(star);
        const auto dist2 = [&](const Position& x) {
            double d = 0.0;
            for (std::size_t i = 0; i < kActionDim; ++i) {
                const double scale = i == kSeIndex ? 1.0 / kSeMax : 1.0;
                d += std::pow((x[i] - star[i]) * scale, 2);
            }
            return d;
        };
        std::vector<ActionGroup> swarm(12);
        for (auto& p : swarm) {
            for (double& x : p.x) {
                x = rng.uniform();
            }
            p.x[kSeIndex] = rng.uniform(kSeMin, kSeMax);
            project(p.x);
            p.max_iterations = 200;
        }
        SwarmState s;
        for (auto& p : swarm) {
            const double e = -dist2(p.x);
            s.update_bests(p, e, e);
        }
        const double initial = s.gbest_eff();
        const double initial_dist = dist2(s.gbest());
        for (std::uint64_t g = 0; g < 200; ++g) {
            for (auto& p : swarm) {
                p.iterations = g;
                p = update_particle(p, s.gbest(), rng);
                const double e = -dist2(p.x);
                s.update_bests(p, e, e);
            }
        }
        CHECK(s.gbest_eff() > initial);
        CHECK(dist2(s.gbest()) < initial_dist);
    }

    TEST_CASE("location classification")
    {
        const std::vector<double> uniform(8, 0.125);
        const auto [all, none] = classify_locations(uniform);
        CHECK(all.size() == 8);
        CHECK(none.empty());

        std::vector<double> spike(6, 0.0);
        spike[4] = 1.0;
        CHECK(classify_locations(spike).first == std::vector<std::size_t>{4});

        const std::vector<double> two{0.5, 0.01, 0.45, 0.04};
        CHECK(classify_locations(two).first == std::vector<std::size_t>{0, 2});
        CHECK(classify_locations(two).second == std::vector<std::size_t>{1, 3});
        CHECK_THROWS_AS(classify_locations(std::span<const double>{}), std::invalid_argument);
    }
}
