#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "predfuzz/target_sim.hpp"
#include "support.hpp"

using namespace predfuzz;

TEST_SUITE("target_sim")
{
    TEST_CASE("bucket boundaries and idempotence")
    {
        const std::pair<std::uint32_t, std::uint32_t> cases[] = {
            {1, 1}, {2, 2}, {3, 3}, {4, 4}, {7, 4}, {8, 8}, {15, 8}, {16, 16},
            {31, 16}, {32, 32}, {127, 32}, {128, 128}, {100000, 128}};
        for (const auto& [hits, bucket] : cases) {
            CHECK(bucket_hits(hits) == bucket);
            CHECK(bucket_hits(bucket_hits(hits)) == bucket_hits(hits));
        }
    }

    TEST_CASE("diamond program takes the branch its byte selects")
    {
        const ProgramSpec p = test::diamond_program(128);
        p.validate();
        const Bytes low{5};
        const Bytes high{200};
        const auto a = execute(p, low);
        const auto b = execute(p, high);
        CHECK(a.reached(3));
        CHECK(b.reached(3));
        CHECK(std::find(a.executed_blocks.begin(), a.executed_blocks.end(), 1u) != a.executed_blocks.end());
        CHECK(std::find(b.executed_blocks.begin(), b.executed_blocks.end(), 2u) != b.executed_blocks.end());
        CHECK(a.path_id != b.path_id);
        CHECK(execute(p, Bytes{6}).path_id == a.path_id);
        // Missing operand bytes read as zero.
        CHECK(execute(p, Bytes{}).path_id == a.path_id);
    }

    TEST_CASE("count loop hit counts follow the operand byte")
    {
        const ProgramSpec p = test::loop_program(7);
        for (std::uint32_t v = 0; v < 20; ++v) {
            const auto r = execute(p, Bytes{static_cast<std::uint8_t>(v)});
            std::uint32_t self_hits = 0;
            for (const auto& [b, h] : r.raw_hits) {
                if (b == p.conditions[0].on_true) {
                    self_hits = h;
                }
            }
            CHECK(self_hits == v % 8);
        }
    }

    TEST_CASE("executor matches execute on generated programs")
    {
        GenerationConfig g;
        g.seed = 11;
        const ProgramSpec p = generate_program(g);
        const Executor ex(p);
        Rng rng(3);
        for (int i = 0; i < 200; ++i) {
            Bytes in(g.max_input_len);
            for (auto& b : in) {
                b = static_cast<std::uint8_t>(rng.below(256));
            }
            const auto a = execute(p, in);
            const auto b = ex.run(in);
            CHECK(a.path_id == b.path_id);
            CHECK(a.raw_hits == b.raw_hits);
            CHECK(a.executed_blocks == b.executed_blocks);
            CHECK(a.exec_time == b.exec_time);
            CHECK(a.trace_bits == bucket_trace(a.raw_hits));
        }
    }

    TEST_CASE("generation is a pure function of its parameters")
    {
        GenerationConfig g;
        g.seed = 5;
        g.blocks = 80;
        CHECK(generate_program(g) == generate_program(g));
        GenerationConfig h = g;
        h.seed = 6;
        CHECK_FALSE(generate_program(g) == generate_program(h));
    }

    TEST_CASE("generated gates multiply to the random reach rate")
    {
        for (double hardness : {0.0, 0.5, 1.0}) {
            GenerationConfig g;
            g.seed = 21;
            g.gates = 2;
            g.hardness = hardness;
            const ProgramSpec p = generate_program(g);
            const auto gates = gate_conditions(p);
            REQUIRE(gates.size() == 2);
            for (const Condition& c : gates) {
                // Brute-force oracle over every operand byte value.
                REQUIRE(c.bytes.size() == 1);
                int pass = 0;
                for (int v = 0; v < 256; ++v) {
                    bool ok = false;
                    switch (c.kind) {
                    case Predicate::Less: ok = static_cast<std::uint32_t>(v) < c.operand; break;
                    case Predicate::Equal: ok = static_cast<std::uint32_t>(v) == c.operand; break;
                    case Predicate::InRange:
                        ok = static_cast<std::uint32_t>(v) >= c.operand && static_cast<std::uint32_t>(v) <= c.operand_hi;
                        break;
                    case Predicate::CountLoop: break;
                    }
                    pass += ok ? 1 : 0;
                }
                CHECK(gate_pass_rate(c) == doctest::Approx(pass / 256.0));
                if (hardness == 1.0) {
                    CHECK(pass == 1);
                }
            }
        }
    }

    TEST_CASE("hard gates hold back random inputs")
    {
        GenerationConfig g;
        g.seed = 4;
        g.gates = 1;
        g.hardness = 1.0;
        const ProgramSpec p = generate_program(g);
        const Condition gate = gate_conditions(p).at(0);
        Bytes in(g.max_input_len, 0);
        in[gate.bytes[0]] = static_cast<std::uint8_t>(gate.operand);
        CHECK(execute(p, in).reached(p.target_block));
        in[gate.bytes[0]] = static_cast<std::uint8_t>(gate.operand + 1);
        CHECK_FALSE(execute(p, in).reached(p.target_block));
    }

    TEST_CASE("gateless programs reach the target from any input")
    {
        GenerationConfig g;
        g.gates = 0;
        g.seed = 9;
        const ProgramSpec p = generate_program(g);
        Rng rng(1);
        for (int i = 0; i < 50; ++i) {
            Bytes in(g.max_input_len);
            for (auto& b : in) {
                b = static_cast<std::uint8_t>(rng.below(256));
            }
            CHECK(execute(p, in).reached(p.target_block));
        }
    }

    TEST_CASE("block distances match an all-pairs shortest path oracle")
    {
        GenerationConfig g;
        g.seed = 13;
        g.blocks = 48;
        const ProgramSpec p = generate_program(g);
        const StaticInfo info = compute_static_info(p);
        const std::size_t n = p.block_count;
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<std::vector<double>> d(n, std::vector<double>(n, inf));
        for (std::size_t i = 0; i < n; ++i) {
            d[i][i] = 0;
        }
        for (const Edge& e : p.edges) {
            d[e.from][e.to] = std::min(d[e.from][e.to], 1.0);
        }
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
                }
            }
        }
        for (std::size_t b = 0; b < n; ++b) {
            const double want = d[b][p.target_block];
            if (std::isinf(want)) {
                CHECK_FALSE(info.bb_distance[b].has_value());
            } else {
                REQUIRE(info.bb_distance[b].has_value());
                CHECK(*info.bb_distance[b] == want);
            }
        }
        for (const Condition& c : p.conditions) {
            CHECK(info.siblings[c.on_true] == std::vector<BranchId>{c.on_false});
            CHECK(info.siblings[c.on_false] == std::vector<BranchId>{c.on_true});
        }
    }

    TEST_CASE("program JSON round trip")
    {
        GenerationConfig g;
        g.seed = 2;
        const ProgramSpec p = generate_program(g);
        const auto path = std::filesystem::temp_directory_path() / "predfuzz_program_rt.json";
        save_program(p, path.string());
        CHECK(load_program(path.string()) == p);
        std::filesystem::remove(path);
    }

    TEST_CASE("invalid programs are rejected")
    {
        ProgramSpec p = test::diamond_program(10);
        p.target_block = 17;
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
        ProgramSpec q = test::diamond_program(10);
        q.edges.push_back({3, 9});
        CHECK_THROWS_AS(q.validate(), std::invalid_argument);
        CHECK_THROWS_AS(load_program("/nonexistent/predfuzz.json"), std::runtime_error);
    }

    TEST_CASE("generation parameters parse strictly")
    {
        const GenerationConfig g = parse_generation_params("blocks=40,gates=1,hardness=0.5,seed=7,len=8");
        CHECK(g.blocks == 40);
        CHECK(g.gates == 1);
        CHECK(g.hardness == 0.5);
        CHECK(g.seed == 7);
        CHECK(g.max_input_len == 8);
        CHECK_THROWS_AS(parse_generation_params("blocks=4x"), std::invalid_argument);
        CHECK_THROWS_AS(parse_generation_params("colour=3"), std::invalid_argument);
        GenerationConfig bad;
        bad.hardness = 1.5;
        CHECK_THROWS_AS(generate_program(bad), std::invalid_argument);
    }

    TEST_CASE("transition distribution: exhaustive and sampled agree")
    {
        const ProgramSpec p = test::diamond_program(128);
        const Bytes seed{10};
        const auto mutators = all_mutators();
        const auto exact = true_transition_distribution(p, seed, 0, mutators);
        double total = 0.0;
        for (const auto& [_, pr] : exact) {
            total += pr;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

        const std::size_t draws = 20000;
        const auto sampled = true_transition_distribution(p, seed, 0, mutators, draws, 99);
        for (const auto& [id, pr] : exact) {
            const double se = std::sqrt(pr * (1 - pr) / static_cast<double>(draws));
            const double got = sampled.contains(id) ? sampled.at(id) : 0.0;
            CHECK(std::abs(got - pr) <= 4 * se + 1e-12);
        }
    }

    TEST_CASE("single-mutator distribution matches a hand count")
    {
        // Byte-flip on 10 always produces 245 >= 128: the other branch.
        const ProgramSpec p = test::diamond_program(128);
        const Mutator m[] = {Mutator::ByteFlip};
        const auto d = true_transition_distribution(p, Bytes{10}, 0, m);
        REQUIRE(d.size() == 1);
        CHECK(d.begin()->first == execute(p, Bytes{245}).path_id);
        // Random byte: 128 of 256 values stay on the low branch.
        const Mutator r[] = {Mutator::RandomByte};
        const auto e = true_transition_distribution(p, Bytes{10}, 0, r);
        CHECK(e.at(execute(p, Bytes{10}).path_id) == doctest::Approx(128.0 / 256.0));
    }
}
