#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "predfuzz/rlf.hpp"

using namespace predfuzz;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

PathEmbedding embedding_of(Rng& rng)
{
    PathEmbedding e{};
    for (double& x : e) {
        x = rng.uniform();
    }
    return e;
}

std::vector<Transition> random_batch(Rng& rng, std::size_t n)
{
    std::vector<Transition> out(n);
    for (auto& t : out) {
        t.s = embedding_of(rng);
        t.s_next = embedding_of(rng);
        t.a_t = rng.uniform();
        t.reward = rng.uniform(-0.5, 0.5);
        t.terminal_next = rng.bernoulli(0.2);
    }
    return out;
}

template <typename Loss>
double worst_gradient_error(Mlp& net, const Eigen::VectorXd& analytic, Loss loss)
{
    const Eigen::VectorXd theta = net.flatten();
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        Eigen::VectorXd t = theta;
        t[i] += h;
        net.set_flat(t);
        const double fp = loss();
        t[i] -= 2 * h;
        net.set_flat(t);
        const double fm = loss();
        const double num = (fp - fm) / (2 * h);
        worst = std::max(worst, std::abs(num - analytic[i]) / std::max(1.0, std::abs(num)));
    }
    net.set_flat(theta);
    return worst;
}

// Q(s, a) = cos(2 pi (a - 0.3)) + s[0], peaked at a = 0.3.
std::pair<double, double> peaked_q(const PathEmbedding& s, double a)
{
    return {std::cos(kTwoPi * (a - 0.3)) + s[0], -kTwoPi * std::sin(kTwoPi * (a - 0.3))};
}

}  // namespace

TEST_SUITE("rlf")
{
    TEST_CASE("gaussian entropy and squashing")
    {
        CHECK(policy_entropy(1.0) == doctest::Approx(0.5 * std::log(2 * std::numbers::pi * std::numbers::e)));
        CHECK(policy_entropy(2.0) - policy_entropy(1.0) == doctest::Approx(std::log(2.0)));
        CHECK(squash_action(0.25) == 0.25);
        CHECK(squash_action(1.25) == doctest::Approx(0.25));
        CHECK(squash_action(-0.25) == doctest::Approx(0.75));
    }

    TEST_CASE("wrapped byte masses against Monte Carlo")
    {
        Rng rng(5);
        for (const auto& [mu, sigma, bins] : {std::tuple{0.3, 0.05, 10}, {0.95, 0.2, 7}, {-1.4, 0.5, 16}}) {
            const auto mass = wrapped_bin_masses(mu, sigma, static_cast<std::size_t>(bins));
            double total = 0.0;
            for (double m : mass) {
                total += m;
            }
            CHECK(total == doctest::Approx(1.0));
            const int n = 100000;
            std::vector<double> freq(static_cast<std::size_t>(bins), 0.0);
            for (int i = 0; i < n; ++i) {
                freq[decode_action(squash_action(rng.normal(mu, sigma)), static_cast<std::size_t>(bins))] += 1.0 / n;
            }
            for (std::size_t b = 0; b < mass.size(); ++b) {
                CHECK(std::abs(freq[b] - mass[b]) <= 4 * std::sqrt(mass[b] * (1 - mass[b]) / n) + 1e-9);
            }
        }
        const auto flat = wrapped_bin_masses(0.1, 1.0, 8);
        for (double m : flat) {
            CHECK(m == doctest::Approx(0.125).epsilon(1e-6));
        }
        CHECK(wrapped_bin_masses(0.5, 1e-3, 4)[2] == doctest::Approx(1.0));
        CHECK_THROWS_AS(wrapped_bin_masses(0.1, 0.0, 4), std::invalid_argument);
        CHECK_THROWS_AS(wrapped_bin_masses(0.1, 0.1, 0), std::invalid_argument);
    }

    TEST_CASE("v objective: printed and standard targets by hand")
    {
        Rng rng(1);
        VCritic v(8, rng);
        Rng data(2);
        std::vector<Transition> batch = random_batch(data, 1);
        batch[0].terminal_next = false;
        const double vs = v.value(batch[0].s);
        const double vn = v.value(batch[0].s_next);
        const double r = batch[0].reward;
        const double g = 0.8;
        CHECK(v_objective(v, batch, g, false, nullptr) == doctest::Approx(0.5 * std::pow(g * r + vn - vs, 2)));
        CHECK(v_objective(v, batch, g, true, nullptr) == doctest::Approx(0.5 * std::pow(r + g * vn - vs, 2)));
        batch[0].terminal_next = true;
        CHECK(v_objective(v, batch, g, true, nullptr) == doctest::Approx(0.5 * std::pow(r - vs, 2)));
        CHECK_THROWS_AS(v_objective(v, std::span<const Transition>{}, g, true, nullptr), std::invalid_argument);
    }

    TEST_CASE("critic gradients are semi-gradients with a frozen target")
    {
        Rng rng(3);
        Rng data(4);
        const auto batch = random_batch(data, 6);
        std::vector<PathEmbedding> s;
        std::vector<PathEmbedding> sn;
        Eigen::VectorXd a(6);
        Eigen::VectorXd an(6);
        std::vector<double> next_actions(batch.size());
        for (std::size_t j = 0; j < batch.size(); ++j) {
            s.push_back(batch[j].s);
            sn.push_back(batch[j].s_next);
            a(static_cast<Eigen::Index>(j)) = batch[j].a_t;
            next_actions[j] = data.uniform();
            an(static_cast<Eigen::Index>(j)) = next_actions[j];
        }
        const Eigen::MatrixXd sm = stack_embeddings(s);
        for (bool standard : {false, true}) {
            VCritic v(8, rng);
            const Eigen::VectorXd vn = v.values(stack_embeddings(sn));
            Eigen::VectorXd target(6);
            for (Eigen::Index j = 0; j < 6; ++j) {
                const Transition& t = batch[static_cast<std::size_t>(j)];
                const double next = t.terminal_next ? 0.0 : vn(j);
                target(j) = standard ? t.reward + 0.8 * next : 0.8 * t.reward + next;
            }
            Mlp::Grad g;
            const double value = v_objective(v, batch, 0.8, standard, &g);
            const auto frozen = [&] { return 0.5 * (target - v.values(sm)).squaredNorm() / 6.0; };
            CHECK(value == doctest::Approx(frozen()));
            CHECK(worst_gradient_error(v.mlp(), Mlp::flatten(g), frozen) < 1e-6);
        }
        QCritic q(8, rng);
        const Eigen::VectorXd qn = q.values(stack_embeddings(sn), an);
        Eigen::VectorXd target(6);
        for (Eigen::Index j = 0; j < 6; ++j) {
            const Transition& t = batch[static_cast<std::size_t>(j)];
            target(j) = t.reward + (t.terminal_next ? 0.0 : 0.8 * qn(j));
        }
        Mlp::Grad g;
        const double value = q_objective(q, batch, next_actions, 0.8, &g);
        const auto frozen = [&] { return (target - q.values(sm, a)).squaredNorm() / 6.0; };
        CHECK(value == doctest::Approx(frozen()));
        CHECK(worst_gradient_error(q.mlp(), Mlp::flatten(g), frozen) < 1e-6);
        CHECK_THROWS_AS(q_objective(q, batch, std::span<const double>{}, 0.8, nullptr), std::invalid_argument);
    }

    TEST_CASE("q slope matches the numerical action derivative")
    {
        Rng rng(7);
        QCritic q(16, rng);
        Rng data(8);
        std::vector<PathEmbedding> states{embedding_of(data), embedding_of(data), embedding_of(data)};
        const Eigen::MatrixXd s = stack_embeddings(states);
        const Eigen::Vector3d a(0.1, 0.5, 0.97);
        const auto [values, slopes] = q.values_and_slopes(s, a);
        const double h = 1e-6;
        for (Eigen::Index j = 0; j < 3; ++j) {
            CHECK(values(j) == doctest::Approx(q.value(states[static_cast<std::size_t>(j)], a(j))));
            const double num = (q.value(states[static_cast<std::size_t>(j)], a(j) + h) -
                                q.value(states[static_cast<std::size_t>(j)], a(j) - h)) /
                               (2 * h);
            CHECK(slopes(j) == doctest::Approx(num).epsilon(1e-5));
        }
        // Continuous across the wrap point.
        CHECK(q.value(states[0], 0.0) == doctest::Approx(q.value(states[0], 1.0)));
    }

    TEST_CASE("actor gradient matches central differences")
    {
        Rng rng(9);
        Actor actor(8, rng);
        Rng data(10);
        std::vector<PathEmbedding> states;
        std::vector<double> eps;
        for (int i = 0; i < 5; ++i) {
            states.push_back(embedding_of(data));
            eps.push_back(data.normal());
        }
        const QFunction q = peaked_q;
        Mlp::Grad g;
        actor_objective(actor, q, states, eps, 0.2, &g);
        CHECK(worst_gradient_error(actor.mlp(), Mlp::flatten(g),
                                   [&] { return actor_objective(actor, q, states, eps, 0.2, nullptr); }) < 1e-5);
    }

    TEST_CASE("actor ascent moves the policy to the peak of Q")
    {
        Rng rng(11);
        Actor actor(16, rng);
        Adam opt(actor.mlp(), 0.01);
        Rng data(12);
        std::vector<PathEmbedding> states;
        for (int i = 0; i < 32; ++i) {
            states.push_back(embedding_of(data));
        }
        const QFunction q = peaked_q;
        for (int step = 0; step < 1500; ++step) {
            actor_update(actor, opt, q, states, 0.01, data);
        }
        for (const auto& s : states) {
            const PolicyOutput p = actor.policy(s);
            const double d = std::abs(squash_action(p.mu) - 0.3);
            CHECK(std::min(d, 1.0 - d) < 0.05);
            CHECK(p.sigma < 0.2);
            CHECK(p.sigma >= kMinPolicySigma);
        }
    }

    TEST_CASE("rollouts chain k predicted steps")
    {
        VeeConfig cfg;
        cfg.members = 2;
        cfg.hidden = 8;
        cfg.hidden_layers = 1;
        const Ensemble ens(cfg, 3);
        Rng rng(13);
        const Actor actor(8, rng);
        const PathEmbedding start = embedding_of(rng);
        std::uint64_t counter = 0;
        const RolloutBatch b = k_step_rollout(ens, actor, start, 42, 4, rng, counter);
        CHECK(counter == 4);
        REQUIRE(b.steps.size() == 4);
        CHECK(b.start == 42);
        CHECK(b.steps[0].p_t == 42);
        CHECK(b.steps[0].s == start);
        for (std::size_t i = 0; i < 4; ++i) {
            const Transition& t = b.steps[i];
            CHECK(t.p_next == predicted_path_id(t.s_next));
            CHECK(t.a_t >= 0.0);
            CHECK(t.a_t < 1.0);
            CHECK(std::abs(t.reward) <= 1.0);
            if (i > 0) {
                CHECK(t.s == b.steps[i - 1].s_next);
                CHECK(t.p_t == b.steps[i - 1].p_next);
            }
        }
        CHECK_THROWS_AS(k_step_rollout(ens, actor, start, 42, 0, rng, counter), std::invalid_argument);
    }

    TEST_CASE("agent configuration, training and persistence")
    {
        RlfConfig cfg;
        cfg.hidden = 8;
        cfg.batch = 16;
        cfg.gamma = 1.5;
        CHECK_THROWS_AS(RlfAgent(cfg, 1), std::invalid_argument);
        cfg.gamma = 0.8;
        cfg.k = 0;
        CHECK_THROWS_AS(RlfAgent(cfg, 1), std::invalid_argument);
        cfg.k = 4;

        RlfAgent a(cfg, 5);
        RlfAgent b(cfg, 5);
        ReplayBuffer hist(BufferKind::Historical, 100);
        ReplayBuffer pred(BufferKind::Predicted, 100);
        Rng data(6);
        for (const auto& t : random_batch(data, 40)) {
            hist.push(t);
        }
        Rng ra(7);
        Rng rb(7);
        const RlfLosses la = a.train(hist, pred, 20, ra);
        const RlfLosses lb = b.train(hist, pred, 20, rb);
        CHECK_FALSE(la.diverged);
        CHECK(la.j_v == lb.j_v);
        CHECK(a.actor().mlp().flatten() == b.actor().mlp().flatten());

        const auto path = std::filesystem::temp_directory_path() / "predfuzz_agent.txt";
        a.save(path.string());
        RlfAgent c(cfg, 99);
        c.load(path.string());
        const PathEmbedding s = embedding_of(data);
        CHECK(c.v(s) == a.v(s));
        CHECK(c.q(s, 0.4) == a.q(s, 0.4));
        std::filesystem::remove(path);

        ReplayBuffer empty(BufferKind::Historical, 4);
        const RlfLosses none = a.train(empty, pred, 5, ra);
        CHECK(none.j_v == 0.0);
    }
}
